#pragma once

#include <string>
#include <utility>
#include <vector>

#include "afd/data.hpp"
#include "afd/metrics.hpp"
#include "afd/rng.hpp"
#include "afd/tensor.hpp"

// Joint intent/slot student: token embedding -> BiLSTM -> single-head scaled
// dot-product self-attention -> per-token slot head, plus attention pooling
// into one sentence vector that feeds the intent head and the adapter.
//
// Each sequence is processed at its true length; padding positions never
// enter the recurrence or the attention, so every output is independent of
// PAD-region content by construction.

namespace afd {

struct StudentConfig {
    size_t vocab = 0;
    size_t n_intents = 0;
    size_t n_slots = 0;
    size_t d_emb = 32;
    size_t d_h_lstm = 32;
    size_t d_a = 32;
    double dropout = 0.4;

    size_t d_es() const { return d_a; }
};

struct LstmDirParams {
    Tensor w_x;  // d_in x 4*d_h, gate order [input, forget, cell, output]
    Tensor w_h;  // d_h x 4*d_h
    Tensor b;    // 1 x 4*d_h, forget gate bias starts at +1
};

struct StudentParams {
    StudentConfig cfg;
    Tensor token_embedding;  // vocab x d_emb
    LstmDirParams fw, bw;
    Tensor w_q, w_k, w_v;    // 2*d_h x d_a
    Tensor w_pool;           // d_a x 1
    Tensor w_intent, b_intent;
    Tensor w_slot, b_slot;

    static StudentParams init(const StudentConfig& cfg, Rng& rng);

    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
};

struct StudentOutput {
    Tensor intent_logits;             // d_b x n_intents
    std::vector<Tensor> slot_logits;  // per sample: true_len x n_slots
    Tensor sentence_embedding;        // d_b x d_es
};

// training=true applies inverted dropout to embeddings and post-attention
// states, drawing masks from dropout_rng.
StudentOutput student_forward(const data::EncodedBatch& batch, const StudentParams& params,
                              bool training, Rng* dropout_rng);

// intent cross-entropy + slot cross-entropy over real tokens.
Tensor task_loss(const StudentOutput& out, const data::EncodedBatch& batch,
                 int ignore_index = -100);

struct Prediction {
    std::string intent;
    std::vector<std::string> slot_tags;
};

std::vector<Prediction> predict(const StudentParams& params,
                                const std::vector<data::Utterance>& utts,
                                const data::LabelMaps& maps, size_t batch_size = 16);

Metrics evaluate(const StudentParams& params, const std::vector<data::Utterance>& utts,
                 const data::LabelMaps& maps, size_t batch_size = 16);

}  // namespace afd
