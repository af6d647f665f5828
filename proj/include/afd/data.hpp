#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

// Corpus loading, label maps, batch encoding, teacher-embedding files and the
// synthetic corpus generator. Corpus files are UTF-8 JSON lines with keys
// exactly id/tokens/slots/intent; teacher embedding files use id/embedding.

namespace afd::data {

struct Utterance {
    std::string id;
    std::vector<std::string> tokens;
    std::vector<std::string> slot_tags;
    std::string intent;
};

// Throws when tags are not a valid BIO sequence (every I-X must follow B-X
// or I-X of the same type). The utterance id is named in the message.
void validate_bio(const std::vector<std::string>& tags, const std::string& id);

struct LabelMaps {
    static constexpr int kPadToken = 0;
    static constexpr int kUnkToken = 1;

    std::vector<std::string> intents;  // index -> label
    std::vector<std::string> slots;
    std::vector<std::string> tokens;   // [0] = "<pad>", [1] = "<unk>"
    std::unordered_map<std::string, int> intent_id;
    std::unordered_map<std::string, int> slot_id;
    std::unordered_map<std::string, int> token_id;

    // Deterministic: label sets are sorted before assigning indices, so the
    // maps are independent of utterance order.
    static LabelMaps build(const std::vector<Utterance>& training);

    int token_or_unk(const std::string& tok) const;
    int require_intent(const std::string& label) const;  // throws on unknown
    int require_slot(const std::string& label) const;
};

struct EncodedBatch {
    std::vector<std::vector<int>> token_ids;     // d_b x L, PAD beyond each length
    std::vector<std::vector<double>> mask;       // d_b x L of {0, 1}
    std::vector<int> intent_targets;             // -1 when labels not required
    std::vector<std::vector<int>> slot_targets;  // d_b x L, ignore_index at PAD
    std::vector<std::string> ids;

    size_t batch_size() const { return token_ids.size(); }
    size_t max_len() const { return token_ids.empty() ? 0 : token_ids[0].size(); }
    size_t length(size_t i) const;  // count of mask ones for sample i
};

// Pads to the batch max length. With require_labels, an unknown intent or
// slot label throws; otherwise unknown labels encode as -1 / ignore_index
// (metrics work on strings, so evaluation does not need them).
EncodedBatch encode_batch(const std::vector<Utterance>& utts, const LabelMaps& maps,
                          int ignore_index = -100, bool require_labels = true);

std::vector<Utterance> load_corpus(const std::string& path);
void write_corpus(const std::vector<Utterance>& utts, const std::string& path);

using TeacherTable = std::map<std::string, std::vector<double>>;

TeacherTable load_teacher_embeddings(const std::string& path, size_t d_et);
void write_teacher_embeddings(const std::vector<std::pair<std::string, std::vector<double>>>& rows,
                              const std::string& path);

// Synthetic corpus: each intent owns a few templates over slot-type
// sequences, tokens come from intent- and slot-conditioned sub-vocabularies,
// and the teacher embedding of an utterance is a fixed random projection of
// its bag-of-(intent, slot-type) indicator vector plus Gaussian noise, so
// the teacher provably carries label information.
struct SynthSpec {
    uint64_t seed = 7;
    size_t n_train = 500;
    size_t n_dev = 100;
    size_t n_test = 100;
    size_t vocab = 120;
    size_t n_intents = 6;
    size_t n_slot_types = 6;
    size_t d_et = 64;
    double noise_sigma = 0.05;
};

struct SynthCorpus {
    std::vector<Utterance> train, dev, test;
    std::vector<std::pair<std::string, std::vector<double>>> teacher;  // all splits
};

SynthCorpus gen_synthetic(const SynthSpec& spec);

// Writes train.jsonl, dev.jsonl, test.jsonl and teacher.jsonl under out_dir.
void write_synth(const SynthCorpus& corpus, const std::string& out_dir);

}  // namespace afd::data
