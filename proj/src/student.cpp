#include "afd/student.hpp"

#include <algorithm>
#include <cmath>

namespace afd {

namespace {

Tensor uniform_init(Rng& rng, std::vector<size_t> shape, size_t fan_in) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    double bound = 1.0 / std::sqrt(double(fan_in));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(v));
}

Tensor lstm_bias(size_t d_h) {
    // zeros except forget gate at +1
    std::vector<double> b(4 * d_h, 0.0);
    for (size_t j = d_h; j < 2 * d_h; ++j) b[j] = 1.0;
    return Tensor({1, 4 * d_h}, std::move(b));
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
    double keep = 1.0 - p;
    std::vector<double> m(x.size());
    for (auto& v : m) v = rng.uniform() < keep ? 1.0 / keep : 0.0;  // inverted dropout
    return mul(x, Tensor(x.shape(), std::move(m)));
}

// One direction over the rows of x (true length, no padding); returns the
// hidden state per position in input order.
std::vector<Tensor> lstm_direction(const Tensor& x, const LstmDirParams& p, size_t d_h,
                                   bool reverse) {
    size_t n = x.rows();
    std::vector<Tensor> states(n);
    Tensor h({1, d_h});
    Tensor c({1, d_h});
    for (size_t step = 0; step < n; ++step) {
        size_t t = reverse ? n - 1 - step : step;
        Tensor x_t = slice_rows(x, t, t + 1);
        Tensor z = add_rowvec(add(matmul(x_t, p.w_x), matmul(h, p.w_h)), p.b);
        Tensor i_g = sigmoid(slice_cols(z, 0, d_h));
        Tensor f_g = sigmoid(slice_cols(z, d_h, 2 * d_h));
        Tensor g_g = afd::tanh(slice_cols(z, 2 * d_h, 3 * d_h));
        Tensor o_g = sigmoid(slice_cols(z, 3 * d_h, 4 * d_h));
        c = add(mul(f_g, c), mul(i_g, g_g));
        h = mul(o_g, afd::tanh(c));
        states[t] = h;
    }
    return states;
}

}  // namespace

StudentParams StudentParams::init(const StudentConfig& cfg, Rng& rng) {
    AFD_CHECK(cfg.vocab >= 2 && cfg.n_intents >= 1 && cfg.n_slots >= 1,
              "student: vocab/intent/slot sizes not set");
    AFD_CHECK(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "student: dropout must be in [0, 1)");
    size_t dh = cfg.d_h_lstm;
    StudentParams p;
    p.cfg = cfg;
    p.token_embedding = uniform_init(rng, {cfg.vocab, cfg.d_emb}, cfg.d_emb);
    p.fw = {uniform_init(rng, {cfg.d_emb, 4 * dh}, cfg.d_emb),
            uniform_init(rng, {dh, 4 * dh}, dh), lstm_bias(dh)};
    p.bw = {uniform_init(rng, {cfg.d_emb, 4 * dh}, cfg.d_emb),
            uniform_init(rng, {dh, 4 * dh}, dh), lstm_bias(dh)};
    p.w_q = uniform_init(rng, {2 * dh, cfg.d_a}, 2 * dh);
    p.w_k = uniform_init(rng, {2 * dh, cfg.d_a}, 2 * dh);
    p.w_v = uniform_init(rng, {2 * dh, cfg.d_a}, 2 * dh);
    p.w_pool = uniform_init(rng, {cfg.d_a, 1}, cfg.d_a);
    p.w_intent = uniform_init(rng, {cfg.d_a, cfg.n_intents}, cfg.d_a);
    p.b_intent = Tensor({1, cfg.n_intents});
    p.w_slot = uniform_init(rng, {cfg.d_a, cfg.n_slots}, cfg.d_a);
    p.b_slot = Tensor({1, cfg.n_slots});
    return p;
}

std::vector<std::pair<std::string, Tensor*>> StudentParams::named() {
    return {{"student.token_embedding", &token_embedding},
            {"student.fw.w_x", &fw.w_x},
            {"student.fw.w_h", &fw.w_h},
            {"student.fw.b", &fw.b},
            {"student.bw.w_x", &bw.w_x},
            {"student.bw.w_h", &bw.w_h},
            {"student.bw.b", &bw.b},
            {"student.w_q", &w_q},
            {"student.w_k", &w_k},
            {"student.w_v", &w_v},
            {"student.w_pool", &w_pool},
            {"student.w_intent", &w_intent},
            {"student.b_intent", &b_intent},
            {"student.w_slot", &w_slot},
            {"student.b_slot", &b_slot}};
}

std::vector<std::pair<std::string, const Tensor*>> StudentParams::named() const {
    auto mut = const_cast<StudentParams*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [n, t] : mut) out.emplace_back(n, t);
    return out;
}

StudentOutput student_forward(const data::EncodedBatch& batch, const StudentParams& params,
                              bool training, Rng* dropout_rng) {
    const StudentConfig& cfg = params.cfg;
    bool drop = training && cfg.dropout > 0.0;
    AFD_CHECK(!drop || dropout_rng != nullptr, "student_forward: training needs a dropout rng");
    double inv_sqrt_da = 1.0 / std::sqrt(double(cfg.d_a));

    StudentOutput out;
    std::vector<Tensor> pooled;
    pooled.reserve(batch.batch_size());

    for (size_t i = 0; i < batch.batch_size(); ++i) {
        size_t n = batch.length(i);
        AFD_CHECK(n >= 1, "student_forward: degenerate-mask error, sample " + batch.ids[i]);
        std::vector<int> ids(batch.token_ids[i].begin(), batch.token_ids[i].begin() + n);

        Tensor x = embedding_lookup(params.token_embedding, ids);
        if (drop) x = dropout(x, cfg.dropout, *dropout_rng);

        auto hf = lstm_direction(x, params.fw, cfg.d_h_lstm, /*reverse=*/false);
        auto hb = lstm_direction(x, params.bw, cfg.d_h_lstm, /*reverse=*/true);
        std::vector<Tensor> per_tok(n);
        for (size_t t = 0; t < n; ++t) per_tok[t] = concat_cols(hf[t], hb[t]);
        Tensor s = concat_rows(per_tok);  // n x 2*d_h

        Tensor q = matmul(s, params.w_q);
        Tensor k = matmul(s, params.w_k);
        Tensor v = matmul(s, params.w_v);
        Tensor attn = softmax_masked(scale(matmul(q, transpose(k)), inv_sqrt_da),
                                     Tensor::full({n, n}, 1.0));
        // residual attention: the mixed context is added onto each token's
        // own value vector, so per-token identity survives the averaging
        Tensor u = add(matmul(attn, v), v);  // n x d_a
        if (drop) u = dropout(u, cfg.dropout, *dropout_rng);

        Tensor pool_logits = transpose(matmul(u, params.w_pool));  // 1 x n
        Tensor alpha = softmax_masked(pool_logits, Tensor::full({1, n}, 1.0));
        pooled.push_back(matmul(alpha, u));  // 1 x d_a

        out.slot_logits.push_back(add_rowvec(matmul(u, params.w_slot), params.b_slot));
    }

    out.sentence_embedding = concat_rows(pooled);  // d_b x d_es
    out.intent_logits = add_rowvec(matmul(out.sentence_embedding, params.w_intent),
                                   params.b_intent);
    return out;
}

Tensor task_loss(const StudentOutput& out, const data::EncodedBatch& batch, int ignore_index) {
    Tensor intent_ce = cross_entropy(out.intent_logits, batch.intent_targets, /*ignore=*/-1);

    std::vector<int> slot_targets;
    for (size_t i = 0; i < batch.batch_size(); ++i) {
        size_t n = batch.length(i);
        slot_targets.insert(slot_targets.end(), batch.slot_targets[i].begin(),
                            batch.slot_targets[i].begin() + n);
    }
    Tensor slot_ce = cross_entropy(concat_rows(out.slot_logits), slot_targets, ignore_index);
    return add(intent_ce, slot_ce);
}

std::vector<Prediction> predict(const StudentParams& params,
                                const std::vector<data::Utterance>& utts,
                                const data::LabelMaps& maps, size_t batch_size) {
    AFD_CHECK(!utts.empty(), "predict: empty corpus");
    std::vector<Prediction> preds;
    preds.reserve(utts.size());
    for (size_t start = 0; start < utts.size(); start += batch_size) {
        size_t end = std::min(utts.size(), start + batch_size);
        std::vector<data::Utterance> chunk(utts.begin() + start, utts.begin() + end);
        auto batch = data::encode_batch(chunk, maps, -100, /*require_labels=*/false);
        StudentOutput out = student_forward(batch, params, /*training=*/false, nullptr);
        for (size_t i = 0; i < chunk.size(); ++i) {
            Prediction p;
            size_t best = 0;
            for (size_t c = 1; c < params.cfg.n_intents; ++c) {
                if (out.intent_logits.at(i, c) > out.intent_logits.at(i, best)) best = c;
            }
            p.intent = maps.intents[best];
            const Tensor& sl = out.slot_logits[i];
            for (size_t t = 0; t < sl.rows(); ++t) {
                size_t bs = 0;
                for (size_t c = 1; c < params.cfg.n_slots; ++c) {
                    if (sl.at(t, c) > sl.at(t, bs)) bs = c;
                }
                p.slot_tags.push_back(maps.slots[bs]);
            }
            preds.push_back(std::move(p));
        }
    }
    return preds;
}

Metrics evaluate(const StudentParams& params, const std::vector<data::Utterance>& utts,
                 const data::LabelMaps& maps, size_t batch_size) {
    auto preds = predict(params, utts, maps, batch_size);
    std::vector<std::string> gold_intents, pred_intents;
    std::vector<std::vector<std::string>> gold_tags, pred_tags;
    for (size_t i = 0; i < utts.size(); ++i) {
        gold_intents.push_back(utts[i].intent);
        pred_intents.push_back(preds[i].intent);
        gold_tags.push_back(utts[i].slot_tags);
        pred_tags.push_back(preds[i].slot_tags);
    }
    return compute_metrics(gold_intents, pred_intents, gold_tags, pred_tags);
}

}  // namespace afd
