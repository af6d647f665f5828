#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "afd/rng.hpp"
#include "afd/student.hpp"

using namespace afd;

namespace {

StudentConfig tiny_config() {
    StudentConfig cfg;
    cfg.vocab = 14;
    cfg.n_intents = 3;
    cfg.n_slots = 5;
    cfg.d_emb = 6;
    cfg.d_h_lstm = 5;
    cfg.d_a = 6;
    cfg.dropout = 0.0;
    return cfg;
}

data::EncodedBatch make_batch(std::vector<std::vector<int>> ids,
                              std::vector<int> intents = {},
                              std::vector<std::vector<int>> slots = {}) {
    data::EncodedBatch b;
    size_t max_len = 0;
    for (auto& row : ids) max_len = std::max(max_len, row.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        std::vector<int> row(max_len, 0);
        std::vector<double> mask(max_len, 0.0);
        std::vector<int> st(max_len, -100);
        for (size_t t = 0; t < ids[i].size(); ++t) {
            row[t] = ids[i][t];
            mask[t] = 1.0;
            st[t] = slots.empty() ? 0 : slots[i][t];
        }
        b.token_ids.push_back(row);
        b.mask.push_back(mask);
        b.slot_targets.push_back(st);
        b.intent_targets.push_back(intents.empty() ? 0 : intents[i]);
        b.ids.push_back("u" + std::to_string(i));
    }
    return b;
}

}  // namespace

TEST_CASE("eval forward is deterministic") {
    Rng rng(1);
    auto params = StudentParams::init(tiny_config(), rng);
    auto batch = make_batch({{2, 5, 9}, {3, 4}});
    auto o1 = student_forward(batch, params, false, nullptr);
    auto o2 = student_forward(batch, params, false, nullptr);
    CHECK(o1.intent_logits.data() == o2.intent_logits.data());
    CHECK(o1.sentence_embedding.data() == o2.sentence_embedding.data());
    for (size_t i = 0; i < 2; ++i) CHECK(o1.slot_logits[i].data() == o2.slot_logits[i].data());
}

TEST_CASE("training forward with the same rng stream reproduces bit for bit") {
    Rng rng(2);
    auto params = StudentParams::init(tiny_config(), rng);
    StudentConfig cfg = params.cfg;
    cfg.dropout = 0.4;
    params.cfg = cfg;
    auto batch = make_batch({{2, 5, 9}, {3, 4}});
    Rng d1(77), d2(77);
    auto o1 = student_forward(batch, params, true, &d1);
    auto o2 = student_forward(batch, params, true, &d2);
    CHECK(o1.intent_logits.data() == o2.intent_logits.data());
}

TEST_CASE("single-token utterance pools to its own post-attention state") {
    Rng rng(3);
    auto params = StudentParams::init(tiny_config(), rng);
    auto batch = make_batch({{7}});
    auto out = student_forward(batch, params, false, nullptr);
    // with one position the pooling weights are exactly 1, so e_s equals the
    // only post-attention row, which also feeds the slot head
    CHECK(out.sentence_embedding.rows() == 1);
    Tensor u_row = out.sentence_embedding;  // 1 x d_a
    Tensor slot_expected = add_rowvec(matmul(u_row, params.w_slot), params.b_slot);
    CHECK(out.slot_logits[0].data() == slot_expected.data());
}

TEST_CASE("outputs are invariant to PAD-region token ids, bitwise") {
    Rng rng(4);
    auto params = StudentParams::init(tiny_config(), rng);
    auto base = make_batch({{2, 5, 9, 0, 0}, {3, 4, 0, 0, 0}});
    base.mask = {{1, 1, 1, 0, 0}, {1, 1, 0, 0, 0}};
    auto mutated = base;
    mutated.token_ids[0][3] = 13;
    mutated.token_ids[0][4] = 1;
    mutated.token_ids[1][2] = 7;
    mutated.token_ids[1][4] = 11;

    auto o1 = student_forward(base, params, false, nullptr);
    auto o2 = student_forward(mutated, params, false, nullptr);
    CHECK(o1.intent_logits.data() == o2.intent_logits.data());
    CHECK(o1.sentence_embedding.data() == o2.sentence_embedding.data());
    for (size_t i = 0; i < 2; ++i) CHECK(o1.slot_logits[i].data() == o2.slot_logits[i].data());

    Tensor l1 = task_loss(o1, base);
    Tensor l2 = task_loss(o2, mutated);
    CHECK(l1.value() == l2.value());
}

TEST_CASE("task_loss saturates to ~0 on perfect logits and hits ln2+ln2 when uniform") {
    // hand-built outputs, bypassing the model
    StudentOutput out;
    out.intent_logits = Tensor({1, 2}, {30.0, 0.0});
    out.slot_logits = {Tensor({1, 2}, {30.0, 0.0})};
    auto batch = make_batch({{2}}, {0}, {{0}});
    CHECK(task_loss(out, batch).value() < 1e-8);

    StudentOutput uniform;
    uniform.intent_logits = Tensor({1, 2}, {0.0, 0.0});
    uniform.slot_logits = {Tensor({1, 2}, {0.0, 0.0})};
    CHECK(task_loss(uniform, batch).value() ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("task_loss matches an independent scalar recomputation") {
    Rng rng(5);
    auto params = StudentParams::init(tiny_config(), rng);
    auto batch = make_batch({{2, 5, 9}, {3, 4}}, {1, 2}, {{0, 3, 1}, {2, 4, -100}});
    auto out = student_forward(batch, params, false, nullptr);
    double loss = task_loss(out, batch).value();

    // independent recomputation with plain loops
    auto ce_row = [](const Tensor& logits, size_t row, int target) {
        double maxv = logits.at(row, 0);
        for (size_t c = 1; c < logits.cols(); ++c) maxv = std::max(maxv, logits.at(row, c));
        double sum = 0.0;
        for (size_t c = 0; c < logits.cols(); ++c) sum += std::exp(logits.at(row, c) - maxv);
        return maxv + std::log(sum) - logits.at(row, size_t(target));
    };
    double intent = 0.0;
    for (size_t i = 0; i < 2; ++i) intent += ce_row(out.intent_logits, i, batch.intent_targets[i]);
    intent /= 2.0;
    double slot = 0.0;
    size_t n_tok = 0;
    for (size_t i = 0; i < 2; ++i) {
        for (size_t t = 0; t < batch.length(i); ++t) {
            slot += ce_row(out.slot_logits[i], t, batch.slot_targets[i][t]);
            ++n_tok;
        }
    }
    slot /= double(n_tok);
    CHECK(loss == doctest::Approx(intent + slot).epsilon(1e-12));
}

TEST_CASE("gradient of task_loss w.r.t. every parameter matches finite differences") {
    StudentConfig cfg = tiny_config();
    cfg.d_emb = 4;
    cfg.d_h_lstm = 3;
    cfg.d_a = 4;
    cfg.n_slots = 4;
    cfg.vocab = 10;
    Rng rng(2024);
    auto params = StudentParams::init(cfg, rng);
    // widened weights keep attention scores spread so no gradient coordinate
    // sinks into the fd noise floor (see the gradient suite)
    for (auto& [name, t] : params.named()) {
        std::vector<double> v(t->size());
        for (auto& x : v) x = rng.uniform(-1.2, 1.2);
        *t = Tensor(t->shape(), std::move(v));
    }
    auto batch = make_batch({{2, 5, 9, 3}, {4, 7, 6}}, {1, 2}, {{0, 3, 1, 2}, {2, 1, 0}});

    auto named = params.named();
    for (size_t idx = 0; idx < named.size(); ++idx) {
        auto f = [&, idx](const Tensor& t) {
            StudentParams local = params;
            *(local.named()[idx].second) = t;
            return task_loss(student_forward(batch, local, false, nullptr), batch);
        };
        INFO(named[idx].first);
        CHECK(finite_diff_check(f, *named[idx].second, 1e-6) <= 1e-5);
    }
}

TEST_CASE("metrics: perfect predictions score 100 everywhere") {
    std::vector<std::string> intents{"a", "b"};
    std::vector<std::vector<std::string>> tags{{"B-x", "I-x", "O"}, {"O", "B-y", "O"}};
    Metrics m = compute_metrics(intents, intents, tags, tags);
    CHECK(m.intent_acc == 100.0);
    CHECK(m.slot_f1 == 100.0);
    CHECK(m.overall_acc == 100.0);
}

TEST_CASE("metrics: spurious chunk gives precision 1/2, recall 1, F1 2/3") {
    std::vector<std::string> gold_i{"a"}, pred_i{"a"};
    std::vector<std::vector<std::string>> gold{{"O", "B-song", "I-song", "O"}};
    std::vector<std::vector<std::string>> pred{{"O", "B-song", "I-song", "B-artist"}};
    Metrics m = compute_metrics(gold_i, pred_i, gold, pred);
    CHECK(m.slot_f1 == doctest::Approx(100.0 * 2.0 / 3.0).epsilon(1e-12));
    // intent right but sequence wrong: counts for intent, not overall
    CHECK(m.intent_acc == 100.0);
    CHECK(m.overall_acc == 0.0);
}

TEST_CASE("chunker follows the maximal B-X (I-X)* grammar") {
    auto chunks = bio_chunks({"B-a", "I-a", "I-a", "O", "B-b", "B-a", "I-b"});
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0] == Chunk{"a", 0, 3});
    CHECK(chunks[1] == Chunk{"b", 4, 5});
    CHECK(chunks[2] == Chunk{"a", 5, 6});  // orphan I-b opens nothing
    CHECK(bio_chunks({"I-a", "I-a", "O"}).empty());
}

namespace {

// O(n^2) oracle: every (begin, end, type) span that the grammar accepts as a
// maximal chunk, found by brute force rather than scanning
std::vector<Chunk> brute_force_chunks(const std::vector<std::string>& tags) {
    std::vector<Chunk> chunks;
    size_t n = tags.size();
    for (size_t b = 0; b < n; ++b) {
        if (tags[b].rfind("B-", 0) != 0) continue;
        std::string type = tags[b].substr(2);
        for (size_t e = b + 1; e <= n; ++e) {
            bool inside_ok = true;
            for (size_t k = b + 1; k < e; ++k) {
                if (tags[k] != "I-" + type) inside_ok = false;
            }
            bool maximal = (e == n || tags[e] != "I-" + type);
            if (inside_ok && maximal) {
                chunks.push_back({type, b, e});
                break;
            }
        }
    }
    return chunks;
}

std::vector<std::string> random_tags(Rng& rng, size_t n, int n_types) {
    std::vector<std::string> tags;
    for (size_t i = 0; i < n; ++i) {
        double r = rng.uniform();
        if (r < 0.4) {
            tags.push_back("O");
        } else if (r < 0.7) {
            tags.push_back("B-t" + std::to_string(rng.uniform_int(0, n_types)));
        } else {
            tags.push_back("I-t" + std::to_string(rng.uniform_int(0, n_types)));
        }
    }
    return tags;
}

}  // namespace

TEST_CASE("slot F1 equals the brute-force chunk matcher on 100 random pairs") {
    Rng rng(99);
    for (int rep = 0; rep < 100; ++rep) {
        size_t n = 1 + size_t(rng.uniform_int(0, 12));
        auto gold = random_tags(rng, n, 3);
        auto pred = random_tags(rng, n, 3);

        CHECK(bio_chunks(gold) == brute_force_chunks(gold));
        CHECK(bio_chunks(pred) == brute_force_chunks(pred));

        // micro-F1 recomputed from the oracle chunker
        auto gc = brute_force_chunks(gold);
        auto pc = brute_force_chunks(pred);
        size_t tp = 0;
        for (const auto& c : pc) {
            tp += std::count(gc.begin(), gc.end(), c) > 0 ? 1 : 0;
        }
        double p = pc.empty() ? (gc.empty() ? 1.0 : 0.0) : double(tp) / double(pc.size());
        double r = gc.empty() ? 1.0 : double(tp) / double(gc.size());
        double expected = (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
        CHECK(chunk_f1({gold}, {pred}) == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("overall_acc <= intent_acc and <= exact-sequence slot accuracy") {
    Rng rng(123);
    for (int rep = 0; rep < 30; ++rep) {
        size_t n = 2 + size_t(rng.uniform_int(0, 6));
        std::vector<std::string> gi, pi;
        std::vector<std::vector<std::string>> gt, pt;
        size_t exact_seq = 0;
        for (size_t i = 0; i < n; ++i) {
            gi.push_back("i" + std::to_string(rng.uniform_int(0, 3)));
            pi.push_back("i" + std::to_string(rng.uniform_int(0, 3)));
            size_t len = 1 + size_t(rng.uniform_int(0, 5));
            gt.push_back(random_tags(rng, len, 2));
            pt.push_back(rng.uniform() < 0.3 ? gt.back() : random_tags(rng, len, 2));
            exact_seq += gt.back() == pt.back() ? 1 : 0;
        }
        Metrics m = compute_metrics(gi, pi, gt, pt);
        CHECK(m.overall_acc <= m.intent_acc);
        CHECK(m.overall_acc <= 100.0 * double(exact_seq) / double(n) + 1e-12);
    }
}

TEST_CASE("evaluate runs over a tiny corpus") {
    Rng rng(7);
    std::vector<data::Utterance> utts{
        {"a", {"x", "y"}, {"B-t0", "O"}, "i0"},
        {"b", {"z"}, {"O"}, "i1"},
    };
    auto maps = data::LabelMaps::build(utts);
    StudentConfig cfg = tiny_config();
    cfg.vocab = maps.tokens.size();
    cfg.n_intents = maps.intents.size();
    cfg.n_slots = maps.slots.size();
    auto params = StudentParams::init(cfg, rng);
    Metrics m = evaluate(params, utts, maps);
    CHECK(m.intent_acc >= 0.0);
    CHECK(m.intent_acc <= 100.0);
    CHECK(m.overall_acc <= m.intent_acc);
}
