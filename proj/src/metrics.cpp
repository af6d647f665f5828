#include "afd/metrics.hpp"

#include "afd/tensor.hpp"

namespace afd {

std::vector<Chunk> bio_chunks(const std::vector<std::string>& tags) {
    std::vector<Chunk> chunks;
    size_t i = 0, n = tags.size();
    while (i < n) {
        if (tags[i].size() >= 3 && tags[i][0] == 'B' && tags[i][1] == '-') {
            std::string type = tags[i].substr(2);
            size_t j = i + 1;
            while (j < n && tags[j] == "I-" + type) ++j;
            chunks.push_back({type, i, j});
            i = j;
        } else {
            ++i;
        }
    }
    return chunks;
}

double chunk_f1(const std::vector<std::vector<std::string>>& gold,
                const std::vector<std::vector<std::string>>& pred) {
    AFD_CHECK(gold.size() == pred.size(), "chunk_f1: corpus size mismatch");
    size_t tp = 0, n_gold = 0, n_pred = 0;
    for (size_t s = 0; s < gold.size(); ++s) {
        auto gc = bio_chunks(gold[s]);
        auto pc = bio_chunks(pred[s]);
        n_gold += gc.size();
        n_pred += pc.size();
        for (const Chunk& c : pc) {
            for (const Chunk& g : gc) {
                if (c == g) {
                    ++tp;
                    break;
                }
            }
        }
    }
    double precision = n_pred > 0 ? double(tp) / double(n_pred) : (n_gold == 0 ? 1.0 : 0.0);
    double recall = n_gold > 0 ? double(tp) / double(n_gold) : 1.0;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

Metrics compute_metrics(const std::vector<std::string>& gold_intents,
                        const std::vector<std::string>& pred_intents,
                        const std::vector<std::vector<std::string>>& gold_tags,
                        const std::vector<std::vector<std::string>>& pred_tags) {
    size_t n = gold_intents.size();
    AFD_CHECK(n > 0, "compute_metrics: empty corpus");
    AFD_CHECK(pred_intents.size() == n && gold_tags.size() == n && pred_tags.size() == n,
              "compute_metrics: size mismatch");
    size_t intent_ok = 0, overall_ok = 0;
    for (size_t i = 0; i < n; ++i) {
        bool iok = gold_intents[i] == pred_intents[i];
        bool sok = gold_tags[i] == pred_tags[i];
        intent_ok += iok ? 1 : 0;
        overall_ok += (iok && sok) ? 1 : 0;
    }
    Metrics m;
    m.intent_acc = 100.0 * double(intent_ok) / double(n);
    m.slot_f1 = 100.0 * chunk_f1(gold_tags, pred_tags);
    m.overall_acc = 100.0 * double(overall_ok) / double(n);
    return m;
}

}  // namespace afd
