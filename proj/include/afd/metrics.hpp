#pragma once

#include <string>
#include <vector>

// Sequence-labeling metrics: intent accuracy, entity-level micro slot F1
// over BIO chunks, and overall accuracy (intent and full slot sequence both
// correct). All values are percentages.

namespace afd {

struct Metrics {
    double intent_acc = 0.0;
    double slot_f1 = 0.0;
    double overall_acc = 0.0;
};

struct Chunk {
    std::string type;
    size_t begin = 0;  // [begin, end)
    size_t end = 0;

    bool operator==(const Chunk&) const = default;
};

// Maximal B-X (I-X)* spans; an I-X with no live chunk of type X opens
// nothing and is skipped.
std::vector<Chunk> bio_chunks(const std::vector<std::string>& tags);

// Micro-averaged chunk F1 over a corpus of gold/predicted tag sequences.
double chunk_f1(const std::vector<std::vector<std::string>>& gold,
                const std::vector<std::vector<std::string>>& pred);

Metrics compute_metrics(const std::vector<std::string>& gold_intents,
                        const std::vector<std::string>& pred_intents,
                        const std::vector<std::vector<std::string>>& gold_tags,
                        const std::vector<std::vector<std::string>>& pred_tags);

}  // namespace afd
