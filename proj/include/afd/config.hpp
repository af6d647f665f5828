#pragma once

#include <string>

#include "afd/trainer.hpp"

// Run configuration: one JSON document covering student dims, adapter dims,
// the distillation schedule, optimizer settings and the seed. Unknown keys
// are rejected; every field has a default; the fully resolved config is
// echoed into the run directory.

namespace afd {

struct RunConfig {
    uint64_t seed = 1;
    StudentConfig student;       // vocab/n_intents/n_slots filled from data at train time
    AdapterConfig adapter;
    DistillConfig distill;
    OptimizerConfig optim;
    size_t batch_size = 16;
    int ignore_index = -100;

    TrainConfig to_train_config(const data::LabelMaps& maps) const;

    std::string to_json() const;  // fully resolved
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::string& path);
};

}  // namespace afd
