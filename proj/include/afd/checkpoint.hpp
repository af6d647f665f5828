#pragma once

#include <optional>
#include <string>

#include "afd/adapter.hpp"
#include "afd/data.hpp"
#include "afd/student.hpp"

// Model checkpoint: a single versioned JSON document holding every parameter
// tensor (name, shape, row-major values), the label maps and the student
// configuration. Doubles are serialized with round-trip-exact formatting, so
// save -> load -> save reproduces the file byte for byte.

namespace afd {

struct Checkpoint {
    StudentParams student;
    data::LabelMaps maps;
    std::optional<AdapterParams> adapter;
    std::optional<LinearAdapterParams> linear_adapter;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a digest of the serialized checkpoint bytes.
std::string checkpoint_digest(const Checkpoint& ckpt);
std::string file_digest(const std::string& path);

}  // namespace afd
