#pragma once

#include <array>
#include <memory>
#include <string>

#include "afd/data.hpp"
#include "afd/tensor.hpp"

// Frozen teacher backends producing one sentence embedding per utterance.
// The file backend serves precomputed vectors; the synthetic frozen encoder
// runs the full pipeline: per-token hidden states from four mixing layers,
// averaged, then masked mean pooling over valid positions. Neither backend
// ever attaches to a gradient tape.

namespace afd {

class TeacherBackend {
  public:
    virtual ~TeacherBackend() = default;

    // d_b x d_et sentence embeddings, detached.
    virtual Tensor embed(const data::EncodedBatch& batch) const = 0;

    // Stable digest of all parameter bytes; unchanged across training.
    virtual std::string checksum() const = 0;

    virtual size_t dim() const = 0;
    virtual std::string name() const = 0;
};

class FileTeacher : public TeacherBackend {
  public:
    FileTeacher(data::TeacherTable table, size_t d_et);
    static std::unique_ptr<FileTeacher> load(const std::string& path, size_t d_et);

    Tensor embed(const data::EncodedBatch& batch) const override;
    std::string checksum() const override;
    size_t dim() const override { return d_et_; }
    std::string name() const override { return "file"; }

  private:
    data::TeacherTable table_;
    size_t d_et_;
};

class SyntheticFrozenTeacher : public TeacherBackend {
  public:
    SyntheticFrozenTeacher(uint64_t seed, size_t vocab, size_t d_et);

    Tensor embed(const data::EncodedBatch& batch) const override;
    std::string checksum() const override;
    size_t dim() const override { return d_et_; }
    std::string name() const override { return "synthetic-frozen"; }

    // Averaged hidden state per position for one sample, before pooling.
    // Exposed so tests can perturb masked positions.
    std::vector<std::vector<double>> hidden_states(const std::vector<int>& token_ids) const;

    // Eq-style pooling over explicitly supplied hidden states.
    static std::vector<double> masked_mean_pool(const std::vector<std::vector<double>>& states,
                                                const std::vector<double>& mask);

  private:
    size_t vocab_;
    size_t d_et_;
    Tensor token_embedding_;            // vocab x d_et
    std::array<Tensor, 4> mix_;         // d_et x d_et per layer

    static constexpr size_t kLayers = 4;
};

}  // namespace afd
