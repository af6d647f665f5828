#pragma once

#include <string>
#include <utility>
#include <vector>

#include "afd/rng.hpp"
#include "afd/tensor.hpp"

// Residual projection network mapping student sentence embeddings (d_es)
// into the teacher embedding space (d_et): expansion to d_h = 4*d_es with
// GELU + layer norm, a two-layer feed-forward residual block with a second
// layer norm, then a final linear projection.
//
// The printed residual block is shape-inconsistent (skip in d_h, branch in
// d_es), so both self-consistent repairs are available:
//   Dh  (default): branch output width d_h, skip used as-is,
//                  h2 = LN2(h1 + gelu(h1*W2 + b2)*W3 + b3) in d_h
//   Des: branch output width d_es, skip truncated to its first d_es
//        coordinates, h2 in d_es

namespace afd {

enum class ResidualWidth { Dh, Des };

ResidualWidth residual_width_from_string(const std::string& s);
std::string to_string(ResidualWidth w);

struct AdapterConfig {
    size_t d_es = 32;
    size_t d_et = 64;
    ResidualWidth residual_width = ResidualWidth::Dh;

    size_t d_h() const { return 4 * d_es; }
    size_t block_width() const { return residual_width == ResidualWidth::Dh ? d_h() : d_es; }
};

struct AdapterParams {
    AdapterConfig cfg;
    Tensor w1, b1;          // d_es x d_h, 1 x d_h
    Tensor ln1_gain, ln1_bias;  // d_h
    Tensor w2, b2;          // d_h x d_h, 1 x d_h
    Tensor w3, b3;          // d_h x block_width, 1 x block_width
    Tensor ln2_gain, ln2_bias;  // block_width
    Tensor w4, b4;          // block_width x d_et, 1 x d_et

    static AdapterParams init(const AdapterConfig& cfg, Rng& rng);

    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
};

// e_s: d_b x d_es -> d_b x d_et. Differentiable through every parameter.
Tensor project(const Tensor& e_s, const AdapterParams& params);

// Single linear map d_es -> d_et used by the no-projection-network ablation
// arm: the student embedding is distilled raw, so the map only matches
// dimensions and stays frozen at its random initialization.
struct LinearAdapterParams {
    size_t d_es = 0, d_et = 0;
    Tensor w, b;

    static LinearAdapterParams init(size_t d_es, size_t d_et, Rng& rng);
    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
};

Tensor project_linear(const Tensor& e_s, const LinearAdapterParams& params);

}  // namespace afd
