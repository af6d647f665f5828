#include "afd/adapter.hpp"

#include <cmath>

namespace afd {

ResidualWidth residual_width_from_string(const std::string& s) {
    if (s == "dh") return ResidualWidth::Dh;
    if (s == "des") return ResidualWidth::Des;
    detail::fail("residual_width must be 'dh' or 'des', got '" + s + "'");
}

std::string to_string(ResidualWidth w) { return w == ResidualWidth::Dh ? "dh" : "des"; }

namespace {

Tensor uniform_init(Rng& rng, std::vector<size_t> shape, size_t fan_in, double scale = 1.0) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    double bound = 1.0 / std::sqrt(double(fan_in));
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(v));
}

}  // namespace

AdapterParams AdapterParams::init(const AdapterConfig& cfg, Rng& rng) {
    size_t dh = cfg.d_h(), bw = cfg.block_width();
    AdapterParams p;
    p.cfg = cfg;
    p.w1 = uniform_init(rng, {cfg.d_es, dh}, cfg.d_es);
    p.b1 = Tensor({1, dh});
    p.ln1_gain = Tensor::full({dh}, 1.0);
    p.ln1_bias = Tensor({dh});
    p.w2 = uniform_init(rng, {dh, dh}, dh);
    p.b2 = Tensor({1, dh});
    p.w3 = uniform_init(rng, {dh, bw}, dh);
    p.b3 = Tensor({1, bw});
    p.ln2_gain = Tensor::full({bw}, 1.0);
    p.ln2_bias = Tensor({bw});
    // w4 starts small so the projected embedding does not dominate the loss
    // in the first epochs
    p.w4 = uniform_init(rng, {bw, cfg.d_et}, bw, 0.1);
    p.b4 = Tensor({1, cfg.d_et});
    return p;
}

std::vector<std::pair<std::string, Tensor*>> AdapterParams::named() {
    return {{"adapter.w1", &w1},           {"adapter.b1", &b1},
            {"adapter.ln1_gain", &ln1_gain}, {"adapter.ln1_bias", &ln1_bias},
            {"adapter.w2", &w2},           {"adapter.b2", &b2},
            {"adapter.w3", &w3},           {"adapter.b3", &b3},
            {"adapter.ln2_gain", &ln2_gain}, {"adapter.ln2_bias", &ln2_bias},
            {"adapter.w4", &w4},           {"adapter.b4", &b4}};
}

std::vector<std::pair<std::string, const Tensor*>> AdapterParams::named() const {
    auto mut = const_cast<AdapterParams*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [n, t] : mut) out.emplace_back(n, t);
    return out;
}

Tensor project(const Tensor& e_s, const AdapterParams& p) {
    AFD_CHECK(e_s.rank() == 2 && e_s.cols() == p.cfg.d_es,
              "project: dimension error, input " + e_s.shape_str() + " expects width " +
                  std::to_string(p.cfg.d_es));
    // expansion
    Tensor h1 = layer_norm(gelu(add_rowvec(matmul(e_s, p.w1), p.b1)), p.ln1_gain, p.ln1_bias);
    // residual block
    Tensor branch = add_rowvec(matmul(gelu(add_rowvec(matmul(h1, p.w2), p.b2)), p.w3), p.b3);
    Tensor skip = p.cfg.residual_width == ResidualWidth::Dh
                      ? h1
                      : slice_cols(h1, 0, p.cfg.d_es);
    Tensor h2 = layer_norm(add(skip, branch), p.ln2_gain, p.ln2_bias);
    // projection into teacher space
    return add_rowvec(matmul(h2, p.w4), p.b4);
}

LinearAdapterParams LinearAdapterParams::init(size_t d_es, size_t d_et, Rng& rng) {
    LinearAdapterParams p;
    p.d_es = d_es;
    p.d_et = d_et;
    p.w = uniform_init(rng, {d_es, d_et}, d_es);
    p.b = Tensor({1, d_et});
    return p;
}

std::vector<std::pair<std::string, Tensor*>> LinearAdapterParams::named() {
    return {{"adapter.linear_w", &w}, {"adapter.linear_b", &b}};
}

std::vector<std::pair<std::string, const Tensor*>> LinearAdapterParams::named() const {
    auto mut = const_cast<LinearAdapterParams*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [n, t] : mut) out.emplace_back(n, t);
    return out;
}

Tensor project_linear(const Tensor& e_s, const LinearAdapterParams& p) {
    AFD_CHECK(e_s.rank() == 2 && e_s.cols() == p.d_es,
              "project_linear: dimension error, input " + e_s.shape_str() + " expects width " +
                  std::to_string(p.d_es));
    return add_rowvec(matmul(e_s, p.w), p.b);
}

}  // namespace afd
