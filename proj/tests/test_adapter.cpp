#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "afd/adapter.hpp"
#include "afd/rng.hpp"

using namespace afd;

namespace {

Tensor random_tensor(Rng& rng, std::vector<size_t> shape, double lo = -1.0, double hi = 1.0) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("shapes honor d_h = 4*d_es and the residual width variants") {
    Rng rng(1);
    AdapterConfig dh;
    dh.d_es = 8;
    dh.d_et = 12;
    dh.residual_width = ResidualWidth::Dh;
    auto p = AdapterParams::init(dh, rng);
    CHECK(p.w1.shape() == std::vector<size_t>{8, 32});
    CHECK(p.w3.shape() == std::vector<size_t>{32, 32});
    CHECK(p.w4.shape() == std::vector<size_t>{32, 12});

    AdapterConfig des = dh;
    des.residual_width = ResidualWidth::Des;
    auto q = AdapterParams::init(des, rng);
    CHECK(q.w3.shape() == std::vector<size_t>{32, 8});
    CHECK(q.ln2_gain.shape() == std::vector<size_t>{8});
    CHECK(q.w4.shape() == std::vector<size_t>{8, 12});
}

TEST_CASE("zero residual branch collapses to LN2 of the skip") {
    for (ResidualWidth width : {ResidualWidth::Dh, ResidualWidth::Des}) {
        Rng rng(2);
        AdapterConfig cfg;
        cfg.d_es = 4;
        cfg.d_et = 6;
        cfg.residual_width = width;
        auto p = AdapterParams::init(cfg, rng);
        p.w2 = Tensor(p.w2.shape());
        p.b2 = Tensor(p.b2.shape());
        p.w3 = Tensor(p.w3.shape());
        p.b3 = Tensor(p.b3.shape());

        Tensor e_s = random_tensor(rng, {3, 4});
        Tensor out = project(e_s, p);

        // recompute by hand: h1, then LN2(h1 or its first d_es coords)
        Tensor h1 = layer_norm(gelu(add_rowvec(matmul(e_s, p.w1), p.b1)), p.ln1_gain, p.ln1_bias);
        Tensor skip = width == ResidualWidth::Dh ? h1 : slice_cols(h1, 0, 4);
        Tensor expected = add_rowvec(matmul(layer_norm(skip, p.ln2_gain, p.ln2_bias), p.w4),
                                     p.b4);
        CHECK(out.data() == expected.data());
    }
}

TEST_CASE("zero w4 makes the output the constant bias row") {
    Rng rng(3);
    AdapterConfig cfg;
    cfg.d_es = 5;
    cfg.d_et = 7;
    auto p = AdapterParams::init(cfg, rng);
    p.w4 = Tensor(p.w4.shape());
    p.b4 = Tensor::row({1, 2, 3, 4, 5, 6, 7});
    Tensor out1 = project(random_tensor(rng, {2, 5}), p);
    Tensor out2 = project(random_tensor(rng, {2, 5}, -3.0, 3.0), p);
    for (size_t i = 0; i < 2; ++i) {
        for (size_t j = 0; j < 7; ++j) {
            CHECK(out1.at(i, j) == double(j + 1));
            CHECK(out2.at(i, j) == double(j + 1));
        }
    }
}

TEST_CASE("output width is d_et and wrong input width errors") {
    Rng rng(4);
    AdapterConfig cfg;
    cfg.d_es = 4;
    cfg.d_et = 9;
    auto p = AdapterParams::init(cfg, rng);
    CHECK(project(random_tensor(rng, {6, 4}), p).shape() == std::vector<size_t>{6, 9});
    CHECK_THROWS(project(random_tensor(rng, {2, 5}), p));
}

TEST_CASE("batch-order equivariance") {
    Rng rng(5);
    AdapterConfig cfg;
    cfg.d_es = 6;
    cfg.d_et = 10;
    auto p = AdapterParams::init(cfg, rng);
    Tensor e_s = random_tensor(rng, {4, 6});
    Tensor out = project(e_s, p);

    std::vector<size_t> perm{2, 0, 3, 1};
    std::vector<double> permuted(e_s.size());
    for (size_t i = 0; i < 4; ++i) {
        for (size_t j = 0; j < 6; ++j) permuted[i * 6 + j] = e_s.at(perm[i], j);
    }
    Tensor out_perm = project(Tensor({4, 6}, permuted), p);
    for (size_t i = 0; i < 4; ++i) {
        for (size_t j = 0; j < 10; ++j) CHECK(out_perm.at(i, j) == out.at(perm[i], j));
    }
}

TEST_CASE("gradients through mse_sum match finite differences for both widths") {
    // d_es=4, d_et=6, batch 2, every adapter parameter and the input
    for (ResidualWidth width : {ResidualWidth::Dh, ResidualWidth::Des}) {
        Rng rng(width == ResidualWidth::Dh ? 6 : 7);
        AdapterConfig cfg;
        cfg.d_es = 4;
        cfg.d_et = 6;
        cfg.residual_width = width;
        auto p = AdapterParams::init(cfg, rng);
        // moderate scales keep every parameter's gradient clear of fd noise
        for (auto& [name, t] : p.named()) {
            bool gain = name.find("gain") != std::string::npos;
            bool block = name.find(".w2") != std::string::npos ||
                         name.find(".b2") != std::string::npos;
            double bound = block ? 0.25 : (name.find(".w4") != std::string::npos ? 0.35 : 0.8);
            std::vector<double> v(t->size());
            for (auto& x : v) x = gain ? rng.uniform(0.5, 1.5) : rng.uniform(-bound, bound);
            *t = Tensor(t->shape(), std::move(v));
        }
        Tensor e_s = random_tensor(rng, {2, 4});
        Tensor target = random_tensor(rng, {2, 6}, -0.5, 0.5);

        CHECK(finite_diff_check(
                  [&](const Tensor& t) { return mse_sum(project(t, p), target); }, e_s, 1e-6) <=
              1e-5);
        auto named = p.named();
        for (size_t idx = 0; idx < named.size(); ++idx) {
            auto f = [&, idx](const Tensor& t) {
                AdapterParams local = p;
                *(local.named()[idx].second) = t;
                return mse_sum(project(e_s, local), target);
            };
            INFO(named[idx].first);
            CHECK(finite_diff_check(f, *named[idx].second, 1e-6) <= 1e-5);
        }
    }
}

TEST_CASE("linear adapter projects and differentiates") {
    Rng rng(8);
    auto p = LinearAdapterParams::init(4, 6, rng);
    Tensor e_s = random_tensor(rng, {3, 4});
    CHECK(project_linear(e_s, p).shape() == std::vector<size_t>{3, 6});
    CHECK_THROWS(project_linear(random_tensor(rng, {3, 5}), p));

    Tensor target = random_tensor(rng, {3, 6});
    CHECK(finite_diff_check(
              [&](const Tensor& t) {
                  LinearAdapterParams local = p;
                  local.w = t;
                  return mse_sum(project_linear(e_s, local), target);
              },
              p.w, 1e-6) <= 1e-5);
}
