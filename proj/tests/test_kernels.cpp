#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "afd/kernels.hpp"
#include "afd/rng.hpp"

using namespace afd;

namespace {

std::vector<double> random_vec(Rng& rng, size_t n, double lo = -2.0, double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace

// The parallel kernels must agree bit for bit with the serial reference:
// the per-element accumulation order is identical, only the element loop is
// distributed.

TEST_CASE("matmul variants: parallel == serial bitwise") {
    Rng rng(42);
    for (auto [m, k, n] : {std::tuple<size_t, size_t, size_t>{3, 4, 2},
                           {17, 9, 23},
                           {64, 48, 56},
                           {128, 96, 80}}) {
        auto a = random_vec(rng, m * k);
        auto b = random_vec(rng, k * n);
        auto bt = random_vec(rng, n * k);
        auto at = random_vec(rng, k * m);
        std::vector<double> c1(m * n), c2(m * n);

        kernels::set_parallel(false);
        kernels::matmul_nn(c1.data(), a.data(), b.data(), m, k, n);
        kernels::set_parallel(true);
        kernels::matmul_nn(c2.data(), a.data(), b.data(), m, k, n);
        CHECK(c1 == c2);

        kernels::serial::matmul_nt(c1.data(), a.data(), bt.data(), m, k, n);
        kernels::matmul_nt(c2.data(), a.data(), bt.data(), m, k, n);
        CHECK(c1 == c2);

        kernels::serial::matmul_tn(c1.data(), at.data(), b.data(), m, k, n);
        kernels::matmul_tn(c2.data(), at.data(), b.data(), m, k, n);
        CHECK(c1 == c2);
    }
}

TEST_CASE("matmul accumulate flag adds on top") {
    std::vector<double> a{1, 2, 3, 4};   // 2x2
    std::vector<double> b{5, 6, 7, 8};   // 2x2
    std::vector<double> c{1, 1, 1, 1};
    kernels::matmul_nn(c.data(), a.data(), b.data(), 2, 2, 2, /*acc=*/true);
    CHECK(c == std::vector<double>{20, 23, 44, 51});
}

TEST_CASE("elementwise and row kernels: parallel == serial bitwise") {
    Rng rng(7);
    const size_t rows = 300, d = 160;  // above the parallel cutoff
    auto x = random_vec(rng, rows * d);
    auto gain = random_vec(rng, d, 0.5, 1.5);
    auto bias = random_vec(rng, d);
    auto dy = random_vec(rng, rows * d);
    std::vector<double> mask(rows * d);
    for (size_t r = 0; r < rows; ++r) {
        bool any = false;
        for (size_t c = 0; c < d; ++c) {
            mask[r * d + c] = rng.uniform() < 0.7 ? 1.0 : 0.0;
            any = any || mask[r * d + c] == 1.0;
        }
        if (!any) mask[r * d] = 1.0;
    }

    std::vector<double> y1(rows * d), y2(rows * d);
    kernels::serial::gelu_fwd(y1.data(), x.data(), x.size());
    kernels::gelu_fwd(y2.data(), x.data(), x.size());
    CHECK(y1 == y2);

    std::vector<double> dx1(rows * d, 0.0), dx2(rows * d, 0.0);
    kernels::serial::gelu_bwd(dx1.data(), x.data(), dy.data(), x.size());
    kernels::gelu_bwd(dx2.data(), x.data(), dy.data(), x.size());
    CHECK(dx1 == dx2);

    kernels::serial::tanh_fwd(y1.data(), x.data(), x.size());
    kernels::tanh_fwd(y2.data(), x.data(), x.size());
    CHECK(y1 == y2);

    kernels::serial::sigmoid_fwd(y1.data(), x.data(), x.size());
    kernels::sigmoid_fwd(y2.data(), x.data(), x.size());
    CHECK(y1 == y2);

    std::vector<double> xh1(rows * d), xh2(rows * d), rs1(rows), rs2(rows);
    kernels::serial::layer_norm_fwd(y1.data(), xh1.data(), rs1.data(), x.data(), gain.data(),
                                    bias.data(), rows, d, 1e-5);
    kernels::layer_norm_fwd(y2.data(), xh2.data(), rs2.data(), x.data(), gain.data(), bias.data(),
                            rows, d, 1e-5);
    CHECK(y1 == y2);
    CHECK(xh1 == xh2);
    CHECK(rs1 == rs2);

    kernels::serial::softmax_masked_fwd(y1.data(), x.data(), mask.data(), rows, d);
    kernels::softmax_masked_fwd(y2.data(), x.data(), mask.data(), rows, d);
    CHECK(y1 == y2);

    std::fill(dx1.begin(), dx1.end(), 0.0);
    std::fill(dx2.begin(), dx2.end(), 0.0);
    kernels::serial::softmax_masked_bwd(dx1.data(), dy.data(), y1.data(), mask.data(), rows, d);
    kernels::softmax_masked_bwd(dx2.data(), dy.data(), y2.data(), mask.data(), rows, d);
    CHECK(dx1 == dx2);

    kernels::set_parallel(true);
}

TEST_CASE("repeated runs are bit-identical regardless of thread scheduling") {
    Rng rng(11);
    const size_t m = 96, k = 64, n = 96;
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    std::vector<double> c1(m * n), c2(m * n);
    kernels::matmul_nn(c1.data(), a.data(), b.data(), m, k, n);
    for (int rep = 0; rep < 5; ++rep) {
        kernels::matmul_nn(c2.data(), a.data(), b.data(), m, k, n);
        CHECK(c1 == c2);
    }
}
