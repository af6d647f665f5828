// Benchmark comparing the serial reference kernels against the OpenMP
// versions at sizes where the split pays off.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "afd/kernels.hpp"
#include "afd/rng.hpp"

namespace {

using afd::Rng;
namespace kernels = afd::kernels;

std::vector<double> random_vec(Rng& rng, size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

double time_best_of(int reps, const std::function<void()>& fn) {
    double best = 1e100;
    for (int r = 0; r < reps; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        double dt = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              t0)
                        .count();
        if (dt < best) best = dt;
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-24s serial %8.2f ms   parallel %8.2f ms   speedup %.2fx\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
    Rng rng(1);

    {
        const size_t m = 384, k = 384, n = 384;
        auto a = random_vec(rng, m * k);
        auto b = random_vec(rng, k * n);
        std::vector<double> c(m * n);
        double s = time_best_of(3, [&] {
            kernels::serial::matmul_nn(c.data(), a.data(), b.data(), m, k, n);
        });
        double p = time_best_of(3, [&] {
            kernels::matmul_nn(c.data(), a.data(), b.data(), m, k, n);
        });
        report("matmul 384^3", s, p);
    }
    {
        const size_t m = 256, k = 512, n = 256;
        auto a = random_vec(rng, m * k);
        auto bt = random_vec(rng, n * k);
        std::vector<double> c(m * n);
        double s = time_best_of(3, [&] {
            kernels::serial::matmul_nt(c.data(), a.data(), bt.data(), m, k, n);
        });
        double p = time_best_of(3, [&] {
            kernels::matmul_nt(c.data(), a.data(), bt.data(), m, k, n);
        });
        report("matmul_nt 256x512x256", s, p);
    }
    {
        const size_t n = 1 << 22;
        auto x = random_vec(rng, n);
        std::vector<double> y(n);
        double s = time_best_of(3, [&] { kernels::serial::gelu_fwd(y.data(), x.data(), n); });
        double p = time_best_of(3, [&] { kernels::gelu_fwd(y.data(), x.data(), n); });
        report("gelu 4M", s, p);
    }
    {
        const size_t rows = 4096, d = 512;
        auto x = random_vec(rng, rows * d);
        auto gain = random_vec(rng, d);
        auto bias = random_vec(rng, d);
        std::vector<double> y(rows * d), xhat(rows * d), rstd(rows);
        double s = time_best_of(3, [&] {
            kernels::serial::layer_norm_fwd(y.data(), xhat.data(), rstd.data(), x.data(),
                                            gain.data(), bias.data(), rows, d, 1e-5);
        });
        double p = time_best_of(3, [&] {
            kernels::layer_norm_fwd(y.data(), xhat.data(), rstd.data(), x.data(), gain.data(),
                                    bias.data(), rows, d, 1e-5);
        });
        report("layer_norm 4096x512", s, p);
    }
    {
        const size_t rows = 4096, d = 512;
        auto x = random_vec(rng, rows * d);
        std::vector<double> mask(rows * d, 1.0);
        std::vector<double> y(rows * d);
        double s = time_best_of(3, [&] {
            kernels::serial::softmax_masked_fwd(y.data(), x.data(), mask.data(), rows, d);
        });
        double p = time_best_of(3, [&] {
            kernels::softmax_masked_fwd(y.data(), x.data(), mask.data(), rows, d);
        });
        report("softmax 4096x512", s, p);
    }
    return 0;
}
