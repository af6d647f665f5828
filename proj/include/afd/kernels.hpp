#pragma once

#include <cstddef>

// Dense f64 kernels behind the tensor ops. Every kernel exists twice: the
// plain serial form in kernels::serial (the reference the tests compare
// against) and an OpenMP version in kernels that distributes rows/elements
// across threads. Each output element is always accumulated in the same
// order, so serial and parallel results are bit-identical and runs are
// reproducible for any thread count.

namespace afd::kernels {

// Problems smaller than this many multiply-adds stay serial.
inline constexpr size_t kParallelCutoff = 32 * 1024;

bool parallel_enabled();
void set_parallel(bool on);

// c[m x n] = a[m x k] * b[k x n]         (acc: += instead of =)
void matmul_nn(double* c, const double* a, const double* b, size_t m, size_t k, size_t n,
               bool acc = false);
// c[m x n] = a[m x k] * b^T, b given as [n x k]
void matmul_nt(double* c, const double* a, const double* b, size_t m, size_t k, size_t n,
               bool acc = false);
// c[m x n] = a^T * b, a given as [k x m], b as [k x n]
void matmul_tn(double* c, const double* a, const double* b, size_t m, size_t k, size_t n,
               bool acc = false);

void gelu_fwd(double* y, const double* x, size_t n);
void gelu_bwd(double* dx, const double* x, const double* dy, size_t n);  // accumulates

void tanh_fwd(double* y, const double* x, size_t n);
void sigmoid_fwd(double* y, const double* x, size_t n);

// Row-wise layer norm over the last dimension, 1/d variance, then gain/bias.
// xhat (normalized pre-gain values) and rstd are cached for the backward.
void layer_norm_fwd(double* y, double* xhat, double* rstd, const double* x, const double* gain,
                    const double* bias, size_t rows, size_t d, double eps);
void layer_norm_bwd(double* dx, double* dgain, double* dbias, const double* dy,
                    const double* xhat, const double* rstd, const double* gain, size_t rows,
                    size_t d);  // accumulates into all three

// Row-wise masked softmax: masked entries get exactly 0, valid entries sum
// to 1. Masking is additive -1e30 before exponentiation, then exact zeroing.
void softmax_masked_fwd(double* y, const double* x, const double* mask, size_t rows, size_t d);
void softmax_masked_bwd(double* dx, const double* dy, const double* y, const double* mask,
                        size_t rows, size_t d);  // accumulates

namespace serial {

void matmul_nn(double* c, const double* a, const double* b, size_t m, size_t k, size_t n,
               bool acc = false);
void matmul_nt(double* c, const double* a, const double* b, size_t m, size_t k, size_t n,
               bool acc = false);
void matmul_tn(double* c, const double* a, const double* b, size_t m, size_t k, size_t n,
               bool acc = false);
void gelu_fwd(double* y, const double* x, size_t n);
void gelu_bwd(double* dx, const double* x, const double* dy, size_t n);
void tanh_fwd(double* y, const double* x, size_t n);
void sigmoid_fwd(double* y, const double* x, size_t n);
void layer_norm_fwd(double* y, double* xhat, double* rstd, const double* x, const double* gain,
                    const double* bias, size_t rows, size_t d, double eps);
void layer_norm_bwd(double* dx, double* dgain, double* dbias, const double* dy,
                    const double* xhat, const double* rstd, const double* gain, size_t rows,
                    size_t d);
void softmax_masked_fwd(double* y, const double* x, const double* mask, size_t rows, size_t d);
void softmax_masked_bwd(double* dx, const double* dy, const double* y, const double* mask,
                        size_t rows, size_t d);

}  // namespace serial

}  // namespace afd::kernels
