#include "afd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "afd/kernels.hpp"

namespace afd {

namespace detail {
void fail(const std::string& msg) { throw std::runtime_error(msg); }
}  // namespace detail

namespace {

size_t shape_product(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

std::string shape_to_str(const std::vector<size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? " " : "") << shape[i];
    os << "]";
    return os.str();
}

Tape* result_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* t = nullptr;
    for (const Tensor* in : inputs) {
        if (in->tape != nullptr && in->node >= 0) {
            AFD_CHECK(t == nullptr || t == in->tape, "op inputs live on different tapes");
            t = in->tape;
        }
    }
    return t;
}

Tensor attach(Tensor out, Tape* tape, std::vector<int> parents, Tape::BackwardFn fn) {
    if (tape != nullptr) {
        out.tape = tape;
        out.node = tape->record(std::move(parents), out.shape(), std::move(fn));
    }
    return out;
}

void axpy(std::vector<double>& dst, const std::vector<double>& src, double c = 1.0) {
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
}

}  // namespace

// --- Tensor ---

Tensor::Tensor(std::vector<size_t> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<const std::vector<double>>(shape_product(shape_), 0.0)) {}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> data) : shape_(std::move(shape)) {
    AFD_CHECK(shape_product(shape_) == data.size(),
              "tensor: shape " + shape_to_str(shape_) + " does not match data length " +
                  std::to_string(data.size()));
    data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(std::vector<size_t> shape, double v) {
    size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::row(std::vector<double> data) {
    size_t n = data.size();
    return Tensor({1, n}, std::move(data));
}

double Tensor::value() const {
    AFD_CHECK(size() == 1, "value(): tensor is not a scalar, shape " + shape_str());
    return (*data_)[0];
}

std::string Tensor::shape_str() const { return shape_to_str(shape_); }

bool Tensor::all_finite() const {
    for (double v : *data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// --- Tape ---

int Tape::watch(Tensor& t) {
    AFD_CHECK(t.defined(), "watch: undefined tensor");
    AFD_CHECK(t.node < 0, "watch: tensor already on a tape");
    t.requires_grad = true;
    t.tape = this;
    t.node = record({}, t.shape(), nullptr);
    return t.node;
}

int Tape::record(std::vector<int> parents, std::vector<size_t> shape, BackwardFn fn) {
    Node node;
    node.parents = std::move(parents);
    node.size = shape_product(shape);
    node.shape = std::move(shape);
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    grads_.emplace_back();
    return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buffer(int node) {
    auto& g = grads_[node];
    if (g.empty()) g.assign(nodes_[node].size, 0.0);
    return g;
}

void Tape::backward(const Tensor& root) {
    AFD_CHECK(root.tape == this && root.node >= 0, "backward: root is not on this tape");
    AFD_CHECK(root.size() == 1,
              "backward: rank error, root must be a scalar, got shape " + root.shape_str());
    for (auto& g : grads_) g.clear();
    grads_[root.node] = {1.0};
    for (int i = root.node; i >= 0; --i) {
        if (grads_[i].empty() || !nodes_[i].backward) continue;
        nodes_[i].backward(*this, grads_[i]);
    }
}

Tensor Tape::grad(const Tensor& t) const {
    AFD_CHECK(t.tape == this && t.node >= 0, "grad: tensor is not on this tape");
    const auto& g = grads_[t.node];
    if (g.empty()) return Tensor(t.shape());
    return Tensor(t.shape(), g);
}

// --- ops ---

Tensor add(const Tensor& a, const Tensor& b) {
    AFD_CHECK(a.shape() == b.shape(),
              "add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    Tape* tape = result_tape({&a, &b});
    int pa = a.node, pb = b.node;
    return attach(Tensor(a.shape(), std::move(out)), tape, {pa, pb},
                  [pa, pb](Tape& t, const std::vector<double>& g) {
                      if (pa >= 0) axpy(t.grad_buffer(pa), g);
                      if (pb >= 0) axpy(t.grad_buffer(pb), g);
                  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    AFD_CHECK(a.shape() == b.shape(),
              "sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    Tape* tape = result_tape({&a, &b});
    int pa = a.node, pb = b.node;
    return attach(Tensor(a.shape(), std::move(out)), tape, {pa, pb},
                  [pa, pb](Tape& t, const std::vector<double>& g) {
                      if (pa >= 0) axpy(t.grad_buffer(pa), g);
                      if (pb >= 0) axpy(t.grad_buffer(pb), g, -1.0);
                  });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    size_t rows = m.rows(), cols = m.cols();
    AFD_CHECK(v.size() == cols, "add_rowvec: vector length " + std::to_string(v.size()) +
                                    " does not match columns of " + m.shape_str());
    std::vector<double> out(m.size());
    for (size_t r = 0; r < rows; ++r) {
        for (size_t c = 0; c < cols; ++c) out[r * cols + c] = m.at(r, c) + v[c];
    }
    Tape* tape = result_tape({&m, &v});
    int pm = m.node, pv = v.node;
    return attach(Tensor(m.shape(), std::move(out)), tape, {pm, pv},
                  [pm, pv, rows, cols](Tape& t, const std::vector<double>& g) {
                      if (pm >= 0) axpy(t.grad_buffer(pm), g);
                      if (pv >= 0) {
                          auto& gv = t.grad_buffer(pv);
                          for (size_t r = 0; r < rows; ++r) {
                              for (size_t c = 0; c < cols; ++c) gv[c] += g[r * cols + c];
                          }
                      }
                  });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = c * a[i];
    Tape* tape = result_tape({&a});
    int pa = a.node;
    return attach(Tensor(a.shape(), std::move(out)), tape, {pa},
                  [pa, c](Tape& t, const std::vector<double>& g) {
                      if (pa >= 0) axpy(t.grad_buffer(pa), g, c);
                  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    AFD_CHECK(a.shape() == b.shape(),
              "mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    Tape* tape = result_tape({&a, &b});
    int pa = a.node, pb = b.node;
    return attach(Tensor(a.shape(), std::move(out)), tape, {pa, pb},
                  [pa, pb, a, b](Tape& t, const std::vector<double>& g) {
                      if (pa >= 0) {
                          auto& ga = t.grad_buffer(pa);
                          for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
                      }
                      if (pb >= 0) {
                          auto& gb = t.grad_buffer(pb);
                          for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
                      }
                  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    AFD_CHECK(a.rank() == 2 && b.rank() == 2,
              "matmul: expects rank-2 tensors, got " + a.shape_str() + " and " + b.shape_str());
    AFD_CHECK(a.cols() == b.rows(),
              "matmul: inner dimensions disagree: " + a.shape_str() + " x " + b.shape_str());
    size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n);
    kernels::matmul_nn(out.data(), a.data().data(), b.data().data(), m, k, n);
    Tape* tape = result_tape({&a, &b});
    int pa = a.node, pb = b.node;
    return attach(Tensor({m, n}, std::move(out)), tape, {pa, pb},
                  [pa, pb, a, b, m, k, n](Tape& t, const std::vector<double>& g) {
                      if (pa >= 0) {
                          // dA = dC * B^T
                          kernels::matmul_nt(t.grad_buffer(pa).data(), g.data(), b.data().data(),
                                             m, n, k, /*acc=*/true);
                      }
                      if (pb >= 0) {
                          // dB = A^T * dC
                          kernels::matmul_tn(t.grad_buffer(pb).data(), a.data().data(), g.data(),
                                             k, m, n, /*acc=*/true);
                      }
                  });
}

Tensor transpose(const Tensor& a) {
    AFD_CHECK(a.rank() == 2, "transpose: expects rank-2 tensor, got " + a.shape_str());
    size_t r = a.rows(), c = a.cols();
    std::vector<double> out(a.size());
    for (size_t i = 0; i < r; ++i) {
        for (size_t j = 0; j < c; ++j) out[j * r + i] = a.at(i, j);
    }
    Tape* tape = result_tape({&a});
    int pa = a.node;
    return attach(Tensor({c, r}, std::move(out)), tape, {pa},
                  [pa, r, c](Tape& t, const std::vector<double>& g) {
                      if (pa < 0) return;
                      auto& ga = t.grad_buffer(pa);
                      for (size_t i = 0; i < r; ++i) {
                          for (size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
                      }
                  });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    kernels::sigmoid_fwd(out.data(), a.data().data(), a.size());
    Tensor y(a.shape(), std::move(out));
    Tape* tape = result_tape({&a});
    int pa = a.node;
    return attach(y, tape, {pa}, [pa, y](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        auto& ga = t.grad_buffer(pa);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.size());
    kernels::tanh_fwd(out.data(), a.data().data(), a.size());
    Tensor y(a.shape(), std::move(out));
    Tape* tape = result_tape({&a});
    int pa = a.node;
    return attach(y, tape, {pa}, [pa, y](Tape& t, const std::vector<double>& g) {
        if (pa < 0) return;
        auto& ga = t.grad_buffer(pa);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
}

Tensor gelu(const Tensor& a) {
    std::vector<double> out(a.size());
    kernels::gelu_fwd(out.data(), a.data().data(), a.size());
    Tape* tape = result_tape({&a});
    int pa = a.node;
    return attach(Tensor(a.shape(), std::move(out)), tape, {pa},
                  [pa, a](Tape& t, const std::vector<double>& g) {
                      if (pa < 0) return;
                      kernels::gelu_bwd(t.grad_buffer(pa).data(), a.data().data(), g.data(),
                                        a.size());
                  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    size_t d = x.cols();
    size_t rows = x.size() / std::max<size_t>(d, 1);
    AFD_CHECK(d > 0, "layer_norm: empty-dimension error, last dimension is 0");
    AFD_CHECK(eps > 0, "layer_norm: eps must be positive");
    AFD_CHECK(gain.size() == d && bias.size() == d,
              "layer_norm: gain/bias length must be " + std::to_string(d));
    std::vector<double> out(x.size());
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    kernels::layer_norm_fwd(out.data(), xhat->data(), rstd->data(), x.data().data(),
                            gain.data().data(), bias.data().data(), rows, d, eps);
    Tape* tape = result_tape({&x, &gain, &bias});
    int px = x.node, pg = gain.node, pb = bias.node;
    return attach(Tensor(x.shape(), std::move(out)), tape, {px, pg, pb},
                  [px, pg, pb, gain, xhat, rstd, rows, d](Tape& t,
                                                          const std::vector<double>& g) {
                      std::vector<double> dx(rows * d, 0.0), dgain(d, 0.0), dbias(d, 0.0);
                      kernels::layer_norm_bwd(dx.data(), dgain.data(), dbias.data(), g.data(),
                                              xhat->data(), rstd->data(), gain.data().data(),
                                              rows, d);
                      if (px >= 0) axpy(t.grad_buffer(px), dx);
                      if (pg >= 0) axpy(t.grad_buffer(pg), dgain);
                      if (pb >= 0) axpy(t.grad_buffer(pb), dbias);
                  });
}

Tensor softmax_masked(const Tensor& logits, const Tensor& mask) {
    AFD_CHECK(logits.shape() == mask.shape(), "softmax_masked: shape mismatch " +
                                                  logits.shape_str() + " vs " + mask.shape_str());
    size_t d = logits.cols();
    size_t rows = logits.size() / std::max<size_t>(d, 1);
    for (size_t r = 0; r < rows; ++r) {
        bool any = false;
        for (size_t c = 0; c < d; ++c) {
            double mv = mask[r * d + c];
            AFD_CHECK(mv == 0.0 || mv == 1.0, "softmax_masked: mask entries must be 0 or 1");
            any = any || mv == 1.0;
        }
        AFD_CHECK(any, "softmax_masked: degenerate-mask error, row " + std::to_string(r) +
                           " has no valid position");
    }
    std::vector<double> out(logits.size());
    kernels::softmax_masked_fwd(out.data(), logits.data().data(), mask.data().data(), rows, d);
    Tensor y(logits.shape(), std::move(out));
    Tape* tape = result_tape({&logits});
    int pl = logits.node;
    return attach(y, tape, {pl}, [pl, y, mask, rows, d](Tape& t, const std::vector<double>& g) {
        if (pl < 0) return;
        kernels::softmax_masked_bwd(t.grad_buffer(pl).data(), g.data(), y.data().data(),
                                    mask.data().data(), rows, d);
    });
}

Tensor mse_sum(const Tensor& a, const Tensor& b) {
    AFD_CHECK(a.shape() == b.shape(),
              "mse_sum: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double batch = static_cast<double>(a.rows());
    double sum = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double diff = a[i] - b[i];
        sum += diff * diff;
    }
    Tape* tape = result_tape({&a, &b});
    int pa = a.node, pb = b.node;
    return attach(Tensor::scalar(sum / batch), tape, {pa, pb},
                  [pa, pb, a, b, batch](Tape& t, const std::vector<double>& g) {
                      double c = 2.0 * g[0] / batch;
                      if (pa >= 0) {
                          auto& ga = t.grad_buffer(pa);
                          for (size_t i = 0; i < ga.size(); ++i) ga[i] += c * (a[i] - b[i]);
                      }
                      if (pb >= 0) {
                          auto& gb = t.grad_buffer(pb);
                          for (size_t i = 0; i < gb.size(); ++i) gb[i] -= c * (a[i] - b[i]);
                      }
                  });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index) {
    AFD_CHECK(logits.rank() == 2, "cross_entropy: expects rank-2 logits, got " +
                                      logits.shape_str());
    size_t n = logits.rows(), c = logits.cols();
    AFD_CHECK(targets.size() == n, "cross_entropy: " + std::to_string(targets.size()) +
                                       " targets for " + std::to_string(n) + " rows");
    size_t live = 0;
    for (size_t r = 0; r < n; ++r) {
        if (targets[r] == ignore_index) continue;
        AFD_CHECK(targets[r] >= 0 && static_cast<size_t>(targets[r]) < c,
                  "cross_entropy: target " + std::to_string(targets[r]) + " out of range [0, " +
                      std::to_string(c) + ") at row " + std::to_string(r));
        ++live;
    }
    AFD_CHECK(live > 0, "cross_entropy: empty-reduction error, all rows ignored");

    auto probs = std::make_shared<std::vector<double>>(n * c, 0.0);
    double loss = 0.0;
    for (size_t r = 0; r < n; ++r) {
        if (targets[r] == ignore_index) continue;
        const double* z = logits.data().data() + r * c;
        double maxv = z[0];
        for (size_t j = 1; j < c; ++j) maxv = std::max(maxv, z[j]);
        double sum = 0.0;
        for (size_t j = 0; j < c; ++j) sum += std::exp(z[j] - maxv);
        double lse = maxv + std::log(sum);
        for (size_t j = 0; j < c; ++j) (*probs)[r * c + j] = std::exp(z[j] - lse);
        loss += lse - z[targets[r]];
    }
    loss /= static_cast<double>(live);

    Tape* tape = result_tape({&logits});
    int pl = logits.node;
    double m = static_cast<double>(live);
    return attach(Tensor::scalar(loss), tape, {pl},
                  [pl, probs, targets, ignore_index, n, c, m](Tape& t,
                                                              const std::vector<double>& g) {
                      if (pl < 0) return;
                      auto& gl = t.grad_buffer(pl);
                      double s = g[0] / m;
                      for (size_t r = 0; r < n; ++r) {
                          if (targets[r] == ignore_index) continue;
                          for (size_t j = 0; j < c; ++j) {
                              double delta = static_cast<size_t>(targets[r]) == j ? 1.0 : 0.0;
                              gl[r * c + j] += s * ((*probs)[r * c + j] - delta);
                          }
                      }
                  });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    AFD_CHECK(table.rank() == 2, "embedding_lookup: table must be rank-2");
    size_t v = table.rows(), d = table.cols(), n = ids.size();
    AFD_CHECK(n > 0, "embedding_lookup: empty id list");
    std::vector<double> out(n * d);
    for (size_t i = 0; i < n; ++i) {
        AFD_CHECK(ids[i] >= 0 && static_cast<size_t>(ids[i]) < v,
                  "embedding_lookup: id " + std::to_string(ids[i]) + " out of range [0, " +
                      std::to_string(v) + ")");
        std::copy_n(table.data().data() + static_cast<size_t>(ids[i]) * d, d, out.data() + i * d);
    }
    Tape* tape = result_tape({&table});
    int pt = table.node;
    return attach(Tensor({n, d}, std::move(out)), tape, {pt},
                  [pt, ids, d](Tape& t, const std::vector<double>& g) {
                      if (pt < 0) return;
                      auto& gt = t.grad_buffer(pt);
                      for (size_t i = 0; i < ids.size(); ++i) {
                          double* dst = gt.data() + static_cast<size_t>(ids[i]) * d;
                          const double* src = g.data() + i * d;
                          for (size_t j = 0; j < d; ++j) dst[j] += src[j];
                      }
                  });
}

Tensor slice_rows(const Tensor& a, size_t r0, size_t r1) {
    AFD_CHECK(a.rank() == 2, "slice_rows: expects rank-2 tensor");
    AFD_CHECK(r0 < r1 && r1 <= a.rows(), "slice_rows: bad range [" + std::to_string(r0) + ", " +
                                             std::to_string(r1) + ") for " + a.shape_str());
    size_t c = a.cols();
    std::vector<double> out(a.data().begin() + r0 * c, a.data().begin() + r1 * c);
    Tape* tape = result_tape({&a});
    int pa = a.node;
    return attach(Tensor({r1 - r0, c}, std::move(out)), tape, {pa},
                  [pa, r0, c](Tape& t, const std::vector<double>& g) {
                      if (pa < 0) return;
                      auto& ga = t.grad_buffer(pa);
                      for (size_t i = 0; i < g.size(); ++i) ga[r0 * c + i] += g[i];
                  });
}

Tensor slice_cols(const Tensor& a, size_t c0, size_t c1) {
    AFD_CHECK(a.rank() == 2, "slice_cols: expects rank-2 tensor");
    AFD_CHECK(c0 < c1 && c1 <= a.cols(), "slice_cols: bad range [" + std::to_string(c0) + ", " +
                                             std::to_string(c1) + ") for " + a.shape_str());
    size_t r = a.rows(), c = a.cols(), w = c1 - c0;
    std::vector<double> out(r * w);
    for (size_t i = 0; i < r; ++i) {
        std::copy_n(a.data().data() + i * c + c0, w, out.data() + i * w);
    }
    Tape* tape = result_tape({&a});
    int pa = a.node;
    return attach(Tensor({r, w}, std::move(out)), tape, {pa},
                  [pa, r, c, c0, w](Tape& t, const std::vector<double>& g) {
                      if (pa < 0) return;
                      auto& ga = t.grad_buffer(pa);
                      for (size_t i = 0; i < r; ++i) {
                          for (size_t j = 0; j < w; ++j) ga[i * c + c0 + j] += g[i * w + j];
                      }
                  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    AFD_CHECK(a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows(),
              "concat_cols: row mismatch " + a.shape_str() + " vs " + b.shape_str());
    size_t r = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<double> out(r * (ca + cb));
    for (size_t i = 0; i < r; ++i) {
        std::copy_n(a.data().data() + i * ca, ca, out.data() + i * (ca + cb));
        std::copy_n(b.data().data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
    }
    Tape* tape = result_tape({&a, &b});
    int pa = a.node, pb = b.node;
    return attach(Tensor({r, ca + cb}, std::move(out)), tape, {pa, pb},
                  [pa, pb, r, ca, cb](Tape& t, const std::vector<double>& g) {
                      size_t c = ca + cb;
                      if (pa >= 0) {
                          auto& ga = t.grad_buffer(pa);
                          for (size_t i = 0; i < r; ++i) {
                              for (size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * c + j];
                          }
                      }
                      if (pb >= 0) {
                          auto& gb = t.grad_buffer(pb);
                          for (size_t i = 0; i < r; ++i) {
                              for (size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * c + ca + j];
                          }
                      }
                  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    AFD_CHECK(!parts.empty(), "concat_rows: empty part list");
    size_t c = parts[0].cols();
    size_t rows = 0;
    for (const Tensor& p : parts) {
        AFD_CHECK(p.rank() == 2 && p.cols() == c,
                  "concat_rows: column mismatch, expected " + std::to_string(c) + ", got " +
                      p.shape_str());
        rows += p.rows();
    }
    std::vector<double> out;
    out.reserve(rows * c);
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

    std::vector<const Tensor*> ptrs;
    for (const Tensor& p : parts) ptrs.push_back(&p);
    Tape* tape = nullptr;
    for (const Tensor* p : ptrs) {
        if (p->tape != nullptr && p->node >= 0) {
            AFD_CHECK(tape == nullptr || tape == p->tape, "op inputs live on different tapes");
            tape = p->tape;
        }
    }
    std::vector<int> parents;
    std::vector<size_t> sizes;
    for (const Tensor& p : parts) {
        parents.push_back(p.node);
        sizes.push_back(p.size());
    }
    auto parents_copy = parents;
    return attach(Tensor({rows, c}, std::move(out)), tape, std::move(parents_copy),
                  [parents, sizes](Tape& t, const std::vector<double>& g) {
                      size_t off = 0;
                      for (size_t i = 0; i < parents.size(); ++i) {
                          if (parents[i] >= 0) {
                              auto& gp = t.grad_buffer(parents[i]);
                              for (size_t j = 0; j < sizes[i]; ++j) gp[j] += g[off + j];
                          }
                          off += sizes[i];
                      }
                  });
}

Tensor sum_all(const Tensor& a) {
    double sum = 0.0;
    for (size_t i = 0; i < a.size(); ++i) sum += a[i];
    Tape* tape = result_tape({&a});
    int pa = a.node;
    return attach(Tensor::scalar(sum), tape, {pa},
                  [pa](Tape& t, const std::vector<double>& g) {
                      if (pa < 0) return;
                      auto& ga = t.grad_buffer(pa);
                      for (double& v : ga) v += g[0];
                  });
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h) {
    AFD_CHECK(h > 0, "finite_diff_check: h must be positive");
    Tape tape;
    Tensor xw(x.shape(), x.data());
    tape.watch(xw);
    Tensor y = f(xw);
    AFD_CHECK(y.size() == 1, "finite_diff_check: f must return a scalar");
    tape.backward(y);
    Tensor analytic = tape.grad(xw);

    size_t n = x.size();
    std::vector<double> numeric(n, 0.0);
    bool failed = false;
    std::string error;
    // Probes are independent pure forwards; safe to spread over threads.
#pragma omp parallel for schedule(static)
    for (size_t k = 0; k < n; ++k) {
        try {
            std::vector<double> plus = x.data(), minus = x.data();
            plus[k] += h;
            minus[k] -= h;
            double fp = f(Tensor(x.shape(), std::move(plus))).value();
            double fm = f(Tensor(x.shape(), std::move(minus))).value();
            numeric[k] = (fp - fm) / (2.0 * h);
        } catch (const std::exception& e) {
#pragma omp critical
            {
                failed = true;
                error = e.what();
            }
        }
    }
    AFD_CHECK(!failed, "finite_diff_check: probe failed: " + error);

    double worst = 0.0;
    for (size_t k = 0; k < n; ++k) {
        double a = analytic[k];
        double denom = std::max(1e-8, std::abs(a) + std::abs(numeric[k]));
        worst = std::max(worst, std::abs(a - numeric[k]) / denom);
    }
    return worst;
}

}  // namespace afd
