#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

// Dense f64 tensors with reverse-mode autodiff on an explicit tape. Tensors
// are immutable values after construction; ops return fresh tensors and, when
// an input is attached to a tape, record a node whose backward rule
// accumulates into the parents' gradient buffers. A tape lives for one
// forward/backward pass.

namespace afd {

class Tape;

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<size_t> shape);  // zeros
    Tensor(std::vector<size_t> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<size_t> shape, double v);
    static Tensor row(std::vector<double> data);  // shape {1, n}

    bool defined() const { return data_ != nullptr; }
    const std::vector<size_t>& shape() const { return shape_; }
    size_t size() const { return data_ ? data_->size() : 0; }
    size_t rank() const { return shape_.size(); }
    size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
    size_t cols() const { return shape_.size() < 2 ? size() / rows() : shape_[1]; }

    const std::vector<double>& data() const { return *data_; }
    double operator[](size_t i) const { return (*data_)[i]; }
    double at(size_t r, size_t c) const { return (*data_)[r * cols() + c]; }
    double value() const;  // scalar tensors only

    std::string shape_str() const;
    bool all_finite() const;

    bool requires_grad = false;
    int node = -1;      // tape node id, -1 when detached
    Tape* tape = nullptr;

  private:
    std::vector<size_t> shape_;
    std::shared_ptr<const std::vector<double>> data_;
};

class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, const std::vector<double>& upstream)>;

    // Register a leaf; sets requires_grad and attaches the tensor.
    int watch(Tensor& t);

    // Record an op node. Used by the op implementations.
    int record(std::vector<int> parents, std::vector<size_t> shape, BackwardFn fn);

    // Reverse sweep from a scalar root. Clears previous gradients first, so
    // repeated calls reproduce identical values.
    void backward(const Tensor& root);

    // Gradient of a watched/attached tensor after backward(); zeros when the
    // node was not reached.
    Tensor grad(const Tensor& t) const;

    // Accumulation buffer for a node, zero-initialized on first use.
    std::vector<double>& grad_buffer(int node);
    bool has_grad(int node) const { return !grads_[node].empty(); }

    size_t num_nodes() const { return nodes_.size(); }

  private:
    struct Node {
        std::vector<int> parents;
        std::vector<size_t> shape;
        size_t size;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
};

// --- ops ---

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // broadcast v over rows
Tensor scale(const Tensor& a, double c);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor softmax_masked(const Tensor& logits, const Tensor& mask);
Tensor mse_sum(const Tensor& a, const Tensor& b);  // (1/rows) * sum of squared diffs
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor slice_rows(const Tensor& a, size_t r0, size_t r1);
Tensor slice_cols(const Tensor& a, size_t c0, size_t c1);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor sum_all(const Tensor& a);

// Max relative error between the tape gradient of f at x and a central
// finite difference, per coordinate:
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// f must map its argument through tensor ops to a scalar tensor.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double h);

namespace detail {
[[noreturn]] void fail(const std::string& msg);
}

#define AFD_CHECK(cond, msg)                    \
    do {                                        \
        if (!(cond)) ::afd::detail::fail(msg);  \
    } while (0)

}  // namespace afd
