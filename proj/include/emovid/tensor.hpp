#pragma once

#include "emovid/rng.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace emovid {

// Dense 64-bit float tensor with reverse-mode automatic differentiation.
// A Tensor is a value-semantic handle to a shared graph node; operations
// build a DAG of nodes and backward() walks it in reverse topological order.
// Values are treated as immutable once created during a forward pass;
// parameter buffers are only mutated between graph builds (optimizer step,
// gradient zeroing).

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad; // empty until first needed; same length as value once allocated
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn; // accumulates this->grad into parents
    const char* op = "leaf";

    long numel() const { return static_cast<long>(value.size()); }
    double* grad_data(); // allocates a zero buffer on first use
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double v, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor identity(int n);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
    long numel() const { return node_->numel(); }

    const std::vector<double>& value() const { return node_->value; }
    std::vector<double>& value_mut() { return node_->value; } // leaves only, between graph builds
    const std::vector<double>& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    void zero_grad();   // clears to zeros, keeping the buffer allocated
    void ensure_grad(); // allocates a zero gradient buffer if absent

    double item() const; // scalar tensors only

    std::shared_ptr<TensorNode> node() const { return node_; }
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<TensorNode> node_;
};

// While a NoGradGuard is alive on a thread, ops create constant results with
// no graph edges. Used for evaluation, pseudo-labeling and finite-difference
// probes.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

std::string shape_str(const std::vector<int>& shape);

// ---- elementwise / arithmetic -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b); // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b); // Hadamard
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, const Tensor& s); // s has one element
Tensor div_scalar(const Tensor& a, const Tensor& s);

Tensor relu(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor sqrt_op(const Tensor& x); // elementwise, nonnegative domain

// Dispatch by name; unknown names raise ConfigError.
Tensor elementwise(const std::string& name, const Tensor& x);

// ---- shape ops -----------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor transpose(const Tensor& a);                          // 2-D
Tensor slice_channels(const Tensor& x, int c0, int c1);     // x is C x H x W
Tensor concat(const std::vector<Tensor>& parts);            // 1-D concatenation
Tensor select(const Tensor& a, int index);                  // 1-D -> scalar

// ---- reductions ----------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor logsumexp(const Tensor& a); // 1-D, max-shifted

// ---- structured ops ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x); // 2-D, shift-invariant, rows sum to 1

// Inverted dropout: in training mode each element is zeroed with
// probability p and survivors are scaled by 1/(1-p); inference is identity.
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

// Zero-padded grouped convolution; x is Cin x H x W, w is
// Cout x (Cin/groups) x kh x kw.
Tensor grouped_conv2d(const Tensor& x, const Tensor& w, int groups, int stride, int pad);

// Per-channel affine y[c,...] = gamma[c] * x[c,...] + beta[c].
Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta);

// ---- backward ------------------------------------------------------------

// Accumulates gradients of a scalar loss into every reachable tensor that
// requires grad. Repeated calls without zeroing accumulate additively.
void backward(const Tensor& loss);

} // namespace emovid
