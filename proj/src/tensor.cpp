#include "emovid/tensor.hpp"

#include "emovid/error.hpp"
#include "emovid/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace emovid {

namespace {

thread_local int g_no_grad_depth = 0;

long shape_numel(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape)
        n *= d;
    return n;
}

std::shared_ptr<TensorNode> make_leaf(std::vector<int> shape, std::vector<double> data, bool rg) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = rg;
    return n;
}

// Result node of an op: tracks parents only when grad mode is on and some
// parent requires grad; otherwise it degenerates to a constant leaf.
std::shared_ptr<TensorNode> make_result(std::vector<int> shape,
                                        std::vector<std::shared_ptr<TensorNode>> parents,
                                        const char* op) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value.resize(static_cast<size_t>(shape_numel(n->shape)));
    n->op = op;
    if (grad_enabled()) {
        for (const auto& p : parents) {
            if (p->requires_grad) {
                n->requires_grad = true;
                break;
            }
        }
    }
    if (n->requires_grad)
        n->parents = std::move(parents);
    return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

void check_scalar_arg(const Tensor& s, const char* op) {
    if (s.numel() != 1)
        throw ShapeError(std::string(op) + ": expected a single-element tensor, got " +
                         shape_str(s.shape()));
}

} // namespace

double* TensorNode::grad_data() {
    if (grad.empty())
        grad.assign(value.size(), 0.0);
    return grad.data();
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() { return g_no_grad_depth == 0; }

std::string shape_str(const std::vector<int>& shape) {
    std::string out = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i)
            out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    const long n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0),
                            requires_grad));
}

Tensor Tensor::full(std::vector<int> shape, double v, bool requires_grad) {
    const long n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), v),
                            requires_grad));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<long>(data.size()))
        throw ShapeError("Tensor::from: " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor(make_leaf({1}, {v}, requires_grad));
}

Tensor Tensor::identity(int n) {
    std::vector<double> d(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        d[static_cast<size_t>(i) * n + i] = 1.0;
    return Tensor(make_leaf({n, n}, std::move(d), false));
}

void Tensor::zero_grad() {
    if (!node_->grad.empty())
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::ensure_grad() { node_->grad_data(); }

double Tensor::item() const {
    if (numel() != 1)
        throw UsageError("item(): tensor has shape " + shape_str(shape()));
    return node_->value[0];
}

// ---- elementwise / arithmetic -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto an = a.node(), bn = b.node();
    auto n = make_result(a.shape(), {an, bn}, "add");
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = an->value[i] + bn->value[i];
    if (n->requires_grad) {
        n->backward_fn = [an, bn](TensorNode& self) {
            if (an->requires_grad) {
                double* g = an->grad_data();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                double* g = bn->grad_data();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i];
            }
        };
    }
    return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto an = a.node(), bn = b.node();
    auto n = make_result(a.shape(), {an, bn}, "sub");
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = an->value[i] - bn->value[i];
    if (n->requires_grad) {
        n->backward_fn = [an, bn](TensorNode& self) {
            if (an->requires_grad) {
                double* g = an->grad_data();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                double* g = bn->grad_data();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    g[i] -= self.grad[i];
            }
        };
    }
    return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    auto an = a.node(), bn = b.node();
    auto n = make_result(a.shape(), {an, bn}, "mul");
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = an->value[i] * bn->value[i];
    if (n->requires_grad) {
        n->backward_fn = [an, bn](TensorNode& self) {
            if (an->requires_grad) {
                double* g = an->grad_data();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                double* g = bn->grad_data();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i] * an->value[i];
            }
        };
    }
    return Tensor(n);
}

Tensor scale(const Tensor& a, double c) {
    auto an = a.node();
    auto n = make_result(a.shape(), {an}, "scale");
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = c * an->value[i];
    if (n->requires_grad) {
        n->backward_fn = [an, c](TensorNode& self) {
            double* g = an->grad_data();
            for (size_t i = 0; i < self.grad.size(); ++i)
                g[i] += c * self.grad[i];
        };
    }
    return Tensor(n);
}

Tensor add_const(const Tensor& a, double c) {
    auto an = a.node();
    auto n = make_result(a.shape(), {an}, "add_const");
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = an->value[i] + c;
    if (n->requires_grad) {
        n->backward_fn = [an](TensorNode& self) {
            double* g = an->grad_data();
            for (size_t i = 0; i < self.grad.size(); ++i)
                g[i] += self.grad[i];
        };
    }
    return Tensor(n);
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
    check_scalar_arg(s, "mul_scalar");
    auto an = a.node(), sn = s.node();
    auto n = make_result(a.shape(), {an, sn}, "mul_scalar");
    const double sv = sn->value[0];
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = an->value[i] * sv;
    if (n->requires_grad) {
        n->backward_fn = [an, sn](TensorNode& self) {
            const double sv = sn->value[0];
            if (an->requires_grad) {
                double* g = an->grad_data();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i] * sv;
            }
            if (sn->requires_grad) {
                double acc = 0.0;
                for (size_t i = 0; i < self.grad.size(); ++i)
                    acc += self.grad[i] * an->value[i];
                sn->grad_data()[0] += acc;
            }
        };
    }
    return Tensor(n);
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
    check_scalar_arg(s, "div_scalar");
    auto an = a.node(), sn = s.node();
    auto n = make_result(a.shape(), {an, sn}, "div_scalar");
    const double sv = sn->value[0];
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = an->value[i] / sv;
    if (n->requires_grad) {
        n->backward_fn = [an, sn](TensorNode& self) {
            const double sv = sn->value[0];
            if (an->requires_grad) {
                double* g = an->grad_data();
                for (size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i] / sv;
            }
            if (sn->requires_grad) {
                double acc = 0.0;
                for (size_t i = 0; i < self.grad.size(); ++i)
                    acc += self.grad[i] * self.value[i];
                sn->grad_data()[0] -= acc / sv;
            }
        };
    }
    return Tensor(n);
}

Tensor relu(const Tensor& x) {
    auto xn = x.node();
    auto n = make_result(x.shape(), {xn}, "relu");
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = xn->value[i] > 0.0 ? xn->value[i] : 0.0;
    if (n->requires_grad) {
        n->backward_fn = [xn](TensorNode& self) {
            double* g = xn->grad_data();
            for (size_t i = 0; i < self.grad.size(); ++i)
                g[i] += xn->value[i] > 0.0 ? self.grad[i] : 0.0;
        };
    }
    return Tensor(n);
}

Tensor tanh_op(const Tensor& x) {
    auto xn = x.node();
    auto n = make_result(x.shape(), {xn}, "tanh");
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = std::tanh(xn->value[i]);
    if (n->requires_grad) {
        n->backward_fn = [xn](TensorNode& self) {
            double* g = xn->grad_data();
            for (size_t i = 0; i < self.grad.size(); ++i)
                g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
        };
    }
    return Tensor(n);
}

Tensor sigmoid(const Tensor& x) {
    auto xn = x.node();
    auto n = make_result(x.shape(), {xn}, "sigmoid");
    for (size_t i = 0; i < n->value.size(); ++i) {
        const double v = xn->value[i];
        // Branch keeps exp() in the underflow-safe direction for either sign.
        n->value[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                               : std::exp(v) / (1.0 + std::exp(v));
    }
    if (n->requires_grad) {
        n->backward_fn = [xn](TensorNode& self) {
            double* g = xn->grad_data();
            for (size_t i = 0; i < self.grad.size(); ++i)
                g[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
        };
    }
    return Tensor(n);
}

Tensor sqrt_op(const Tensor& x) {
    auto xn = x.node();
    auto n = make_result(x.shape(), {xn}, "sqrt");
    for (size_t i = 0; i < n->value.size(); ++i)
        n->value[i] = std::sqrt(xn->value[i]);
    if (n->requires_grad) {
        n->backward_fn = [xn](TensorNode& self) {
            double* g = xn->grad_data();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                // Subgradient 0 at the origin.
                if (self.value[i] > 0.0)
                    g[i] += self.grad[i] * 0.5 / self.value[i];
            }
        };
    }
    return Tensor(n);
}

Tensor elementwise(const std::string& name, const Tensor& x) {
    if (name == "tanh")
        return tanh_op(x);
    if (name == "relu")
        return relu(x);
    if (name == "sigmoid")
        return sigmoid(x);
    throw ConfigError("elementwise: unknown activation '" + name + "'");
}

// ---- shape ops -----------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    auto an = a.node();
    auto n = make_result(std::move(shape), {an}, "reshape");
    n->value = an->value;
    if (n->requires_grad) {
        n->backward_fn = [an](TensorNode& self) {
            double* g = an->grad_data();
            for (size_t i = 0; i < self.grad.size(); ++i)
                g[i] += self.grad[i];
        };
    }
    return Tensor(n);
}

Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2)
        throw ShapeError("transpose: expected 2-D, got " + shape_str(a.shape()));
    const int m = a.dim(0), k = a.dim(1);
    auto an = a.node();
    auto n = make_result({k, m}, {an}, "transpose");
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j)
            n->value[static_cast<size_t>(j) * m + i] = an->value[static_cast<size_t>(i) * k + j];
    if (n->requires_grad) {
        n->backward_fn = [an, m, k](TensorNode& self) {
            double* g = an->grad_data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < k; ++j)
                    g[static_cast<size_t>(i) * k + j] += self.grad[static_cast<size_t>(j) * m + i];
        };
    }
    return Tensor(n);
}

Tensor slice_channels(const Tensor& x, int c0, int c1) {
    if (x.ndim() != 3)
        throw ShapeError("slice_channels: expected C x H x W, got " + shape_str(x.shape()));
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (c0 < 0 || c1 > c || c0 >= c1)
        throw ShapeError("slice_channels: bad range [" + std::to_string(c0) + ", " +
                         std::to_string(c1) + ") for " + shape_str(x.shape()));
    const size_t plane = static_cast<size_t>(h) * w;
    auto xn = x.node();
    auto n = make_result({c1 - c0, h, w}, {xn}, "slice_channels");
    std::copy(xn->value.begin() + static_cast<long>(c0 * plane),
              xn->value.begin() + static_cast<long>(c1 * plane), n->value.begin());
    if (n->requires_grad) {
        n->backward_fn = [xn, c0, plane](TensorNode& self) {
            double* g = xn->grad_data();
            const size_t off = static_cast<size_t>(c0) * plane;
            for (size_t i = 0; i < self.grad.size(); ++i)
                g[off + i] += self.grad[i];
        };
    }
    return Tensor(n);
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty())
        throw UsageError("concat: no inputs");
    long total = 0;
    std::vector<std::shared_ptr<TensorNode>> parents;
    parents.reserve(parts.size());
    for (const auto& p : parts) {
        if (p.ndim() != 1)
            throw ShapeError("concat: expected 1-D parts, got " + shape_str(p.shape()));
        total += p.numel();
        parents.push_back(p.node());
    }
    auto n = make_result({static_cast<int>(total)}, parents, "concat");
    size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().begin(), p.value().end(), n->value.begin() + static_cast<long>(off));
        off += p.value().size();
    }
    if (n->requires_grad) {
        std::vector<std::shared_ptr<TensorNode>> srcs = parents;
        n->backward_fn = [srcs](TensorNode& self) {
            size_t off = 0;
            for (const auto& src : srcs) {
                if (src->requires_grad) {
                    double* g = src->grad_data();
                    for (size_t i = 0; i < src->value.size(); ++i)
                        g[i] += self.grad[off + i];
                }
                off += src->value.size();
            }
        };
    }
    return Tensor(n);
}

Tensor select(const Tensor& a, int index) {
    if (a.ndim() != 1)
        throw ShapeError("select: expected 1-D, got " + shape_str(a.shape()));
    if (index < 0 || index >= a.dim(0))
        throw InputError("select: index " + std::to_string(index) + " out of range for " +
                         shape_str(a.shape()));
    auto an = a.node();
    auto n = make_result({1}, {an}, "select");
    n->value[0] = an->value[static_cast<size_t>(index)];
    if (n->requires_grad) {
        n->backward_fn = [an, index](TensorNode& self) {
            an->grad_data()[static_cast<size_t>(index)] += self.grad[0];
        };
    }
    return Tensor(n);
}

// ---- reductions ----------------------------------------------------------

Tensor sum(const Tensor& a) {
    auto an = a.node();
    auto n = make_result({1}, {an}, "sum");
    double acc = 0.0;
    for (double v : an->value)
        acc += v;
    n->value[0] = acc;
    if (n->requires_grad) {
        n->backward_fn = [an](TensorNode& self) {
            double* g = an->grad_data();
            for (size_t i = 0; i < an->value.size(); ++i)
                g[i] += self.grad[0];
        };
    }
    return Tensor(n);
}

Tensor mean(const Tensor& a) {
    auto an = a.node();
    auto n = make_result({1}, {an}, "mean");
    double acc = 0.0;
    for (double v : an->value)
        acc += v;
    const double inv = 1.0 / static_cast<double>(an->value.size());
    n->value[0] = acc * inv;
    if (n->requires_grad) {
        n->backward_fn = [an, inv](TensorNode& self) {
            double* g = an->grad_data();
            for (size_t i = 0; i < an->value.size(); ++i)
                g[i] += self.grad[0] * inv;
        };
    }
    return Tensor(n);
}

Tensor logsumexp(const Tensor& a) {
    if (a.ndim() != 1)
        throw ShapeError("logsumexp: expected 1-D, got " + shape_str(a.shape()));
    auto an = a.node();
    for (double v : an->value)
        if (!std::isfinite(v))
            throw NumericError("logsumexp: non-finite input");
    auto n = make_result({1}, {an}, "logsumexp");
    const double mx = *std::max_element(an->value.begin(), an->value.end());
    double acc = 0.0;
    for (double v : an->value)
        acc += std::exp(v - mx);
    n->value[0] = mx + std::log(acc);
    if (n->requires_grad) {
        n->backward_fn = [an](TensorNode& self) {
            double* g = an->grad_data();
            for (size_t i = 0; i < an->value.size(); ++i)
                g[i] += self.grad[0] * std::exp(an->value[i] - self.value[0]);
        };
    }
    return Tensor(n);
}

// ---- structured ops ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), nn = b.dim(1);
    auto an = a.node(), bn = b.node();
    auto n = make_result({m, nn}, {an, bn}, "matmul");
    kernels::gemm(an->value.data(), bn->value.data(), n->value.data(), m, k, nn);
    if (n->requires_grad) {
        n->backward_fn = [an, bn, m, k, nn](TensorNode& self) {
            if (an->requires_grad) // dA += dY * B^T
                kernels::gemm(self.grad.data(), bn->value.data(), an->grad_data(), m, nn, k,
                              false, true, true);
            if (bn->requires_grad) // dB += A^T * dY
                kernels::gemm(an->value.data(), self.grad.data(), bn->grad_data(), k, m, nn,
                              true, false, true);
        };
    }
    return Tensor(n);
}

Tensor softmax_rows(const Tensor& x) {
    if (x.ndim() != 2)
        throw ShapeError("softmax_rows: expected 2-D, got " + shape_str(x.shape()));
    const int h = x.dim(0), r = x.dim(1);
    auto xn = x.node();
    for (double v : xn->value)
        if (!std::isfinite(v))
            throw NumericError("softmax_rows: non-finite input");
    auto n = make_result({h, r}, {xn}, "softmax_rows");
    for (int i = 0; i < h; ++i) {
        const double* row = xn->value.data() + static_cast<size_t>(i) * r;
        double* out = n->value.data() + static_cast<size_t>(i) * r;
        const double mx = *std::max_element(row, row + r);
        double denom = 0.0;
        for (int j = 0; j < r; ++j) {
            out[j] = std::exp(row[j] - mx);
            denom += out[j];
        }
        for (int j = 0; j < r; ++j)
            out[j] /= denom;
    }
    if (n->requires_grad) {
        n->backward_fn = [xn, h, r](TensorNode& self) {
            double* g = xn->grad_data();
            for (int i = 0; i < h; ++i) {
                const double* p = self.value.data() + static_cast<size_t>(i) * r;
                const double* gy = self.grad.data() + static_cast<size_t>(i) * r;
                double dot = 0.0;
                for (int j = 0; j < r; ++j)
                    dot += gy[j] * p[j];
                double* gx = g + static_cast<size_t>(i) * r;
                for (int j = 0; j < r; ++j)
                    gx[j] += p[j] * (gy[j] - dot);
            }
        };
    }
    return Tensor(n);
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
    if (!training || p == 0.0)
        return x;
    auto xn = x.node();
    auto n = make_result(x.shape(), {xn}, "dropout");
    auto mask = std::make_shared<std::vector<double>>(xn->value.size());
    const double keep_scale = 1.0 / (1.0 - p);
    for (size_t i = 0; i < xn->value.size(); ++i) {
        (*mask)[i] = rng.uniform() < p ? 0.0 : keep_scale;
        n->value[i] = xn->value[i] * (*mask)[i];
    }
    if (n->requires_grad) {
        n->backward_fn = [xn, mask](TensorNode& self) {
            double* g = xn->grad_data();
            for (size_t i = 0; i < self.grad.size(); ++i)
                g[i] += self.grad[i] * (*mask)[i];
        };
    }
    return Tensor(n);
}

Tensor grouped_conv2d(const Tensor& x, const Tensor& w, int groups, int stride, int pad) {
    if (x.ndim() != 3)
        throw ShapeError("grouped_conv2d: input must be C x H x W, got " + shape_str(x.shape()));
    if (w.ndim() != 4)
        throw ShapeError("grouped_conv2d: weights must be 4-D, got " + shape_str(w.shape()));
    kernels::Conv2dShape s;
    s.groups = groups;
    s.stride = stride;
    s.pad = pad;
    s.cin = x.dim(0);
    s.h = x.dim(1);
    s.w = x.dim(2);
    s.cout = w.dim(0);
    s.kh = w.dim(2);
    s.kw = w.dim(3);
    if (groups < 1 || s.cin % groups != 0 || s.cout % groups != 0)
        throw ConfigError("grouped_conv2d: channel counts " + std::to_string(s.cin) + "->" +
                          std::to_string(s.cout) + " not divisible by groups=" +
                          std::to_string(groups));
    if (w.dim(1) != s.cin / groups)
        throw ShapeError("grouped_conv2d: weight shape " + shape_str(w.shape()) +
                         " does not match input " + shape_str(x.shape()) + " with groups=" +
                         std::to_string(groups));
    if (s.oh() < 1 || s.ow() < 1)
        throw ShapeError("grouped_conv2d: kernel larger than padded input");

    auto xn = x.node(), wn = w.node();
    auto n = make_result({s.cout, s.oh(), s.ow()}, {xn, wn}, "grouped_conv2d");
    kernels::conv2d_forward(s, xn->value.data(), wn->value.data(), n->value.data());
    if (n->requires_grad) {
        n->backward_fn = [xn, wn, s](TensorNode& self) {
            if (xn->requires_grad)
                kernels::conv2d_grad_input(s, self.grad.data(), wn->value.data(), xn->grad_data());
            if (wn->requires_grad)
                kernels::conv2d_grad_weight(s, self.grad.data(), xn->value.data(), wn->grad_data());
        };
    }
    return Tensor(n);
}

Tensor channel_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    if (x.ndim() != 3)
        throw ShapeError("channel_affine: input must be C x H x W, got " + shape_str(x.shape()));
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (gamma.ndim() != 1 || gamma.dim(0) != c || beta.ndim() != 1 || beta.dim(0) != c)
        throw ShapeError("channel_affine: scale/shift must have length " + std::to_string(c));
    const size_t plane = static_cast<size_t>(h) * w;
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    auto n = make_result({c, h, w}, {xn, gn, bn}, "channel_affine");
    for (int ci = 0; ci < c; ++ci) {
        const double g = gn->value[static_cast<size_t>(ci)];
        const double b = bn->value[static_cast<size_t>(ci)];
        const size_t off = static_cast<size_t>(ci) * plane;
        for (size_t i = 0; i < plane; ++i)
            n->value[off + i] = g * xn->value[off + i] + b;
    }
    if (n->requires_grad) {
        n->backward_fn = [xn, gn, bn, c, plane](TensorNode& self) {
            for (int ci = 0; ci < c; ++ci) {
                const size_t off = static_cast<size_t>(ci) * plane;
                if (xn->requires_grad) {
                    double* gx = xn->grad_data();
                    const double g = gn->value[static_cast<size_t>(ci)];
                    for (size_t i = 0; i < plane; ++i)
                        gx[off + i] += self.grad[off + i] * g;
                }
                if (gn->requires_grad) {
                    double acc = 0.0;
                    for (size_t i = 0; i < plane; ++i)
                        acc += self.grad[off + i] * xn->value[off + i];
                    gn->grad_data()[static_cast<size_t>(ci)] += acc;
                }
                if (bn->requires_grad) {
                    double acc = 0.0;
                    for (size_t i = 0; i < plane; ++i)
                        acc += self.grad[off + i];
                    bn->grad_data()[static_cast<size_t>(ci)] += acc;
                }
            }
        };
    }
    return Tensor(n);
}

// ---- backward ------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw UsageError("backward: loss must be a scalar, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    auto root = loss.node();
    if (!root->requires_grad)
        return; // nothing tracked

    // Iterative post-order DFS over grad-requiring parents; the reverse of
    // the resulting order is a valid topological order.
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* parent = node->parents[idx].get();
            ++idx;
            if (parent->requires_grad && visited.insert(parent).second)
                stack.emplace_back(parent, 0);
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    root->grad_data()[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backward_fn && !node->grad.empty())
            node->backward_fn(*node);
    }
}

} // namespace emovid
