// Reverse-mode differentiation over Matrix values.
//
// Each op allocates a Node holding its value, its parents and a closure that
// scatters the node's gradient into the parents. The graph is rebuilt on every
// forward pass and released when the last Var referring to it goes away.
// Parameters are long-lived leaf nodes owned by a ParameterSet; their gradients
// accumulate across backward() calls until zero_grad().

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "satt/tensor.hpp"

namespace satt {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Matrix value;
    Matrix grad;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;
    const char* op = "leaf";
    bool requires_grad = false;

    Matrix& grad_buffer() {
        if (grad.empty() && !value.empty()) grad.resize_zero(value.rows(), value.cols());
        return grad;
    }
};

inline Var constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = "const";
    return n;
}

inline Var leaf(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

namespace detail {

/// Per-thread switch consulted by every op; see NoGradGuard.
inline bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

inline Var make_node(Matrix value, const char* op, std::vector<Var> parents,
                     std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    if (grad_enabled())
        for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

inline bool wants(const Var& v) { return v->requires_grad; }

}  // namespace detail

/// Disables graph recording on this thread while alive.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_enabled()) { detail::grad_enabled() = false; }
    ~NoGradGuard() { detail::grad_enabled() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// ---------------------------------------------------------------- linear algebra

inline Var matmul(const Var& a, const Var& b) {
    return detail::make_node(raw::matmul(a->value, b->value), "matmul", {a, b}, [](Node& self) {
        const Var& a = self.parents[0];
        const Var& b = self.parents[1];
        if (detail::wants(a)) raw::matmul_nt_acc(self.grad, b->value, a->grad_buffer());
        if (detail::wants(b)) raw::matmul_tn_acc(a->value, self.grad, b->grad_buffer());
    });
}

/// a * b^T without materialising the transpose.
inline Var matmul_nt(const Var& a, const Var& b) {
    return detail::make_node(raw::matmul_nt(a->value, b->value), "matmul_nt", {a, b},
                             [](Node& self) {
                                 const Var& a = self.parents[0];
                                 const Var& b = self.parents[1];
                                 if (detail::wants(a))
                                     raw::matmul_acc(self.grad, b->value, a->grad_buffer());
                                 if (detail::wants(b))
                                     raw::matmul_tn_acc(self.grad, a->value, b->grad_buffer());
                             });
}

inline Var transpose(const Var& a) {
    return detail::make_node(raw::transpose(a->value), "transpose", {a}, [](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < self.grad.rows(); ++i)
            for (std::size_t j = 0; j < self.grad.cols(); ++j) g(j, i) += self.grad(i, j);
    });
}

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
    return detail::make_node(raw::add(a->value, b->value), "add", {a, b}, [](Node& self) {
        for (const auto& p : self.parents)
            if (detail::wants(p)) p->grad_buffer() += self.grad;
    });
}

inline Var sub(const Var& a, const Var& b) {
    a->value.require_same(b->value, "sub");
    Matrix out(a->value.rows(), a->value.cols());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a->value[k] - b->value[k];
    return detail::make_node(std::move(out), "sub", {a, b}, [](Node& self) {
        if (detail::wants(self.parents[0])) self.parents[0]->grad_buffer() += self.grad;
        if (detail::wants(self.parents[1])) {
            auto& g = self.parents[1]->grad_buffer();
            for (std::size_t k = 0; k < g.size(); ++k) g[k] -= self.grad[k];
        }
    });
}

inline Var hadamard(const Var& a, const Var& b) {
    return detail::make_node(raw::hadamard(a->value, b->value), "hadamard", {a, b},
                             [](Node& self) {
                                 const Var& a = self.parents[0];
                                 const Var& b = self.parents[1];
                                 if (detail::wants(a)) {
                                     auto& g = a->grad_buffer();
                                     for (std::size_t k = 0; k < g.size(); ++k)
                                         g[k] += self.grad[k] * b->value[k];
                                 }
                                 if (detail::wants(b)) {
                                     auto& g = b->grad_buffer();
                                     for (std::size_t k = 0; k < g.size(); ++k)
                                         g[k] += self.grad[k] * a->value[k];
                                 }
                             });
}

inline Var scale(const Var& a, double s) {
    return detail::make_node(raw::scale(a->value, s), "scale", {a}, [s](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k] * s;
    });
}

inline Var square(const Var& a) { return hadamard(a, a); }

/// Adds a 1 x n row vector to every row of a.
inline Var add_row(const Var& a, const Var& row) {
    const Matrix& x = a->value;
    const Matrix& r = row->value;
    if (r.rows() != 1 || r.cols() != x.cols()) {
        throw ShapeError("add_row: cannot broadcast " + r.shape_str() + " onto " + x.shape_str());
    }
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) + r[j];
    return detail::make_node(std::move(out), "add_row", {a, row}, [](Node& self) {
        if (detail::wants(self.parents[0])) self.parents[0]->grad_buffer() += self.grad;
        if (detail::wants(self.parents[1])) {
            auto& g = self.parents[1]->grad_buffer();
            for (std::size_t i = 0; i < self.grad.rows(); ++i)
                for (std::size_t j = 0; j < self.grad.cols(); ++j) g[j] += self.grad(i, j);
        }
    });
}

/// tanh-approximated GELU; smooth everywhere so finite-difference checks stay clean.
inline Var gelu(const Var& a) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    const Matrix& x = a->value;
    Matrix out(x.rows(), x.cols());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double v = x[k];
        out[k] = 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v)));
    }
    return detail::make_node(std::move(out), "gelu", {a}, [](Node& self) {
        const Matrix& x = self.parents[0]->value;
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double v = x[k];
            const double u = c * (v + 0.044715 * v * v * v);
            const double t = std::tanh(u);
            const double du = c * (1.0 + 3.0 * 0.044715 * v * v);
            const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
            g[k] += self.grad[k] * d;
        }
    });
}

/// log(1 + e^x), computed without overflow.
inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Inverse of softplus for y > 0.
inline double inverse_softplus(double y) {
    if (!(y > 0.0)) throw ContractError("inverse_softplus requires y > 0");
    return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

// ---------------------------------------------------------------- attention helpers

inline Var softmax_rows(const Var& a) {
    return detail::make_node(raw::softmax_rows(a->value), "softmax_rows", {a}, [](Node& self) {
        // dx_ij = y_ij * (dy_ij - sum_k dy_ik y_ik)
        const Matrix& y = self.value;
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j) dot += self.grad(i, j) * y(i, j);
            for (std::size_t j = 0; j < y.cols(); ++j) g(i, j) += y(i, j) * (self.grad(i, j) - dot);
        }
    });
}

/// Sets entries above the diagonal to -inf so that softmax ignores future steps.
inline Var causal_mask(const Var& a) {
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = i + 1; j < out.cols(); ++j)
            out(i, j) = -std::numeric_limits<double>::infinity();
    return detail::make_node(std::move(out), "causal_mask", {a}, [](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j <= i && j < g.cols(); ++j) g(i, j) += self.grad(i, j);
    });
}

/// Per-row layer normalisation with learned gain and bias (both 1 x n).
inline Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
    const Matrix& v = x->value;
    const std::size_t n = v.cols();
    if (gain->value.rows() != 1 || gain->value.cols() != n || !gain->value.same_shape(bias->value)) {
        throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(n));
    }
    Matrix xhat(v.rows(), n);
    Matrix out(v.rows(), n);
    std::vector<double> inv_std(v.rows());
    for (std::size_t i = 0; i < v.rows(); ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += v(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (v(i, j) - mean) * (v(i, j) - mean);
        var /= static_cast<double>(n);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat(i, j) = (v(i, j) - mean) * inv_std[i];
            out(i, j) = xhat(i, j) * gain->value[j] + bias->value[j];
        }
    }
    return detail::make_node(
        std::move(out), "layer_norm", {x, gain, bias},
        [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
            const Var& x = self.parents[0];
            const Var& gain = self.parents[1];
            const Var& bias = self.parents[2];
            const std::size_t n = xhat.cols();
            if (detail::wants(gain) || detail::wants(bias)) {
                auto& gg = gain->grad_buffer();
                auto& gb = bias->grad_buffer();
                for (std::size_t i = 0; i < xhat.rows(); ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        gg[j] += self.grad(i, j) * xhat(i, j);
                        gb[j] += self.grad(i, j);
                    }
            }
            if (detail::wants(x)) {
                auto& gx = x->grad_buffer();
                const double nn = static_cast<double>(n);
                for (std::size_t i = 0; i < xhat.rows(); ++i) {
                    double sum_d = 0.0, sum_dx = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = self.grad(i, j) * gain->value[j];
                        sum_d += d;
                        sum_dx += d * xhat(i, j);
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        const double d = self.grad(i, j) * gain->value[j];
                        gx(i, j) += inv_std[i] * (d - sum_d / nn - xhat(i, j) * sum_dx / nn);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------- reshaping

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t rows = parts.front()->value.rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p->value.rows() != rows) {
            throw ShapeError("concat_cols: row mismatch " + parts.front()->value.shape_str() +
                             " vs " + p->value.shape_str());
        }
        cols += p->value.cols();
    }
    Matrix out(rows, cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < p->value.cols(); ++j) out(i, off + j) = p->value(i, j);
        off += p->value.cols();
    }
    return detail::make_node(std::move(out), "concat_cols", parts, [](Node& self) {
        std::size_t off = 0;
        for (const auto& p : self.parents) {
            const std::size_t c = p->value.cols();
            if (detail::wants(p)) {
                auto& g = p->grad_buffer();
                for (std::size_t i = 0; i < g.rows(); ++i)
                    for (std::size_t j = 0; j < c; ++j) g(i, j) += self.grad(i, off + j);
            }
            off += c;
        }
    });
}

/// Returns a copy of x whose row `index` is replaced by `row` (1 x n).
inline Var replace_row(const Var& x, std::size_t index, const Var& row) {
    if (index >= x->value.rows()) throw ContractError("replace_row: index out of range");
    if (row->value.rows() != 1 || row->value.cols() != x->value.cols()) {
        throw ShapeError("replace_row: row " + row->value.shape_str() + " vs " +
                         x->value.shape_str());
    }
    Matrix out = x->value;
    for (std::size_t j = 0; j < out.cols(); ++j) out(index, j) = row->value[j];
    return detail::make_node(std::move(out), "replace_row", {x, row}, [index](Node& self) {
        if (detail::wants(self.parents[0])) {
            auto& g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.rows(); ++i) {
                if (i == index) continue;
                for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += self.grad(i, j);
            }
        }
        if (detail::wants(self.parents[1])) {
            auto& g = self.parents[1]->grad_buffer();
            for (std::size_t j = 0; j < g.cols(); ++j) g[j] += self.grad(index, j);
        }
    });
}

inline Var select_row(const Var& x, std::size_t index) {
    if (index >= x->value.rows()) throw ContractError("select_row: index out of range");
    Matrix out(1, x->value.cols());
    for (std::size_t j = 0; j < out.cols(); ++j) out[j] = x->value(index, j);
    return detail::make_node(std::move(out), "select_row", {x}, [index](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t j = 0; j < g.cols(); ++j) g(index, j) += self.grad[j];
    });
}

/// Single entry as a 1 x 1 node.
inline Var element(const Var& x, std::size_t i, std::size_t j) {
    if (i >= x->value.rows() || j >= x->value.cols()) throw ContractError("element: out of range");
    return detail::make_node(Matrix::scalar(x->value(i, j)), "element", {x}, [i, j](Node& self) {
        self.parents[0]->grad_buffer()(i, j) += self.grad[0];
    });
}

// ---------------------------------------------------------------- reductions

inline Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a->value.data()) s += v;
    return detail::make_node(Matrix::scalar(s), "sum", {a}, [](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[0];
    });
}

/// Column means over rows: T x n -> 1 x n.
inline Var mean_rows(const Var& a) {
    const Matrix& x = a->value;
    Matrix out(1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out[j] += x(i, j);
    const double inv = 1.0 / static_cast<double>(x.rows());
    for (std::size_t j = 0; j < x.cols(); ++j) out[j] *= inv;
    return detail::make_node(std::move(out), "mean_rows", {a}, [inv](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) += self.grad[j] * inv;
    });
}

/// Column maxima over rows: T x n -> 1 x n. Ties route the gradient to the first maximum.
inline Var max_rows(const Var& a) {
    const Matrix& x = a->value;
    Matrix out(1, x.cols());
    std::vector<std::size_t> arg(x.cols(), 0);
    for (std::size_t j = 0; j < x.cols(); ++j) {
        out[j] = x(0, j);
        for (std::size_t i = 1; i < x.rows(); ++i)
            if (x(i, j) > out[j]) {
                out[j] = x(i, j);
                arg[j] = i;
            }
    }
    return detail::make_node(std::move(out), "max_rows", {a}, [arg = std::move(arg)](Node& self) {
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t j = 0; j < arg.size(); ++j) g(arg[j], j) += self.grad[j];
    });
}

/// Mean of a list of 1 x 1 nodes.
inline Var mean_of(const std::vector<Var>& scalars) {
    if (scalars.empty()) throw ContractError("mean_of: empty list");
    double s = 0.0;
    for (const auto& v : scalars) {
        if (v->value.size() != 1) throw ShapeError("mean_of expects 1x1 inputs");
        s += v->value[0];
    }
    const double inv = 1.0 / static_cast<double>(scalars.size());
    return detail::make_node(Matrix::scalar(s * inv), "mean_of", scalars, [inv](Node& self) {
        for (const auto& p : self.parents)
            if (detail::wants(p)) p->grad_buffer()[0] += self.grad[0] * inv;
    });
}

// ---------------------------------------------------------------- losses

/// Numerically stable binary cross-entropy on a 1 x 1 logit.
inline Var bce_with_logits(const Var& logit, double label) {
    if (logit->value.size() != 1) throw ShapeError("bce_with_logits expects a 1x1 logit");
    const double z = logit->value[0];
    const double loss = std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
    return detail::make_node(Matrix::scalar(loss), "bce", {logit}, [label](Node& self) {
        const double z = self.parents[0]->value[0];
        self.parents[0]->grad_buffer()[0] += self.grad[0] * (sigmoid(z) - label);
    });
}

// ---------------------------------------------------------------- backward

/// Nodes reachable from root that require gradients, parents before children.
inline std::vector<Node*> topological_order(const Var& root) {
    std::vector<Node*> order;
    if (!root->requires_grad) return order;
    std::unordered_set<const Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

/// Back-propagates from a 1 x 1 loss. Leaf gradients accumulate; interior
/// gradients are recomputed from scratch on each call.
inline void backward(const Var& loss) {
    if (loss->value.rows() != 1 || loss->value.cols() != 1) {
        throw ContractError("backward requires a 1x1 loss, got " + loss->value.shape_str());
    }
    const auto order = topological_order(loss);
    for (Node* n : order)
        if (n->backprop) n->grad.resize_zero(n->value.rows(), n->value.cols());
    if (order.empty()) return;
    loss->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---------------------------------------------------------------- parameters

/// Ordered, named collection of trainable leaves.
class ParameterSet {
public:
    Var add(std::string name, Matrix value) {
        if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
        auto v = leaf(std::move(value));
        index_.emplace(name, entries_.size());
        entries_.emplace_back(std::move(name), v);
        return v;
    }

    const std::vector<std::pair<std::string, Var>>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const Var& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter: " + name);
        return entries_[it->second].second;
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, v] : entries_) n += v->value.size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, v] : entries_) v->grad.resize_zero(v->value.rows(), v->value.cols());
    }

    std::vector<Matrix> snapshot() const {
        std::vector<Matrix> out;
        out.reserve(entries_.size());
        for (const auto& [_, v] : entries_) out.push_back(v->value);
        return out;
    }

    void restore(const std::vector<Matrix>& values) {
        if (values.size() != entries_.size()) throw ShapeError("restore: parameter count mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) {
            entries_[i].second->value.require_same(values[i], entries_[i].first.c_str());
            entries_[i].second->value = values[i];
        }
    }

    /// Copies values by name from another set with identical structure.
    void copy_values_from(const ParameterSet& other) {
        if (other.size() != size()) throw ShapeError("parameter sets differ in size");
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& src = other.at(entries_[i].first)->value;
            entries_[i].second->value.require_same(src, entries_[i].first.c_str());
            entries_[i].second->value = src;
        }
    }

private:
    std::vector<std::pair<std::string, Var>> entries_;
    std::map<std::string, std::size_t> index_;
};

/// Gradient of a scalar loss with respect to every parameter in the set.
/// Parameters the loss does not depend on get an all-zero matrix.
inline std::map<std::string, Matrix> gradients(const Var& loss, ParameterSet& params) {
    params.zero_grad();
    backward(loss);
    std::map<std::string, Matrix> out;
    for (const auto& [name, v] : params.entries()) out.emplace(name, v->grad);
    return out;
}

}  // namespace satt
