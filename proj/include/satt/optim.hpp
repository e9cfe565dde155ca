#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "satt/autodiff.hpp"

namespace satt {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

namespace detail {

inline void require_finite_grads(const ParameterSet& params) {
    for (const auto& [name, v] : params.entries()) {
        if (!v->grad.empty() && !v->grad.all_finite()) {
            throw NumericError("non-finite gradient for parameter '" + name + "'");
        }
    }
}

}  // namespace detail

/// Adam with bias correction. Holds one pair of moment accumulators per
/// parameter, in ParameterSet order.
class Adam {
public:
    explicit Adam(const ParameterSet& params, AdamOptions opts = {}) : opts_(opts) {
        for (const auto& [_, v] : params.entries()) {
            first_.emplace_back(v->value.rows(), v->value.cols());
            second_.emplace_back(v->value.rows(), v->value.cols());
        }
    }

    /// Optional per-parameter learning-rate multiplier, looked up by name once per step.
    void set_rate_scale(std::function<double(const std::string&)> fn) { rate_scale_ = std::move(fn); }

    void step(ParameterSet& params) {
        detail::require_finite_grads(params);
        if (params.size() != first_.size()) throw ShapeError("Adam: parameter count changed");
        ++step_;
        const double t = static_cast<double>(step_);
        const double c1 = 1.0 - std::pow(opts_.beta1, t);
        const double c2 = 1.0 - std::pow(opts_.beta2, t);
        std::size_t idx = 0;
        for (const auto& [name, v] : params.entries()) {
            Matrix& m = first_[idx];
            Matrix& s = second_[idx];
            ++idx;
            if (v->grad.empty()) continue;
            const double lr = opts_.learning_rate * (rate_scale_ ? rate_scale_(name) : 1.0);
            for (std::size_t k = 0; k < v->value.size(); ++k) {
                const double g = v->grad[k];
                m[k] = opts_.beta1 * m[k] + (1.0 - opts_.beta1) * g;
                s[k] = opts_.beta2 * s[k] + (1.0 - opts_.beta2) * g * g;
                const double mh = m[k] / c1;
                const double sh = s[k] / c2;
                v->value[k] -= lr * mh / (std::sqrt(sh) + opts_.eps);
            }
        }
    }

    std::uint64_t steps() const noexcept { return step_; }
    const AdamOptions& options() const noexcept { return opts_; }
    const std::vector<Matrix>& first_moments() const noexcept { return first_; }
    const std::vector<Matrix>& second_moments() const noexcept { return second_; }

private:
    AdamOptions opts_;
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
    std::uint64_t step_ = 0;
    std::function<double(const std::string&)> rate_scale_;
};

/// Plain gradient descent: p <- p - lr * g.
class Sgd {
public:
    explicit Sgd(double learning_rate) : lr_(learning_rate) {}

    void step(ParameterSet& params) {
        detail::require_finite_grads(params);
        for (const auto& [_, v] : params.entries()) {
            if (v->grad.empty()) continue;
            for (std::size_t k = 0; k < v->value.size(); ++k) v->value[k] -= lr_ * v->grad[k];
        }
    }

private:
    double lr_;
};

}  // namespace satt
