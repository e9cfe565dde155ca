// Temporal kernels over index lag h = |i - j|:
//
//   exponential  K_e(h) = exp(-(alpha * h)^beta)
//   periodic     K_p(h) = exp(-2 alpha^2 sin^2(pi h / beta))
//
// with unit variance (inputs are z-normalised). Learnable parameters are kept
// unconstrained as a 1x4 row [exp_alpha, exp_beta, per_alpha, per_beta] and
// mapped through softplus; the period gets an extra +1 so it never drops
// below one step.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>

#include "satt/autodiff.hpp"

namespace satt {

enum class KernelMode { none, exp, periodic, both };
enum class KernelApplication { score, qk };

inline std::string to_string(KernelMode m) {
    switch (m) {
        case KernelMode::none: return "none";
        case KernelMode::exp: return "exp";
        case KernelMode::periodic: return "periodic";
        case KernelMode::both: return "both";
    }
    return "none";
}

inline std::string to_string(KernelApplication a) {
    return a == KernelApplication::score ? "score" : "qk";
}

inline KernelMode parse_kernel_mode(const std::string& s) {
    if (s == "none") return KernelMode::none;
    if (s == "exp") return KernelMode::exp;
    if (s == "periodic") return KernelMode::periodic;
    if (s == "both") return KernelMode::both;
    throw ConfigError("kernel: expected none|exp|periodic|both, got '" + s + "'");
}

inline KernelApplication parse_kernel_application(const std::string& s) {
    if (s == "score") return KernelApplication::score;
    if (s == "qk") return KernelApplication::qk;
    throw ConfigError("kernel_apply: expected score|qk, got '" + s + "'");
}

struct KernelSpec {
    KernelMode mode = KernelMode::both;
    KernelApplication application = KernelApplication::score;
    bool adaptive = false;

    bool uses_exp() const noexcept { return mode == KernelMode::exp || mode == KernelMode::both; }
    bool uses_periodic() const noexcept {
        return mode == KernelMode::periodic || mode == KernelMode::both;
    }
};

/// Kernel parameters after the positivity transform.
struct KernelParams {
    double exp_alpha = 1.0;
    double exp_beta = 1.0;
    double per_alpha = 1.0;
    double per_beta = 2.0;
};

inline constexpr std::size_t kKernelParamCount = 4;

/// Unconstrained 1x4 row -> positive parameters.
inline KernelParams to_positive(const Matrix& raw) {
    if (raw.size() != kKernelParamCount) throw ShapeError("kernel raw params must be 1x4");
    return {softplus(raw[0]), softplus(raw[1]), softplus(raw[2]), 1.0 + softplus(raw[3])};
}

/// Positive parameters -> unconstrained 1x4 row (inverse of to_positive).
inline Matrix to_unconstrained(const KernelParams& p) {
    if (!(p.per_beta > 1.0)) throw ContractError("periodic beta must exceed 1 to be representable");
    return Matrix(1, kKernelParamCount,
                  {inverse_softplus(p.exp_alpha), inverse_softplus(p.exp_beta),
                   inverse_softplus(p.per_alpha), inverse_softplus(p.per_beta - 1.0)});
}

/// Differentiable positivity transform on a 1x4 row.
inline Var positive_params(const Var& raw) {
    const Matrix& u = raw->value;
    if (u.size() != kKernelParamCount) throw ShapeError("kernel raw params must be 1x4");
    const KernelParams p = to_positive(u);
    Matrix out(1, kKernelParamCount, {p.exp_alpha, p.exp_beta, p.per_alpha, p.per_beta});
    return detail::make_node(std::move(out), "kernel_positive", {raw}, [](Node& self) {
        const Matrix& u = self.parents[0]->value;
        auto& g = self.parents[0]->grad_buffer();
        for (std::size_t k = 0; k < kKernelParamCount; ++k) g[k] += self.grad[k] * sigmoid(u[k]);
    });
}

inline KernelParams params_from_row(const Matrix& positive_row) {
    return {positive_row[0], positive_row[1], positive_row[2], positive_row[3]};
}

// ---------------------------------------------------------------- scalar kernels

/// Kernel values are floored at the smallest normal double so they stay strictly positive.
inline constexpr double kKernelFloor = std::numeric_limits<double>::min();

inline double exp_kernel_value(double alpha, double beta, double lag) {
    if (lag == 0.0) return 1.0;
    return std::max(std::exp(-std::pow(alpha * lag, beta)), kKernelFloor);
}

/// sin^2 has period pi, so the lag is reduced modulo beta first (fmod is exact).
inline double periodic_phase(double beta, double lag) {
    return std::numbers::pi * (std::fmod(lag, beta) / beta);
}

inline double periodic_kernel_value(double alpha, double beta, double lag) {
    const double s = std::sin(periodic_phase(beta, lag));
    return std::max(std::exp(-2.0 * alpha * alpha * s * s), kKernelFloor);
}

namespace detail {

inline void check_exp_args(double alpha, double beta) {
    if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
        throw ContractError("exponential kernel requires finite alpha > 0 and beta > 0 (alpha=" +
                            std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
    }
}

inline void check_periodic_args(double alpha, double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta) || !std::isfinite(alpha) || alpha < 0.0) {
        throw ContractError("periodic kernel requires finite alpha >= 0 and beta > 0 (alpha=" +
                            std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
    }
}

inline void check_length(std::size_t T) {
    if (T == 0) throw ContractError("kernel matrix requires T >= 1");
}

/// Expands a per-lag profile into the symmetric Toeplitz matrix M(i,j) = profile[|i-j|].
inline Matrix toeplitz_from_lags(std::span<const double> profile) {
    const std::size_t T = profile.size();
    Matrix out(T, T);
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < T; ++j) out(i, j) = profile[i > j ? i - j : j - i];
    return out;
}

/// Sums a T x T gradient over each lag diagonal.
inline std::vector<double> lag_sums(const Matrix& g) {
    const std::size_t T = g.rows();
    std::vector<double> out(T, 0.0);
    for (std::size_t i = 0; i < T; ++i)
        for (std::size_t j = 0; j < T; ++j) out[i > j ? i - j : j - i] += g(i, j);
    return out;
}

}  // namespace detail

/// Per-lag exponential kernel values for h = 0..T-1.
inline std::vector<double> exp_kernel_profile(std::size_t T, double alpha, double beta) {
    detail::check_length(T);
    detail::check_exp_args(alpha, beta);
    std::vector<double> p(T);
    for (std::size_t h = 0; h < T; ++h) p[h] = exp_kernel_value(alpha, beta, static_cast<double>(h));
    return p;
}

inline std::vector<double> periodic_kernel_profile(std::size_t T, double alpha, double beta) {
    detail::check_length(T);
    detail::check_periodic_args(alpha, beta);
    std::vector<double> p(T);
    for (std::size_t h = 0; h < T; ++h)
        p[h] = periodic_kernel_value(alpha, beta, static_cast<double>(h));
    return p;
}

inline Matrix exp_kernel_matrix(std::size_t T, double alpha, double beta) {
    return detail::toeplitz_from_lags(exp_kernel_profile(T, alpha, beta));
}

inline Matrix periodic_kernel_matrix(std::size_t T, double alpha, double beta) {
    return detail::toeplitz_from_lags(periodic_kernel_profile(T, alpha, beta));
}

// ---------------------------------------------------------------- differentiable kernels

/// Exponential kernel matrix from a positive 1x4 parameter row (uses columns 0, 1).
inline Var exp_kernel(const Var& params, std::size_t T) {
    const double alpha = params->value[0];
    const double beta = params->value[1];
    auto profile = exp_kernel_profile(T, alpha, beta);
    Matrix out = detail::toeplitz_from_lags(profile);
    return detail::make_node(
        std::move(out), "exp_kernel", {params},
        [profile = std::move(profile), alpha, beta](Node& self) {
            const auto g = detail::lag_sums(self.grad);
            double da = 0.0, db = 0.0;
            for (std::size_t h = 1; h < g.size(); ++h) {
                if (g[h] == 0.0 || profile[h] == 0.0) continue;
                const double hh = static_cast<double>(h);
                const double x = alpha * hh;
                const double xb = std::pow(x, beta);
                da += g[h] * (-profile[h] * beta * std::pow(x, beta - 1.0) * hh);
                db += g[h] * (-profile[h] * xb * std::log(x));
            }
            auto& pg = self.parents[0]->grad_buffer();
            pg[0] += da;
            pg[1] += db;
        });
}

/// Periodic kernel matrix from a positive 1x4 parameter row (uses columns 2, 3).
inline Var periodic_kernel(const Var& params, std::size_t T) {
    const double alpha = params->value[2];
    const double beta = params->value[3];
    auto profile = periodic_kernel_profile(T, alpha, beta);
    Matrix out = detail::toeplitz_from_lags(profile);
    return detail::make_node(
        std::move(out), "periodic_kernel", {params},
        [profile = std::move(profile), alpha, beta](Node& self) {
            const auto g = detail::lag_sums(self.grad);
            double da = 0.0, db = 0.0;
            for (std::size_t h = 1; h < g.size(); ++h) {
                if (g[h] == 0.0) continue;
                const double hh = static_cast<double>(h);
                const double arg = periodic_phase(beta, hh);
                const double s = std::sin(arg);
                const double c = std::cos(arg);
                da += g[h] * (-4.0 * alpha * s * s * profile[h]);
                db += g[h] * (4.0 * alpha * alpha * s * c * std::numbers::pi * hh / (beta * beta) *
                              profile[h]);
            }
            auto& pg = self.parents[0]->grad_buffer();
            pg[2] += da;
            pg[3] += db;
        });
}

/// Kernel matrices for one head. Disabled kernels are all-ones constants;
/// `product` is null when the mode is none.
struct HeadKernels {
    Var exp;
    Var periodic;
    Var product;
};

inline Var ones(std::size_t T) { return constant(Matrix(T, T, 1.0)); }

inline HeadKernels kernel_product(const KernelSpec& spec, const Var& positive, std::size_t T) {
    HeadKernels k;
    k.exp = spec.uses_exp() ? exp_kernel(positive, T) : ones(T);
    k.periodic = spec.uses_periodic() ? periodic_kernel(positive, T) : ones(T);
    switch (spec.mode) {
        case KernelMode::none: break;
        case KernelMode::exp: k.product = k.exp; break;
        case KernelMode::periodic: k.product = k.periodic; break;
        case KernelMode::both: k.product = hadamard(k.exp, k.periodic); break;
    }
    return k;
}

// ---------------------------------------------------------------- adaptive parameters

struct TemporalFeatures {
    double mean = 0.0;
    double std = 0.0;
    std::size_t length = 0;
    double avg_interval = 0.0;

    Matrix as_row() const {
        return Matrix(1, 4, {mean, std, static_cast<double>(length), avg_interval});
    }
};

/// Mean and population std over observed cells of the non-padded steps,
/// pooled across channels; average interval (t_last - t_first) / length.
inline TemporalFeatures temporal_features(const Matrix& values, const Matrix& mask,
                                          std::span<const double> timestamps,
                                          std::size_t pad = 0) {
    values.require_same(mask, "temporal_features");
    if (timestamps.size() != values.rows()) {
        throw ShapeError("temporal_features: " + std::to_string(timestamps.size()) +
                         " timestamps for " + std::to_string(values.rows()) + " steps");
    }
    if (pad >= values.rows()) throw ContractError("temporal_features: empty window");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = pad; i < values.rows(); ++i)
        for (std::size_t j = 0; j < values.cols(); ++j)
            if (mask(i, j) != 0.0) {
                sum += values(i, j);
                ++n;
            }
    if (n == 0) throw ContractError("temporal_features: window has no observed values");
    TemporalFeatures f;
    f.mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = pad; i < values.rows(); ++i)
        for (std::size_t j = 0; j < values.cols(); ++j)
            if (mask(i, j) != 0.0) ss += (values(i, j) - f.mean) * (values(i, j) - f.mean);
    f.std = std::sqrt(ss / static_cast<double>(n));
    f.length = values.rows() - pad;
    f.avg_interval = (timestamps.back() - timestamps[pad]) / static_cast<double>(f.length);
    return f;
}

/// Linear map from the four temporal features to unconstrained kernel parameters.
struct AdaptiveMap {
    Var weight;  // 4 x 4, features x params
    Var bias;    // 1 x 4

    Var raw(const TemporalFeatures& f) const {
        return add(matmul(constant(f.as_row()), weight), bias);
    }
};

inline Var adaptive_params(const TemporalFeatures& f, const AdaptiveMap& map) {
    return positive_params(map.raw(f));
}

}  // namespace satt
