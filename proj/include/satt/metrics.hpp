#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "satt/tensor.hpp"

namespace satt {

namespace detail {

inline void check_binary(std::span<const double> scores, std::span<const int> labels,
                         const char* what) {
    if (scores.size() != labels.size()) {
        throw ShapeError(std::string(what) + ": " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
    }
    std::size_t pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw ContractError(std::string(what) + ": labels must be 0/1");
        pos += static_cast<std::size_t>(l);
    }
    if (pos == 0) throw ContractError(std::string(what) + ": no positive labels");
    if (pos == labels.size()) throw ContractError(std::string(what) + ": no negative labels");
}

/// Indices ordered by descending score.
inline std::vector<std::size_t> descending_order(std::span<const double> scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

}  // namespace detail

/// Area under the precision-recall curve, step-wise: sum over distinct score
/// thresholds (descending) of (R_k - R_{k-1}) * P_k. Tied scores form one threshold.
inline double auprc(std::span<const double> scores, std::span<const int> labels) {
    detail::check_binary(scores, labels, "auprc");
    const auto idx = detail::descending_order(scores);
    const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    std::size_t tp = 0, fp = 0;
    double prev_recall = 0.0, area = 0.0;
    for (std::size_t k = 0; k < idx.size();) {
        const double s = scores[idx[k]];
        while (k < idx.size() && scores[idx[k]] == s) {
            (labels[idx[k]] ? tp : fp) += 1;
            ++k;
        }
        const double recall = static_cast<double>(tp) / n_pos;
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

/// Mann-Whitney U / (n+ n-), ties counted as one half.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
    detail::check_binary(scores, labels, "auroc");
    const auto idx = detail::descending_order(scores);
    std::uint64_t n_pos = 0, n_neg = 0;
    for (int l : labels) (l ? n_pos : n_neg) += 1;
    // Twice the U statistic stays an exact integer.
    std::uint64_t twice_u = 0;
    std::uint64_t neg_below = n_neg;
    for (std::size_t k = 0; k < idx.size();) {
        const double s = scores[idx[k]];
        std::uint64_t gp = 0, gn = 0;
        while (k < idx.size() && scores[idx[k]] == s) {
            (labels[idx[k]] ? gp : gn) += 1;
            ++k;
        }
        neg_below -= gn;
        twice_u += gp * (2 * neg_below + gn);
    }
    return static_cast<double>(twice_u) / static_cast<double>(2 * n_pos * n_neg);
}

/// Mean over rows of the attention mass with |i - j| <= w.
inline double diag_band_mass(const Matrix& attention, std::size_t w, double tol = 1e-9) {
    const std::size_t T = attention.rows();
    if (T == 0 || attention.cols() != T) throw ContractError("diag_band_mass: attention must be square");
    if (w >= T) throw ContractError("diag_band_mass: bandwidth must be < T");
    double total = 0.0;
    for (std::size_t i = 0; i < T; ++i) {
        double row = 0.0, band = 0.0;
        for (std::size_t j = 0; j < T; ++j) {
            const double a = attention(i, j);
            if (a < -tol || !std::isfinite(a))
                throw ContractError("diag_band_mass: attention entries must be non-negative");
            row += a;
            if ((i > j ? i - j : j - i) <= w) band += a;
        }
        if (std::abs(row - 1.0) > tol) throw ContractError("diag_band_mass: rows must sum to 1");
        total += band;
    }
    return total / static_cast<double>(T);
}

/// snapshots[window][layer][head]. Mean pairwise Frobenius distance between the
/// heads of each layer, averaged over layers and windows.
inline double head_diversity(const std::vector<std::vector<std::vector<Matrix>>>& snapshots) {
    if (snapshots.empty()) throw ContractError("head_diversity: no snapshots");
    double total = 0.0;
    std::size_t groups = 0;
    for (const auto& window : snapshots) {
        for (const auto& heads : window) {
            if (heads.size() < 2) throw ContractError("head_diversity needs at least two heads");
            double s = 0.0;
            std::size_t pairs = 0;
            for (std::size_t a = 0; a < heads.size(); ++a)
                for (std::size_t b = a + 1; b < heads.size(); ++b) {
                    s += raw::frobenius_distance(heads[a], heads[b]);
                    ++pairs;
                }
            total += s / static_cast<double>(pairs);
            ++groups;
        }
    }
    return total / static_cast<double>(groups);
}

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample std (n - 1); 0 for n < 2
    double se = 0.0;
    std::size_t n = 0;
};

inline Summary summarize(std::span<const double> xs) {
    Summary s;
    s.n = xs.size();
    if (xs.empty()) return s;
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() >= 2) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
        s.se = s.std / std::sqrt(static_cast<double>(xs.size()));
    }
    return s;
}

}  // namespace satt
