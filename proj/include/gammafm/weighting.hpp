#pragma once

// Dynamic density weights from within-batch k-nearest-neighbour distances:
//   dbar_i = mean distance from x_i to its k nearest batch neighbours (self excluded)
//   sigma  = median_i dbar_i
//   w_i    = exp(-(gamma / sigma) dbar_i), renormalized to mean one.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "numerics.hpp"

namespace gfm {

struct WeightSpec {
    double gamma = 0.0;
    std::size_t k = 10;
    double sigma_floor = 1e-12;

    void validate() const {
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("WeightSpec: gamma must be finite and >= 0");
        if (k < 1) throw std::invalid_argument("WeightSpec: k must be >= 1");
    }
};

struct WeightedBatchView {
    std::vector<double> dbar;
    double sigma = 0.0;
    std::vector<double> raw;      // exp(-(gamma/sigma) dbar) before normalization
    std::vector<double> weights;  // mean one
    bool degenerate = false;      // median(dbar) fell below sigma_floor; weights are uniform
};

/// Mean distance to the k nearest neighbours of each row, self excluded.
/// Ties are broken toward the smaller index.
inline std::vector<double> knn_mean_distances_from(const Matrix& dist, std::size_t k) {
    const std::size_t n = dist.rows;
    if (k < 1 || k >= n) {
        throw std::invalid_argument("knn_mean_distances: need 1 <= k <= N-1 (k=" + std::to_string(k) +
                                    ", N=" + std::to_string(n) + ")");
    }
    std::vector<double> out(n);
    std::vector<std::size_t> idx(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) idx[c++] = j;
        const auto row = dist.row(i);
        auto closer = [&](std::size_t a, std::size_t b) { return row[a] < row[b] || (row[a] == row[b] && a < b); };
        std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), closer);
        // The k smallest now occupy idx[0..k); sum them in index order for a
        // result independent of the selection algorithm's internal ordering.
        std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
        double s = 0.0;
        for (std::size_t m = 0; m < k; ++m) s += row[idx[m]];
        out[i] = s / static_cast<double>(k);
    }
    return out;
}

inline std::vector<double> knn_mean_distances(const Matrix& points, std::size_t k) {
    if (k >= points.rows) {
        throw std::invalid_argument("knn_mean_distances: need k <= N-1 (k=" + std::to_string(k) +
                                    ", N=" + std::to_string(points.rows) + ")");
    }
    return knn_mean_distances_from(pairwise_distances(points), k);
}

/// Exponential density weights normalized to mean one. gamma == 0 gives exact ones.
inline WeightedBatchView compute_weights(std::span<const double> dbar, const WeightSpec& spec) {
    spec.validate();
    if (dbar.empty()) throw std::invalid_argument("compute_weights: empty batch");
    for (double d : dbar) {
        if (!(d >= 0.0) || !std::isfinite(d)) throw std::invalid_argument("compute_weights: dbar must be finite and >= 0");
    }
    WeightedBatchView view;
    view.dbar.assign(dbar.begin(), dbar.end());
    const std::size_t n = dbar.size();

    if (spec.gamma == 0.0) {
        view.sigma = median(dbar);
        view.raw.assign(n, 1.0);
        view.weights.assign(n, 1.0);
        return view;
    }

    const double med = median(dbar);
    if (med < spec.sigma_floor) {
        view.sigma = spec.sigma_floor;
        view.degenerate = true;
        view.raw.assign(n, 1.0);
        view.weights.assign(n, 1.0);
        return view;
    }
    view.sigma = med;

    const bool all_equal = std::all_of(dbar.begin(), dbar.end(), [&](double d) { return d == dbar.front(); });
    view.raw.resize(n);
    for (std::size_t i = 0; i < n; ++i) view.raw[i] = std::exp(-(spec.gamma / view.sigma) * dbar[i]);
    if (all_equal) {
        view.weights.assign(n, 1.0);
        return view;
    }

    // Normalize in the log domain: shifting by the smallest dbar keeps the
    // largest raw weight at 1 so the mean cannot underflow.
    const double dmin = *std::min_element(dbar.begin(), dbar.end());
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) shifted[i] = std::exp(-(spec.gamma / view.sigma) * (dbar[i] - dmin));
    const double mean = std::accumulate(shifted.begin(), shifted.end(), 0.0) / static_cast<double>(n);
    view.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) view.weights[i] = shifted[i] / mean;
    return view;
}

/// Effective sample size fraction (sum w)^2 / (B sum w^2), in (0, 1].
inline double effective_sample_fraction(std::span<const double> w) {
    if (w.empty()) return 0.0;
    double s = 0.0, s2 = 0.0;
    for (double x : w) {
        s += x;
        s2 += x * x;
    }
    if (s2 == 0.0) return 0.0;
    return (s * s) / (static_cast<double>(w.size()) * s2);
}

}  // namespace gfm
