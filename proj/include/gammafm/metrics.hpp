#pragma once

// Evaluation metrics: unbiased RBF-MMD^2, ambient Jacobian smoothness,
// velocity-norm heightmaps and the geometric selection criterion.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"
#include "numerics.hpp"

namespace gfm {

struct MmdSpec {
    std::optional<double> bandwidth;  // empty: median heuristic on the pooled sample
};

struct MmdResult {
    double value = 0.0;
    double bandwidth = 0.0;
};

/// Median pairwise distance over the pooled rows of x and y (lower-middle convention).
inline double median_heuristic_bandwidth(const Matrix& x, const Matrix& y) {
    if (x.cols != y.cols) throw std::invalid_argument("median_heuristic_bandwidth: dimension mismatch");
    const std::size_t n = x.rows + y.rows;
    auto row = [&](std::size_t i) { return i < x.rows ? x.row(i) : y.row(i - x.rows); };
    std::vector<double> d;
    d.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto b = row(j);
            double s = 0.0;
            for (std::size_t c = 0; c < a.size(); ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
            d.push_back(std::sqrt(s));
        }
    }
    return median(d);
}

namespace detail {
inline double kernel_sum(const Matrix& a, const Matrix& b, double inv_two_bw2, bool skip_diagonal) {
    double total = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const auto ai = a.row(i);
        double row_sum = 0.0;
        for (std::size_t j = 0; j < b.rows; ++j) {
            if (skip_diagonal && i == j) continue;
            const auto bj = b.row(j);
            double s = 0.0;
            for (std::size_t c = 0; c < ai.size(); ++c) {
                const double diff = ai[c] - bj[c];
                s += diff * diff;
            }
            row_sum += std::exp(-s * inv_two_bw2);
        }
        total += row_sum;
    }
    return total;
}
}  // namespace detail

/// Unbiased U-statistic estimate of MMD^2 with k(a,b) = exp(-|a-b|^2 / (2 bw^2)).
/// Can be slightly negative.
inline MmdResult rbf_mmd2_detailed(const Matrix& x, const Matrix& y, const MmdSpec& spec = {}) {
    if (x.rows < 2 || y.rows < 2) throw std::invalid_argument("rbf_mmd2: need at least two samples on each side");
    if (x.cols != y.cols) throw std::invalid_argument("rbf_mmd2: dimension mismatch");
    const double bw = spec.bandwidth ? *spec.bandwidth : median_heuristic_bandwidth(x, y);
    if (!(bw > 0.0)) throw std::invalid_argument("rbf_mmd2: bandwidth must be positive");
    const double g = 1.0 / (2.0 * bw * bw);
    const double n = static_cast<double>(x.rows);
    const double m = static_cast<double>(y.rows);
    const double kxx = detail::kernel_sum(x, x, g, true) / (n * (n - 1.0));
    const double kyy = detail::kernel_sum(y, y, g, true) / (m * (m - 1.0));
    const double kxy = detail::kernel_sum(x, y, g, false) / (n * m);
    return {kxx + kyy - 2.0 * kxy, bw};
}

inline double rbf_mmd2(const Matrix& x, const Matrix& y, const MmdSpec& spec = {}) {
    return rbf_mmd2_detailed(x, y, spec).value;
}

inline const std::vector<double>& default_smoothness_times() {
    static const std::vector<double> ts{0.0, 0.25, 0.5, 0.75, 1.0};
    return ts;
}

/// Mean of ||d v / d x||_F^2 over x ~ N(0, I_D) and t in `t_grid`, using
/// central differences with step 1e-5 (1 + |x|).
inline double smoothness(const VectorFieldModel& model, std::size_t n_probe, std::span<const double> t_grid,
                         SeededRng& rng) {
    if (n_probe < 1) throw std::invalid_argument("smoothness: need at least one probe point");
    if (t_grid.empty()) throw std::invalid_argument("smoothness: empty time grid");
    const std::size_t d = model.data_dim();
    Matrix probes(n_probe, d);
    for (double& v : probes.data) v = rng.normal();

    // All +-h perturbations of every probe point go through one batched pass per t.
    Matrix shifted(2 * d * n_probe, d);
    std::vector<double> steps(n_probe);
    for (std::size_t p = 0; p < n_probe; ++p) {
        const auto x = probes.row(p);
        steps[p] = jacobian_step(x);
        for (std::size_t j = 0; j < d; ++j) {
            auto up = shifted.row(2 * (p * d + j));
            auto dn = shifted.row(2 * (p * d + j) + 1);
            std::copy(x.begin(), x.end(), up.begin());
            std::copy(x.begin(), x.end(), dn.begin());
            up[j] += steps[p];
            dn[j] -= steps[p];
        }
    }
    double total = 0.0;
    for (double t : t_grid) {
        const Matrix out = model.forward_batch(shifted, t);
        for (std::size_t p = 0; p < n_probe; ++p) {
            double fro = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const auto up = out.row(2 * (p * d + j));
                const auto dn = out.row(2 * (p * d + j) + 1);
                for (std::size_t i = 0; i < d; ++i) {
                    const double dij = (up[i] - dn[i]) / (2.0 * steps[p]);
                    fro += dij * dij;
                }
            }
            total += fro;
        }
    }
    return total / static_cast<double>(n_probe * t_grid.size());
}

inline double smoothness(const VectorFieldModel& model, std::size_t n_probe, SeededRng& rng) {
    return smoothness(model, n_probe, default_smoothness_times(), rng);
}

/// Square 2-D slice through the origin along two coordinate axes.
struct SliceGrid {
    double lo = -1.5;
    double hi = 1.5;
    std::size_t resolution = 64;
    std::size_t dim_x = 0;
    std::size_t dim_y = 1;

    double coord(std::size_t i) const {
        return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(resolution - 1);
    }
};

/// ||v(x, t)||_2 on the slice; entry (r, c) is at (coord(c), coord(r)) with all
/// other coordinates zero.
inline Matrix velocity_norm_map(const VectorFieldModel& model, const SliceGrid& grid, double t) {
    if (grid.resolution < 16) throw std::invalid_argument("velocity_norm_map: resolution must be >= 16");
    const std::size_t d = model.data_dim();
    if (grid.dim_x >= d || grid.dim_y >= d || grid.dim_x == grid.dim_y) {
        throw std::invalid_argument("velocity_norm_map: invalid slice dimensions");
    }
    const std::size_t n = grid.resolution;
    Matrix pts(n * n, d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            pts(r * n + c, grid.dim_x) = grid.coord(c);
            pts(r * n + c, grid.dim_y) = grid.coord(r);
        }
    const Matrix v = model.forward_batch(pts, t);
    Matrix out(n, n);
    for (std::size_t i = 0; i < n * n; ++i) {
        double s = 0.0;
        for (double c : v.row(i)) s += c * c;
        out.data[i] = std::sqrt(s);
    }
    return out;
}

/// Mean of a velocity-norm map over nodes whose slice radius lies in [r_min, r_max).
inline double radial_band_mean(const Matrix& map, const SliceGrid& grid, double r_min, double r_max) {
    double s = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < map.rows; ++r)
        for (std::size_t c = 0; c < map.cols; ++c) {
            const double rad = std::hypot(grid.coord(c), grid.coord(r));
            if (rad >= r_min && rad < r_max) {
                s += map(r, c);
                ++count;
            }
        }
    if (count == 0) throw std::invalid_argument("radial_band_mean: no grid nodes in band");
    return s / static_cast<double>(count);
}

struct GscReport {
    std::vector<double> gammas;
    std::vector<double> mmd;
    std::vector<double> smoothness;
    std::vector<double> normalized_bias;
    std::vector<double> normalized_penalty;
    std::vector<double> gsc;
    double lambda = 1.0;
    std::size_t argmin = 0;
    double best_gamma = 0.0;
    bool bias_degenerate = false;     // MMD constant over the grid
    bool penalty_degenerate = false;  // smoothness constant over the grid
};

namespace detail {
inline std::vector<double> min_max_normalize(std::span<const double> v, bool& degenerate) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = *hi - *lo;
    std::vector<double> out(v.size(), 0.0);
    degenerate = !(range > 0.0);
    if (degenerate) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
    return out;
}
}  // namespace detail

/// Min-max normalized MMD plus lambda times min-max normalized smoothness over
/// a gamma grid. Ties go to the smaller gamma.
inline GscReport gsc(std::span<const double> gammas, std::span<const double> mmd, std::span<const double> smooth,
                     double lambda = 1.0) {
    if (mmd.size() != smooth.size() || mmd.size() != gammas.size()) {
        throw std::invalid_argument("gsc: arrays must align with the gamma grid");
    }
    if (mmd.size() < 2) throw std::invalid_argument("gsc: need at least two gamma values");
    GscReport r;
    r.gammas.assign(gammas.begin(), gammas.end());
    r.mmd.assign(mmd.begin(), mmd.end());
    r.smoothness.assign(smooth.begin(), smooth.end());
    r.lambda = lambda;
    r.normalized_bias = detail::min_max_normalize(mmd, r.bias_degenerate);
    r.normalized_penalty = detail::min_max_normalize(smooth, r.penalty_degenerate);
    r.gsc.resize(mmd.size());
    for (std::size_t i = 0; i < mmd.size(); ++i) r.gsc[i] = r.normalized_bias[i] + lambda * r.normalized_penalty[i];
    for (std::size_t i = 1; i < r.gsc.size(); ++i) {
        const bool better = r.gsc[i] < r.gsc[r.argmin];
        const bool tie_smaller_gamma = r.gsc[i] == r.gsc[r.argmin] && r.gammas[i] < r.gammas[r.argmin];
        if (better || tie_smaller_gamma) r.argmin = i;
    }
    r.best_gamma = r.gammas[r.argmin];
    return r;
}

}  // namespace gfm
