#pragma once

// Seeded synthetic datasets used by the experiments.

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "numerics.hpp"

namespace gfm {

/// Noisy circle in the first two coordinates plus isotropic noise in the rest.
inline Matrix ring20d(std::size_t n, double radius, double noise_m, double noise_a, std::size_t ambient_dims,
                      SeededRng& rng) {
    Matrix out(n, 2 + ambient_dims);
    for (std::size_t i = 0; i < n; ++i) {
        const double theta = 2.0 * std::numbers::pi * rng.uniform();
        out(i, 0) = radius * std::cos(theta) + noise_m * rng.normal();
        out(i, 1) = radius * std::sin(theta) + noise_m * rng.normal();
        for (std::size_t j = 0; j < ambient_dims; ++j) out(i, 2 + j) = noise_a * rng.normal();
    }
    return out;
}

struct RingSpec {
    double radius = 1.0;
    double noise_m = 0.05;
    double noise_a = 0.05;
    std::size_t ambient_dims = 18;
};

inline Matrix ring20d(std::size_t n, const RingSpec& spec, SeededRng& rng) {
    return ring20d(n, spec.radius, spec.noise_m, spec.noise_a, spec.ambient_dims, rng);
}

/// V(x) = x^4/4 - 3x^2/4.
inline double double_well_potential(double x) { return 0.25 * x * x * x * x - 0.75 * x * x; }
inline double double_well_force(double x) { return x * x * x - 1.5 * x; }  // V'(x)

struct DoubleWellSamples {
    std::vector<double> samples;
    double acceptance_rate = 0.0;
};

/// Rejection sampling of p(x) ~ exp(-V(x)) on [-3, 3] with a uniform proposal.
/// The envelope is exp(-min V) = exp(9/16), attained at x = +-sqrt(3/2).
inline DoubleWellSamples double_well_samples(std::size_t n, SeededRng& rng) {
    constexpr double kEnvelopeLog = 9.0 / 16.0;
    DoubleWellSamples out;
    out.samples.reserve(n);
    std::size_t proposals = 0;
    while (out.samples.size() < n) {
        const double x = rng.uniform(-3.0, 3.0);
        const double u = rng.uniform();
        ++proposals;
        if (u < std::exp(-double_well_potential(x) - kEnvelopeLog)) out.samples.push_back(x);
    }
    out.acceptance_rate = proposals == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(proposals);
    return out;
}

/// Equal-weight Gaussian mixture with unit component covariance and centers on
/// a sphere of radius `spread`. Centers come from `center_seed` so that train
/// and held-out draws share one mixture.
struct GmmSpec {
    std::size_t dim = 16;
    std::size_t n_modes = 10;
    double spread = 5.0;
    std::uint64_t center_seed = 2024;
};

inline Matrix gmm_centers(const GmmSpec& spec) {
    if (spec.n_modes < 1) throw std::invalid_argument("gmm: need at least one mode");
    if (spec.dim < 1) throw std::invalid_argument("gmm: need dim >= 1");
    SeededRng rng(spec.center_seed);
    Matrix c(spec.n_modes, spec.dim);
    for (std::size_t k = 0; k < spec.n_modes; ++k) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (std::size_t j = 0; j < spec.dim; ++j) {
                c(k, j) = rng.normal();
                norm += c(k, j) * c(k, j);
            }
            norm = std::sqrt(norm);
        } while (norm == 0.0);
        for (std::size_t j = 0; j < spec.dim; ++j) c(k, j) *= spec.spread / norm;
    }
    return c;
}

inline Matrix gmm_latent(std::size_t n, const GmmSpec& spec, SeededRng& rng) {
    const Matrix centers = gmm_centers(spec);
    Matrix out(n, spec.dim);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = rng.index(spec.n_modes);
        for (std::size_t j = 0; j < spec.dim; ++j) out(i, j) = centers(k, j) + rng.normal();
    }
    return out;
}

inline Matrix gmm_latent(std::size_t n, std::size_t dim, std::size_t n_modes, double spread, SeededRng& rng) {
    GmmSpec spec{dim, n_modes, spread, rng.next_u64()};
    return gmm_latent(n, spec, rng);
}

struct ContaminatedSet {
    Matrix samples;
    std::vector<bool> inlier_mask;

    Matrix inliers() const { return select(true); }
    Matrix outliers() const { return select(false); }

private:
    Matrix select(bool keep) const {
        std::vector<double> rows;
        std::size_t count = 0;
        for (std::size_t i = 0; i < samples.rows; ++i) {
            if (inlier_mask[i] != keep) continue;
            const auto r = samples.row(i);
            rows.insert(rows.end(), r.begin(), r.end());
            ++count;
        }
        return Matrix(count, samples.cols, std::move(rows));
    }
};

/// Mixture inliers with round(eps*n) outliers from N(0, outlier_scale^2 I),
/// interleaved at random positions.
inline ContaminatedSet contaminated_latents(std::size_t n, const GmmSpec& inlier_spec, double eps, double outlier_scale,
                                            SeededRng& rng) {
    if (!(eps >= 0.0 && eps <= 0.5)) throw std::invalid_argument("contaminated_latents: eps must lie in [0, 0.5]");
    const std::size_t n_out = static_cast<std::size_t>(std::llround(eps * static_cast<double>(n)));
    const std::size_t n_in = n - n_out;
    const Matrix inl = gmm_latent(n_in, inlier_spec, rng);

    // Random placement of the outliers among the rows.
    std::vector<bool> mask(n, true);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t i = 0; i < n_out; ++i) mask[order[i]] = false;

    ContaminatedSet out;
    out.samples = Matrix(n, inlier_spec.dim);
    out.inlier_mask = mask;
    std::size_t next_in = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) {
            const auto r = inl.row(next_in++);
            std::copy(r.begin(), r.end(), out.samples.row(i).begin());
        } else {
            for (std::size_t j = 0; j < inlier_spec.dim; ++j) out.samples(i, j) = outlier_scale * rng.normal();
        }
    }
    return out;
}

inline ContaminatedSet contaminated_latents(std::size_t n, std::size_t dim, double eps, double outlier_scale,
                                            SeededRng& rng) {
    GmmSpec spec;
    spec.dim = dim;
    return contaminated_latents(n, spec, eps, outlier_scale, rng);
}

}  // namespace gfm
