#pragma once

// Discrete escort-weighted Dirichlet form on a 1-D grid.
//
// With cell weights mu_i = q_i^(1+gamma) dx and face weights
// mu_{i+1/2} = (mu_i + mu_{i+1}) / 2, the Dirichlet form is
//     E(f) = sum_faces mu_{i+1/2} (f_{i+1} - f_i)^2 / dx^2 = f' K f
// and the generator A = M^-1 K (M = diag mu) discretizes f -> -mu^-1 (mu f')'.
// A is self-adjoint in the mu-weighted inner product; S = M^1/2 A M^-1/2 is its
// symmetric form, sharing A's spectrum.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "numerics.hpp"
#include "pme.hpp"

namespace gfm {

struct EscortGrid {
    Grid1D grid;
    std::vector<double> q;
    double gamma = 0.0;
    std::vector<double> mu;  // q^(1+gamma) dx

    EscortGrid(const Grid1D& g, std::vector<double> q_in, double gamma_in)
        : grid(g), q(std::move(q_in)), gamma(gamma_in) {
        if (q.size() != grid.n_cells) throw std::invalid_argument("EscortGrid: q must have one value per cell");
        if (!(gamma >= 0.0)) throw std::invalid_argument("EscortGrid: gamma must be >= 0");
        mu.resize(q.size());
        for (std::size_t i = 0; i < q.size(); ++i) {
            if (!(q[i] > 0.0) || !std::isfinite(q[i])) {
                throw std::invalid_argument("EscortGrid: q must be strictly positive and finite (cell " + std::to_string(i) + ")");
            }
            mu[i] = std::pow(q[i], 1.0 + gamma) * grid.dx();
        }
    }

    static EscortGrid from_function(const Grid1D& g, const std::function<double(double)>& density, double gamma) {
        std::vector<double> q(g.n_cells);
        for (std::size_t i = 0; i < g.n_cells; ++i) q[i] = density(g.center(i));
        return EscortGrid(g, std::move(q), gamma);
    }

    /// Standard normal base density on [-half_width, half_width].
    static EscortGrid gaussian(std::size_t n, double gamma, double half_width = 5.0) {
        return from_function(Grid1D(-half_width, half_width, n),
                             [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }, gamma);
    }

    static EscortGrid uniform(std::size_t n, double gamma, double half_width = 1.0) {
        return from_function(Grid1D(-half_width, half_width, n), [half_width](double) { return 0.5 / half_width; }, gamma);
    }

    double face_weight(std::size_t i) const { return 0.5 * (mu[i] + mu[i + 1]); }  // between cells i and i+1
};

struct WeightedLaplacian {
    Matrix generator;  // A, row sums zero
    Matrix symmetric;  // S = M^1/2 A M^-1/2
};

inline WeightedLaplacian build_weighted_laplacian(const EscortGrid& e) {
    const std::size_t n = e.grid.n_cells;
    const double inv_dx2 = 1.0 / (e.grid.dx() * e.grid.dx());
    WeightedLaplacian out{Matrix(n, n), Matrix(n, n)};
    for (std::size_t i = 0; i < n; ++i) {
        double diag = 0.0;
        if (i > 0) {
            const double c = e.face_weight(i - 1) * inv_dx2;
            out.generator(i, i - 1) = -c / e.mu[i];
            out.symmetric(i, i - 1) = -c / std::sqrt(e.mu[i] * e.mu[i - 1]);
            diag += c;
        }
        if (i + 1 < n) {
            const double c = e.face_weight(i) * inv_dx2;
            out.generator(i, i + 1) = -c / e.mu[i];
            out.symmetric(i, i + 1) = -c / std::sqrt(e.mu[i] * e.mu[i + 1]);
            diag += c;
        }
        out.generator(i, i) = diag / e.mu[i];
        out.symmetric(i, i) = diag / e.mu[i];
    }
    // Enforce exact symmetry of S against rounding in the two sqrt orders.
    for (std::size_t i = 0; i + 1 < n; ++i) out.symmetric(i + 1, i) = out.symmetric(i, i + 1);
    return out;
}

/// Dirichlet energy f' K f.
inline double dirichlet_energy(const EscortGrid& e, std::span<const double> f) {
    const double inv_dx2 = 1.0 / (e.grid.dx() * e.grid.dx());
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < f.size(); ++i) {
        const double d = f[i + 1] - f[i];
        s += e.face_weight(i) * d * d * inv_dx2;
    }
    return s;
}

/// Exact minimizer of sum_i mu_i (f_i - b_i)^2 + tau E(f), from the tridiagonal
/// optimality system (M + tau K) f = M b.
inline std::vector<double> tikhonov_minimize(const EscortGrid& e, std::span<const double> target, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("tikhonov_minimize: tau must be > 0");
    const std::size_t n = e.grid.n_cells;
    if (target.size() != n) throw std::invalid_argument("tikhonov_minimize: target length must equal the cell count");
    const double inv_dx2 = 1.0 / (e.grid.dx() * e.grid.dx());
    std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0), rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
        diag[i] = e.mu[i];
        rhs[i] = e.mu[i] * target[i];
        if (i > 0) {
            const double c = tau * e.face_weight(i - 1) * inv_dx2;
            lower[i] = -c;
            diag[i] += c;
        }
        if (i + 1 < n) {
            const double c = tau * e.face_weight(i) * inv_dx2;
            upper[i] = -c;
            diag[i] += c;
        }
    }
    // Thomas algorithm; the system is strictly diagonally dominant.
    for (std::size_t i = 1; i < n; ++i) {
        if (diag[i - 1] == 0.0) throw NumericalError("tikhonov_minimize: singular system");
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if (diag[n - 1] == 0.0) throw NumericalError("tikhonov_minimize: singular system");
    std::vector<double> f(n);
    f[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) f[i] = (rhs[i] - upper[i] * f[i + 1]) / diag[i];
    return f;
}

/// mu-orthonormal eigenpairs of A: eigenvalues ascending and phi_k = M^-1/2 u_k.
struct EscortSpectrum {
    std::vector<double> eigenvalues;
    Matrix u;  // orthonormal eigenvectors of S, one per column
};

inline EscortSpectrum escort_spectrum(const EscortGrid& e) {
    EigenResult r = eigen_symmetric(build_weighted_laplacian(e).symmetric);
    return {std::move(r.values), std::move(r.vectors)};
}

/// <f, phi_k>_mu for every k.
inline std::vector<double> escort_coefficients(const EscortGrid& e, const EscortSpectrum& s, std::span<const double> f) {
    const std::size_t n = e.grid.n_cells;
    std::vector<double> out(n, 0.0);
    std::vector<double> scaled(n);
    for (std::size_t i = 0; i < n; ++i) scaled[i] = std::sqrt(e.mu[i]) * f[i];
    for (std::size_t k = 0; k < n; ++k) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += s.u(i, k) * scaled[i];
        out[k] = c;
    }
    return out;
}

/// phi_k on the grid.
inline std::vector<double> escort_eigenfunction(const EscortGrid& e, const EscortSpectrum& s, std::size_t k) {
    std::vector<double> phi(e.grid.n_cells);
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = s.u(i, k) / std::sqrt(e.mu[i]);
    return phi;
}

struct ShrinkageReport {
    double tau = 0.0;
    std::vector<double> eigenvalues;
    std::vector<double> target_coefficients;     // b_k
    std::vector<double> solved_coefficients;     // a_k from the linear solve
    std::vector<double> predicted_coefficients;  // b_k / (1 + tau mu_k)
    double max_abs_deviation = 0.0;
    double dirichlet_energy = 0.0;           // f*' K f* from the grid
    double spectral_energy_solved = 0.0;     // sum mu_k a_k^2
    double spectral_energy_predicted = 0.0;  // sum mu_k b_k^2 / (1 + tau mu_k)^2
    double energy_identity_error = 0.0;      // |direct - predicted|
};

/// Compares the direct Tikhonov solve against spectral shrinkage b_k / (1 + tau mu_k).
inline ShrinkageReport shrinkage_check(const EscortGrid& e, std::span<const double> target, double tau) {
    const EscortSpectrum spec = escort_spectrum(e);
    const std::vector<double> f = tikhonov_minimize(e, target, tau);
    ShrinkageReport r;
    r.tau = tau;
    r.eigenvalues = spec.eigenvalues;
    r.target_coefficients = escort_coefficients(e, spec, target);
    r.solved_coefficients = escort_coefficients(e, spec, f);
    const std::size_t n = r.eigenvalues.size();
    r.predicted_coefficients.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double mk = r.eigenvalues[k];
        r.predicted_coefficients[k] = r.target_coefficients[k] / (1.0 + tau * mk);
        r.max_abs_deviation = std::max(r.max_abs_deviation, std::abs(r.solved_coefficients[k] - r.predicted_coefficients[k]));
        r.spectral_energy_solved += mk * r.solved_coefficients[k] * r.solved_coefficients[k];
        r.spectral_energy_predicted += mk * r.predicted_coefficients[k] * r.predicted_coefficients[k];
    }
    r.dirichlet_energy = dirichlet_energy(e, f);
    r.energy_identity_error = std::abs(r.dirichlet_energy - r.spectral_energy_predicted);
    return r;
}

/// Per-mode roughness contribution mu / (1 + tau mu)^2.
inline double mode_energy_factor(double mu, double tau) { return mu / ((1.0 + tau * mu) * (1.0 + tau * mu)); }

struct GapSweep {
    std::vector<double> gammas;
    std::vector<double> gaps;        // smallest nonzero eigenvalue
    std::vector<double> ratio;       // gap(gamma) / gap(gammas[0])
    std::vector<double> linear_law;  // (1 + gamma) / (1 + gammas[0])
};

inline GapSweep spectral_gap_vs_gamma(const Grid1D& grid, std::span<const double> q, std::span<const double> gammas) {
    GapSweep s;
    for (double g : gammas) {
        const EscortGrid e(grid, std::vector<double>(q.begin(), q.end()), g);
        const EscortSpectrum spec = escort_spectrum(e);
        s.gammas.push_back(g);
        s.gaps.push_back(spec.eigenvalues.at(1));
    }
    for (std::size_t i = 0; i < s.gaps.size(); ++i) {
        s.ratio.push_back(s.gaps[i] / s.gaps.front());
        s.linear_law.push_back((1.0 + s.gammas[i]) / (1.0 + s.gammas.front()));
    }
    return s;
}

}  // namespace gfm
