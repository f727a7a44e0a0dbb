#pragma once

// 1-D finite-volume solver for the nonlinear Fokker-Planck equation
//
//     dp/dt = d/dx (p V'(x)) + D d^2/dx^2 (p^(1+gamma))
//
// on a cell-centred grid with no-flux walls. gamma = 0 is linear diffusion;
// gamma > 0 is porous-medium diffusion whose diffusivity D (1+gamma) p^gamma
// vanishes where p does, which gives compactly supported solutions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfm {

struct Grid1D {
    double x_min = -6.0;
    double x_max = 6.0;
    std::size_t n_cells = 1024;

    Grid1D() = default;
    Grid1D(double lo, double hi, std::size_t n) : x_min(lo), x_max(hi), n_cells(n) {
        if (n < 32) throw std::invalid_argument("Grid1D: need at least 32 cells");
        if (!(hi > lo)) throw std::invalid_argument("Grid1D: x_max must exceed x_min");
    }

    double dx() const { return (x_max - x_min) / static_cast<double>(n_cells); }
    double center(std::size_t i) const { return x_min + (static_cast<double>(i) + 0.5) * dx(); }
    double face(std::size_t i) const { return x_min + static_cast<double>(i) * dx(); }  // left face of cell i
    std::vector<double> centers() const {
        std::vector<double> c(n_cells);
        for (std::size_t i = 0; i < n_cells; ++i) c[i] = center(i);
        return c;
    }
};

struct DensityField1D {
    Grid1D grid;
    std::vector<double> p;
    double time = 0.0;
    double clamped_mass = 0.0;  // cumulative mass removed by negativity clamping

    double mass() const {
        double s = 0.0;
        for (double v : p) s += v;
        return s * grid.dx();
    }

    /// Mass in cells whose centre satisfies |x| < half_width.
    double mass_within(double half_width) const {
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (std::abs(grid.center(i)) < half_width) s += p[i];
        return s * grid.dx();
    }

    static DensityField1D sample(const Grid1D& g, const std::function<double(double)>& f, double t = 0.0) {
        DensityField1D d{g, std::vector<double>(g.n_cells), t, 0.0};
        for (std::size_t i = 0; i < g.n_cells; ++i) d.p[i] = f(g.center(i));
        return d;
    }
};

struct Potential {
    std::string name = "none";
    std::function<double(double)> value = [](double) { return 0.0; };
    std::function<double(double)> derivative = [](double) { return 0.0; };

    static Potential none() { return {}; }
    static Potential quadratic(double stiffness = 1.0) {
        return {"quadratic", [stiffness](double x) { return 0.5 * stiffness * x * x; },
                [stiffness](double x) { return stiffness * x; }};
    }
    /// V(x) = x^4/4 - 3x^2/4.
    static Potential double_well() {
        return {"double-well", [](double x) { return 0.25 * x * x * x * x - 0.75 * x * x; },
                [](double x) { return x * x * x - 1.5 * x; }};
    }
    static Potential from_name(const std::string& name) {
        if (name == "none") return none();
        if (name == "quadratic") return quadratic();
        if (name == "double-well") return double_well();
        throw std::invalid_argument("unknown potential '" + name + "' (expected none, quadratic or double-well)");
    }
};

struct PmeSpec {
    double gamma = 0.0;
    double diffusion = 1.0;  // D
    Potential potential;
    double t_end = 1.0;
    double cfl_safety = 0.4;

    void validate() const {
        if (!(gamma >= 0.0)) throw std::invalid_argument("PmeSpec: gamma must be >= 0");
        if (!(diffusion > 0.0)) throw std::invalid_argument("PmeSpec: D must be > 0");
        if (!(cfl_safety > 0.0 && cfl_safety <= 0.5)) throw std::invalid_argument("PmeSpec: cfl_safety must lie in (0, 0.5]");
    }
};

/// Largest explicit step satisfying both the diffusive and the advective CFL bounds.
inline double admissible_dt(const DensityField1D& f, const PmeSpec& spec) {
    const double dx = f.grid.dx();
    double pmax = 0.0;
    for (double v : f.p) pmax = std::max(pmax, v);
    const double diff = spec.diffusion * (1.0 + spec.gamma) * (spec.gamma == 0.0 ? 1.0 : std::pow(pmax, spec.gamma));
    double vmax = 0.0;
    for (std::size_t i = 0; i <= f.grid.n_cells; ++i) vmax = std::max(vmax, std::abs(spec.potential.derivative(f.grid.face(i))));
    double dt = spec.cfl_safety * dx * dx / (diff + 1e-300);
    if (vmax > 0.0) dt = std::min(dt, spec.cfl_safety * dx / vmax);
    return dt;
}

/// One explicit conservative step. Face fluxes (positive to the right):
///   drift     -p_face V'(x_face), with p_face the arithmetic mean where the cell
///             Peclet number |V'| dx / (D (1+gamma) p^gamma) <= 2, upwind otherwise
///   diffusion -D (p_{i+1}^(1+gamma) - p_i^(1+gamma)) / dx
/// Boundary fluxes are zero. Negative cells are clamped to zero and the removed
/// mass is added to `clamped_mass`.
inline DensityField1D pme_step(const DensityField1D& f, const PmeSpec& spec, double dt) {
    spec.validate();
    const double limit = admissible_dt(f, spec);
    if (dt > limit * (1.0 + 1e-12)) {
        throw std::invalid_argument("pme_step: dt = " + std::to_string(dt) + " violates CFL; admissible dt = " +
                                    std::to_string(limit));
    }
    const std::size_t n = f.grid.n_cells;
    const double dx = f.grid.dx();
    const double m = 1.0 + spec.gamma;

    std::vector<double> pm(n);
    for (std::size_t i = 0; i < n; ++i) pm[i] = spec.gamma == 0.0 ? f.p[i] : std::pow(f.p[i], m);

    std::vector<double> flux(n + 1, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        const double pl = f.p[i - 1];
        const double pr = f.p[i];
        const double vprime = spec.potential.derivative(f.grid.face(i));
        double drift = 0.0;
        if (vprime != 0.0) {
            const double velocity = -vprime;
            const double pavg = 0.5 * (pl + pr);
            const double diffusivity = spec.diffusion * m * (spec.gamma == 0.0 ? 1.0 : std::pow(pavg, spec.gamma));
            const bool central = std::abs(velocity) * dx <= 2.0 * diffusivity;
            const double pface = central ? pavg : (velocity > 0.0 ? pl : pr);
            drift = velocity * pface;
        }
        flux[i] = drift - spec.diffusion * (pm[i] - pm[i - 1]) / dx;
    }

    DensityField1D out = f;
    out.time = f.time + dt;
    for (std::size_t i = 0; i < n; ++i) {
        double v = f.p[i] - dt / dx * (flux[i + 1] - flux[i]);
        if (v < 0.0) {
            out.clamped_mass += -v * dx;
            v = 0.0;
        }
        out.p[i] = v;
    }
    return out;
}

/// Advances to `t_target` with the largest admissible steps.
inline DensityField1D evolve(DensityField1D f, const PmeSpec& spec, double t_target) {
    while (f.time < t_target) {
        double dt = admissible_dt(f, spec);
        const double remaining = t_target - f.time;
        if (dt >= remaining) {
            dt = remaining;
            f = pme_step(f, spec, dt);
            f.time = t_target;
        } else {
            f = pme_step(f, spec, dt);
        }
    }
    return f;
}

/// Evolves through increasing `times`, returning one snapshot per entry.
inline std::vector<DensityField1D> evolve_snapshots(DensityField1D f, const PmeSpec& spec, std::span<const double> times) {
    std::vector<DensityField1D> out;
    for (double t : times) {
        f = evolve(std::move(f), spec, t);
        out.push_back(f);
    }
    return out;
}

/// Barenblatt self-similar solution of dp/dt = d^2/dx^2 (p^(1+gamma)) in one dimension:
///   B(x,t) = t^-alpha (C - kappa x^2 t^(-2 beta))_+^(1/gamma)
/// with beta = 1/(gamma+2), alpha = beta, kappa = gamma beta / (2 (1+gamma)) and
/// C fixed by the total mass.
struct Barenblatt {
    double gamma;
    double mass;
    double beta;
    double alpha;
    double kappa;
    double c;

    Barenblatt(double gamma_in, double mass_in) : gamma(gamma_in), mass(mass_in) {
        if (!(gamma > 0.0)) throw std::invalid_argument("barenblatt: gamma must be > 0");
        if (!(mass > 0.0)) throw std::invalid_argument("barenblatt: mass must be > 0");
        beta = 1.0 / (gamma + 2.0);
        alpha = beta;
        kappa = gamma * beta / (2.0 * (1.0 + gamma));
        // mass = C^(1/gamma + 1/2) kappa^(-1/2) B(1/2, 1/gamma + 1)
        const double a = 1.0 / gamma;
        const double beta_fn = std::exp(std::lgamma(0.5) + std::lgamma(a + 1.0) - std::lgamma(a + 1.5));
        c = std::pow(mass * std::sqrt(kappa) / beta_fn, 1.0 / (a + 0.5));
    }

    double operator()(double x, double t) const {
        if (!(t > 0.0)) throw std::invalid_argument("barenblatt: t must be > 0");
        const double inner = c - kappa * x * x * std::pow(t, -2.0 * beta);
        if (inner <= 0.0) return 0.0;
        return std::pow(t, -alpha) * std::pow(inner, 1.0 / gamma);
    }

    double support_radius(double t) const { return std::sqrt(c / kappa) * std::pow(t, beta); }
};

inline double barenblatt(double x, double t, double gamma, double mass) { return Barenblatt(gamma, mass)(x, t); }

/// Largest |x| over cell centres with p > threshold.
inline double support_radius(const DensityField1D& f, double threshold) {
    if (!(threshold > 0.0)) throw std::invalid_argument("support_radius: threshold must be > 0");
    if (std::all_of(f.p.begin(), f.p.end(), [](double v) { return v == 0.0; })) {
        throw std::invalid_argument("support_radius: field is identically zero");
    }
    double r = 0.0;
    bool found = false;
    for (std::size_t i = 0; i < f.p.size(); ++i) {
        if (f.p[i] > threshold) {
            r = std::max(r, std::abs(f.grid.center(i)));
            found = true;
        }
    }
    if (!found) throw std::invalid_argument("support_radius: no cell exceeds the threshold");
    return r;
}

/// Least-squares slope of log R against log t.
inline double fit_growth_exponent(std::span<const double> times, std::span<const double> radii) {
    if (times.size() != radii.size()) throw std::invalid_argument("fit_growth_exponent: length mismatch");
    if (times.size() < 10) throw std::invalid_argument("fit_growth_exponent: need at least 10 time points");
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (!(radii[i] > 0.0)) throw std::invalid_argument("fit_growth_exponent: radii must be positive");
        if (!(times[i] > 0.0)) throw std::invalid_argument("fit_growth_exponent: times must be positive");
    }
    const auto [tmin, tmax] = std::minmax_element(times.begin(), times.end());
    if (*tmax < 10.0 * *tmin) throw std::invalid_argument("fit_growth_exponent: times must span at least one decade");
    const double n = static_cast<double>(times.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        mx += std::log(times[i]);
        my += std::log(radii[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double dx = std::log(times[i]) - mx;
        sxy += dx * (std::log(radii[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

struct GrowthFit {
    std::vector<double> times;
    std::vector<double> radii;
    double beta_hat = 0.0;
    double mass_drift = 0.0;  // relative
};

/// Evolves pure porous-medium diffusion (D = 1, V = 0) from a Barenblatt profile
/// at t0 and fits the support growth exponent over log-spaced times in [t_first, t_last].
inline GrowthFit barenblatt_growth_fit(double gamma, const Grid1D& grid, double t0 = 0.02, double t_first = 0.05,
                                       double t_last = 5.0, std::size_t n_times = 20, double rel_threshold = 1e-8) {
    const Barenblatt profile(gamma, 1.0);
    DensityField1D f = DensityField1D::sample(grid, [&](double x) { return profile(x, t0); }, t0);
    PmeSpec spec;
    spec.gamma = gamma;
    spec.diffusion = 1.0;
    GrowthFit fit;
    const double m0 = f.mass();
    for (std::size_t i = 0; i < n_times; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(n_times - 1);
        fit.times.push_back(t_first * std::pow(t_last / t_first, frac));
    }
    for (double t : fit.times) {
        f = evolve(std::move(f), spec, t);
        const double pmax = *std::max_element(f.p.begin(), f.p.end());
        fit.radii.push_back(support_radius(f, rel_threshold * pmax));
    }
    fit.beta_hat = fit_growth_exponent(fit.times, fit.radii);
    fit.mass_drift = std::abs(f.mass() - m0) / m0;
    return fit;
}

struct DoubleWellRun {
    double gamma = 0.0;
    std::vector<DensityField1D> snapshots;
    std::vector<double> barrier_mass;  // mass in |x| < barrier_half_width per snapshot
    double initial_mass = 0.0;
    double max_mass_drift = 0.0;       // relative, over snapshots
    double min_barrier_density = 0.0;  // over snapshots with t > 0, cells in the barrier
};

struct DoubleWellSpec {
    double diffusion = 0.25;
    double t_end = 2.0;
    Grid1D grid{-6.0, 6.0, 1024};
    std::size_t n_snapshots = 20;
    double barrier_half_width = 0.3;
};

/// Standard normal initial density relaxed under the double-well potential for gamma in `gammas`.
inline std::vector<DoubleWellRun> double_well_demo(const DoubleWellSpec& spec, std::span<const double> gammas) {
    std::vector<DoubleWellRun> runs;
    for (double gamma : gammas) {
        PmeSpec pme;
        pme.gamma = gamma;
        pme.diffusion = spec.diffusion;
        pme.potential = Potential::double_well();
        pme.t_end = spec.t_end;
        DensityField1D f = DensityField1D::sample(
            spec.grid, [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); });
        DoubleWellRun run;
        run.gamma = gamma;
        run.initial_mass = f.mass();
        run.min_barrier_density = std::numeric_limits<double>::infinity();
        std::vector<double> times;
        for (std::size_t i = 1; i <= spec.n_snapshots; ++i)
            times.push_back(spec.t_end * static_cast<double>(i) / static_cast<double>(spec.n_snapshots));
        run.snapshots.push_back(f);
        run.barrier_mass.push_back(f.mass_within(spec.barrier_half_width));
        for (double t : times) {
            f = evolve(std::move(f), pme, t);
            run.snapshots.push_back(f);
            run.barrier_mass.push_back(f.mass_within(spec.barrier_half_width));
            run.max_mass_drift = std::max(run.max_mass_drift, std::abs(f.mass() - run.initial_mass) / run.initial_mass);
            for (std::size_t i = 0; i < f.p.size(); ++i)
                if (std::abs(f.grid.center(i)) < spec.barrier_half_width)
                    run.min_barrier_density = std::min(run.min_barrier_density, f.p[i]);
        }
        runs.push_back(std::move(run));
    }
    return runs;
}

}  // namespace gfm
