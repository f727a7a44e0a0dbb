#pragma once

// Fixed-step explicit integrators for dx/dt = v(x, t) on t in [0, 1].

#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"
#include "numerics.hpp"

namespace gfm {

enum class SolverMethod { euler, midpoint, rk4 };

inline int stages(SolverMethod m) {
    switch (m) {
        case SolverMethod::euler: return 1;
        case SolverMethod::midpoint: return 2;
        case SolverMethod::rk4: return 4;
    }
    return 0;
}

inline std::string to_string(SolverMethod m) {
    switch (m) {
        case SolverMethod::euler: return "euler";
        case SolverMethod::midpoint: return "midpoint";
        case SolverMethod::rk4: return "rk4";
    }
    return "?";
}

inline SolverMethod parse_solver_method(const std::string& s) {
    if (s == "euler") return SolverMethod::euler;
    if (s == "midpoint") return SolverMethod::midpoint;
    if (s == "rk4") return SolverMethod::rk4;
    throw std::invalid_argument("unknown solver method '" + s + "' (expected euler, midpoint or rk4)");
}

struct SolveSpec {
    SolverMethod method = SolverMethod::euler;
    std::size_t steps = 32;
    double t0 = 0.0;
    double t1 = 1.0;
    bool keep_trajectory = false;
};

struct SolveReport {
    Matrix samples;
    std::size_t nfe = 0;  // evaluations per point: steps * stages(method)
    std::vector<Matrix> trajectory;
};

/// Batched field: rows of x evaluated at a shared time.
using FieldFn = std::function<Matrix(const Matrix& x, double t)>;

namespace detail {
inline void axpy(Matrix& y, double a, const Matrix& x) {
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * x.data[i];
}
inline Matrix shifted(const Matrix& x, double a, const Matrix& k) {
    Matrix y = x;
    axpy(y, a, k);
    return y;
}
}  // namespace detail

inline SolveReport integrate(const FieldFn& field, const Matrix& x0, const SolveSpec& spec) {
    if (spec.steps < 1) throw std::invalid_argument("integrate: steps must be >= 1");
    const double h = (spec.t1 - spec.t0) / static_cast<double>(spec.steps);
    SolveReport rep;
    Matrix x = x0;
    if (spec.keep_trajectory) rep.trajectory.push_back(x);
    for (std::size_t n = 0; n < spec.steps; ++n) {
        const double t = spec.t0 + static_cast<double>(n) * h;
        switch (spec.method) {
            case SolverMethod::euler: {
                const Matrix k1 = field(x, t);
                detail::axpy(x, h, k1);
                break;
            }
            case SolverMethod::midpoint: {
                const Matrix k1 = field(x, t);
                const Matrix k2 = field(detail::shifted(x, 0.5 * h, k1), t + 0.5 * h);
                detail::axpy(x, h, k2);
                break;
            }
            case SolverMethod::rk4: {
                const Matrix k1 = field(x, t);
                const Matrix k2 = field(detail::shifted(x, 0.5 * h, k1), t + 0.5 * h);
                const Matrix k3 = field(detail::shifted(x, 0.5 * h, k2), t + 0.5 * h);
                const Matrix k4 = field(detail::shifted(x, h, k3), t + h);
                for (std::size_t i = 0; i < x.data.size(); ++i) {
                    x.data[i] += h / 6.0 * (k1.data[i] + 2.0 * k2.data[i] + 2.0 * k3.data[i] + k4.data[i]);
                }
                break;
            }
        }
        rep.nfe += static_cast<std::size_t>(stages(spec.method));
        if (!all_finite(x.data)) throw NumericalError("integrate: non-finite state after step " + std::to_string(n));
        if (spec.keep_trajectory) rep.trajectory.push_back(x);
    }
    rep.samples = std::move(x);
    return rep;
}

inline SolveReport integrate(const VectorFieldModel& model, const Matrix& x0, const SolveSpec& spec) {
    if (x0.cols != model.data_dim()) throw std::invalid_argument("integrate: dimension mismatch");
    return integrate([&](const Matrix& x, double t) { return model.forward_batch(x, t); }, x0, spec);
}

/// Empirical convergence order on dx/dt = x, x(0) = 1 (exact endpoint e):
/// least-squares slope of log error against log step count.
inline double order_check(SolverMethod method, std::vector<std::size_t> step_grid = {}) {
    if (step_grid.empty()) {
        // rk4 reaches round-off quickly; keep its grid coarse.
        step_grid = method == SolverMethod::rk4 ? std::vector<std::size_t>{4, 8, 16, 32}
                                                : std::vector<std::size_t>{16, 32, 64, 128, 256};
    }
    FieldFn linear = [](const Matrix& x, double) { return x; };
    Matrix x0(1, 1, 1.0);
    std::vector<double> lx, ly;
    for (std::size_t n : step_grid) {
        const SolveReport r = integrate(linear, x0, SolveSpec{method, n});
        const double err = std::abs(r.samples(0, 0) - std::numbers::e);
        lx.push_back(std::log(static_cast<double>(n)));
        ly.push_back(std::log(err));
    }
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    return -sxy / sxx;
}

}  // namespace gfm
