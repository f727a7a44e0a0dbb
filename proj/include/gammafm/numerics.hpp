#pragma once

// Shared numerical kernels: dense row-major matrices, pairwise distances,
// medians, a cyclic Jacobi eigensolver and a portable seeded RNG.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gfm {

/// Raised when a computation produces or receives non-finite values, or an
/// iterative method fails to converge. Distinct from std::invalid_argument,
/// which signals a contract violation by the caller.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != rows * cols) {
            throw std::invalid_argument("Matrix: data length does not match rows*cols");
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix from_rows(const std::vector<std::vector<double>>& rows_in) {
        Matrix m;
        m.rows = rows_in.size();
        m.cols = rows_in.empty() ? 0 : rows_in.front().size();
        m.data.reserve(m.rows * m.cols);
        for (const auto& r : rows_in) {
            if (r.size() != m.cols) throw std::invalid_argument("Matrix::from_rows: ragged rows");
            m.data.insert(m.data.end(), r.begin(), r.end());
        }
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool empty() const { return data.empty(); }
    bool operator==(const Matrix&) const = default;
};

inline double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
    return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

/// Seeded generator with platform-independent uniform and normal draws.
/// The engine is mt19937_64; the transforms are implemented here rather than
/// through <random> distributions, whose output is implementation-defined.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("SeededRng::index: empty range");
        // Lemire-style rejection keeps the draw unbiased.
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    /// Standard normal via the Marsaglia polar method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Euclidean distance matrix between the rows of `points`.
inline Matrix pairwise_distances(const Matrix& points) {
    if (points.rows == 0 || points.cols == 0) {
        throw std::invalid_argument("pairwise_distances: need N >= 1 and D >= 1");
    }
    for (std::size_t i = 0; i < points.rows; ++i) {
        if (!all_finite(points.row(i))) {
            throw NumericalError("pairwise_distances: non-finite entry in row " + std::to_string(i));
        }
    }
    const std::size_t n = points.rows;
    const std::size_t d = points.cols;
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = points.data.data() + i * d;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double* xj = points.data.data() + j * d;
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = xi[c] - xj[c];
                s += diff * diff;
            }
            const double dist = std::sqrt(s);
            out(i, j) = dist;
            out(j, i) = dist;
        }
    }
    return out;
}

/// Median with the lower-middle convention for even lengths, so the result is
/// always an element of the input.
inline double median(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("median: empty input");
    std::vector<double> v(values.begin(), values.end());
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

struct EigenResult {
    std::vector<double> values;  // ascending
    Matrix vectors;              // columns are orthonormal eigenvectors
    int sweeps = 0;
};

struct JacobiOptions {
    double tolerance = 1e-12;  // on off-diagonal Frobenius norm, relative to ||A||_F
    int max_sweeps = 100;
};

/// Dense symmetric eigendecomposition by cyclic Jacobi rotations.
inline EigenResult eigen_symmetric(const Matrix& a_in, JacobiOptions opts = {}) {
    if (a_in.rows != a_in.cols) throw std::invalid_argument("eigen_symmetric: matrix is not square");
    const std::size_t n = a_in.rows;
    if (!all_finite(a_in.data)) throw NumericalError("eigen_symmetric: non-finite entry");
    const double scale = frobenius_norm(a_in);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(a_in(i, j) - a_in(j, i)) > 1e-12 * std::max(scale, 1e-300)) {
                std::ostringstream msg;
                msg << "eigen_symmetric: asymmetric input at (" << i << "," << j << ")";
                throw std::invalid_argument(msg.str());
            }
        }

    Matrix a = a_in;
    // Symmetrize exactly so rotations act on a truly symmetric matrix.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double m = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = m;
            a(j, i) = m;
        }
    Matrix v = Matrix::identity(n);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    const double threshold = opts.tolerance * scale;
    int sweep = 0;
    double off = off_norm();
    while (off > threshold) {
        if (sweep >= opts.max_sweeps) {
            std::ostringstream msg;
            msg << "eigen_symmetric: no convergence after " << sweep << " sweeps, off-diagonal norm " << off;
            throw NumericalError(msg.str());
        }
        ++sweep;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double app = a(p, p);
                const double aqq = a(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
        off = off_norm();
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    EigenResult result;
    result.sweeps = sweep;
    result.values.resize(n);
    result.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        result.values[k] = a(src, src);
        for (std::size_t i = 0; i < n; ++i) result.vectors(i, k) = v(i, src);
    }
    return result;
}

}  // namespace gfm
