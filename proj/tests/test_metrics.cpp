#include <gtest/gtest.h>

#include <cmath>

#include "gammafm/metrics.hpp"

using gfm::Matrix;

namespace {

Matrix gaussian(std::size_t n, std::size_t d, double mean, gfm::SeededRng& rng) {
    Matrix m(n, d);
    for (double& v : m.data) v = mean + rng.normal();
    return m;
}

/// Direct double-sum U-statistic, written independently of the library.
double brute_mmd2(const Matrix& x, const Matrix& y, double bw) {
    auto k = [&](std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::exp(-s / (2.0 * bw * bw));
    };
    const double n = static_cast<double>(x.rows), m = static_cast<double>(y.rows);
    double xx = 0.0, yy = 0.0, xy = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.rows; ++j)
            if (i != j) xx += k(x.row(i), x.row(j));
    for (std::size_t i = 0; i < y.rows; ++i)
        for (std::size_t j = 0; j < y.rows; ++j)
            if (i != j) yy += k(y.row(i), y.row(j));
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < y.rows; ++j) xy += k(x.row(i), y.row(j));
    return xx / (n * (n - 1)) + yy / (m * (m - 1)) - 2.0 * xy / (n * m);
}

gfm::VectorFieldModel linear_field(const Matrix& a) {
    const std::size_t d = a.rows;
    gfm::VectorFieldModel m({d + 1, d});
    auto w = m.weight(0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a(i, j);
    return m;
}

const std::vector<double> kTableGammas{0.0, 0.2, 0.5, 1.0, 2.0, 4.0};
const std::vector<double> kTableMmd{0.0481, 0.0490, 0.0299, 0.0126, 0.0466, 0.0485};
const std::vector<double> kTableSmooth{22.42, 28.72, 26.72, 14.46, 24.21, 22.82};

}  // namespace

TEST(RbfMmd2, MatchesBruteForceOracle) {
    gfm::SeededRng rng(1);
    for (std::size_t n : {2u, 5u, 10u, 20u}) {
        const Matrix x = gaussian(n, 3, 0.0, rng);
        const Matrix y = gaussian(n + 3, 3, 0.5, rng);
        const auto r = gfm::rbf_mmd2_detailed(x, y);
        EXPECT_NEAR(r.value, brute_mmd2(x, y, r.bandwidth), 1e-12) << "n=" << n;
    }
}

TEST(RbfMmd2, IdenticalSetsAreNonPositive) {
    gfm::SeededRng rng(2);
    const Matrix x = gaussian(10, 2, 0.0, rng);
    const auto r = gfm::rbf_mmd2_detailed(x, x);
    EXPECT_LE(r.value, 1e-12);
    EXPECT_NEAR(r.value, brute_mmd2(x, x, r.bandwidth), 1e-12);
}

TEST(RbfMmd2, MedianHeuristicUsesPooledSample) {
    const Matrix x = Matrix::from_rows({{0}, {1}});
    const Matrix y = Matrix::from_rows({{3}, {7}});
    // Pooled distances {1, 3, 7, 2, 6, 4}: lower-middle median 3.
    EXPECT_EQ(gfm::median_heuristic_bandwidth(x, y), 3.0);
}

TEST(RbfMmd2, SeparatedDistributionsAreLarge) {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        gfm::SeededRng rng(seed);
        EXPECT_GT(gfm::rbf_mmd2(gaussian(500, 1, 0.0, rng), gaussian(500, 1, 5.0, rng)), 0.5);
    }
}

TEST(RbfMmd2, NullCaseIsSmall) {
    for (std::uint64_t seed : {6u, 7u, 8u}) {
        gfm::SeededRng rng(seed);
        EXPECT_LT(std::abs(gfm::rbf_mmd2(gaussian(500, 2, 0.0, rng), gaussian(500, 2, 0.0, rng))), 0.01);
    }
}

TEST(RbfMmd2, SymmetricAndRigidMotionInvariant) {
    gfm::SeededRng rng(9);
    const Matrix x = gaussian(40, 2, 0.0, rng);
    const Matrix y = gaussian(30, 2, 1.0, rng);
    const double a = gfm::rbf_mmd2(x, y);
    EXPECT_NEAR(gfm::rbf_mmd2(y, x), a, 1e-14);
    const double c = std::cos(1.1), s = std::sin(1.1);
    auto move = [&](const Matrix& m) {
        Matrix o(m.rows, 2);
        for (std::size_t i = 0; i < m.rows; ++i) {
            o(i, 0) = c * m(i, 0) - s * m(i, 1) + 10.0;
            o(i, 1) = s * m(i, 0) + c * m(i, 1) - 4.0;
        }
        return o;
    };
    EXPECT_NEAR(gfm::rbf_mmd2(move(x), move(y)), a, 1e-12);
}

TEST(RbfMmd2, RejectsTinySamples) {
    EXPECT_THROW(gfm::rbf_mmd2(Matrix(1, 2, 0.0), Matrix(5, 2, 0.0)), std::invalid_argument);
}

TEST(Smoothness, ZeroFieldIsZero) {
    gfm::SeededRng rng(10);
    gfm::VectorFieldModel m = gfm::VectorFieldModel::mlp(3, 8, 2);
    m.initialize(rng, 0.0);
    EXPECT_EQ(gfm::smoothness(m, 100, rng), 0.0);
}

TEST(Smoothness, LinearFieldGivesFrobeniusNormSquared) {
    const Matrix a = Matrix::from_rows({{1.0, -2.0, 0.5}, {0.0, 3.0, 1.0}, {4.0, 0.25, -1.0}});
    double fro2 = 0.0;
    for (double v : a.data) fro2 += v * v;
    const auto m = linear_field(a);
    for (std::size_t probes : {100u, 257u}) {
        gfm::SeededRng rng(probes);
        EXPECT_NEAR(gfm::smoothness(m, probes, rng), fro2, 1e-6 * fro2);
        const std::vector<double> single{0.3};
        EXPECT_NEAR(gfm::smoothness(m, probes, single, rng), fro2, 1e-6 * fro2);
    }
}

TEST(VelocityNormMap, ZeroFieldAndRadialField) {
    gfm::SliceGrid grid;
    grid.resolution = 17;
    gfm::VectorFieldModel zero({4, 3});
    for (double v : gfm::velocity_norm_map(zero, grid, 0.5).data) EXPECT_EQ(v, 0.0);

    // v(x) = x restricted to the slice: norm equals the slice radius.
    const auto radial = linear_field(Matrix::identity(3));
    const Matrix map = gfm::velocity_norm_map(radial, grid, 0.5);
    for (std::size_t r = 0; r < 17; ++r)
        for (std::size_t c = 0; c < 17; ++c) EXPECT_NEAR(map(r, c), std::hypot(grid.coord(c), grid.coord(r)), 1e-14);
}

TEST(VelocityNormMap, RejectsCoarseGrid) {
    gfm::SliceGrid grid;
    grid.resolution = 8;
    EXPECT_THROW(gfm::velocity_norm_map(gfm::VectorFieldModel({3, 2}), grid, 0.0), std::invalid_argument);
}

TEST(RadialBandMean, RadialFieldBandAverage) {
    gfm::SliceGrid grid;
    grid.resolution = 65;
    const auto radial = linear_field(Matrix::identity(2));
    const Matrix map = gfm::velocity_norm_map(radial, grid, 0.0);
    const double m = gfm::radial_band_mean(map, grid, 0.9, 1.1);
    EXPECT_GT(m, 0.9);
    EXPECT_LT(m, 1.1);
}

TEST(Gsc, TableValuesSelectUnitGamma) {
    const auto r = gfm::gsc(kTableGammas, kTableMmd, kTableSmooth, 1.0);
    EXPECT_EQ(r.best_gamma, 1.0);
    EXPECT_EQ(r.argmin, 3u);
    // The selected entry is the minimum of both terms.
    EXPECT_EQ(r.gsc[3], 0.0);
    for (std::size_t i = 0; i < r.gsc.size(); ++i) {
        EXPECT_DOUBLE_EQ(r.gsc[i], r.normalized_bias[i] + r.normalized_penalty[i]);
        EXPECT_GE(r.normalized_bias[i], 0.0);
        EXPECT_LE(r.normalized_bias[i], 1.0);
    }
}

TEST(Gsc, ConstantMmdLetsSmoothnessDecide) {
    const std::vector<double> flat(6, 0.04);
    const auto r = gfm::gsc(kTableGammas, flat, kTableSmooth, 1.0);
    EXPECT_TRUE(r.bias_degenerate);
    EXPECT_FALSE(r.penalty_degenerate);
    for (double b : r.normalized_bias) EXPECT_EQ(b, 0.0);
    EXPECT_EQ(r.best_gamma, 1.0);
}

TEST(Gsc, ZeroLambdaIsMmdArgmin) {
    const std::vector<double> mmd{0.03, 0.01, 0.02, 0.05};
    const std::vector<double> smooth{1.0, 9.0, 2.0, 0.5};
    const auto r = gfm::gsc(std::vector<double>{0, 0.5, 1, 2}, mmd, smooth, 0.0);
    EXPECT_EQ(r.best_gamma, 0.5);
}

TEST(Gsc, TiesGoToSmallerGamma) {
    const auto r = gfm::gsc(std::vector<double>{0.0, 1.0, 2.0}, std::vector<double>{1.0, 0.0, 0.0},
                            std::vector<double>{1.0, 0.0, 0.0}, 1.0);
    EXPECT_EQ(r.best_gamma, 1.0);
}

TEST(Gsc, ArgminInvariantToAffineRescaling) {
    const auto base = gfm::gsc(kTableGammas, kTableMmd, kTableSmooth, 1.0);
    for (double scale : {0.001, 3.0, 250.0}) {
        for (double shift : {-5.0, 0.0, 17.0}) {
            std::vector<double> m = kTableMmd, s = kTableSmooth;
            for (double& v : m) v = scale * v + shift;
            EXPECT_EQ(gfm::gsc(kTableGammas, m, kTableSmooth, 1.0).argmin, base.argmin);
            for (double& v : s) v = scale * v + shift;
            EXPECT_EQ(gfm::gsc(kTableGammas, kTableMmd, s, 1.0).argmin, base.argmin);
        }
    }
}

TEST(Gsc, RejectsMisalignedArrays) {
    EXPECT_THROW(gfm::gsc(std::vector<double>{0, 1}, std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}),
                 std::invalid_argument);
    EXPECT_THROW(gfm::gsc(std::vector<double>{0}, std::vector<double>{1}, std::vector<double>{1}), std::invalid_argument);
}
