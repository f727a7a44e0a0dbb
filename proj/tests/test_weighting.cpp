#include <gtest/gtest.h>

#include <cmath>

#include "gammafm/weighting.hpp"

using gfm::Matrix;

namespace {

Matrix random_points(std::size_t n, std::size_t d, gfm::SeededRng& rng) {
    Matrix m(n, d);
    for (double& v : m.data) v = rng.normal();
    return m;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

gfm::WeightedBatchView weigh(const Matrix& pts, double gamma, std::size_t k) {
    gfm::WeightSpec spec;
    spec.gamma = gamma;
    spec.k = k;
    return gfm::compute_weights(gfm::knn_mean_distances(pts, k), spec);
}

}  // namespace

TEST(KnnMeanDistances, OneNeighbourHandExample) {
    const auto d = gfm::knn_mean_distances(Matrix::from_rows({{0}, {1}, {10}}), 1);
    EXPECT_EQ(d, (std::vector<double>{1, 1, 9}));
}

TEST(KnnMeanDistances, TwoNeighbourHandExample) {
    const auto d = gfm::knn_mean_distances(Matrix::from_rows({{0}, {1}, {10}}), 2);
    EXPECT_EQ(d, (std::vector<double>{5.5, 5.0, 9.5}));
}

TEST(KnnMeanDistances, CoincidentPointsGiveZero) {
    const auto d = gfm::knn_mean_distances(Matrix(6, 3, 1.25), 3);
    for (double v : d) EXPECT_EQ(v, 0.0);
}

TEST(KnnMeanDistances, KAtLeastNThrows) {
    EXPECT_THROW(gfm::knn_mean_distances(Matrix(3, 1, 0.0), 3), std::invalid_argument);
}

TEST(KnnMeanDistances, AgreesWithFullSort) {
    gfm::SeededRng rng(4);
    const Matrix p = random_points(50, 3, rng);
    const Matrix dist = gfm::pairwise_distances(p);
    const auto d = gfm::knn_mean_distances(p, 7);
    for (std::size_t i = 0; i < p.rows; ++i) {
        std::vector<double> row;
        for (std::size_t j = 0; j < p.rows; ++j)
            if (j != i) row.push_back(dist(i, j));
        std::sort(row.begin(), row.end());
        double s = 0.0;
        for (int m = 0; m < 7; ++m) s += row[m];
        EXPECT_NEAR(d[i], s / 7.0, 1e-15 * s);
    }
}

TEST(ComputeWeights, GammaZeroIsExactlyOne) {
    gfm::WeightSpec spec;
    const auto v = gfm::compute_weights(std::vector<double>{0.3, 4.0, 9.0, 0.0}, spec);
    for (double w : v.weights) EXPECT_EQ(w, 1.0);
}

TEST(ComputeWeights, HandExponentials) {
    gfm::WeightSpec spec;
    spec.gamma = 1.0;
    const auto v = gfm::compute_weights(std::vector<double>{1, 1, 9}, spec);
    EXPECT_EQ(v.sigma, 1.0);
    // raw = [e^-1, e^-1, e^-9]; mean-one normalization.
    const double m = (2 * std::exp(-1.0) + std::exp(-9.0)) / 3.0;
    EXPECT_NEAR(v.weights[0], std::exp(-1.0) / m, 1e-14);
    EXPECT_NEAR(v.weights[2], std::exp(-9.0) / m, 1e-16);
    // 3 / (2 + e^-8) = 1.49975
    EXPECT_NEAR(v.weights[0], 1.49975, 1e-5);
    EXPECT_NEAR(v.weights[1], 1.49975, 1e-5);
    EXPECT_NEAR(v.weights[2], 0.000503, 1e-6);
    EXPECT_NEAR(v.raw[0], std::exp(-1.0), 1e-16);
}

TEST(ComputeWeights, EqualDistancesGiveExactOnes) {
    for (double gamma : {0.5, 1.0, 7.0}) {
        gfm::WeightSpec spec;
        spec.gamma = gamma;
        const auto v = gfm::compute_weights(std::vector<double>(9, 2.5), spec);
        for (double w : v.weights) EXPECT_EQ(w, 1.0);
    }
}

TEST(ComputeWeights, DegenerateBatchFallsBackToUniform) {
    gfm::WeightSpec spec;
    spec.gamma = 1.0;
    const auto v = gfm::compute_weights(std::vector<double>{0, 0, 0, 5}, spec);
    EXPECT_TRUE(v.degenerate);
    for (double w : v.weights) EXPECT_EQ(w, 1.0);
}

TEST(ComputeWeights, NoUnderflowForLargeGamma) {
    gfm::WeightSpec spec;
    spec.gamma = 2000.0;
    const auto v = gfm::compute_weights(std::vector<double>{1.0, 1.0, 2.0, 3.0}, spec);
    EXPECT_NEAR(mean(v.weights), 1.0, 1e-12);
    for (double w : v.weights) EXPECT_TRUE(std::isfinite(w));
}

TEST(ComputeWeights, RejectsNegativeDistances) {
    EXPECT_THROW(gfm::compute_weights(std::vector<double>{1.0, -0.1}, gfm::WeightSpec{}), std::invalid_argument);
}

TEST(WeightProperties, MeanOneAndPositive) {
    gfm::SeededRng rng(10);
    for (int trial = 0; trial < 30; ++trial) {
        const Matrix p = random_points(64, 2 + trial % 5, rng);
        const auto v = weigh(p, 0.25 * trial, 5);
        EXPECT_NEAR(mean(v.weights), 1.0, 1e-12);
        for (double w : v.weights) EXPECT_GT(w, 0.0);
        for (double d : v.dbar) EXPECT_GE(d, 0.0);
    }
}

TEST(WeightProperties, RawWeightsStrictlyDecreasingInDistance) {
    gfm::SeededRng rng(11);
    const auto v = weigh(random_points(80, 3, rng), 1.0, 10);
    for (std::size_t i = 0; i < v.dbar.size(); ++i)
        for (std::size_t j = 0; j < v.dbar.size(); ++j)
            if (v.dbar[i] < v.dbar[j]) {
                EXPECT_GT(v.raw[i], v.raw[j]);
            }
}

TEST(WeightProperties, PermutationEquivariance) {
    gfm::SeededRng rng(12);
    const Matrix p = random_points(40, 4, rng);
    std::vector<std::size_t> perm(40);
    for (std::size_t i = 0; i < 40; ++i) perm[i] = (7 * i + 3) % 40;
    Matrix q(40, 4);
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = 0; j < 4; ++j) q(i, j) = p(perm[i], j);
    const auto a = weigh(p, 1.0, 6);
    const auto b = weigh(q, 1.0, 6);
    for (std::size_t i = 0; i < 40; ++i) {
        EXPECT_DOUBLE_EQ(b.dbar[i], a.dbar[perm[i]]);
        EXPECT_NEAR(b.weights[i], a.weights[perm[i]], 1e-14);
    }
}

TEST(WeightProperties, TranslationAndRotationInvariance) {
    gfm::SeededRng rng(13);
    const Matrix p = random_points(50, 2, rng);
    const double c = std::cos(0.7), s = std::sin(0.7);
    Matrix q(50, 2);
    for (std::size_t i = 0; i < 50; ++i) {
        q(i, 0) = c * p(i, 0) - s * p(i, 1) + 3.0;
        q(i, 1) = s * p(i, 0) + c * p(i, 1) - 1.5;
    }
    const auto a = weigh(p, 1.0, 5);
    const auto b = weigh(q, 1.0, 5);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(a.weights[i], b.weights[i], 1e-10);
}

TEST(WeightProperties, ScaleCovariance) {
    gfm::SeededRng rng(14);
    const Matrix p = random_points(30, 3, rng);
    Matrix q = p;
    for (double& v : q.data) v *= 4.0;  // power of two: distances scale exactly
    const auto a = weigh(p, 1.0, 4);
    const auto b = weigh(q, 1.0, 4);
    EXPECT_EQ(b.sigma, 4.0 * a.sigma);
    for (std::size_t i = 0; i < 30; ++i) {
        EXPECT_EQ(b.dbar[i], 4.0 * a.dbar[i]);
        EXPECT_EQ(b.weights[i], a.weights[i]);
    }
    Matrix r = p;
    for (double& v : r.data) v *= 2.7;
    const auto c = weigh(r, 1.0, 4);
    EXPECT_NEAR(c.sigma, 2.7 * a.sigma, 1e-12);
    for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(c.weights[i], a.weights[i], 1e-12);
}

TEST(WeightProperties, SmallGammaApproachesOnes) {
    gfm::SeededRng rng(15);
    const auto v = weigh(random_points(64, 3, rng), 1e-8, 10);
    double sup = 0.0;
    for (double w : v.weights) sup = std::max(sup, std::abs(w - 1.0));
    EXPECT_LT(sup, 1e-7);
    EXPECT_GT(sup, 0.0);
}

TEST(EffectiveSampleFraction, OnesGiveOneAndSpreadLowersIt) {
    EXPECT_EQ(gfm::effective_sample_fraction(std::vector<double>(8, 1.0)), 1.0);
    const double f = gfm::effective_sample_fraction(std::vector<double>{2.0, 0.0, 1.0, 1.0});
    EXPECT_DOUBLE_EQ(f, 16.0 / (4.0 * 6.0));
}
