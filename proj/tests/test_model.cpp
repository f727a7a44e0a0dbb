#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gammafm/model.hpp"

using gfm::Matrix;
using gfm::VectorFieldModel;

namespace {

struct OwnedBatch {
    Matrix xt;
    std::vector<double> t;
    Matrix ut;
    std::vector<double> w;

    gfm::RegressionBatch view() const { return {xt, t, ut, w}; }
};

OwnedBatch random_batch(std::size_t b, std::size_t d, gfm::SeededRng& rng) {
    OwnedBatch batch{Matrix(b, d), std::vector<double>(b), Matrix(b, d), std::vector<double>(b)};
    for (double& v : batch.xt.data) v = rng.normal();
    for (double& v : batch.ut.data) v = rng.normal();
    for (double& v : batch.t) v = rng.uniform();
    for (double& v : batch.w) v = rng.uniform(0.1, 2.0);
    return batch;
}

/// Linear field v(x, t) = A x with no time dependence.
VectorFieldModel linear_field(const Matrix& a) {
    const std::size_t d = a.rows;
    VectorFieldModel m({d + 1, d});
    auto w = m.weight(0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a(i, j);
    return m;
}

}  // namespace

TEST(Forward, ZeroOutputLayerGivesZeroField) {
    gfm::SeededRng rng(1);
    VectorFieldModel m = VectorFieldModel::mlp(3, 16, 2);
    m.initialize(rng, 0.0);
    const auto v = m.forward(std::vector<double>{0.3, -1.0, 2.0}, 0.7);
    for (double c : v) EXPECT_EQ(c, 0.0);
}

TEST(Forward, IdentityConfigurationSelectsX) {
    VectorFieldModel m({3, 2});
    m.weight(0) << 1, 0, 0, 0, 1, 0;
    const auto v = m.forward(std::vector<double>{1, 2}, 0.5);
    EXPECT_EQ(v, (std::vector<double>{1, 2}));
}

TEST(Forward, DeterministicForFixedSeed) {
    gfm::SeededRng r1(5), r2(5);
    VectorFieldModel a = VectorFieldModel::mlp(4), b = VectorFieldModel::mlp(4);
    a.initialize(r1);
    b.initialize(r2);
    const std::vector<double> x{0.1, 0.2, -0.3, 0.4};
    EXPECT_EQ(a.forward(x, 0.3), a.forward(x, 0.3));
    EXPECT_EQ(a.forward(x, 0.3), b.forward(x, 0.3));
}

TEST(Forward, DimensionMismatchThrows) {
    VectorFieldModel m = VectorFieldModel::mlp(3, 8, 1);
    EXPECT_THROW(m.forward(std::vector<double>{1, 2}, 0.0), std::invalid_argument);
}

TEST(Forward, RejectsIncompatibleLayerWidths) {
    EXPECT_THROW(VectorFieldModel({3, 8, 3}), std::invalid_argument);
}

TEST(Initialize, GlorotBoundsAndScaledFinalLayer) {
    gfm::SeededRng rng(2);
    VectorFieldModel m = VectorFieldModel::mlp(20);
    m.initialize(rng);
    const double hidden_limit = std::sqrt(6.0 / (21.0 + 128.0));
    EXPECT_LE(m.weight(0).cwiseAbs().maxCoeff(), hidden_limit);
    EXPECT_GT(m.weight(0).cwiseAbs().maxCoeff(), 0.9 * hidden_limit);
    const double final_limit = 0.01 * std::sqrt(6.0 / (128.0 + 20.0));
    EXPECT_LE(m.weight(3).cwiseAbs().maxCoeff(), final_limit);
    for (std::size_t l = 0; l < m.num_layers(); ++l) EXPECT_EQ(m.bias(l).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LossAndGradient, PerfectFitGivesZero) {
    VectorFieldModel m({3, 2});
    m.weight(0) << 1, 0, 0, 0, 1, 0;
    gfm::SeededRng rng(3);
    OwnedBatch b = random_batch(5, 2, rng);
    b.ut = b.xt;
    const auto lg = gfm::loss_and_gradient(m, b.view());
    EXPECT_EQ(lg.loss, 0.0);
    for (double g : lg.grads.values) EXPECT_EQ(g, 0.0);
}

TEST(LossAndGradient, ZeroWeightsGiveZero) {
    gfm::SeededRng rng(4);
    VectorFieldModel m = VectorFieldModel::mlp(2, 8, 2);
    m.initialize(rng, 1.0);
    OwnedBatch b = random_batch(6, 2, rng);
    std::fill(b.w.begin(), b.w.end(), 0.0);
    const auto lg = gfm::loss_and_gradient(m, b.view());
    EXPECT_EQ(lg.loss, 0.0);
    for (double g : lg.grads.values) EXPECT_EQ(g, 0.0);
}

TEST(LossAndGradient, ScalarLinearHandChainRule) {
    // v(x, t) = theta x with theta = 2; x = 1, u = 1, w = 1, t = 0.5.
    // loss = (2 - 1)^2 = 1; dL/dtheta = 2 (2 - 1) x = 2; dL/d(t-weight) = 2 (2 - 1) t = 1; dL/db = 2.
    VectorFieldModel m({2, 1});
    m.weight(0) << 2, 0;
    OwnedBatch b{Matrix(1, 1, 1.0), {0.5}, Matrix(1, 1, 1.0), {1.0}};
    const auto lg = gfm::loss_and_gradient(m, b.view());
    EXPECT_DOUBLE_EQ(lg.loss, 1.0);
    ASSERT_EQ(lg.grads.size(), 3u);
    EXPECT_DOUBLE_EQ(lg.grads.values[0], 2.0);
    EXPECT_DOUBLE_EQ(lg.grads.values[1], 1.0);
    EXPECT_DOUBLE_EQ(lg.grads.values[2], 2.0);
}

TEST(LossAndGradient, NaNInForwardNamesLayer) {
    gfm::SeededRng rng(5);
    VectorFieldModel m = VectorFieldModel::mlp(2, 4, 2);
    m.initialize(rng, 1.0);
    m.weight(1)(0, 0) = std::numeric_limits<double>::quiet_NaN();
    OwnedBatch b = random_batch(3, 2, rng);
    try {
        gfm::loss_and_gradient(m, b.view());
        FAIL() << "expected NumericalError";
    } catch (const gfm::NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
    }
}

TEST(LossAndGradient, RejectsNegativeWeights) {
    VectorFieldModel m({2, 1});
    OwnedBatch b{Matrix(1, 1, 1.0), {0.5}, Matrix(1, 1, 1.0), {-1.0}};
    EXPECT_THROW(gfm::loss_and_gradient(m, b.view()), std::invalid_argument);
}

TEST(LossAndGradient, InvariantToBatchPermutation) {
    gfm::SeededRng rng(6);
    VectorFieldModel m = VectorFieldModel::mlp(3, 16, 2);
    m.initialize(rng, 1.0);
    const OwnedBatch b = random_batch(9, 3, rng);
    OwnedBatch p = b;
    const std::vector<std::size_t> perm{4, 2, 8, 0, 7, 1, 6, 3, 5};
    for (std::size_t i = 0; i < perm.size(); ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            p.xt(i, j) = b.xt(perm[i], j);
            p.ut(i, j) = b.ut(perm[i], j);
        }
        p.t[i] = b.t[perm[i]];
        p.w[i] = b.w[perm[i]];
    }
    const auto a = gfm::loss_and_gradient(m, b.view());
    const auto c = gfm::loss_and_gradient(m, p.view());
    EXPECT_NEAR(a.loss, c.loss, 1e-14 * a.loss);
    for (std::size_t i = 0; i < a.grads.size(); ++i)
        EXPECT_NEAR(a.grads.values[i], c.grads.values[i], 1e-13 * (1.0 + std::abs(a.grads.values[i])));
}

TEST(LossAndGradient, ScalesLinearlyWithWeights) {
    gfm::SeededRng rng(7);
    VectorFieldModel m = VectorFieldModel::mlp(2, 8, 2);
    m.initialize(rng, 1.0);
    const OwnedBatch b = random_batch(8, 2, rng);
    const auto base = gfm::loss_and_gradient(m, b.view());
    for (double c : {0.25, 3.0, 7.5}) {
        OwnedBatch s = b;
        for (double& w : s.w) w *= c;
        const auto scaled = gfm::loss_and_gradient(m, s.view());
        EXPECT_NEAR(scaled.loss, c * base.loss, 1e-14 * c * base.loss);
        for (std::size_t i = 0; i < base.grads.size(); ++i)
            EXPECT_NEAR(scaled.grads.values[i], c * base.grads.values[i], 1e-13 * c * (1e-3 + std::abs(base.grads.values[i])));
    }
    // Powers of two are exact in floating point.
    OwnedBatch s = b;
    for (double& w : s.w) w *= 4.0;
    const auto exact = gfm::loss_and_gradient(m, s.view());
    EXPECT_EQ(exact.loss, 4.0 * base.loss);
    for (std::size_t i = 0; i < base.grads.size(); ++i) EXPECT_EQ(exact.grads.values[i], 4.0 * base.grads.values[i]);
}

TEST(GradCheck, LinearModel) {
    VectorFieldModel m({2, 1});
    m.weight(0) << 2, 0;
    OwnedBatch b{Matrix(1, 1, 1.0), {0.5}, Matrix(1, 1, 1.0), {1.0}};
    EXPECT_LT(gfm::grad_check(m, b.view(), 1e-5).max_relative_error, 1e-8);
}

TEST(GradCheck, RandomTwoHiddenLayerModelsOverTwentySeeds) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        gfm::SeededRng rng(seed);
        const std::size_t d = 1 + seed % 4;
        VectorFieldModel m = VectorFieldModel::mlp(d, 6 + seed % 5, 2);
        m.initialize(rng, 1.0);
        const OwnedBatch b = random_batch(7, d, rng);
        const auto r = gfm::grad_check(m, b.view(), 1e-5);
        EXPECT_LT(r.max_relative_error, 1e-5) << "seed " << seed << " worst parameter " << r.worst_index;
        EXPECT_EQ(r.checked, m.parameter_count());
    }
}

TEST(GradCheck, ZeroParameterModelIsVacuous) {
    VectorFieldModel m({1, 0});
    ASSERT_EQ(m.parameter_count(), 0u);
    OwnedBatch b{Matrix(2, 0), {0.1, 0.2}, Matrix(2, 0), {1.0, 1.0}};
    const auto r = gfm::grad_check(m, b.view(), 1e-5);
    EXPECT_EQ(r.checked, 0u);
    EXPECT_EQ(r.max_relative_error, 0.0);
}

TEST(GradCheck, RejectsStepOutsideRange) {
    VectorFieldModel m({2, 1});
    OwnedBatch b{Matrix(1, 1, 1.0), {0.5}, Matrix(1, 1, 1.0), {1.0}};
    EXPECT_THROW(gfm::grad_check(m, b.view(), 1e-2), std::invalid_argument);
}

TEST(OptimizerStep, ZeroGradientIsFixedPoint) {
    gfm::SeededRng rng(8);
    VectorFieldModel m = VectorFieldModel::mlp(2, 4, 1);
    m.initialize(rng, 1.0);
    const VectorFieldModel before = m;
    gfm::OptimizerState st;
    gfm::optimizer_step(m, m.make_gradient(), st);
    EXPECT_TRUE(m == before);
    EXPECT_EQ(st.step, 1u);
}

TEST(OptimizerStep, FirstStepClosedForm) {
    // Fresh moments: m = (1-b1) g, v = (1-b2) g^2, bias-corrected to g and g^2,
    // so the step is -lr * g / (|g| + eps).
    VectorFieldModel m({1, 0});
    VectorFieldModel scalar({2, 1});
    gfm::OptimizerState st;
    st.learning_rate = 0.1;
    gfm::GradientBuffer g{{1.0, 0.0, 0.0}};
    gfm::optimizer_step(scalar, g, st);
    EXPECT_DOUBLE_EQ(scalar.parameters()[0], -0.1 / (1.0 + 1e-8));
    EXPECT_NEAR(scalar.parameters()[0], -0.1, 1e-8);
    EXPECT_EQ(scalar.parameters()[1], 0.0);
}

TEST(OptimizerStep, NonFiniteGradientLeavesModelUnchanged) {
    VectorFieldModel m({2, 1});
    m.weight(0) << 1.5, -0.5;
    const VectorFieldModel before = m;
    gfm::OptimizerState st;
    gfm::GradientBuffer g{{1.0, std::numeric_limits<double>::infinity(), 0.0}};
    EXPECT_THROW(gfm::optimizer_step(m, g, st), gfm::NumericalError);
    EXPECT_TRUE(m == before);
    EXPECT_EQ(st.step, 0u);
}

TEST(OptimizerStep, IdenticalSeedsAndGradientsGiveIdenticalTrajectories) {
    auto run = [] {
        gfm::SeededRng rng(21);
        VectorFieldModel m = VectorFieldModel::mlp(2, 8, 2);
        m.initialize(rng);
        gfm::OptimizerState st;
        for (int i = 0; i < 25; ++i) {
            const OwnedBatch b = random_batch(8, 2, rng);
            gfm::optimizer_step(m, gfm::loss_and_gradient(m, b.view()).grads, st);
        }
        return m;
    };
    EXPECT_TRUE(run() == run());
}

TEST(JacobianFd, LinearFieldRecoversMatrix) {
    const Matrix a = Matrix::from_rows({{1.0, -2.0, 0.5}, {0.0, 3.0, 1.0}, {4.0, 0.25, -1.0}});
    const VectorFieldModel m = linear_field(a);
    const std::vector<double> x{0.3, -0.7, 1.1};
    const Matrix j = gfm::jacobian_fd(m, x, 0.4, gfm::jacobian_step(x));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(j(i, k), a(i, k), 1e-6);
}

TEST(JacobianFd, ConstantFieldGivesZero) {
    VectorFieldModel m({3, 2});
    m.bias(0) << 1.5, -2.0;
    const std::vector<double> x{0.2, 0.9};
    const Matrix j = gfm::jacobian_fd(m, x, 0.1, 1e-5);
    for (double v : j.data) EXPECT_EQ(v, 0.0);
}

TEST(JacobianFd, RichardsonSecondOrderOnSmoothModel) {
    gfm::SeededRng rng(13);
    VectorFieldModel m = VectorFieldModel::mlp(3, 16, 2);
    m.initialize(rng, 1.0);
    const std::vector<double> x{0.4, -0.3, 0.8};
    const double h = 2e-3;
    const Matrix j1 = gfm::jacobian_fd(m, x, 0.5, h);
    const Matrix j2 = gfm::jacobian_fd(m, x, 0.5, 2 * h);
    const Matrix j4 = gfm::jacobian_fd(m, x, 0.5, 4 * h);
    double d12 = 0.0, d24 = 0.0;
    for (std::size_t i = 0; i < j1.data.size(); ++i) {
        d12 += std::pow(j2.data[i] - j1.data[i], 2);
        d24 += std::pow(j4.data[i] - j2.data[i], 2);
    }
    // Central differences: error ~ c h^2, so successive differences shrink by 4.
    EXPECT_NEAR(std::sqrt(d24 / d12), 4.0, 0.2);
}

TEST(Checkpoint, BitExactRoundTrip) {
    gfm::SeededRng rng(17);
    VectorFieldModel m = VectorFieldModel::mlp(5, 12, 3);
    m.initialize(rng, 1.0);
    m.parameters()[3] = -0.0;
    m.parameters()[4] = std::numeric_limits<double>::denorm_min();
    const gfm::CheckpointMeta meta{99, 1.5, 10, 400};
    const std::string buf = gfm::serialize_checkpoint(m, meta);
    const auto [back, meta_back] = gfm::deserialize_checkpoint(buf);
    ASSERT_EQ(back.parameter_count(), m.parameter_count());
    EXPECT_EQ(std::memcmp(back.parameters().data(), m.parameters().data(), 8 * m.parameter_count()), 0);
    EXPECT_EQ(back.layer_dims(), m.layer_dims());
    EXPECT_EQ(meta_back.seed, 99u);
    EXPECT_EQ(meta_back.gamma, 1.5);
    EXPECT_EQ(meta_back.k, 10u);
    EXPECT_EQ(meta_back.iteration, 400u);
    EXPECT_EQ(gfm::serialize_checkpoint(back, meta_back), buf);
}

TEST(Checkpoint, PayloadIsLittleEndianFloat64) {
    VectorFieldModel m({2, 1});
    m.weight(0) << 1.0, 0.0;
    const std::string buf = gfm::serialize_checkpoint(m, {});
    const auto nl = buf.find('\n');
    ASSERT_EQ(buf.size() - nl - 1, 24u);
    // 1.0 = 0x3FF0000000000000, least significant byte first.
    const std::string first = buf.substr(nl + 1, 8);
    EXPECT_EQ(static_cast<unsigned char>(first[7]), 0x3Fu);
    EXPECT_EQ(static_cast<unsigned char>(first[6]), 0xF0u);
    EXPECT_EQ(first.substr(0, 6), std::string(6, '\0'));
}

TEST(Checkpoint, TruncatedPayloadIsRejected) {
    VectorFieldModel m({2, 1});
    std::string buf = gfm::serialize_checkpoint(m, {});
    buf.pop_back();
    EXPECT_THROW(gfm::deserialize_checkpoint(buf), std::runtime_error);
}
