#pragma once

// Density-weighted conditional flow matching training loop.
//
// Each iteration: draw data x1, noise x0 ~ N(0, I) and t ~ U[0, 1] independently,
// form the linear interpolant x_t = (1-t) x0 + t x1 with target u_t = x1 - x0,
// weight the batch (gamma > 0) or use unit weights (gamma == 0), and take one
// Adam step on the weighted regression loss.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"
#include "numerics.hpp"
#include "weighting.hpp"

namespace gfm {

struct FlowSample {
    Matrix x0;
    Matrix x1;
    std::vector<double> t;
};

/// One training step's worth of particles.
struct ParticleBatch {
    Matrix x0;
    Matrix x1;
    std::vector<double> t;
    Matrix xt;
    Matrix ut;
    std::vector<double> weights;

    RegressionBatch regression() const { return {xt, t, ut, weights}; }
};

struct SampleOptions {
    std::optional<double> fixed_t;  // use this t for every sample instead of U[0, 1]
    double noise_std = 1.0;         // x0 ~ N(0, noise_std^2 I)
};

/// Independent coupling: rows of x1 drawn with replacement, x0 standard normal, t uniform.
inline FlowSample sample_batch(const Matrix& dataset, std::size_t batch_size, SeededRng& rng,
                               const SampleOptions& opts = {}) {
    if (dataset.rows == 0) throw std::invalid_argument("sample_batch: empty dataset");
    const std::size_t d = dataset.cols;
    FlowSample s{Matrix(batch_size, d), Matrix(batch_size, d), std::vector<double>(batch_size)};
    for (std::size_t i = 0; i < batch_size; ++i) {
        const auto src = dataset.row(rng.index(dataset.rows));
        std::copy(src.begin(), src.end(), s.x1.row(i).begin());
    }
    for (double& v : s.x0.data) v = opts.noise_std * rng.normal();
    for (double& t : s.t) t = opts.fixed_t ? *opts.fixed_t : rng.uniform();
    return s;
}

/// x_t = (1 - t) x0 + t x1 and u_t = x1 - x0, row by row.
inline std::pair<Matrix, Matrix> make_interpolants(const Matrix& x0, const Matrix& x1, std::span<const double> t) {
    if (x0.rows != x1.rows || x0.cols != x1.cols || t.size() != x0.rows) {
        throw std::invalid_argument("make_interpolants: shape mismatch");
    }
    Matrix xt(x0.rows, x0.cols), ut(x0.rows, x0.cols);
    for (std::size_t i = 0; i < x0.rows; ++i) {
        const double ti = t[i];
        for (std::size_t j = 0; j < x0.cols; ++j) {
            const double a = x0(i, j);
            const double b = x1(i, j);
            xt(i, j) = (1.0 - ti) * a + ti * b;
            ut(i, j) = b - a;
        }
    }
    return {std::move(xt), std::move(ut)};
}

/// Weights for a batch of interpolants; all ones when gamma == 0.
inline WeightedBatchView batch_weights(const Matrix& xt, const WeightSpec& spec) {
    if (spec.gamma == 0.0) {
        WeightedBatchView view;
        view.raw.assign(xt.rows, 1.0);
        view.weights.assign(xt.rows, 1.0);
        return view;
    }
    return compute_weights(knn_mean_distances(xt, spec.k), spec);
}

inline ParticleBatch make_particle_batch(const Matrix& dataset, std::size_t batch_size, const WeightSpec& spec,
                                         SeededRng& rng, const SampleOptions& opts = {}) {
    FlowSample s = sample_batch(dataset, batch_size, rng, opts);
    auto [xt, ut] = make_interpolants(s.x0, s.x1, s.t);
    ParticleBatch b{std::move(s.x0), std::move(s.x1), std::move(s.t), std::move(xt), std::move(ut), {}};
    b.weights = batch_weights(b.xt, spec).weights;
    return b;
}

struct TrainConfig {
    std::size_t batch_size = 256;
    std::size_t iterations = 5000;
    WeightSpec weights;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 1000;
    std::size_t hidden_width = 128;
    std::size_t hidden_layers = 3;
    double final_layer_scale = 0.01;
    double divergence_threshold = 1e6;
    std::string dataset_id;
    std::string checkpoint_dir;  // empty: keep checkpoints in memory only

    void validate() const {
        if (batch_size < 4) throw std::invalid_argument("TrainConfig: batch size must be >= 4");
        if (iterations < 1) throw std::invalid_argument("TrainConfig: iterations must be >= 1");
        weights.validate();
        if (weights.gamma > 0.0 && weights.k >= batch_size) throw std::invalid_argument("TrainConfig: k must be < batch size");
        if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
    }
};

struct TrainLog {
    std::vector<double> loss;
    std::vector<double> ess;  // (sum w)^2 / (B sum w^2)
    std::vector<double> ms_per_iter;
};

struct Checkpoint {
    std::uint64_t iteration = 0;
    VectorFieldModel model;
};

struct TrainResult {
    VectorFieldModel model;
    TrainLog log;
    std::vector<Checkpoint> checkpoints;
};

/// Thrown when the loss turns non-finite or exceeds the divergence threshold.
class TrainingDiverged : public NumericalError {
public:
    TrainingDiverged(const std::string& what, std::uint64_t iteration, double loss, Checkpoint last_good, TrainLog log)
        : NumericalError(what), iteration(iteration), loss(loss), last_good(std::move(last_good)), log(std::move(log)) {}
    std::uint64_t iteration;
    double loss;
    Checkpoint last_good;
    TrainLog log;
};

/// Stateful trainer; `train` drives it to completion, the k-NN benchmark times `step`.
class Trainer {
public:
    Trainer(const TrainConfig& config, const Matrix& dataset) : config_(config), dataset_(dataset), rng_(config.seed) {
        config_.validate();
        if (dataset.rows == 0) throw std::invalid_argument("train: empty dataset");
        model_ = VectorFieldModel::mlp(dataset.cols, config_.hidden_width, config_.hidden_layers);
        model_.initialize(rng_, config_.final_layer_scale);
        opt_.learning_rate = config_.learning_rate;
        opt_.beta1 = config_.beta1;
        opt_.beta2 = config_.beta2;
        opt_.epsilon = config_.adam_epsilon;
        last_good_ = Checkpoint{0, model_};
    }

    /// One full iteration. Returns the batch loss.
    double step() {
        const auto start = std::chrono::steady_clock::now();
        ParticleBatch batch = make_particle_batch(dataset_, config_.batch_size, config_.weights, rng_);
        LossAndGradient lg;
        try {
            lg = loss_and_gradient(model_, batch.regression());
        } catch (const NumericalError& e) {
            throw TrainingDiverged(std::string("training diverged: ") + e.what(), iteration_ + 1,
                                   std::numeric_limits<double>::quiet_NaN(), last_good_, log_);
        }
        if (!std::isfinite(lg.loss) || lg.loss > config_.divergence_threshold) {
            throw TrainingDiverged("training diverged at iteration " + std::to_string(iteration_ + 1) +
                                       " (loss " + std::to_string(lg.loss) + ")",
                                   iteration_ + 1, lg.loss, last_good_, log_);
        }
        optimizer_step(model_, lg.grads, opt_);
        ++iteration_;
        const auto stop = std::chrono::steady_clock::now();
        log_.loss.push_back(lg.loss);
        log_.ess.push_back(effective_sample_fraction(batch.weights));
        log_.ms_per_iter.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
        return lg.loss;
    }

    void record_checkpoint(std::vector<Checkpoint>& sink) {
        last_good_ = Checkpoint{iteration_, model_};
        sink.push_back(last_good_);
        if (!config_.checkpoint_dir.empty()) {
            std::filesystem::create_directories(config_.checkpoint_dir);
            save_checkpoint(checkpoint_path(config_.checkpoint_dir, iteration_), model_, meta());
        }
    }

    CheckpointMeta meta() const { return {config_.seed, config_.weights.gamma, config_.weights.k, iteration_}; }

    static std::string checkpoint_path(const std::string& dir, std::uint64_t iteration) {
        return (std::filesystem::path(dir) / ("checkpoint_" + std::to_string(iteration) + ".bin")).string();
    }

    const VectorFieldModel& model() const { return model_; }
    VectorFieldModel& model() { return model_; }
    const TrainLog& log() const { return log_; }
    std::uint64_t iteration() const { return iteration_; }
    const TrainConfig& config() const { return config_; }

private:
    TrainConfig config_;
    Matrix dataset_;
    SeededRng rng_;
    VectorFieldModel model_;
    OptimizerState opt_;
    TrainLog log_;
    Checkpoint last_good_;
    std::uint64_t iteration_ = 0;
};

inline TrainResult train(const TrainConfig& config, const Matrix& dataset) {
    Trainer trainer(config, dataset);
    TrainResult result;
    while (trainer.iteration() < config.iterations) {
        trainer.step();
        const bool cadence = config.checkpoint_every > 0 && trainer.iteration() % config.checkpoint_every == 0;
        if (cadence || trainer.iteration() == config.iterations) trainer.record_checkpoint(result.checkpoints);
    }
    result.model = trainer.model();
    result.log = trainer.log();
    return result;
}

struct VarianceProbeSpec {
    std::size_t minibatches = 100;  // M
    std::size_t batch_size = 256;
    SampleOptions sampling;
};

struct VarianceProbeResult {
    double trace = 0.0;           // sum over parameters of the per-parameter sample variance
    double mean_grad_norm = 0.0;  // norm of the mean gradient
};

/// Trace of the empirical covariance of M independent minibatch gradients of
/// the weighted loss, with the model held fixed.
inline VarianceProbeResult gradient_variance_probe(const VectorFieldModel& model, const Matrix& dataset,
                                                   const WeightSpec& spec, const VarianceProbeSpec& probe,
                                                   SeededRng& rng) {
    if (probe.minibatches < 2) throw std::invalid_argument("gradient_variance_probe: need at least two minibatches");
    const std::size_t p = model.parameter_count();
    std::vector<double> mean(p, 0.0), m2(p, 0.0);
    for (std::size_t m = 0; m < probe.minibatches; ++m) {
        const ParticleBatch batch = make_particle_batch(dataset, probe.batch_size, spec, rng, probe.sampling);
        const LossAndGradient lg = loss_and_gradient(model, batch.regression());
        const double count = static_cast<double>(m + 1);
        for (std::size_t i = 0; i < p; ++i) {
            const double g = lg.grads.values[i];
            const double delta = g - mean[i];
            mean[i] += delta / count;
            m2[i] += delta * (g - mean[i]);
        }
    }
    VarianceProbeResult r;
    const double denom = static_cast<double>(probe.minibatches - 1);
    double norm = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        r.trace += m2[i] / denom;
        norm += mean[i] * mean[i];
    }
    r.mean_grad_norm = std::sqrt(norm);
    return r;
}

}  // namespace gfm
