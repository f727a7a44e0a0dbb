#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "datasets.hpp"
#include "training.hpp"

namespace gfm {

struct BenchSpec {
    std::size_t batch_size = 512;
    std::vector<std::size_t> k_grid{5, 10, 20, 50, 100};
    std::size_t iterations = 1000;
    std::size_t warmup = 100;
    double gamma = 1.0;
    std::size_t n_data = 4096;
    GmmSpec data;
    TrainConfig model;  // width, depth and optimizer settings

    void validate() const {
        if (iterations < 1000) throw std::invalid_argument("BenchSpec: need at least 1000 timed iterations");
        if (warmup < 100) throw std::invalid_argument("BenchSpec: need at least 100 warmup iterations");
        if (k_grid.empty()) throw std::invalid_argument("BenchSpec: empty k grid");
        for (std::size_t k : k_grid) {
            if (k < 1 || k >= batch_size) throw std::invalid_argument("BenchSpec: every k must lie in [1, B-1]");
        }
    }
};

struct BenchRow {
    std::size_t k = 0;
    double ms_median = 0.0;
    double ms_q1 = 0.0;
    double ms_q3 = 0.0;
    double mean_loss = 0.0;
};

struct BenchResult {
    std::size_t batch_size = 0;
    std::size_t iterations = 0;
    std::vector<BenchRow> rows;

    double timing_ratio() const {
        double lo = rows.at(0).ms_median, hi = lo;
        for (const auto& r : rows) {
            lo = std::min(lo, r.ms_median);
            hi = std::max(hi, r.ms_median);
        }
        return hi / lo;
    }

    /// (max - min) / min of the mean losses.
    double loss_spread() const {
        double lo = rows.at(0).mean_loss, hi = lo;
        for (const auto& r : rows) {
            lo = std::min(lo, r.mean_loss);
            hi = std::max(hi, r.mean_loss);
        }
        return (hi - lo) / lo;
    }
};

/// Linear-interpolated quantile of an unsorted sample.
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile: empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) return v.back();
    return v[i] + (pos - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

/// Times full training steps (sample, weight, loss, gradient, update) per k.
/// The dataset is generated once before any timer starts; the per-step timer
/// lives inside Trainer::step.
inline BenchResult run_knn_bench(const BenchSpec& spec, std::uint64_t seed) {
    spec.validate();
    SeededRng drng(seed);
    const Matrix data = gmm_latent(spec.n_data, spec.data, drng);
    BenchResult out;
    out.batch_size = spec.batch_size;
    out.iterations = spec.iterations;
    for (std::size_t k : spec.k_grid) {
        TrainConfig cfg = spec.model;
        cfg.batch_size = spec.batch_size;
        cfg.iterations = spec.warmup + spec.iterations;
        cfg.weights.gamma = spec.gamma;
        cfg.weights.k = k;
        cfg.seed = seed;
        cfg.checkpoint_every = 0;
        Trainer trainer(cfg, data);
        for (std::size_t i = 0; i < cfg.iterations; ++i) trainer.step();
        const auto& log = trainer.log();
        const std::vector<double> ms(log.ms_per_iter.begin() + static_cast<std::ptrdiff_t>(spec.warmup), log.ms_per_iter.end());
        double loss = 0.0;
        for (std::size_t i = spec.warmup; i < log.loss.size(); ++i) loss += log.loss[i];
        BenchRow row;
        row.k = k;
        row.ms_median = quantile(ms, 0.5);
        row.ms_q1 = quantile(ms, 0.25);
        row.ms_q3 = quantile(ms, 0.75);
        row.mean_loss = loss / static_cast<double>(spec.iterations);
        out.rows.push_back(row);
    }
    return out;
}

}  // namespace gfm
