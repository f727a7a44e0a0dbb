#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "datasets.hpp"
#include "metrics.hpp"
#include "sampler.hpp"
#include "training.hpp"

namespace gfm {

/// splitmix64 of (base, stream): independent child seeds for data, noise and probes.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace streams {
constexpr std::uint64_t data = 1, eval = 2, noise = 3, smooth = 4, probe = 5;
}

/// Runs fn(i) for i in [0, n) on at most `workers` threads. Exceptions are
/// the callee's responsibility.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

inline std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

/// n standard-normal starting points in `dim` dimensions.
inline Matrix base_noise(std::size_t n, std::size_t dim, std::uint64_t seed) {
    SeededRng rng(seed);
    Matrix z(n, dim);
    for (double& v : z.data) v = rng.normal();
    return z;
}

// ---- high-dimensional ring: void map --------------------------------------

struct RingVoidSpec {
    std::size_t n_data = 4000;
    RingSpec ring;
    TrainConfig train = [] {
        TrainConfig c;
        c.checkpoint_every = 0;
        return c;
    }();
    SliceGrid grid;
    std::vector<double> times{0.5, 1.0};
    double center_radius = 0.3;  // void disk
    double band_lo = 0.9;        // on-manifold annulus
    double band_hi = 1.1;
    std::size_t smooth_probes = 200;
};

struct RingVoidRun {
    double gamma = 0.0;
    std::uint64_t seed = 0;
    VectorFieldModel model;
    TrainLog log;
    std::vector<Matrix> maps;  // one per spec time
    std::vector<double> center_mean;
    std::vector<double> band_mean;
    double smoothness = 0.0;
};

inline Matrix ring_dataset(const RingVoidSpec& spec, std::uint64_t seed) {
    SeededRng rng(derive_seed(seed, streams::data));
    return ring20d(spec.n_data, spec.ring, rng);
}

struct VoidStats {
    std::vector<Matrix> maps;
    std::vector<double> center_mean;
    std::vector<double> band_mean;
};

inline VoidStats void_stats(const VectorFieldModel& model, const RingVoidSpec& spec) {
    VoidStats s;
    for (double t : spec.times) {
        s.maps.push_back(velocity_norm_map(model, spec.grid, t));
        s.center_mean.push_back(radial_band_mean(s.maps.back(), spec.grid, 0.0, spec.center_radius));
        s.band_mean.push_back(radial_band_mean(s.maps.back(), spec.grid, spec.band_lo, spec.band_hi));
    }
    return s;
}

/// Trains one model on the ring; the training seed is shared across gammas so
/// runs differ only in the weighting.
inline RingVoidRun ring_void_run(const RingVoidSpec& spec, double gamma, std::uint64_t seed) {
    const Matrix data = ring_dataset(spec, seed);
    TrainConfig cfg = spec.train;
    cfg.seed = seed;
    cfg.weights.gamma = gamma;
    cfg.dataset_id = "ring20d";
    TrainResult tr = train(cfg, data);
    RingVoidRun r;
    r.gamma = gamma;
    r.seed = seed;
    r.model = std::move(tr.model);
    r.log = std::move(tr.log);
    VoidStats st = void_stats(r.model, spec);
    r.maps = std::move(st.maps);
    r.center_mean = std::move(st.center_mean);
    r.band_mean = std::move(st.band_mean);
    SeededRng prng(derive_seed(seed, streams::smooth));
    r.smoothness = smoothness(r.model, spec.smooth_probes, prng);
    return r;
}

// ---- contaminated latent proxy ---------------------------------------------

struct ContaminatedSpec {
    GmmSpec inliers;
    std::size_t n_train = 2000;
    std::size_t n_eval = 2000;
    std::size_t n_generate = 2000;
    double eps = 0.05;
    double outlier_scale = 4.0;
    TrainConfig train;
    SolveSpec solve{SolverMethod::euler, 128};
    std::size_t smooth_probes = 200;
};

struct ContaminatedData {
    ContaminatedSet train;
    Matrix clean_eval;         // held-out inliers
    Matrix contaminated_eval;  // held-out set at the training contamination level
};

inline ContaminatedData make_contaminated_data(const ContaminatedSpec& spec, std::uint64_t seed) {
    SeededRng rng(derive_seed(seed, streams::data));
    ContaminatedData d;
    d.train = contaminated_latents(spec.n_train, spec.inliers, spec.eps, spec.outlier_scale, rng);
    SeededRng erng(derive_seed(seed, streams::eval));
    d.clean_eval = gmm_latent(spec.n_eval, spec.inliers, erng);
    d.contaminated_eval = contaminated_latents(spec.n_eval, spec.inliers, spec.eps, spec.outlier_scale, erng).samples;
    return d;
}

struct QualityReport {
    double inlier_mmd = 0.0;
    double outlier_mmd = 0.0;
    std::size_t nfe = 0;
};

inline Matrix generate(const VectorFieldModel& model, std::size_t n, const SolveSpec& solve, std::uint64_t seed) {
    return integrate(model, base_noise(n, model.data_dim(), derive_seed(seed, streams::noise)), solve).samples;
}

inline QualityReport evaluate_quality(const VectorFieldModel& model, const ContaminatedData& data, std::size_t n_generate,
                                      const SolveSpec& solve, std::uint64_t seed) {
    const Matrix z = base_noise(n_generate, model.data_dim(), derive_seed(seed, streams::noise));
    const SolveReport s = integrate(model, z, solve);
    return {rbf_mmd2(s.samples, data.clean_eval), rbf_mmd2(s.samples, data.contaminated_eval), s.nfe};
}

struct ContaminatedRun {
    double gamma = 0.0;
    std::uint64_t seed = 0;
    VectorFieldModel model;
    VectorFieldModel mid_model;
    TrainLog log;
    QualityReport quality;
    double smoothness = 0.0;
};

inline ContaminatedRun contaminated_run(const ContaminatedSpec& spec, const ContaminatedData& data, double gamma,
                                        std::uint64_t seed) {
    TrainConfig cfg = spec.train;
    cfg.seed = seed;
    cfg.weights.gamma = gamma;
    cfg.dataset_id = "contaminated";
    cfg.checkpoint_every = std::max<std::size_t>(1, cfg.iterations / 2);  // first checkpoint is mid-training
    TrainResult tr = train(cfg, data.train.samples);
    ContaminatedRun r;
    r.gamma = gamma;
    r.seed = seed;
    r.model = std::move(tr.model);
    r.mid_model = tr.checkpoints.front().model;
    r.log = std::move(tr.log);
    r.quality = evaluate_quality(r.model, data, spec.n_generate, spec.solve, seed);
    SeededRng prng(derive_seed(seed, streams::smooth));
    r.smoothness = smoothness(r.model, spec.smooth_probes, prng);
    return r;
}

// ---- NFE curve --------------------------------------------------------------

struct NfeCurve {
    std::vector<std::size_t> steps;
    std::vector<std::size_t> nfe;
    std::vector<double> inlier_mmd;
    std::vector<double> outlier_mmd;
};

inline const std::vector<std::size_t>& default_nfe_grid() {
    static const std::vector<std::size_t> g{2, 4, 8, 16, 32, 64, 128};
    return g;
}

/// Same starting noise at every budget, so the curve isolates discretization.
inline NfeCurve nfe_curve(const VectorFieldModel& model, const ContaminatedData& data, std::span<const std::size_t> steps,
                          SolverMethod method, std::size_t n_generate, std::uint64_t seed) {
    NfeCurve c;
    for (std::size_t s : steps) {
        const QualityReport q = evaluate_quality(model, data, n_generate, SolveSpec{method, s}, seed);
        c.steps.push_back(s);
        c.nfe.push_back(q.nfe);
        c.inlier_mmd.push_back(q.inlier_mmd);
        c.outlier_mmd.push_back(q.outlier_mmd);
    }
    return c;
}

// ---- gamma sweep -------------------------------------------------------------

inline const std::vector<double>& default_gamma_grid() {
    static const std::vector<double> g{0.0, 0.2, 0.5, 1.0, 2.0, 4.0};
    return g;
}

struct SweepCell {
    double gamma = 0.0;
    bool ok = false;
    std::string error;
    double inlier_mmd = 0.0;
    double outlier_mmd = 0.0;
    double smoothness = 0.0;
};

struct SweepResult {
    std::vector<SweepCell> cells;
    std::optional<GscReport> gsc;  // empty when fewer than two cells succeeded
    std::string note;
};

/// Combines finished cells into a GSC report; failed cells are left out.
inline SweepResult summarize_sweep(std::vector<SweepCell> cells, double lambda) {
    SweepResult r;
    r.cells = std::move(cells);
    std::vector<double> g, m, s;
    for (const auto& c : r.cells) {
        if (!c.ok) continue;
        g.push_back(c.gamma);
        m.push_back(c.inlier_mmd);
        s.push_back(c.smoothness);
    }
    if (g.size() < 2) {
        r.note = "degenerate grid: fewer than two successful cells, GSC undefined";
        return r;
    }
    r.gsc = gfm::gsc(g, m, s, lambda);
    return r;
}

inline SweepCell sweep_cell(const ContaminatedSpec& spec, const ContaminatedData& data, double gamma, std::uint64_t seed) {
    SweepCell cell;
    cell.gamma = gamma;
    try {
        const ContaminatedRun run = contaminated_run(spec, data, gamma, seed);
        cell.inlier_mmd = run.quality.inlier_mmd;
        cell.outlier_mmd = run.quality.outlier_mmd;
        cell.smoothness = run.smoothness;
        cell.ok = true;
    } catch (const std::exception& e) {
        cell.error = e.what();
    }
    return cell;
}

/// Trains and scores every gamma on a shared dataset; `done` may supply cells
/// finished by an earlier invocation.
inline SweepResult run_sweep(const ContaminatedSpec& spec, std::span<const double> gammas, std::uint64_t seed,
                             std::size_t workers, double lambda = 1.0,
                             const std::function<std::optional<SweepCell>(double)>& done = {},
                             const std::function<void(const SweepCell&)>& on_cell = {}) {
    const ContaminatedData data = make_contaminated_data(spec, seed);
    std::vector<SweepCell> cells(gammas.size());
    std::mutex mu;
    parallel_for(gammas.size(), workers, [&](std::size_t i) {
        if (done) {
            if (auto prev = done(gammas[i])) {
                cells[i] = *prev;
                return;
            }
        }
        cells[i] = sweep_cell(spec, data, gammas[i], seed);
        if (on_cell) {
            std::lock_guard lock(mu);
            on_cell(cells[i]);
        }
    });
    return summarize_sweep(std::move(cells), lambda);
}

// ---- gradient-variance probe -------------------------------------------------

struct ProbeComparison {
    double trace_unweighted = 0.0;
    double trace_weighted = 0.0;
};

/// Both weightings probed on the same checkpoint with the same minibatch stream.
inline ProbeComparison probe_compare(const VectorFieldModel& model, const Matrix& dataset, double gamma, std::size_t k,
                                     std::size_t minibatches, std::size_t batch_size, std::uint64_t seed) {
    VarianceProbeSpec probe;
    probe.minibatches = minibatches;
    probe.batch_size = batch_size;
    ProbeComparison c;
    WeightSpec w0;
    w0.k = k;
    SeededRng r0(derive_seed(seed, streams::probe));
    c.trace_unweighted = gradient_variance_probe(model, dataset, w0, probe, r0).trace;
    WeightSpec w1 = w0;
    w1.gamma = gamma;
    SeededRng r1(derive_seed(seed, streams::probe));
    c.trace_weighted = gradient_variance_probe(model, dataset, w1, probe, r1).trace;
    return c;
}

}  // namespace gfm
