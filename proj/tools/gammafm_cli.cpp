// gammafm command-line driver.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "gammafm/gammafm.hpp"

namespace fs = std::filesystem;
using gfm::Json;
using gfm::KeyValueConfig;
using gfm::Matrix;
using gfm::RunManifest;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Runner = std::function<void(const KeyValueConfig&, RunManifest&)>;

struct Command {
    std::string name;
    std::string help;
    std::vector<std::pair<std::string, std::string>> defaults;  // key, default value
    Runner run;
};

std::string flag_name(const std::string& key) {
    std::string s = key;
    for (char& c : s)
        if (c == '_') c = '-';
    return "--" + s;
}

std::vector<std::size_t> to_sizes(const std::vector<double>& v) {
    std::vector<std::size_t> out;
    for (double x : v) {
        if (!(x >= 1.0) || x != std::floor(x)) throw std::invalid_argument("expected positive integers, got " + gfm::format_double(x));
        out.push_back(static_cast<std::size_t>(x));
    }
    return out;
}

std::string gamma_tag(double g) { return "gamma_" + gfm::format_double(g); }

// ---- shared config readers --------------------------------------------------

gfm::GmmSpec gmm_spec(const KeyValueConfig& c) {
    gfm::GmmSpec s;
    s.dim = c.get_uint("dim");
    s.n_modes = c.get_uint("n_modes");
    s.spread = c.get_double("spread");
    return s;
}

gfm::ContaminatedSpec contaminated_spec(const KeyValueConfig& c) {
    gfm::ContaminatedSpec s;
    s.inliers = gmm_spec(c);
    s.n_train = c.get_uint("n_train");
    s.n_eval = c.get_uint("n_eval");
    s.n_generate = c.get_uint("n_generate");
    s.eps = c.get_double("eps");
    s.outlier_scale = c.get_double("outlier_scale");
    return s;
}

gfm::TrainConfig train_config(const KeyValueConfig& c) {
    gfm::TrainConfig t;
    t.iterations = c.get_uint("iters");
    t.batch_size = c.get_uint("batch");
    t.learning_rate = c.get_double("lr");
    t.hidden_width = c.get_uint("width");
    t.hidden_layers = c.get_uint("depth");
    t.weights.k = c.get_uint("k");
    t.seed = c.get_uint("seed");
    return t;
}

const std::vector<std::pair<std::string, std::string>> kTrainKeys{
    {"iters", "5000"}, {"batch", "256"}, {"lr", "0.001"}, {"width", "128"}, {"depth", "3"}, {"k", "10"}};

const std::vector<std::pair<std::string, std::string>> kContaminatedKeys{
    {"dim", "16"},     {"n_modes", "10"},   {"spread", "5"},       {"eps", "0.05"},
    {"outlier_scale", "4"}, {"n_train", "2000"}, {"n_eval", "2000"}, {"n_generate", "2000"}};

std::vector<std::pair<std::string, std::string>> join(std::initializer_list<std::vector<std::pair<std::string, std::string>>> parts) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

gfm::SolveSpec solve_spec(const KeyValueConfig& c) {
    return {gfm::parse_solver_method(c.get_string("solver")), c.get_uint("steps")};
}

std::pair<gfm::VectorFieldModel, gfm::CheckpointMeta> load_model(const std::string& path) {
    if (path.empty()) throw UsageError("a --checkpoint path is required");
    if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
    return gfm::load_checkpoint(path);
}

/// Dataset named in the config, or rows of a CSV given by `data`.
Matrix load_dataset(const KeyValueConfig& c) {
    if (c.contains("data") && !c.get_string("data").empty()) {
        gfm::CsvTable t = gfm::read_csv(c.get_string("data"));
        if (!t.header.empty() && t.header.back() == "inlier") {
            Matrix m(t.values.rows, t.values.cols - 1);
            for (std::size_t i = 0; i < m.rows; ++i)
                for (std::size_t j = 0; j < m.cols; ++j) m(i, j) = t.values(i, j);
            return m;
        }
        return t.values;
    }
    const std::string kind = c.get_string("dataset");
    const std::uint64_t seed = c.get_uint("seed");
    const std::size_t n = c.get_uint("n");
    gfm::SeededRng rng(gfm::derive_seed(seed, gfm::streams::data));
    if (kind == "ring20d") {
        gfm::RingSpec r;
        r.radius = c.get_double("radius");
        r.noise_m = c.get_double("noise_m");
        r.noise_a = c.get_double("noise_a");
        r.ambient_dims = c.get_uint("ambient_dims");
        return gfm::ring20d(n, r, rng);
    }
    if (kind == "gmm_latent") return gfm::gmm_latent(n, gmm_spec(c), rng);
    if (kind == "contaminated") {
        return gfm::contaminated_latents(n, gmm_spec(c), c.get_double("eps"), c.get_double("outlier_scale"), rng).samples;
    }
    if (kind == "double_well_1d") {
        const auto s = gfm::double_well_samples(n, rng);
        return Matrix(n, 1, s.samples);
    }
    throw std::invalid_argument("unknown dataset '" + kind + "' (expected ring20d, double_well_1d, contaminated or gmm_latent)");
}

const std::vector<std::pair<std::string, std::string>> kDatasetKeys{
    {"dataset", "ring20d"}, {"n", "4000"}, {"radius", "1"}, {"noise_m", "0.05"}, {"noise_a", "0.05"}, {"ambient_dims", "18"},
    {"dim", "16"}, {"n_modes", "10"}, {"spread", "5"}, {"eps", "0.05"}, {"outlier_scale", "4"}};


// ---- commands ---------------------------------------------------------------

void cmd_gen(const KeyValueConfig& c, RunManifest& m) {
    const std::string kind = c.get_string("dataset");
    const std::uint64_t seed = c.get_uint("seed");
    const std::size_t n = c.get_uint("n");
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    Json side;
    side["spec"] = c.to_json();
    side["seed"] = seed;
    if (kind == "contaminated") {
        gfm::SeededRng rng(gfm::derive_seed(seed, gfm::streams::data));
        const auto set = gfm::contaminated_latents(n, gmm_spec(c), c.get_double("eps"), c.get_double("outlier_scale"), rng);
        Matrix out(n, set.samples.cols + 1);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < set.samples.cols; ++j) out(i, j) = set.samples(i, j);
            out(i, set.samples.cols) = set.inlier_mask[i] ? 1.0 : 0.0;
        }
        auto header = gfm::numbered_header("x", set.samples.cols);
        header.push_back("inlier");
        m.emit("data.csv", gfm::to_csv(header, out));
    } else if (kind == "double_well_1d") {
        gfm::SeededRng rng(gfm::derive_seed(seed, gfm::streams::data));
        const auto s = gfm::double_well_samples(n, rng);
        side["acceptance_rate"] = s.acceptance_rate;
        m.emit("data.csv", gfm::to_csv({"x0"}, Matrix(n, 1, s.samples)));
    } else {
        const Matrix d = load_dataset(c);
        m.emit("data.csv", gfm::to_csv(gfm::numbered_header("x", d.cols), d));
    }
    m.emit("data.json", side.dump(2) + "\n");
}

void cmd_train(const KeyValueConfig& c, RunManifest& m) {
    gfm::TrainConfig cfg = train_config(c);
    cfg.weights.gamma = c.get_double("gamma");
    cfg.checkpoint_every = c.get_uint("checkpoint_every");
    cfg.dataset_id = c.get_string("dataset");
    cfg.checkpoint_dir = m.path_for("checkpoints");
    cfg.validate();
    const Matrix data = load_dataset(c);

    gfm::Trainer trainer(cfg, data);
    std::vector<gfm::Checkpoint> sink;
    auto write_logs = [&] {
        const auto& log = trainer.log();
        Matrix t(log.loss.size(), 3);
        Matrix ms(log.loss.size(), 2);
        for (std::size_t i = 0; i < log.loss.size(); ++i) {
            t(i, 0) = static_cast<double>(i + 1);
            t(i, 1) = log.loss[i];
            t(i, 2) = log.ess[i];
            ms(i, 0) = static_cast<double>(i + 1);
            ms(i, 1) = log.ms_per_iter[i];
        }
        m.emit("train_log.csv", gfm::to_csv({"iteration", "loss", "ess"}, t));
        gfm::write_csv(m.path_for("timing.csv"), {"iteration", "ms_per_iter"}, ms);  // wall clock, not hashed
    };
    try {
        while (trainer.iteration() < cfg.iterations) {
            trainer.step();
            const bool cadence = cfg.checkpoint_every > 0 && trainer.iteration() % cfg.checkpoint_every == 0;
            if (cadence || trainer.iteration() == cfg.iterations) {
                trainer.record_checkpoint(sink);
                m.add_artifact("checkpoints/checkpoint_" + std::to_string(trainer.iteration()) + ".bin");
            }
        }
    } catch (const gfm::TrainingDiverged& e) {
        gfm::CheckpointMeta meta = trainer.meta();
        meta.iteration = e.last_good.iteration;
        m.emit("model_last_good.bin", gfm::serialize_checkpoint(e.last_good.model, meta));
        write_logs();
        m.set_status("diverged");
        m.extra()["error"] = e.what();
        throw;
    }
    m.emit("model.bin", gfm::serialize_checkpoint(trainer.model(), trainer.meta()));
    write_logs();
    m.extra()["final_loss"] = trainer.log().loss.back();
}

void cmd_sample(const KeyValueConfig& c, RunManifest& m) {
    const auto [model, meta] = load_model(c.get_string("checkpoint"));
    gfm::SolveSpec s = solve_spec(c);
    s.keep_trajectory = c.get_uint("trajectory") != 0;
    const Matrix z = gfm::base_noise(c.get_uint("n"), model.data_dim(), gfm::derive_seed(c.get_uint("seed"), gfm::streams::noise));
    const auto r = gfm::integrate(model, z, s);
    m.emit("samples.csv", gfm::to_csv(gfm::numbered_header("x", model.data_dim()), r.samples));
    if (s.keep_trajectory) {
        const std::size_t d = model.data_dim();
        Matrix tr(r.trajectory.size() * z.rows, d + 3);
        for (std::size_t k = 0; k < r.trajectory.size(); ++k)
            for (std::size_t i = 0; i < z.rows; ++i) {
                const std::size_t row = k * z.rows + i;
                tr(row, 0) = static_cast<double>(k);
                tr(row, 1) = s.t0 + (s.t1 - s.t0) * static_cast<double>(k) / static_cast<double>(s.steps);
                tr(row, 2) = static_cast<double>(i);
                for (std::size_t j = 0; j < d; ++j) tr(row, 3 + j) = r.trajectory[k](i, j);
            }
        auto header = std::vector<std::string>{"step", "t", "index"};
        for (const auto& h : gfm::numbered_header("x", d)) header.push_back(h);
        m.emit("trajectory.csv", gfm::to_csv(header, tr));
    }
    m.extra()["nfe"] = r.nfe;
}

void cmd_eval(const KeyValueConfig& c, RunManifest& m) {
    const auto [model, meta] = load_model(c.get_string("checkpoint"));
    const auto spec = contaminated_spec(c);
    if (model.data_dim() != spec.inliers.dim) {
        throw UsageError("checkpoint dimension " + std::to_string(model.data_dim()) + " does not match --dim " +
                         std::to_string(spec.inliers.dim));
    }
    const std::uint64_t seed = c.get_uint("seed");
    const auto data = gfm::make_contaminated_data(spec, seed);
    const auto q = gfm::evaluate_quality(model, data, spec.n_generate, solve_spec(c), seed);
    gfm::SeededRng prng(gfm::derive_seed(seed, gfm::streams::smooth));
    const double smooth = gfm::smoothness(model, c.get_uint("smooth_probes"), prng);
    const double lambda = c.get_double("lambda");
    Json r;
    r["gamma"] = meta.gamma;
    r["inlier_mmd"] = q.inlier_mmd;
    r["outlier_mmd"] = q.outlier_mmd;
    r["smoothness"] = smooth;
    r["nfe"] = q.nfe;
    r["gsc_terms"] = {{"bias", q.inlier_mmd}, {"penalty", smooth}, {"lambda", lambda}, {"raw_sum", q.inlier_mmd + lambda * smooth}};
    m.emit("report.json", r.dump(2) + "\n");
}

void cmd_sweep(const KeyValueConfig& c, RunManifest& m) {
    auto spec = contaminated_spec(c);
    spec.train = train_config(c);
    spec.solve = solve_spec(c);
    const auto gammas = c.get_list("gammas");
    if (gammas.empty()) throw std::invalid_argument("gammas must not be empty");
    std::size_t workers = c.get_uint("workers");
    if (workers == 0) workers = gfm::default_workers();

    auto cell_path = [&](double g) { return m.path_for(gamma_tag(g) + "/cell.json"); };
    auto done = [&](double g) -> std::optional<gfm::SweepCell> {
        if (!fs::exists(cell_path(g))) return std::nullopt;
        const Json j = gfm::read_json(cell_path(g));
        if (!j.value("ok", false)) return std::nullopt;
        gfm::SweepCell cell;
        cell.gamma = g;
        cell.ok = true;
        cell.inlier_mmd = j["inlier_mmd"];
        cell.outlier_mmd = j["outlier_mmd"];
        cell.smoothness = j["smoothness"];
        std::cerr << "sweep: reusing " << gamma_tag(g) << "\n";
        return cell;
    };
    auto save = [&](const gfm::SweepCell& cell) {
        Json j{{"gamma", cell.gamma}, {"ok", cell.ok}, {"error", cell.error}, {"inlier_mmd", cell.inlier_mmd},
               {"outlier_mmd", cell.outlier_mmd}, {"smoothness", cell.smoothness}};
        gfm::write_json(cell_path(cell.gamma), j);
        std::cerr << "sweep: finished " << gamma_tag(cell.gamma) << (cell.ok ? "" : " (failed: " + cell.error + ")") << "\n";
    };
    const auto r = gfm::run_sweep(spec, gammas, c.get_uint("seed"), workers, c.get_double("lambda"), done, save);

    Json report;
    Json cells = Json::array();
    Matrix table(r.cells.size(), 5);
    for (std::size_t i = 0; i < r.cells.size(); ++i) {
        const auto& cell = r.cells[i];
        cells.push_back({{"gamma", cell.gamma}, {"ok", cell.ok}, {"error", cell.error}, {"inlier_mmd", cell.inlier_mmd},
                         {"outlier_mmd", cell.outlier_mmd}, {"smoothness", cell.smoothness}});
        table(i, 0) = cell.gamma;
        table(i, 1) = cell.ok ? 1.0 : 0.0;
        table(i, 2) = cell.inlier_mmd;
        table(i, 3) = cell.outlier_mmd;
        table(i, 4) = cell.smoothness;
    }
    report["cells"] = cells;
    report["lambda"] = c.get_double("lambda");
    if (r.gsc) {
        report["gsc"] = r.gsc->gsc;
        report["normalized_bias"] = r.gsc->normalized_bias;
        report["normalized_penalty"] = r.gsc->normalized_penalty;
        report["bias_degenerate"] = r.gsc->bias_degenerate;
        report["penalty_degenerate"] = r.gsc->penalty_degenerate;
        report["best_gamma"] = r.gsc->best_gamma;
        gfm::SvgPlot p;
        p.kind = gfm::PlotKind::multi_line;
        p.title = "GSC selection curve";
        p.x_label = "gamma";
        p.y_label = "normalized score";
        p.series = {{"GSC", r.gsc->gammas, r.gsc->gsc},
                    {"MMD (normalized)", r.gsc->gammas, r.gsc->normalized_bias},
                    {"smoothness (normalized)", r.gsc->gammas, r.gsc->normalized_penalty}};
        m.emit("gsc.svg", p.render());
    } else {
        report["degenerate"] = true;
        report["note"] = r.note;
    }
    m.emit("gsc.json", report.dump(2) + "\n");
    m.emit("sweep.csv", gfm::to_csv({"gamma", "ok", "inlier_mmd", "outlier_mmd", "smoothness"}, table));
}

void cmd_nfe_curve(const KeyValueConfig& c, RunManifest& m) {
    auto spec = contaminated_spec(c);
    spec.train = train_config(c);
    const std::uint64_t seed = c.get_uint("seed");
    const auto data = gfm::make_contaminated_data(spec, seed);
    const auto steps = to_sizes(c.get_list("nfe_steps"));

    std::vector<std::pair<std::string, gfm::VectorFieldModel>> models;
    const std::string paths = c.get_string("checkpoints");
    if (!paths.empty()) {
        std::stringstream ss(paths);
        std::string p;
        while (std::getline(ss, p, ',')) {
            auto [model, meta] = load_model(p);
            models.emplace_back(gamma_tag(meta.gamma), std::move(model));
        }
    } else {
        for (double g : c.get_list("gammas")) {
            auto run = gfm::contaminated_run(spec, data, g, seed);
            models.emplace_back(gamma_tag(g), std::move(run.model));
        }
    }
    std::vector<std::string> header{"steps", "nfe"};
    std::vector<std::vector<double>> cols(2);
    gfm::SvgPlot p;
    p.kind = gfm::PlotKind::multi_line;
    p.log_x = true;
    p.title = "sample quality vs NFE";
    p.x_label = "NFE (euler steps)";
    p.y_label = "inlier MMD^2";
    Json j = Json::object();
    for (const auto& [tag, model] : models) {
        const auto curve = gfm::nfe_curve(model, data, steps, gfm::SolverMethod::euler, spec.n_generate, seed);
        if (cols[0].empty()) {
            for (std::size_t i = 0; i < steps.size(); ++i) {
                cols[0].push_back(static_cast<double>(curve.steps[i]));
                cols[1].push_back(static_cast<double>(curve.nfe[i]));
            }
        }
        header.push_back("inlier_mmd_" + tag);
        cols.push_back(curve.inlier_mmd);
        header.push_back("outlier_mmd_" + tag);
        cols.push_back(curve.outlier_mmd);
        p.series.push_back({tag, cols[1], curve.inlier_mmd});
        j[tag] = {{"nfe", curve.nfe}, {"inlier_mmd", curve.inlier_mmd}, {"outlier_mmd", curve.outlier_mmd}};
    }
    m.emit("nfe_curve.csv", gfm::to_csv(header, gfm::columns_to_matrix(cols)));
    m.emit("nfe_curve.json", j.dump(2) + "\n");
    m.emit("nfe_curve.svg", p.render());
}

void cmd_void_map(const KeyValueConfig& c, RunManifest& m) {
    gfm::RingVoidSpec spec;
    spec.train = train_config(c);
    spec.train.checkpoint_every = 0;
    spec.n_data = c.get_uint("n");
    spec.grid.resolution = c.get_uint("resolution");
    spec.times = c.get_list("times");
    spec.center_radius = c.get_double("center_radius");
    const std::uint64_t seed = c.get_uint("seed");

    std::vector<std::pair<double, gfm::VectorFieldModel>> models;
    const std::string base = c.get_string("baseline"), weighted = c.get_string("weighted");
    if (base.empty() != weighted.empty()) throw UsageError("give both --baseline and --weighted checkpoints, or neither");
    if (!base.empty()) {
        for (const auto& path : {base, weighted}) {
            auto [model, meta] = load_model(path);
            if (model.data_dim() < 2) throw UsageError("checkpoint " + path + " has fewer than two dimensions");
            models.emplace_back(meta.gamma, std::move(model));
        }
    } else {
        for (double g : {0.0, c.get_double("gamma")}) {
            auto run = gfm::ring_void_run(spec, g, seed);
            m.emit("model_" + gamma_tag(g) + ".bin", gfm::serialize_checkpoint(run.model, {seed, g, spec.train.weights.k, spec.train.iterations}));
            models.emplace_back(g, std::move(run.model));
        }
    }
    Json report;
    std::vector<gfm::VoidStats> stats;
    for (const auto& [g, model] : models) {
        stats.push_back(gfm::void_stats(model, spec));
        for (std::size_t ti = 0; ti < spec.times.size(); ++ti) {
            const std::string stem = "map_" + gamma_tag(g) + "_t_" + gfm::format_double(spec.times[ti]);
            m.emit(stem + ".csv", gfm::to_csv(gfm::numbered_header("c", spec.grid.resolution), stats.back().maps[ti]));
            gfm::SvgPlot p;
            p.kind = gfm::PlotKind::heatmap;
            p.title = "|v| " + gamma_tag(g) + " t=" + gfm::format_double(spec.times[ti]);
            p.x_label = "x1";
            p.y_label = "x2";
            // Row 0 of the map is the lowest x2; flip so x2 grows upward.
            Matrix flipped(stats.back().maps[ti].rows, stats.back().maps[ti].cols);
            for (std::size_t r = 0; r < flipped.rows; ++r)
                for (std::size_t col = 0; col < flipped.cols; ++col) flipped(r, col) = stats.back().maps[ti](flipped.rows - 1 - r, col);
            p.grid = flipped;
            m.emit(stem + ".svg", p.render());
        }
        report[gamma_tag(g)] = {{"center_mean", stats.back().center_mean}, {"band_mean", stats.back().band_mean}};
    }
    std::vector<double> center_ratio, band_ratio;
    for (std::size_t ti = 0; ti < spec.times.size(); ++ti) {
        center_ratio.push_back(stats[1].center_mean[ti] / stats[0].center_mean[ti]);
        band_ratio.push_back(stats[1].band_mean[ti] / stats[0].band_mean[ti]);
    }
    report["times"] = spec.times;
    report["center_ratio"] = center_ratio;
    report["band_ratio"] = band_ratio;
    m.emit("void.json", report.dump(2) + "\n");
}

void cmd_pme(const KeyValueConfig& c, RunManifest& m) {
    gfm::PmeSpec spec;
    spec.gamma = c.get_double("gamma");
    spec.diffusion = c.get_double("diffusion");
    spec.potential = gfm::Potential::from_name(c.get_string("potential"));
    spec.t_end = c.get_double("t_end");
    spec.validate();
    const gfm::Grid1D grid(c.get_double("lo"), c.get_double("hi"), c.get_uint("cells"));
    const std::size_t n_snap = c.get_uint("snapshots");
    if (n_snap < 1) throw std::invalid_argument("snapshots must be >= 1");
    const double s0 = c.get_double("init_std");
    auto f = gfm::DensityField1D::sample(grid, [s0](double x) {
        return std::exp(-0.5 * x * x / (s0 * s0)) / (s0 * std::sqrt(2.0 * std::numbers::pi));
    });
    const double m0 = f.mass();
    const double barrier = c.get_double("barrier");
    gfm::SvgPlot p;
    p.kind = gfm::PlotKind::multi_line;
    p.title = "density snapshots";
    p.x_label = "x";
    p.y_label = "p";
    std::vector<double> xs;
    for (std::size_t i = 0; i < grid.n_cells; ++i) xs.push_back(grid.center(i));
    double max_drift = 0.0;
    Json snaps = Json::array();
    for (std::size_t s = 0; s <= n_snap; ++s) {
        const double t = spec.t_end * static_cast<double>(s) / static_cast<double>(n_snap);
        f = gfm::evolve(std::move(f), spec, t);
        max_drift = std::max(max_drift, std::abs(f.mass() - m0) / m0);
        char name[32];
        std::snprintf(name, sizeof name, "snapshot_%03zu.csv", s);
        m.emit(name, gfm::to_csv({"x", "p"}, gfm::columns_to_matrix({xs, f.p})));
        snaps.push_back({{"file", name}, {"time", f.time}, {"mass", f.mass()}, {"barrier_mass", f.mass_within(barrier)}});
        if (s == 0 || s == n_snap || s == n_snap / 2) p.series.push_back({"t=" + gfm::format_double(f.time), xs, f.p});
    }
    Json summary;
    summary["gamma"] = spec.gamma;
    summary["mass_initial"] = m0;
    summary["mass_final"] = f.mass();
    summary["mass_drift"] = max_drift;
    summary["clamped_mass"] = f.clamped_mass;
    summary["barrier_mass"] = f.mass_within(barrier);
    summary["snapshots"] = snaps;
    if (spec.gamma > 0.0 && c.get_uint("fit_exponent") != 0) {
        const auto fit = gfm::barenblatt_growth_fit(spec.gamma, gfm::Grid1D(-6.0, 6.0, 512));
        summary["beta_hat"] = fit.beta_hat;
        summary["beta_exact"] = 1.0 / (spec.gamma + 2.0);
    } else {
        summary["beta_hat"] = nullptr;
    }
    m.emit("summary.json", summary.dump(2) + "\n");
    m.emit("snapshots.svg", p.render());
}

void cmd_spectral(const KeyValueConfig& c, RunManifest& m) {
    const std::size_t n = c.get_uint("n");
    const double gamma = c.get_double("gamma");
    const std::string preset = c.get_string("preset");
    auto make = [&](double g) {
        if (preset == "gaussian") return gfm::EscortGrid::gaussian(n, g);
        if (preset == "uniform") return gfm::EscortGrid::uniform(n, g);
        throw std::invalid_argument("unknown preset '" + preset + "' (expected gaussian or uniform)");
    };
    const auto e = make(gamma);
    gfm::SeededRng rng(c.get_uint("seed"));
    std::vector<double> target(n);
    for (double& v : target) v = rng.normal();
    const auto r = gfm::shrinkage_check(e, target, c.get_double("tau"));
    Json j;
    j["n"] = n;
    j["gamma"] = gamma;
    j["tau"] = r.tau;
    j["max_abs_deviation"] = r.max_abs_deviation;
    j["dirichlet_energy"] = r.dirichlet_energy;
    j["spectral_energy_solved"] = r.spectral_energy_solved;
    j["spectral_energy_predicted"] = r.spectral_energy_predicted;
    j["energy_identity_error"] = r.energy_identity_error;
    m.emit("shrinkage.json", j.dump(2) + "\n");
    std::vector<double> idx;
    for (std::size_t k = 0; k < n; ++k) idx.push_back(static_cast<double>(k));
    m.emit("eigenvalues.csv", gfm::to_csv({"k", "eigenvalue", "target_coef", "solved_coef", "predicted_coef"},
                                          gfm::columns_to_matrix({idx, r.eigenvalues, r.target_coefficients,
                                                                  r.solved_coefficients, r.predicted_coefficients})));
    const auto gammas = c.get_list("gap_gammas");
    if (!gammas.empty()) {
        const auto base = make(0.0);
        const auto sweep = gfm::spectral_gap_vs_gamma(base.grid, base.q, gammas);
        m.emit("gaps.csv", gfm::to_csv({"gamma", "gap", "ratio", "linear_law"},
                                       gfm::columns_to_matrix({sweep.gammas, sweep.gaps, sweep.ratio, sweep.linear_law})));
        gfm::SvgPlot p;
        p.kind = gfm::PlotKind::multi_line;
        p.title = "spectral gap ratio";
        p.x_label = "gamma";
        p.y_label = "gap / gap(gamma_0)";
        p.series = {{"measured", sweep.gammas, sweep.ratio}, {"1+gamma", sweep.gammas, sweep.linear_law}};
        m.emit("gaps.svg", p.render());
    }
}

void cmd_bench_knn(const KeyValueConfig& c, RunManifest& m) {
    gfm::BenchSpec spec;
    spec.batch_size = c.get_uint("batch");
    spec.k_grid = to_sizes(c.get_list("ks"));
    spec.iterations = c.get_uint("iters");
    spec.warmup = c.get_uint("warmup");
    spec.gamma = c.get_double("gamma");
    spec.data = gmm_spec(c);
    spec.model.hidden_width = c.get_uint("width");
    spec.model.hidden_layers = c.get_uint("depth");
    const auto r = gfm::run_knn_bench(spec, c.get_uint("seed"));
    Json j;
    j["batch_size"] = r.batch_size;
    j["iterations"] = r.iterations;
    Json rows = Json::array();
    Matrix t(r.rows.size(), 5);
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const auto& row = r.rows[i];
        rows.push_back({{"k", row.k}, {"ms_per_iter", row.ms_median}, {"ms_q1", row.ms_q1}, {"ms_q3", row.ms_q3},
                        {"avg_loss", row.mean_loss}});
        t(i, 0) = static_cast<double>(row.k);
        t(i, 1) = row.ms_median;
        t(i, 2) = row.ms_q1;
        t(i, 3) = row.ms_q3;
        t(i, 4) = row.mean_loss;
    }
    j["rows"] = rows;
    j["timing_ratio"] = r.timing_ratio();
    j["loss_spread"] = r.loss_spread();
    m.emit("bench.json", j.dump(2) + "\n");
    m.emit("bench.csv", gfm::to_csv({"k", "ms_per_iter", "ms_q1", "ms_q3", "avg_loss"}, t));
}

std::vector<Command> commands() {
    const std::vector<std::pair<std::string, std::string>> solve{{"solver", "euler"}, {"steps", "128"}};
    return {
        {"gen", "generate a synthetic dataset as CSV with a JSON sidecar", kDatasetKeys, cmd_gen},
        {"train", "train a vector field and write checkpoints and a loss log",
         join({kDatasetKeys, kTrainKeys, {{"gamma", "0"}, {"checkpoint_every", "1000"}, {"data", ""}}}), cmd_train},
        {"sample", "integrate a checkpoint from Gaussian noise",
         {{"checkpoint", ""}, {"n", "1000"}, {"solver", "euler"}, {"steps", "32"}, {"trajectory", "0"}}, cmd_sample},
        {"eval", "score a checkpoint on the contaminated benchmark",
         join({kContaminatedKeys, solve, {{"checkpoint", ""}, {"lambda", "1"}, {"smooth_probes", "200"}}}), cmd_eval},
        {"sweep", "train over a gamma grid and select by GSC",
         join({kContaminatedKeys, kTrainKeys, solve, {{"gammas", "0,0.2,0.5,1,2,4"}, {"lambda", "1"}, {"workers", "0"}}}),
         cmd_sweep},
        {"nfe-curve", "sample quality against solver budget",
         join({kContaminatedKeys, kTrainKeys, {{"gammas", "0,1"}, {"nfe_steps", "2,4,8,16,32,64,128"}, {"checkpoints", ""}}}),
         cmd_nfe_curve},
        {"void-map", "velocity-norm heatmaps on the ring slice",
         join({kTrainKeys,
               {{"n", "4000"}, {"gamma", "1"}, {"baseline", ""}, {"weighted", ""}, {"times", "0.5,1"}, {"resolution", "64"},
                {"center_radius", "0.3"}}}),
         cmd_void_map},
        {"pme", "nonlinear Fokker-Planck reference solver",
         {{"gamma", "1"}, {"diffusion", "0.25"}, {"potential", "double-well"}, {"cells", "1024"}, {"lo", "-6"}, {"hi", "6"},
          {"t_end", "2"}, {"snapshots", "20"}, {"init_std", "1"}, {"barrier", "0.3"}, {"fit_exponent", "1"}},
         cmd_pme},
        {"spectral", "weighted-Laplacian shrinkage and spectral gap",
         {{"n", "64"}, {"gamma", "1"}, {"tau", "0.1"}, {"preset", "gaussian"}, {"gap_gammas", "0,0.5,1,2"}}, cmd_spectral},
        {"bench-knn", "time training steps across neighbour counts",
         {{"batch", "512"}, {"ks", "5,10,20,50,100"}, {"iters", "1000"}, {"warmup", "100"}, {"gamma", "1"}, {"width", "128"},
          {"depth", "3"}, {"dim", "16"}, {"n_modes", "10"}, {"spread", "5"}},
         cmd_bench_knn},
    };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gammafm: density-weighted flow matching toolkit"};
    app.require_subcommand(1);
    const auto cmds = commands();

    struct Bound {
        CLI::App* sub;
        std::map<std::string, std::string> values;
        std::map<std::string, CLI::Option*> opts;
        std::string seed, out, config;
    };
    std::vector<Bound> bound(cmds.size());
    for (std::size_t i = 0; i < cmds.size(); ++i) {
        auto& b = bound[i];
        b.sub = app.add_subcommand(cmds[i].name, cmds[i].help);
        b.opts["seed"] = b.sub->add_option("--seed", b.seed, "global seed (default 0)");
        b.opts["out"] = b.sub->add_option("--out", b.out, "output directory (default out/<command>)");
        b.opts["config"] = b.sub->add_option("--config", b.config, "key = value file; flags override it");
        for (const auto& [key, def] : cmds[i].defaults) {
            b.opts[key] = b.sub->add_option(flag_name(key), b.values[key], "default: " + (def.empty() ? "(none)" : def));
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    for (std::size_t i = 0; i < cmds.size(); ++i) {
        auto& b = bound[i];
        if (!b.sub->parsed()) continue;
        const Command& cmd = cmds[i];
        KeyValueConfig resolved;
        std::string out_dir = "out/" + cmd.name;
        try {
            for (const auto& [key, def] : cmd.defaults) resolved.set(key, def);
            resolved.set("seed", std::string("0"));
            if (b.opts["config"]->count()) {
                const auto file = KeyValueConfig::load(b.config);
                for (const auto& [key, value] : file.entries()) {
                    if (key != "seed" && key != "out" && !b.values.count(key)) {
                        throw UsageError("config key '" + key + "' is not a parameter of '" + cmd.name + "'");
                    }
                    if (key == "out") {
                        out_dir = value;
                        continue;
                    }
                    resolved.set(key, value);
                }
            }
            for (const auto& [key, opt] : b.opts) {
                if (key == "config" || key == "out" || !opt->count()) continue;
                resolved.set(key, key == "seed" ? b.seed : b.values[key]);
            }
            if (b.opts["out"]->count()) out_dir = b.out;
            if (resolved.contains("gamma") && !resolved.get_string("gamma").empty()) {
                const double g = resolved.get_double("gamma");
                if (!(g >= 0.0) || !std::isfinite(g)) throw UsageError("--gamma must be finite and >= 0");
            }
            resolved.get_uint("seed");
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitUsage;
        }

        RunManifest manifest(cmd.name, out_dir, resolved);
        int code = kExitOk;
        try {
            fs::create_directories(out_dir);
            cmd.run(resolved, manifest);
        } catch (const gfm::NumericalError& e) {
            std::cerr << "numerical failure: " << e.what() << "\n";
            if (manifest.to_json()["status"] == "ok") manifest.set_status("numerical_failure");
            manifest.extra()["error"] = e.what();
            code = kExitNumerical;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            manifest.set_status("usage_error");
            manifest.extra()["error"] = e.what();
            code = kExitUsage;
        }
        try {
            manifest.finalize();
        } catch (const std::exception& e) {
            std::cerr << "error: cannot write manifest: " << e.what() << "\n";
            if (code == kExitOk) code = kExitUsage;
        }
        if (code == kExitOk) std::cout << cmd.name << ": wrote " << out_dir << "\n";
        return code;
    }
    return kExitUsage;
}
