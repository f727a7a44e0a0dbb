#pragma once

// Fully-connected vector field v(x, t): R^D x [0,1] -> R^D.
//
// Time is appended to x as one extra input coordinate. Hidden layers use tanh,
// the output layer is affine. Parameters live in one flat buffer laid out
// layer by layer as [W (out x in, row-major), b (out)], which is also the
// checkpoint and optimizer layout.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "numerics.hpp"

namespace gfm {

using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// Flat gradient of the loss with respect to every model parameter.
struct GradientBuffer {
    std::vector<double> values;

    void zero() { std::fill(values.begin(), values.end(), 0.0); }
    std::size_t size() const { return values.size(); }
};

class VectorFieldModel {
public:
    VectorFieldModel() = default;

    /// `layer_dims` runs from the input width (D+1) to the output width (D).
    explicit VectorFieldModel(std::vector<std::size_t> layer_dims) : dims_(std::move(layer_dims)) {
        if (dims_.size() < 2) throw std::invalid_argument("VectorFieldModel: need at least input and output widths");
        if (dims_.front() != dims_.back() + 1) {
            throw std::invalid_argument("VectorFieldModel: input width must be output width + 1 (x plus t)");
        }
        std::size_t total = 0;
        offsets_.clear();
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            offsets_.push_back(total);
            total += dims_[l + 1] * dims_[l] + dims_[l + 1];
        }
        params_.assign(total, 0.0);
    }

    /// Default architecture: `hidden_layers` tanh layers of width `width`.
    static VectorFieldModel mlp(std::size_t data_dim, std::size_t width = 128, std::size_t hidden_layers = 3) {
        std::vector<std::size_t> dims{data_dim + 1};
        for (std::size_t i = 0; i < hidden_layers; ++i) dims.push_back(width);
        dims.push_back(data_dim);
        return VectorFieldModel(std::move(dims));
    }

    /// Glorot-uniform weights, zero biases, final layer scaled by `final_scale`.
    void initialize(SeededRng& rng, double final_scale = 0.01) {
        std::fill(params_.begin(), params_.end(), 0.0);
        for (std::size_t l = 0; l < num_layers(); ++l) {
            const double fan_in = static_cast<double>(dims_[l]);
            const double fan_out = static_cast<double>(dims_[l + 1]);
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            const double scale = (l + 1 == num_layers()) ? final_scale : 1.0;
            auto w = weight(l);
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = scale * rng.uniform(-limit, limit);
        }
    }

    std::size_t data_dim() const { return dims_.empty() ? 0 : dims_.back(); }
    std::size_t num_layers() const { return dims_.empty() ? 0 : dims_.size() - 1; }
    const std::vector<std::size_t>& layer_dims() const { return dims_; }
    std::size_t parameter_count() const { return params_.size(); }

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }

    RowMajorMap weight(std::size_t l) {
        return {params_.data() + offsets_[l], static_cast<Eigen::Index>(dims_[l + 1]), static_cast<Eigen::Index>(dims_[l])};
    }
    ConstRowMajorMap weight(std::size_t l) const {
        return {params_.data() + offsets_[l], static_cast<Eigen::Index>(dims_[l + 1]), static_cast<Eigen::Index>(dims_[l])};
    }
    Eigen::Map<Eigen::VectorXd> bias(std::size_t l) {
        return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], static_cast<Eigen::Index>(dims_[l + 1])};
    }
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const {
        return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], static_cast<Eigen::Index>(dims_[l + 1])};
    }

    GradientBuffer make_gradient() const { return GradientBuffer{std::vector<double>(params_.size(), 0.0)}; }

    /// Evaluates the field at one point.
    std::vector<double> forward(std::span<const double> x, double t) const {
        if (x.size() != data_dim()) {
            throw std::invalid_argument("forward: expected x of dimension " + std::to_string(data_dim()) + ", got " +
                                        std::to_string(x.size()));
        }
        Matrix xs(1, x.size(), std::vector<double>(x.begin(), x.end()));
        const double ts[1] = {t};
        Matrix out = forward_batch(xs, ts);
        return out.data;
    }

    /// Evaluates the field on the rows of `x` (N x D) at per-row times `t`.
    Matrix forward_batch(const Matrix& x, std::span<const double> t) const {
        const Eigen::MatrixXd out = forward_cols(pack_inputs(x, t));
        return unpack_outputs(out);
    }

    /// Same as forward_batch with one shared time.
    Matrix forward_batch(const Matrix& x, double t) const {
        std::vector<double> ts(x.rows, t);
        return forward_batch(x, ts);
    }

    /// Column-per-sample input block of shape (D+1) x N.
    Eigen::MatrixXd pack_inputs(const Matrix& x, std::span<const double> t) const {
        if (x.cols != data_dim()) {
            throw std::invalid_argument("forward: expected rows of dimension " + std::to_string(data_dim()) + ", got " +
                                        std::to_string(x.cols));
        }
        if (t.size() != x.rows) throw std::invalid_argument("forward: time count does not match batch size");
        const std::size_t d = data_dim();
        Eigen::MatrixXd in(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(x.rows));
        for (std::size_t j = 0; j < x.rows; ++j) {
            for (std::size_t i = 0; i < d; ++i) in(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x(j, i);
            in(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) = t[j];
        }
        return in;
    }

    /// Forward pass on a packed input block; keeps activations when `acts` is non-null.
    /// Throws NumericalError naming the first layer that produced a non-finite value.
    Eigen::MatrixXd forward_cols(const Eigen::MatrixXd& input, std::vector<Eigen::MatrixXd>* acts = nullptr) const {
        Eigen::MatrixXd a = input;
        if (acts) {
            acts->clear();
            acts->push_back(a);
        }
        for (std::size_t l = 0; l < num_layers(); ++l) {
            Eigen::MatrixXd z = weight(l) * a;
            z.colwise() += bias(l);
            if (l + 1 < num_layers()) z = z.array().tanh().matrix();
            if (!z.allFinite()) throw NumericalError("forward: non-finite activation in layer " + std::to_string(l));
            a = std::move(z);
            if (acts) acts->push_back(a);
        }
        if (evaluation_hook_) evaluation_hook_(static_cast<std::size_t>(input.cols()));
        return a;
    }

    Matrix unpack_outputs(const Eigen::MatrixXd& out) const {
        Matrix m(static_cast<std::size_t>(out.cols()), static_cast<std::size_t>(out.rows()));
        for (Eigen::Index j = 0; j < out.cols(); ++j)
            for (Eigen::Index i = 0; i < out.rows(); ++i) m(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = out(i, j);
        return m;
    }

    /// Called once per batched forward pass with the number of points evaluated.
    /// Used by the sampler's NFE instrumentation.
    void set_evaluation_hook(std::function<void(std::size_t)> hook) { evaluation_hook_ = std::move(hook); }

    bool operator==(const VectorFieldModel& o) const { return dims_ == o.dims_ && params_ == o.params_; }

private:
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> offsets_;
    // Aligned base so Eigen's vectorized kernels take the same code path on
    // every allocation; otherwise results can differ in the last bit.
    std::vector<double, Eigen::aligned_allocator<double>> params_;
    std::function<void(std::size_t)> evaluation_hook_;
};

/// Regression inputs for one loss evaluation: interpolants, times, targets and weights.
struct RegressionBatch {
    const Matrix& xt;
    std::span<const double> t;
    const Matrix& ut;
    std::span<const double> weights;  // empty means unweighted (all ones)
};

struct LossAndGradient {
    double loss = 0.0;
    GradientBuffer grads;
};

/// Weighted mean-squared regression loss (1/B) sum_i w_i ||v(x_i, t_i) - u_i||^2
/// and its exact reverse-mode gradient.
inline LossAndGradient loss_and_gradient(const VectorFieldModel& model, const RegressionBatch& batch) {
    const std::size_t b = batch.xt.rows;
    if (batch.ut.rows != b || batch.ut.cols != model.data_dim()) {
        throw std::invalid_argument("loss_and_gradient: target shape does not match batch");
    }
    if (!batch.weights.empty() && batch.weights.size() != b) {
        throw std::invalid_argument("loss_and_gradient: weight count does not match batch");
    }
    for (double w : batch.weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("loss_and_gradient: weights must be nonnegative");
    }

    LossAndGradient out;
    out.grads = model.make_gradient();
    if (b == 0) return out;

    std::vector<Eigen::MatrixXd> acts;
    const Eigen::MatrixXd v = model.forward_cols(model.pack_inputs(batch.xt, batch.t), &acts);

    const auto d = static_cast<Eigen::Index>(model.data_dim());
    Eigen::MatrixXd delta(d, static_cast<Eigen::Index>(b));
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t j = 0; j < b; ++j) {
        const double w = batch.weights.empty() ? 1.0 : batch.weights[j];
        double sq = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            const double r = v(i, static_cast<Eigen::Index>(j)) - batch.ut(j, static_cast<std::size_t>(i));
            sq += r * r;
            delta(i, static_cast<Eigen::Index>(j)) = 2.0 * inv_b * w * r;
        }
        loss += w * sq;
    }
    out.loss = loss * inv_b;
    if (!std::isfinite(out.loss)) throw NumericalError("loss_and_gradient: non-finite loss");

    // Backward pass; `delta` holds dL/dz for the current layer's pre-activation.
    auto& g = out.grads.values;
    std::size_t offset = g.size();
    for (std::size_t l = model.num_layers(); l-- > 0;) {
        const std::size_t out_dim = model.layer_dims()[l + 1];
        const std::size_t in_dim = model.layer_dims()[l];
        offset -= out_dim * in_dim + out_dim;
        RowMajorMap gw(g.data() + offset, static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in_dim));
        Eigen::Map<Eigen::VectorXd> gb(g.data() + offset + out_dim * in_dim, static_cast<Eigen::Index>(out_dim));
        const Eigen::MatrixXd gw_owned = delta * acts[l].transpose();
        gw = gw_owned;
        const Eigen::VectorXd gb_owned = delta.rowwise().sum();
        gb = gb_owned;
        if (l > 0) {
            Eigen::MatrixXd upstream = model.weight(l).transpose() * delta;
            delta = upstream.array() * (1.0 - acts[l].array().square());
        }
    }
    return out;
}

/// Loss only; used by finite-difference checks.
inline double loss_value(const VectorFieldModel& model, const RegressionBatch& batch) {
    const std::size_t b = batch.xt.rows;
    if (b == 0) return 0.0;
    const Eigen::MatrixXd v = model.forward_cols(model.pack_inputs(batch.xt, batch.t));
    double loss = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
        const double w = batch.weights.empty() ? 1.0 : batch.weights[j];
        double sq = 0.0;
        for (std::size_t i = 0; i < model.data_dim(); ++i) {
            const double r = v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - batch.ut(j, i);
            sq += r * r;
        }
        loss += w * sq;
    }
    return loss / static_cast<double>(b);
}

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

/// Compares every reverse-mode derivative with a central finite difference.
inline GradCheckResult grad_check(const VectorFieldModel& model, const RegressionBatch& batch, double h) {
    if (!(h >= 1e-7 && h <= 1e-4)) throw std::invalid_argument("grad_check: h must lie in [1e-7, 1e-4]");
    const LossAndGradient analytic = loss_and_gradient(model, batch);
    VectorFieldModel probe = model;
    auto params = probe.parameters();
    GradCheckResult res;
    for (std::size_t p = 0; p < params.size(); ++p) {
        const double saved = params[p];
        params[p] = saved + h;
        const double up = loss_value(probe, batch);
        params[p] = saved - h;
        const double down = loss_value(probe, batch);
        params[p] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double a = analytic.grads.values[p];
        const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-12});
        if (rel > res.max_relative_error) {
            res.max_relative_error = rel;
            res.worst_index = p;
        }
        ++res.checked;
    }
    return res;
}

/// Adam moments and hyperparameters.
struct OptimizerState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
};

/// One bias-corrected Adam update. Leaves the model untouched if `grads` is not finite.
inline void optimizer_step(VectorFieldModel& model, const GradientBuffer& grads, OptimizerState& state) {
    auto params = model.parameters();
    if (grads.size() != params.size()) throw std::invalid_argument("optimizer_step: gradient shape mismatch");
    if (!all_finite(grads.values)) throw NumericalError("optimizer_step: non-finite gradient");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads.values[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

/// Central-difference Jacobian dv_i/dx_j at (x, t).
inline Matrix jacobian_fd(const VectorFieldModel& model, std::span<const double> x, double t, double h) {
    const std::size_t d = model.data_dim();
    if (x.size() != d) throw std::invalid_argument("jacobian_fd: dimension mismatch");
    Matrix probes(2 * d, d);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < d; ++i) {
            probes(2 * j, i) = x[i];
            probes(2 * j + 1, i) = x[i];
        }
        probes(2 * j, j) += h;
        probes(2 * j + 1, j) -= h;
    }
    const Matrix out = model.forward_batch(probes, t);
    Matrix jac(d, d);
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i) jac(i, j) = (out(2 * j, i) - out(2 * j + 1, i)) / (2.0 * h);
    return jac;
}

/// Default step for jacobian_fd.
inline double jacobian_step(std::span<const double> x) {
    double n = 0.0;
    for (double v : x) n += v * v;
    return 1e-5 * (1.0 + std::sqrt(n));
}

// ---------------------------------------------------------------------------
// Checkpoints: one JSON header line, a newline, then the raw little-endian
// float64 parameter array.

struct CheckpointMeta {
    std::uint64_t seed = 0;
    double gamma = 0.0;
    std::size_t k = 0;
    std::uint64_t iteration = 0;
};

namespace detail {
inline void append_le_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}
inline double read_le_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}
}  // namespace detail

inline std::string serialize_checkpoint(const VectorFieldModel& model, const CheckpointMeta& meta) {
    nlohmann::ordered_json header;
    header["format"] = "gammafm-checkpoint-v1";
    header["layer_dims"] = model.layer_dims();
    header["activation"] = "tanh";
    header["seed"] = meta.seed;
    header["gamma"] = meta.gamma;
    header["k"] = meta.k;
    header["iteration"] = meta.iteration;
    header["parameter_count"] = model.parameter_count();
    std::string buf = header.dump();
    buf.push_back('\n');
    for (double p : model.parameters()) detail::append_le_f64(buf, p);
    return buf;
}

inline std::pair<VectorFieldModel, CheckpointMeta> deserialize_checkpoint(const std::string& buf) {
    const auto nl = buf.find('\n');
    if (nl == std::string::npos) throw std::runtime_error("checkpoint: missing header terminator");
    const auto header = nlohmann::json::parse(buf.substr(0, nl));
    if (header.value("format", "") != "gammafm-checkpoint-v1") throw std::runtime_error("checkpoint: unknown format");
    if (header.value("activation", "") != "tanh") throw std::runtime_error("checkpoint: unsupported activation");
    VectorFieldModel model(header.at("layer_dims").get<std::vector<std::size_t>>());
    CheckpointMeta meta;
    meta.seed = header.at("seed").get<std::uint64_t>();
    meta.gamma = header.at("gamma").get<double>();
    meta.k = header.at("k").get<std::size_t>();
    meta.iteration = header.value("iteration", std::uint64_t{0});
    const std::size_t count = model.parameter_count();
    if (buf.size() - nl - 1 != count * 8) throw std::runtime_error("checkpoint: parameter payload has wrong length");
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + nl + 1);
    auto params = model.parameters();
    for (std::size_t i = 0; i < count; ++i) params[i] = detail::read_le_f64(p + 8 * i);
    return {std::move(model), meta};
}

inline void save_checkpoint(const std::string& path, const VectorFieldModel& model, const CheckpointMeta& meta) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint " + path);
    const std::string buf = serialize_checkpoint(model, meta);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline std::pair<VectorFieldModel, CheckpointMeta> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read checkpoint " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace gfm
