// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cupmu/common.hpp"

namespace cupmu {

enum class Activation { ReLU };

inline std::string to_string(Activation) { return "relu"; }

inline Activation parse_activation(const std::string& s) {
    if (s == "relu" || s == "ReLU") return Activation::ReLU;
    throw Error(ErrorCode::Config, "unknown activation '" + s + "'");
}

/// Dense feed-forward classifier shape. Hidden layers use the activation,
/// the output layer produces raw logits.
class MlpSpec {
public:
    MlpSpec(std::size_t input_dim, std::vector<std::size_t> hidden_dims, std::size_t output_dim,
            Activation activation = Activation::ReLU)
        : input_dim_(input_dim), hidden_(std::move(hidden_dims)), output_dim_(output_dim),
          activation_(activation) {
        require(input_dim_ > 0, ErrorCode::Config, "input_dim must be positive");
        require(!hidden_.empty(), ErrorCode::Config, "at least one hidden layer is required");
        for (auto h : hidden_) require(h > 0, ErrorCode::Config, "hidden widths must be positive");
        require(output_dim_ >= 2, ErrorCode::Config, "output_dim must be at least 2");
    }

    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t output_dim() const noexcept { return output_dim_; }
    const std::vector<std::size_t>& hidden_dims() const noexcept { return hidden_; }
    Activation activation() const noexcept { return activation_; }

    std::size_t num_layers() const noexcept { return hidden_.size() + 1; }
    std::size_t fan_in(std::size_t layer) const { return layer == 0 ? input_dim_ : hidden_[layer - 1]; }
    std::size_t fan_out(std::size_t layer) const {
        return layer == hidden_.size() ? output_dim_ : hidden_[layer];
    }

    /// Offset of layer `layer`'s weight block; its bias follows the weights.
    std::size_t layer_offset(std::size_t layer) const {
        std::size_t off = 0;
        for (std::size_t l = 0; l < layer; ++l) off += (fan_in(l) + 1) * fan_out(l);
        return off;
    }

    std::size_t num_params() const { return layer_offset(num_layers()); }

    std::string canonical() const {
        std::string s = std::to_string(input_dim_);
        for (auto h : hidden_) s += "-" + std::to_string(h);
        s += "-" + std::to_string(output_dim_) + ":" + to_string(activation_);
        return s;
    }

    std::uint64_t hash() const { return fnv1a(canonical()); }

    bool operator==(const MlpSpec&) const = default;

private:
    std::size_t input_dim_;
    std::vector<std::size_t> hidden_;
    std::size_t output_dim_;
    Activation activation_;
};

struct ParamVector {
    Vec values;
    std::uint64_t spec_hash = 0;

    std::size_t size() const noexcept { return values.size(); }

    void validate(const MlpSpec& spec) const {
        require(values.size() == spec.num_params(), ErrorCode::DimensionMismatch,
                "parameter count does not match the model");
        require(spec_hash == spec.hash(), ErrorCode::DimensionMismatch, "parameter spec hash mismatch");
        require(all_finite(values), ErrorCode::NonFinite, "parameters contain non-finite entries");
    }

    bool operator==(const ParamVector&) const = default;
};

/// Row-major feature matrix with integer class labels.
class LabeledDataset {
public:
    LabeledDataset() = default;

    LabeledDataset(std::size_t cols, Vec features, std::vector<int> labels)
        : cols_(cols), features_(std::move(features)), labels_(std::move(labels)) {
        require(cols_ > 0, ErrorCode::DimensionMismatch, "dataset needs at least one feature column");
        require(features_.size() == cols_ * labels_.size(), ErrorCode::DimensionMismatch,
                "feature row count does not match label count");
    }

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    std::size_t cols() const noexcept { return cols_; }
    std::span<const double> row(std::size_t i) const { return {features_.data() + i * cols_, cols_}; }
    int label(std::size_t i) const { return labels_[i]; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    const Vec& features() const noexcept { return features_; }

    void check_labels(std::size_t num_classes) const {
        for (int y : labels_)
            require(y >= 0 && static_cast<std::size_t>(y) < num_classes, ErrorCode::Config,
                    "label " + std::to_string(y) + " is not a valid class index");
    }

    LabeledDataset subset(std::span<const std::size_t> idx) const {
        Vec f;
        f.reserve(idx.size() * cols_);
        std::vector<int> y;
        y.reserve(idx.size());
        for (auto i : idx) {
            auto r = row(i);
            f.insert(f.end(), r.begin(), r.end());
            y.push_back(labels_[i]);
        }
        return {cols_, std::move(f), std::move(y)};
    }

    LabeledDataset with_labels(std::vector<int> labels) const {
        return {cols_, features_, std::move(labels)};
    }

    bool operator==(const LabeledDataset&) const = default;

private:
    std::size_t cols_ = 0;
    Vec features_;
    std::vector<int> labels_;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
inline ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
    ParamVector p{Vec(spec.num_params(), 0.0), spec.hash()};
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in(l)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        const std::size_t off = spec.layer_offset(l);
        for (std::size_t k = 0; k < spec.fan_in(l) * spec.fan_out(l); ++k) p.values[off + k] = dist(rng);
    }
    return p;
}

namespace detail {

// Activations of every layer for one sample; acts[0] is the input,
// pre[l] the pre-activation of layer l.
struct Trace {
    std::vector<Vec> acts;
    std::vector<Vec> pre;
};

inline void forward_one(const MlpSpec& spec, std::span<const double> theta, std::span<const double> x,
                        Trace& tr) {
    const std::size_t L = spec.num_layers();
    tr.acts.resize(L + 1);
    tr.pre.resize(L);
    tr.acts[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t in = spec.fan_in(l), out = spec.fan_out(l);
        const double* W = theta.data() + spec.layer_offset(l);
        const double* b = W + in * out;
        const Vec& h = tr.acts[l];
        Vec& z = tr.pre[l];
        z.assign(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            double s = b[o];
            const double* w = W + o * in;
            for (std::size_t i = 0; i < in; ++i) s += w[i] * h[i];
            z[o] = s;
        }
        Vec& a = tr.acts[l + 1];
        a = z;
        if (l + 1 < L)
            for (double& v : a) v = std::max(v, 0.0);
    }
}

inline void check_inputs(const MlpSpec& spec, const ParamVector& theta, std::size_t cols) {
    require(theta.size() == spec.num_params(), ErrorCode::DimensionMismatch,
            "parameter vector length does not match the model");
    require(cols == spec.input_dim(), ErrorCode::DimensionMismatch,
            "feature column count does not match input_dim");
}

// log-sum-exp with max subtraction
inline double log_softmax_at(std::span<const double> z, std::size_t k) {
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    return z[k] - mx - std::log(s);
}

}  // namespace detail

/// Row-major logits, rows = samples, cols = classes.
inline Vec forward_logits(const MlpSpec& spec, const ParamVector& theta, const LabeledDataset& X) {
    detail::check_inputs(spec, theta, X.cols());
    Vec out;
    out.reserve(X.size() * spec.output_dim());
    detail::Trace tr;
    for (std::size_t n = 0; n < X.size(); ++n) {
        detail::forward_one(spec, theta.values, X.row(n), tr);
        out.insert(out.end(), tr.acts.back().begin(), tr.acts.back().end());
    }
    return out;
}

/// Logits of a single input point.
inline Vec forward_point(const MlpSpec& spec, const ParamVector& theta, std::span<const double> x) {
    require(x.size() == spec.input_dim(), ErrorCode::DimensionMismatch, "input dimension mismatch");
    detail::Trace tr;
    detail::forward_one(spec, theta.values, x, tr);
    return tr.acts.back();
}

inline std::size_t argmax(std::span<const double> z) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < z.size(); ++k)
        if (z[k] > z[best]) best = k;
    return best;
}

struct LossGrad {
    double loss = 0.0;
    ParamVector grad;
};

/// sign * mean cross-entropy over `data` and its exact gradient. sign = -1
/// gives the forgetting loss, sign = +1 the remaining loss.
inline LossGrad ce_loss_and_grad(const MlpSpec& spec, const ParamVector& theta, const LabeledDataset& data,
                                 int sign) {
    require(sign == 1 || sign == -1, ErrorCode::Config, "sign must be +1 or -1");
    require(!data.empty(), ErrorCode::EmptyDataset, "cross-entropy over an empty dataset");
    detail::check_inputs(spec, theta, data.cols());

    const std::size_t L = spec.num_layers();
    Vec grad(theta.size(), 0.0);
    double total = 0.0;
    detail::Trace tr;
    std::vector<Vec> delta(L);

    for (std::size_t n = 0; n < data.size(); ++n) {
        detail::forward_one(spec, theta.values, data.row(n), tr);
        const Vec& z = tr.acts.back();
        const auto y = static_cast<std::size_t>(data.label(n));
        require(y < spec.output_dim(), ErrorCode::Config, "label out of range");

        const double mx = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (double v : z) s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        total += lse - z[y];

        Vec& dz = delta[L - 1];
        dz.resize(z.size());
        for (std::size_t k = 0; k < z.size(); ++k) dz[k] = std::exp(z[k] - lse);
        dz[y] -= 1.0;

        for (std::size_t l = L; l-- > 0;) {
            const std::size_t in = spec.fan_in(l), out = spec.fan_out(l);
            const std::size_t off = spec.layer_offset(l);
            const double* W = theta.values.data() + off;
            double* gW = grad.data() + off;
            double* gb = gW + in * out;
            const Vec& h = tr.acts[l];
            const Vec& d = delta[l];
            for (std::size_t o = 0; o < out; ++o) {
                gb[o] += d[o];
                if (d[o] == 0.0) continue;
                double* gw = gW + o * in;
                for (std::size_t i = 0; i < in; ++i) gw[i] += d[o] * h[i];
            }
            if (l == 0) break;
            Vec& prev = delta[l - 1];
            prev.assign(in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                if (d[o] == 0.0) continue;
                const double* w = W + o * in;
                for (std::size_t i = 0; i < in; ++i) prev[i] += w[i] * d[o];
            }
            const Vec& zprev = tr.pre[l - 1];
            for (std::size_t i = 0; i < in; ++i)
                if (zprev[i] <= 0.0) prev[i] = 0.0;
        }
    }

    const double scale = static_cast<double>(sign) / static_cast<double>(data.size());
    for (double& g : grad) g *= scale;
    return {scale * total, ParamVector{std::move(grad), theta.spec_hash}};
}

/// Loss only; cheaper than ce_loss_and_grad when no gradient is needed.
inline double ce_loss(const MlpSpec& spec, const ParamVector& theta, const LabeledDataset& data, int sign = 1) {
    require(!data.empty(), ErrorCode::EmptyDataset, "cross-entropy over an empty dataset");
    detail::check_inputs(spec, theta, data.cols());
    double total = 0.0;
    detail::Trace tr;
    for (std::size_t n = 0; n < data.size(); ++n) {
        detail::forward_one(spec, theta.values, data.row(n), tr);
        total -= detail::log_softmax_at(tr.acts.back(), static_cast<std::size_t>(data.label(n)));
    }
    return sign * total / static_cast<double>(data.size());
}

inline Vec per_sample_ce(const MlpSpec& spec, const ParamVector& theta, const LabeledDataset& data) {
    detail::check_inputs(spec, theta, data.cols());
    Vec out(data.size());
    detail::Trace tr;
    for (std::size_t n = 0; n < data.size(); ++n) {
        detail::forward_one(spec, theta.values, data.row(n), tr);
        out[n] = -detail::log_softmax_at(tr.acts.back(), static_cast<std::size_t>(data.label(n)));
    }
    return out;
}

/// Argmax class per row; ties go to the lowest index.
inline std::vector<int> predict(const MlpSpec& spec, const ParamVector& theta, const LabeledDataset& data) {
    detail::check_inputs(spec, theta, data.cols());
    std::vector<int> out(data.size());
    detail::Trace tr;
    for (std::size_t n = 0; n < data.size(); ++n) {
        detail::forward_one(spec, theta.values, data.row(n), tr);
        out[n] = static_cast<int>(argmax(tr.acts.back()));
    }
    return out;
}

/// Percentage of rows whose argmax prediction equals the label.
inline double accuracy(const MlpSpec& spec, const ParamVector& theta, const LabeledDataset& data) {
    require(!data.empty(), ErrorCode::EmptyDataset, "accuracy over an empty dataset");
    const auto pred = predict(spec, theta, data);
    std::size_t hit = 0;
    for (std::size_t n = 0; n < data.size(); ++n) hit += pred[n] == data.label(n);
    return 100.0 * static_cast<double>(hit) / static_cast<double>(data.size());
}

/// Accuracy per class; classes absent from `data` report NaN.
inline Vec per_class_accuracy(const MlpSpec& spec, const ParamVector& theta, const LabeledDataset& data) {
    const auto pred = predict(spec, theta, data);
    Vec hit(spec.output_dim(), 0.0), cnt(spec.output_dim(), 0.0);
    for (std::size_t n = 0; n < data.size(); ++n) {
        const auto y = static_cast<std::size_t>(data.label(n));
        cnt[y] += 1.0;
        hit[y] += pred[n] == data.label(n);
    }
    Vec out(spec.output_dim());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = cnt[k] > 0 ? 100.0 * hit[k] / cnt[k] : std::nan("");
    return out;
}

// ---- optimizers ------------------------------------------------------------

enum class OptimizerMode { SGD, ADAM };

inline std::string to_string(OptimizerMode m) { return m == OptimizerMode::SGD ? "sgd" : "adam"; }

inline OptimizerMode parse_optimizer(const std::string& s) {
    if (s == "sgd" || s == "SGD") return OptimizerMode::SGD;
    if (s == "adam" || s == "ADAM") return OptimizerMode::ADAM;
    throw Error(ErrorCode::Config, "unknown optimizer '" + s + "'");
}

struct OptimizerState {
    Vec m, v;
    std::uint64_t t = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One in-place descent step. Entries with mask[i] == 0 are left untouched
/// (including their moment estimates); an empty mask updates everything.
inline void optimizer_step(std::span<double> theta, std::span<const double> g, OptimizerState& state,
                           OptimizerMode mode, double lr, std::span<const std::uint8_t> mask = {}) {
    require(lr > 0.0, ErrorCode::Config, "learning rate must be positive");
    require(theta.size() == g.size(), ErrorCode::DimensionMismatch, "gradient length mismatch");
    require(mask.empty() || mask.size() == g.size(), ErrorCode::DimensionMismatch, "mask length mismatch");
    require(all_finite(g), ErrorCode::NonFinite, "gradient contains non-finite entries");

    if (mode == OptimizerMode::SGD) {
        for (std::size_t i = 0; i < theta.size(); ++i)
            if (mask.empty() || mask[i]) theta[i] -= lr * g[i];
        return;
    }
    if (state.m.empty()) {
        state.m.assign(g.size(), 0.0);
        state.v.assign(g.size(), 0.0);
    }
    require(state.m.size() == g.size(), ErrorCode::DimensionMismatch, "optimizer state length mismatch");
    ++state.t;
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * g[i];
        state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

}  // namespace cupmu
