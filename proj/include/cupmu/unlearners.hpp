// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <time.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cupmu/checkpoint.hpp"
#include "cupmu/common.hpp"
#include "cupmu/datagen.hpp"
#include "cupmu/metrics.hpp"
#include "cupmu/nn.hpp"
#include "cupmu/pivot.hpp"

namespace cupmu {

enum class Method { Retrain, GA, WS, RL, L1Sparse, SalUn, CUP };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::Retrain: return "retrain";
        case Method::GA: return "ga";
        case Method::WS: return "ws";
        case Method::RL: return "rl";
        case Method::L1Sparse: return "l1_sparse";
        case Method::SalUn: return "salun";
        case Method::CUP: return "cup";
    }
    return "?";
}

inline Method parse_method(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "retrain") return Method::Retrain;
    if (s == "ga") return Method::GA;
    if (s == "ws") return Method::WS;
    if (s == "rl") return Method::RL;
    if (s == "l1_sparse" || s == "l1sparse" || s == "l1") return Method::L1Sparse;
    if (s == "salun") return Method::SalUn;
    if (s == "cup") return Method::CUP;
    throw Error(ErrorCode::Config, "unknown method '" + s + "'");
}

/// Supervised training recipe, used for pre-training and retraining.
struct TrainRecipe {
    OptimizerMode optimizer = OptimizerMode::ADAM;
    double lr = 1e-2;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;  // 0 = full batch
};

struct UnlearnConfig {
    Method method = Method::CUP;
    double lr = 1e-2;
    std::size_t epochs = 20;
    double gamma = 0.5;
    double w_f = 1.0;
    double w_r = 1.0;
    double alpha = 0.0;
    double salun_threshold = 0.5;
    std::optional<OptimizerMode> optimizer;  // unset: SGD for CUP, ADAM otherwise
    bool cup_adam = false;                   // permits non-canonical ADAM updates for CUP
    std::size_t batch_size = 0;              // 0 = full batch
    std::uint64_t seed = 0;

    OptimizerMode effective_optimizer() const {
        if (optimizer) return *optimizer;
        return method == Method::CUP ? OptimizerMode::SGD : OptimizerMode::ADAM;
    }

    void validate() const {
        require(lr > 0.0 && std::isfinite(lr), ErrorCode::Config, "lr must be positive");
        require(epochs >= 1, ErrorCode::Config, "epochs must be at least 1");
        require(gamma >= 0.0 && gamma <= 1.0, ErrorCode::Config, "gamma must lie in [0,1]");
        require(w_f >= 0.0 && w_r >= 0.0, ErrorCode::Config, "weights must be non-negative");
        require(alpha >= 0.0, ErrorCode::Config, "alpha must be non-negative");
        if (method == Method::WS || method == Method::L1Sparse || method == Method::CUP)
            require(w_f > 0.0 || w_r > 0.0, ErrorCode::Config, "weights must not both be zero");
        if (method == Method::SalUn)
            require(salun_threshold > 0.0 && salun_threshold <= 1.0, ErrorCode::Config,
                    "salun_threshold must lie in (0,1]");
        if (method == Method::CUP && effective_optimizer() == OptimizerMode::ADAM)
            require(cup_adam, ErrorCode::Config, "ADAM updates for CUP require cup_adam = true");
    }
};

struct RunRecord {
    UnlearnConfig config;
    ParamVector final_params;
    std::vector<std::pair<double, double>> loss_trace;  // per epoch (L_f, L_r)
    std::vector<StepDiagnostic> diagnostics;            // CUP only
    std::size_t fallback_steps = 0;
    double wall_time = 0.0;
};

/// Called after every parameter update with the batches that produced it.
struct StepEvent {
    std::size_t step;
    const ParamVector& before;
    const ParamVector& after;
    const LabeledDataset& forget_batch;
    const LabeledDataset& remain_batch;
};
using StepObserver = std::function<void(const StepEvent&)>;

namespace detail {

inline double thread_cpu_seconds() {
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

// Contiguous index ranges covering [0, n) in `parts` pieces.
inline std::pair<std::size_t, std::size_t> part_range(std::size_t n, std::size_t parts, std::size_t k) {
    return {k * n / parts, (k + 1) * n / parts};
}

inline std::vector<std::size_t> iota_vec(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

// Stream ids for derive_seed within a run.
enum Stream : std::uint64_t { kProxy = 1, kShuffle = 2, kRelabel = 3, kInit = 4 };

inline std::uint64_t epoch_seed(std::uint64_t run_seed, Stream s, std::size_t epoch) {
    return derive_seed(derive_seed(run_seed, s), epoch);
}

}  // namespace detail

/// Replaces every label with one drawn uniformly from the other classes.
inline LabeledDataset relabel_excluding_true(const LabeledDataset& data, std::size_t num_classes, std::uint64_t seed) {
    require(num_classes >= 2, ErrorCode::Config, "random labels need at least two classes");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(num_classes) - 2);
    std::vector<int> labels(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int r = pick(rng);
        labels[i] = r >= data.label(i) ? r + 1 : r;
    }
    return data.with_labels(std::move(labels));
}

/// Marks the top ceil(fraction * d) entries by |grad|; ties go to lower indices.
inline std::vector<std::uint8_t> saliency_mask(std::span<const double> grad, double fraction) {
    require(fraction > 0.0 && fraction <= 1.0, ErrorCode::Config, "mask fraction must lie in (0,1]");
    const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(grad.size())));
    auto order = detail::iota_vec(grad.size());
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::abs(grad[a]) > std::abs(grad[b]); });
    std::vector<std::uint8_t> mask(grad.size(), 0);
    for (std::size_t i = 0; i < std::min(keep, grad.size()); ++i) mask[order[i]] = 1;
    return mask;
}

/// Minibatch training on `data`; returns the per-epoch mean training loss.
inline Vec train_supervised(const MlpSpec& spec, ParamVector& theta, const LabeledDataset& data,
                            const TrainRecipe& recipe, std::uint64_t seed,
                            const std::function<void(const ParamVector&)>& on_epoch = {}) {
    require(!data.empty(), ErrorCode::EmptyDataset, "training set is empty");
    require(recipe.epochs >= 1 && recipe.lr > 0.0, ErrorCode::Config, "invalid training recipe");
    OptimizerState state;
    Vec curve;
    const std::size_t bs = recipe.batch_size == 0 ? data.size() : std::min(recipe.batch_size, data.size());
    for (std::size_t e = 0; e < recipe.epochs; ++e) {
        auto order = detail::iota_vec(data.size());
        std::mt19937_64 rng(detail::epoch_seed(seed, detail::kShuffle, e));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            const auto batch = data.subset(std::span<const std::size_t>(order).subspan(start, end - start));
            const auto lg = ce_loss_and_grad(spec, theta, batch, +1);
            optimizer_step(theta.values, lg.grad.values, state, recipe.optimizer, recipe.lr);
        }
        const double loss = ce_loss(spec, theta, data);
        require(std::isfinite(loss), ErrorCode::NonFinite, "training loss became non-finite at epoch " + std::to_string(e));
        curve.push_back(loss);
        if (on_epoch) on_epoch(theta);
    }
    return curve;
}

/// Fresh initialization trained on the remain set only.
inline RunRecord run_retrain(const MlpSpec& spec, const ForgetSplit& split, const TrainRecipe& recipe,
                             std::uint64_t seed) {
    require(!split.remain.empty(), ErrorCode::EmptyDataset, "remain set is empty");
    RunRecord rec;
    rec.config.method = Method::Retrain;
    rec.config.lr = recipe.lr;
    rec.config.epochs = recipe.epochs;
    rec.config.optimizer = recipe.optimizer;
    rec.config.batch_size = recipe.batch_size;
    rec.config.seed = seed;
    const double t0 = detail::thread_cpu_seconds();
    rec.final_params = init_params(spec, derive_seed(seed, detail::kInit));
    train_supervised(spec, rec.final_params, split.remain, recipe, seed, [&](const ParamVector& th) {
        rec.loss_trace.emplace_back(ce_loss(spec, th, split.forget, -1), ce_loss(spec, th, split.remain, +1));
    });
    rec.wall_time = detail::thread_cpu_seconds() - t0;
    return rec;
}

namespace detail {

// Shared epoch/batch loop for every gradient-based unlearning method.
// `direction` maps (theta, forget batch, remain batch, step) to the update.
template <typename DirectionFn>
RunRecord unlearn_loop(const MlpSpec& spec, const ParamVector& theta0, const ForgetSplit& split,
                       const UnlearnConfig& cfg, bool relabel_forget, std::span<const std::uint8_t> mask,
                       DirectionFn&& direction, const StepObserver& observer) {
    cfg.validate();
    theta0.validate(spec);
    require(!split.forget.empty(), ErrorCode::EmptyDataset, "forget set is empty");
    require(!split.remain.empty(), ErrorCode::EmptyDataset, "remain set is empty");

    RunRecord rec;
    rec.config = cfg;
    rec.final_params = theta0;
    ParamVector& theta = rec.final_params;
    OptimizerState state;
    const OptimizerMode mode = cfg.effective_optimizer();
    const double t0 = thread_cpu_seconds();
    std::size_t step = 0;

    const std::size_t nf = split.forget.size();
    const std::size_t bs = cfg.batch_size == 0 ? nf : std::min(cfg.batch_size, nf);
    const std::size_t batches = (nf + bs - 1) / bs;

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const LabeledDataset proxy = sample_remain_proxy(split.remain, std::min(nf, split.remain.size()),
                                                         epoch_seed(cfg.seed, kProxy, e));
        const LabeledDataset forget =
            relabel_forget ? relabel_excluding_true(split.forget, spec.output_dim(), epoch_seed(cfg.seed, kRelabel, e))
                           : split.forget;
        auto order = iota_vec(nf);
        if (batches > 1) {
            std::mt19937_64 rng(epoch_seed(cfg.seed, kShuffle, e));
            std::shuffle(order.begin(), order.end(), rng);
        }
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t start = b * bs, end = std::min(nf, start + bs);
            const auto fb = batches == 1 ? forget
                                         : forget.subset(std::span<const std::size_t>(order).subspan(start, end - start));
            const auto [ps, pe] = part_range(proxy.size(), batches, b);
            const auto pidx = iota_vec(pe - ps);
            std::vector<std::size_t> prow(pidx.size());
            for (std::size_t i = 0; i < pidx.size(); ++i) prow[i] = ps + i;
            const auto rb = batches == 1 ? proxy : proxy.subset(prow);

            const Vec g = direction(theta, fb, rb, step);
            if (observer) {
                ParamVector before = theta;
                optimizer_step(theta.values, g, state, mode, cfg.lr, mask);
                observer(StepEvent{step, before, theta, fb, rb});
            } else {
                optimizer_step(theta.values, g, state, mode, cfg.lr, mask);
            }
            ++step;
        }
        require(all_finite(theta.values), ErrorCode::NonFinite, "parameters diverged at epoch " + std::to_string(e));
        rec.loss_trace.emplace_back(ce_loss(spec, theta, split.forget, -1), ce_loss(spec, theta, split.remain, +1));
    }
    rec.wall_time = thread_cpu_seconds() - t0;
    return rec;
}

inline Vec weighted_sum(double a, const Vec& x, double b, const Vec& y) {
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
    return out;
}

}  // namespace detail

/// Gradient ascent on the forget set: descends L_f alone.
inline RunRecord run_ga(const MlpSpec& spec, const ParamVector& theta0, const ForgetSplit& split,
                        const UnlearnConfig& cfg, const StepObserver& observer = {}) {
    auto dir = [&](const ParamVector& th, const LabeledDataset& fb, const LabeledDataset&, std::size_t) {
        return ce_loss_and_grad(spec, th, fb, -1).grad.values;
    };
    return detail::unlearn_loop(spec, theta0, split, cfg, false, {}, dir, observer);
}

/// Weighted scalarization w_f L_f + w_r L_r.
inline RunRecord run_ws(const MlpSpec& spec, const ParamVector& theta0, const ForgetSplit& split,
                        const UnlearnConfig& cfg, const StepObserver& observer = {}) {
    auto dir = [&](const ParamVector& th, const LabeledDataset& fb, const LabeledDataset& rb, std::size_t) {
        const auto gf = ce_loss_and_grad(spec, th, fb, -1).grad.values;
        const auto gr = ce_loss_and_grad(spec, th, rb, +1).grad.values;
        return detail::weighted_sum(cfg.w_f, gf, cfg.w_r, gr);
    };
    return detail::unlearn_loop(spec, theta0, split, cfg, false, {}, dir, observer);
}

/// WS objective plus alpha * |theta|_1 (subgradient sign(theta), 0 at 0).
inline RunRecord run_l1_sparse(const MlpSpec& spec, const ParamVector& theta0, const ForgetSplit& split,
                               const UnlearnConfig& cfg, const StepObserver& observer = {}) {
    auto dir = [&](const ParamVector& th, const LabeledDataset& fb, const LabeledDataset& rb, std::size_t) {
        const auto gf = ce_loss_and_grad(spec, th, fb, -1).grad.values;
        const auto gr = ce_loss_and_grad(spec, th, rb, +1).grad.values;
        Vec g = detail::weighted_sum(cfg.w_f, gf, cfg.w_r, gr);
        if (cfg.alpha > 0.0)
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += cfg.alpha * static_cast<double>((th.values[i] > 0.0) - (th.values[i] < 0.0));
        return g;
    };
    return detail::unlearn_loop(spec, theta0, split, cfg, false, {}, dir, observer);
}

namespace detail {

inline RunRecord rl_with_mask(const MlpSpec& spec, const ParamVector& theta0, const ForgetSplit& split,
                              const UnlearnConfig& cfg, std::span<const std::uint8_t> mask, const StepObserver& observer) {
    require(spec.output_dim() >= 2, ErrorCode::Config, "random labeling needs at least two classes");
    auto dir = [&](const ParamVector& th, const LabeledDataset& fb, const LabeledDataset& rb, std::size_t) {
        const auto gf = ce_loss_and_grad(spec, th, fb, +1).grad.values;
        const auto gr = ce_loss_and_grad(spec, th, rb, +1).grad.values;
        return weighted_sum(cfg.w_f, gf, cfg.w_r, gr);
    };
    return unlearn_loop(spec, theta0, split, cfg, true, mask, dir, observer);
}

}  // namespace detail

/// Fine-tunes on the forget set with random wrong labels plus the remain proxy.
inline RunRecord run_rl(const MlpSpec& spec, const ParamVector& theta0, const ForgetSplit& split,
                        const UnlearnConfig& cfg, const StepObserver& observer = {}) {
    return detail::rl_with_mask(spec, theta0, split, cfg, {}, observer);
}

/// RL restricted to the parameters most salient for the forget loss at theta0.
inline RunRecord run_salun_mask(const MlpSpec& spec, const ParamVector& theta0, const ForgetSplit& split,
                                const UnlearnConfig& cfg, const StepObserver& observer = {}) {
    cfg.validate();
    require(!split.forget.empty(), ErrorCode::EmptyDataset, "forget set is empty");
    const auto saliency = ce_loss_and_grad(spec, theta0, split.forget, -1).grad.values;
    const auto mask = saliency_mask(saliency, cfg.salun_threshold);
    return detail::rl_with_mask(spec, theta0, split, cfg, mask, observer);
}

/// Pivoting-gradient unlearning: each step moves along |g_total| * g_gamma.
/// Degenerate frames fall back to g_total and are counted in fallback_steps.
inline RunRecord run_cup(const MlpSpec& spec, const ParamVector& theta0, const ForgetSplit& split,
                         const UnlearnConfig& cfg, const StepObserver& observer = {}) {
    std::vector<StepDiagnostic> diag;
    std::size_t fallbacks = 0;
    auto dir = [&](const ParamVector& th, const LabeledDataset& fb, const LabeledDataset& rb, std::size_t step) {
        GradientPair gp{ce_loss_and_grad(spec, th, fb, -1).grad.values, ce_loss_and_grad(spec, th, rb, +1).grad.values,
                        cfg.w_f, cfg.w_r};
        CupStep cs = cup_step(gp, cfg.gamma);
        const auto check = conflict_free_check(cs.direction, gp);
        StepDiagnostic d;
        d.step = step;
        d.grad_dot = dot(gp.grad_f, gp.grad_r);
        d.phi = cs.frame.phi;
        d.gamma_phi = cfg.gamma * cs.frame.phi;
        d.ip_f = check.ip_f;
        d.ip_r = check.ip_r;
        d.flags = cs.flags;
        d.fallback = cs.fallback;
        diag.push_back(d);
        fallbacks += cs.fallback;
        return std::move(cs.direction);
    };
    auto rec = detail::unlearn_loop(spec, theta0, split, cfg, false, {}, dir, observer);
    rec.diagnostics = std::move(diag);
    rec.fallback_steps = fallbacks;
    return rec;
}

/// Dispatches on cfg.method. Retraining uses `retrain_recipe`.
inline RunRecord run_method(const MlpSpec& spec, const ParamVector& theta0, const ForgetSplit& split,
                            const UnlearnConfig& cfg, const TrainRecipe& retrain_recipe = {}) {
    switch (cfg.method) {
        case Method::Retrain: return run_retrain(spec, split, retrain_recipe, cfg.seed);
        case Method::GA: return run_ga(spec, theta0, split, cfg);
        case Method::WS: return run_ws(spec, theta0, split, cfg);
        case Method::RL: return run_rl(spec, theta0, split, cfg);
        case Method::L1Sparse: return run_l1_sparse(spec, theta0, split, cfg);
        case Method::SalUn: return run_salun_mask(spec, theta0, split, cfg);
        case Method::CUP: return run_cup(spec, theta0, split, cfg);
    }
    throw Error(ErrorCode::Config, "unknown method");
}

// ---- persistence ------------------------------------------------------------

inline nlohmann::json config_to_json(const UnlearnConfig& c) {
    nlohmann::json j{{"method", to_string(c.method)},
                     {"lr", c.lr},
                     {"epochs", c.epochs},
                     {"gamma", c.gamma},
                     {"w_f", c.w_f},
                     {"w_r", c.w_r},
                     {"alpha", c.alpha},
                     {"salun_threshold", c.salun_threshold},
                     {"optimizer", to_string(c.effective_optimizer())},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed}};
    if (c.cup_adam) j["cup_adam"] = true;
    return j;
}

inline nlohmann::json diagnostic_to_json(const StepDiagnostic& d) {
    return {{"step", d.step},         {"grad_dot", d.grad_dot}, {"phi", d.phi},
            {"gamma_phi", d.gamma_phi}, {"ip_f", d.ip_f},       {"ip_r", d.ip_r},
            {"flags", flag_names(d.flags)}, {"fallback", d.fallback}};
}

/// Writes <dir>/<name>.cupm (+ sidecar), <name>.manifest.json and, for runs
/// with diagnostics, <name>.diag.jsonl.
inline void save_run(const std::string& dir, const std::string& name, const MlpSpec& spec, const RunRecord& rec,
                     const std::optional<PerfVector>& perf = std::nullopt) {
    const std::string base = dir + "/" + name;
    save_checkpoint(base + ".cupm", spec, rec.final_params);
    nlohmann::json m;
    m["config"] = config_to_json(rec.config);
    m["checkpoint"] = name + ".cupm";
    nlohmann::json trace = nlohmann::json::array();
    for (auto [lf, lr] : rec.loss_trace) trace.push_back({lf, lr});
    m["loss_trace"] = std::move(trace);
    m["fallback_steps"] = rec.fallback_steps;
    m["wall_time"] = rec.wall_time;
    if (perf) m["perf"] = {{"ra", perf->ra}, {"ua", perf->ua}, {"ta", perf->ta}, {"mia", perf->mia}};
    if (!rec.diagnostics.empty()) {
        m["diagnostics"] = name + ".diag.jsonl";
        std::string lines;
        for (const auto& d : rec.diagnostics) lines += diagnostic_to_json(d).dump() + "\n";
        write_file(base + ".diag.jsonl", lines);
    }
    write_file(base + ".manifest.json", m.dump(2) + "\n");
}

inline SolutionRow to_solution_row(const UnlearnConfig& c, const PerfVector& perf, std::string checkpoint = {}) {
    SolutionRow r;
    r.method = to_string(c.method);
    r.lr = c.lr;
    r.gamma = c.method == Method::CUP ? c.gamma : 0.0;
    const bool weighted = c.method == Method::WS || c.method == Method::L1Sparse || c.method == Method::CUP ||
                          c.method == Method::RL || c.method == Method::SalUn;
    r.w_f = weighted ? c.w_f : 0.0;
    r.w_r = weighted ? c.w_r : 0.0;
    r.alpha = c.method == Method::L1Sparse ? c.alpha : 0.0;
    r.threshold = c.method == Method::SalUn ? c.salun_threshold : 0.0;
    r.seed = c.seed;
    r.perf = perf;
    r.checkpoint = std::move(checkpoint);
    return r;
}

}  // namespace cupmu
