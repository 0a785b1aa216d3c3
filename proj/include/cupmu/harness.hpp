// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cupmu/checkpoint.hpp"
#include "cupmu/common.hpp"
#include "cupmu/datagen.hpp"
#include "cupmu/hypervolume.hpp"
#include "cupmu/metrics.hpp"
#include "cupmu/nn.hpp"
#include "cupmu/svg.hpp"
#include "cupmu/unlearners.hpp"

namespace cupmu {

using nlohmann::json;

// ---- configuration ----------------------------------------------------------

struct ForgetSpec {
    enum class Mode { ClassWise, RandomSubset } mode = Mode::ClassWise;
    std::set<int> classes{2};
    double fraction = 0.1;
};

/// One hyperparameter grid; expands to the cartesian product of its lists.
struct SweepGrid {
    Method method = Method::CUP;
    std::vector<double> lr{1e-3};
    std::vector<double> gamma{0.5};
    std::vector<double> w_f{1.0};
    std::vector<double> w_r{1.0};
    std::vector<double> alpha{0.0};
    std::vector<double> threshold{0.5};
    std::size_t epochs = 20;
    std::size_t batch_size = 0;
    std::optional<OptimizerMode> optimizer;
    bool cup_adam = false;
};

struct ToyFigSpec {
    UnlearnConfig ga, ws, cup;
    std::size_t lattice = 120;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    GaussianMixtureSpec data = GaussianMixtureSpec::toy();
    std::size_t test_samples = 1000;
    MlpSpec model{2, {16}, 5};
    TrainRecipe pretrain;
    ForgetSpec forget;
    std::vector<SweepGrid> sweep;
    double hv_scale = 100.0;
    ToyFigSpec toyfig;
    std::string output_dir = "out";
};

// Seed streams derived from the master seed.
enum SeedStream : std::uint64_t {
    kDataSeed = 1,
    kTestSeed = 2,
    kPretrainSeed = 3,
    kRetrainSeed = 4,
    kSplitSeed = 5,
    kToyFigSeed = 6,
    kRunSeedBase = 1000,
};

namespace detail {

inline std::vector<double> number_list(const json& j, const std::string& key) {
    if (j.is_number()) return {j.get<double>()};
    if (j.is_array()) {
        require(!j.empty(), ErrorCode::Config, "'" + key + "' grid is empty");
        std::vector<double> out;
        for (const auto& v : j) {
            require(v.is_number(), ErrorCode::Config, "'" + key + "' must hold numbers");
            out.push_back(v.get<double>());
        }
        return out;
    }
    if (j.is_object() && j.contains("linspace")) {
        const auto a = j.at("linspace");
        require(a.is_array() && a.size() == 3, ErrorCode::Config, "'" + key + "': linspace takes [lo, hi, count]");
        const double lo = a[0].get<double>(), hi = a[1].get<double>();
        const auto n = a[2].get<std::size_t>();
        require(n >= 1, ErrorCode::Config, "'" + key + "': linspace count must be positive");
        std::vector<double> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
        return out;
    }
    throw Error(ErrorCode::Config, "'" + key + "' must be a number, a list, or {\"linspace\": [...]}");
}

inline UnlearnConfig unlearn_from_json(const json& j, Method method) {
    UnlearnConfig c;
    c.method = method;
    c.lr = j.value("lr", c.lr);
    c.epochs = j.value("epochs", c.epochs);
    c.gamma = j.value("gamma", c.gamma);
    c.w_f = j.value("w_f", c.w_f);
    c.w_r = j.value("w_r", c.w_r);
    c.alpha = j.value("alpha", c.alpha);
    c.salun_threshold = j.value("threshold", c.salun_threshold);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.cup_adam = j.value("cup_adam", false);
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.validate();
    return c;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
    try {
        ExperimentConfig c;
        c.seed = j.value("seed", std::uint64_t{0});
        c.output_dir = j.value("output_dir", c.output_dir);
        if (j.contains("data")) {
            const auto& d = j.at("data");
            if (d.contains("centers")) {
                c.data.centers.clear();
                for (const auto& p : d.at("centers")) {
                    require(p.is_array() && p.size() == 2, ErrorCode::Config, "centers must be 2-D points");
                    c.data.centers.push_back({p[0].get<double>(), p[1].get<double>()});
                }
            }
            if (d.contains("stds")) c.data.stds = d.at("stds").get<std::vector<double>>();
            c.data.samples_total = d.value("samples_total", c.data.samples_total);
            c.test_samples = d.value("test_samples", c.test_samples);
        }
        c.data.validate();
        require(c.test_samples > 0, ErrorCode::Config, "test_samples must be positive");
        if (j.contains("model")) c.model = spec_from_json(j.at("model"));
        require(c.model.input_dim() == 2, ErrorCode::Config, "the Gaussian mixture produces 2-D inputs");
        require(c.model.output_dim() == c.data.num_classes(), ErrorCode::Config,
                "model output_dim must equal the number of clusters");
        if (j.contains("pretrain")) {
            const auto& p = j.at("pretrain");
            c.pretrain.optimizer = parse_optimizer(p.value("optimizer", std::string("adam")));
            c.pretrain.lr = p.value("lr", c.pretrain.lr);
            c.pretrain.epochs = p.value("epochs", c.pretrain.epochs);
            c.pretrain.batch_size = p.value("batch_size", c.pretrain.batch_size);
        }
        require(c.pretrain.lr > 0.0 && c.pretrain.epochs >= 1, ErrorCode::Config, "invalid pretrain recipe");
        if (j.contains("forget")) {
            const auto& f = j.at("forget");
            const auto mode = f.value("mode", std::string("class"));
            if (mode == "class") {
                c.forget.mode = ForgetSpec::Mode::ClassWise;
                c.forget.classes = f.at("classes").get<std::set<int>>();
                require(!c.forget.classes.empty(), ErrorCode::Config, "forget.classes is empty");
                for (int k : c.forget.classes)
                    require(k >= 0 && static_cast<std::size_t>(k) < c.data.num_classes(), ErrorCode::Config,
                            "forget class " + std::to_string(k) + " does not exist");
            } else if (mode == "random") {
                c.forget.mode = ForgetSpec::Mode::RandomSubset;
                c.forget.fraction = f.at("fraction").get<double>();
                require(c.forget.fraction > 0.0 && c.forget.fraction < 1.0, ErrorCode::Config,
                        "forget.fraction must lie in (0,1)");
            } else {
                throw Error(ErrorCode::Config, "forget.mode must be 'class' or 'random'");
            }
        }
        if (j.contains("sweep")) {
            for (const auto& g : j.at("sweep")) {
                SweepGrid s;
                s.method = parse_method(g.at("method").get<std::string>());
                require(s.method != Method::Retrain, ErrorCode::Config, "retraining is always run; drop it from the sweep");
                for (auto [key, dst] : {std::pair{"lr", &s.lr}, {"gamma", &s.gamma}, {"w_f", &s.w_f}, {"w_r", &s.w_r},
                                        {"alpha", &s.alpha}, {"threshold", &s.threshold}})
                    if (g.contains(key)) *dst = detail::number_list(g.at(key), key);
                s.epochs = g.value("epochs", s.epochs);
                s.batch_size = g.value("batch_size", s.batch_size);
                s.cup_adam = g.value("cup_adam", false);
                if (g.contains("optimizer")) s.optimizer = parse_optimizer(g.at("optimizer").get<std::string>());
                c.sweep.push_back(std::move(s));
            }
        }
        if (j.contains("eval")) c.hv_scale = j.at("eval").value("hv_scale", c.hv_scale);
        if (j.contains("toyfig")) {
            const auto& t = j.at("toyfig");
            c.toyfig.lattice = t.value("lattice", c.toyfig.lattice);
            const json empty = json::object();
            c.toyfig.ga = detail::unlearn_from_json(t.value("ga", empty), Method::GA);
            c.toyfig.ws = detail::unlearn_from_json(t.value("ws", empty), Method::WS);
            c.toyfig.cup = detail::unlearn_from_json(t.value("cup", empty), Method::CUP);
        } else {
            c.toyfig.ga.method = Method::GA;
            c.toyfig.ws.method = Method::WS;
            c.toyfig.cup.method = Method::CUP;
        }
        require(c.toyfig.lattice >= 2, ErrorCode::Config, "toyfig.lattice must be at least 2");
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Config, e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Config, "cannot parse " + path + ": " + e.what());
    }
    return config_from_json(j);
}

/// Expands every grid in order; each run gets its position as run index.
inline std::vector<UnlearnConfig> expand_sweep(const ExperimentConfig& cfg) {
    require(!cfg.sweep.empty(), ErrorCode::Config, "sweep is empty");
    std::vector<UnlearnConfig> out;
    for (const auto& g : cfg.sweep) {
        for (double lr : g.lr)
            for (double gamma : g.gamma)
                for (double wf : g.w_f)
                    for (double wr : g.w_r)
                        for (double alpha : g.alpha)
                            for (double thr : g.threshold) {
                                UnlearnConfig u;
                                u.method = g.method;
                                u.lr = lr;
                                u.gamma = gamma;
                                u.w_f = wf;
                                u.w_r = wr;
                                u.alpha = alpha;
                                u.salun_threshold = thr;
                                u.epochs = g.epochs;
                                u.batch_size = g.batch_size;
                                u.optimizer = g.optimizer;
                                u.cup_adam = g.cup_adam;
                                u.seed = derive_seed(cfg.seed, kRunSeedBase + out.size());
                                u.validate();
                                out.push_back(u);
                            }
    }
    require(!out.empty(), ErrorCode::Config, "sweep grids expand to zero runs");
    return out;
}

// ---- experiment setup -------------------------------------------------------

struct ExperimentData {
    LabeledDataset train;
    LabeledDataset test;
    ForgetSplit split;
};

inline ExperimentData make_experiment_data(const ExperimentConfig& cfg) {
    GaussianMixtureSpec train_spec = cfg.data;
    train_spec.seed = derive_seed(cfg.seed, kDataSeed);
    GaussianMixtureSpec test_spec = cfg.data;
    test_spec.seed = derive_seed(cfg.seed, kTestSeed);
    test_spec.samples_total = cfg.test_samples;
    ExperimentData d;
    d.train = make_gaussian_dataset(train_spec);
    d.test = make_gaussian_dataset(test_spec);
    d.split = cfg.forget.mode == ForgetSpec::Mode::ClassWise
                  ? split_class_wise(d.train, cfg.forget.classes, cfg.data.num_classes())
                  : split_random_subset(d.train, cfg.forget.fraction, derive_seed(cfg.seed, kSplitSeed));
    return d;
}

inline ParamVector pretrain_model(const ExperimentConfig& cfg, const LabeledDataset& train, Vec* curve = nullptr) {
    const auto seed = derive_seed(cfg.seed, kPretrainSeed);
    ParamVector theta = init_params(cfg.model, seed);
    auto c = train_supervised(cfg.model, theta, train, cfg.pretrain, seed);
    if (curve) *curve = std::move(c);
    return theta;
}

/// Runs fn(i) for i in [0, n) on `jobs` threads; each index runs exactly once.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
    const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
}

namespace fs = std::filesystem;

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::Io, "cannot create directory " + dir + ": " + ec.message());
}

// ---- pretrain ---------------------------------------------------------------

struct PretrainResult {
    ParamVector theta;
    Vec curve;
    double train_accuracy = 0.0;
};

/// Writes pretrained.cupm (+ sidecar), pretrain.manifest.json, train.csv, test.csv.
inline PretrainResult cmd_pretrain(const ExperimentConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    const auto data = make_experiment_data(cfg);
    PretrainResult r;
    r.theta = pretrain_model(cfg, data.train, &r.curve);
    r.train_accuracy = accuracy(cfg.model, r.theta, data.train);
    save_checkpoint(out_dir + "/pretrained.cupm", cfg.model, r.theta);
    write_dataset_csv(out_dir + "/train.csv", data.train);
    write_dataset_csv(out_dir + "/test.csv", data.test);
    json m{{"checkpoint", "pretrained.cupm"},
           {"seed", cfg.seed},
           {"recipe", {{"optimizer", to_string(cfg.pretrain.optimizer)},
                       {"lr", cfg.pretrain.lr},
                       {"epochs", cfg.pretrain.epochs},
                       {"batch_size", cfg.pretrain.batch_size}}},
           {"loss_curve", r.curve},
           {"train_accuracy", r.train_accuracy}};
    write_file(out_dir + "/pretrain.manifest.json", m.dump(2) + "\n");
    return r;
}

// ---- sweep ------------------------------------------------------------------

struct SweepResult {
    SolutionSet rows;  // retrain row first, then successful runs in run-index order
    PerfVector retrain;
    std::vector<std::string> failures;
};

/// Runs retraining plus every expanded configuration (optionally filtered by
/// method name), evaluates them, and writes metrics.csv and per-run manifests.
inline SweepResult cmd_sweep(const ExperimentConfig& cfg, const std::string& out_dir, unsigned jobs = 1,
                             const std::string& method_filter = {}) {
    const auto runs_all = expand_sweep(cfg);
    const std::string ckpt = out_dir + "/pretrained.cupm";
    require(fs::exists(ckpt), ErrorCode::Io, "missing " + ckpt + " (run pretrain first)");
    auto [spec, theta0] = load_checkpoint(ckpt);
    require(spec == cfg.model, ErrorCode::Config, "pretrained checkpoint does not match the configured model");
    const auto data = make_experiment_data(cfg);
    ensure_dir(out_dir + "/runs");

    const std::optional<Method> only = method_filter.empty() ? std::nullopt : std::optional(parse_method(method_filter));
    std::vector<std::size_t> selected;
    for (std::size_t i = 0; i < runs_all.size(); ++i)
        if (!only || runs_all[i].method == *only) selected.push_back(i);
    require(!selected.empty(), ErrorCode::Config, "no sweep runs match method filter '" + method_filter + "'");

    // index 0 is retraining; the rest follow the selected runs
    struct Slot {
        std::optional<SolutionRow> row;
        std::string error;
    };
    std::vector<Slot> slots(selected.size() + 1);
    PerfVector retrain_perf;

    parallel_for(slots.size(), jobs, [&](std::size_t k) {
        try {
            if (k == 0) {
                auto rec = run_retrain(spec, data.split, cfg.pretrain, derive_seed(cfg.seed, kRetrainSeed));
                retrain_perf = eval_perf(spec, rec.final_params, data.split, data.test);
                save_run(out_dir, "retrain", spec, rec, retrain_perf);
                slots[0].row = to_solution_row(rec.config, retrain_perf, "retrain.cupm");
                return;
            }
            const std::size_t idx = selected[k - 1];
            const auto& u = runs_all[idx];
            auto rec = run_method(spec, theta0, data.split, u, cfg.pretrain);
            const auto perf = eval_perf(spec, rec.final_params, data.split, data.test);
            char name[64];
            std::snprintf(name, sizeof name, "run%04zu_%s", idx, to_string(u.method).c_str());
            save_run(out_dir + "/runs", name, spec, rec, perf);
            slots[k].row = to_solution_row(u, perf, std::string("runs/") + name + ".cupm");
        } catch (const std::exception& e) {
            slots[k].error = e.what();
        }
    });

    SweepResult res;
    for (std::size_t k = 0; k < slots.size(); ++k) {
        if (slots[k].row) {
            res.rows.push_back(*slots[k].row);
        } else {
            res.failures.push_back((k == 0 ? std::string("retrain") : "run " + std::to_string(selected[k - 1])) + ": " +
                                   slots[k].error);
        }
    }
    require(slots[0].row.has_value(), ErrorCode::NonFinite, "retraining failed: " + slots[0].error);
    res.retrain = retrain_perf;
    write_file(out_dir + "/metrics.csv", metrics_to_csv(res.rows));
    write_file(out_dir + "/sweep_failures.json", json(res.failures).dump(2) + "\n");
    return res;
}

// ---- report -----------------------------------------------------------------

inline json row_to_json(const SolutionRow& r) {
    return {{"method", r.method}, {"lr", r.lr},       {"gamma", r.gamma},   {"w_f", r.w_f},
            {"w_r", r.w_r},       {"alpha", r.alpha}, {"threshold", r.threshold}, {"seed", r.seed},
            {"ra", r.perf.ra},    {"ua", r.perf.ua},  {"ta", r.perf.ta},    {"mia", r.perf.mia}};
}

/// Hypervolume of the performance vectors divided by 100 (reference at the
/// origin), multiplied by `scale`.
inline double scaled_hypervolume(const SolutionSet& rows, double scale = 100.0) {
    PointSet ps;
    for (const auto& r : rows) ps.points.push_back(scaled(r.perf.as_vec(), 0.01));
    return scale * hv_exact(ps).value;
}

struct MethodSummary {
    std::string method;
    SolutionSet rows;
    DeltaResult delta;
    SolutionSet pareto;
    double hv = 0.0;
};

inline std::vector<MethodSummary> summarize(const SolutionSet& rows, const PerfVector& retrain, double hv_scale) {
    std::map<std::string, SolutionSet> groups;
    for (const auto& r : rows) groups[r.method].push_back(r);
    std::vector<MethodSummary> out;
    for (auto& [name, set] : groups) {
        MethodSummary s;
        s.method = name;
        s.delta = delta_to_retrain(set, retrain);
        s.pareto = pareto_filter(set);
        s.hv = scaled_hypervolume(set, hv_scale);
        s.rows = std::move(set);
        out.push_back(std::move(s));
    }
    return out;
}

namespace detail {

// (RA, UA) scatter with the 2-D non-dominated staircase of each method.
inline std::string ra_ua_plot(const std::vector<const MethodSummary*>& methods, const PerfVector& retrain,
                              const std::string& title) {
    double lo_x = retrain.ra, lo_y = retrain.ua;
    for (auto* m : methods)
        for (const auto& r : m->rows) {
            lo_x = std::min(lo_x, r.perf.ra);
            lo_y = std::min(lo_y, r.perf.ua);
        }
    lo_x = std::floor(std::max(0.0, lo_x - 2.0));
    lo_y = std::floor(std::max(0.0, lo_y - 2.0));
    svg::Document doc(560, 460);
    svg::Axes ax{70, 40, 440, 340, lo_x, 100.0, lo_y, 100.0};
    doc.rect(0, 0, 560, 460, "#ffffff");
    doc.text(280, 24, title, 14, "middle");
    ax.draw_frame(doc, "RA (%)", "UA (%)");
    for (std::size_t k = 0; k < methods.size(); ++k) {
        const auto* m = methods[k];
        const std::string color = svg::palette(k);
        std::vector<Vec> pts;
        for (const auto& r : m->rows) pts.push_back({r.perf.ra, r.perf.ua});
        auto front = nondominated_indices(pts);
        std::sort(front.begin(), front.end(), [&](std::size_t a, std::size_t b) { return pts[a][0] < pts[b][0]; });
        std::vector<std::pair<double, double>> line;
        for (auto i : front) line.emplace_back(ax.px(pts[i][0]), ax.py(pts[i][1]));
        doc.polyline(line, color);
        for (const auto& p : pts) doc.circle(ax.px(p[0]), ax.py(p[1]), 3.5, color);
        doc.rect(ax.left + ax.width - 90, ax.top + 8 + 16.0 * k, 10, 10, color);
        doc.text(ax.left + ax.width - 74, ax.top + 17 + 16.0 * k, m->method, 11);
    }
    doc.circle(ax.px(retrain.ra), ax.py(retrain.ua), 5, "#000000");
    doc.text(ax.px(retrain.ra) + 7, ax.py(retrain.ua) + 4, "retrain", 10);
    return doc.str();
}

}  // namespace detail

struct ReportResult {
    json report;
    std::vector<std::string> skipped;
};

inline PerfVector read_retrain_perf(const std::string& manifest_path) {
    json m;
    try {
        m = json::parse(read_file(manifest_path));
        const auto& p = m.at("perf");
        return {p.at("ra").get<double>(), p.at("ua").get<double>(), p.at("ta").get<double>(), p.at("mia").get<double>()};
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Io, "bad retrain manifest " + manifest_path + ": " + e.what());
    }
}

/// Builds report.json and SVG plots from the metrics CSV and the retrain manifest.
inline ReportResult cmd_report(const std::string& csv_path, const std::string& retrain_manifest,
                               const std::string& out_dir, double hv_scale = 100.0) {
    ensure_dir(out_dir);
    auto parsed = metrics_from_csv(read_file(csv_path));
    require(!parsed.rows.empty(), ErrorCode::Io, "no usable rows in " + csv_path);
    const PerfVector retrain = read_retrain_perf(retrain_manifest);
    const auto summaries = summarize(parsed.rows, retrain, hv_scale);

    json methods = json::object();
    std::vector<const MethodSummary*> plotted;
    for (const auto& s : summaries) {
        json pareto = json::array();
        for (const auto& r : s.pareto) pareto.push_back(row_to_json(r));
        methods[s.method] = {{"count", s.rows.size()},
                             {"delta", s.delta.delta},
                             {"delta_row", row_to_json(s.rows[s.delta.index])},
                             {"hv", s.hv},
                             {"pareto", std::move(pareto)}};
        write_file(out_dir + "/ra_ua_" + s.method + ".svg", detail::ra_ua_plot({&s}, retrain, s.method + ": RA vs UA"));
        if (s.method != "retrain") plotted.push_back(&s);
    }
    if (!plotted.empty())
        write_file(out_dir + "/ra_ua_all.svg", detail::ra_ua_plot(plotted, retrain, "All methods: RA vs UA"));

    ReportResult res;
    res.skipped = parsed.skipped;
    res.report = {{"retrain", {{"ra", retrain.ra}, {"ua", retrain.ua}, {"ta", retrain.ta}, {"mia", retrain.mia}}},
                  {"hv_scale", hv_scale},
                  {"methods", std::move(methods)},
                  {"skipped_rows", parsed.skipped}};
    write_file(out_dir + "/report.json", res.report.dump(2) + "\n");
    return res;
}

// ---- decision-boundary figure -------------------------------------------------

/// Argmax class on a regular grid; cell (ix, iy) sits at row iy from the bottom.
struct Lattice {
    double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
    std::size_t nx = 0, ny = 0;
    std::vector<int> cls;

    int at(std::size_t ix, std::size_t iy) const { return cls[iy * nx + ix]; }
};

inline Lattice rasterize(const MlpSpec& spec, const ParamVector& theta, double x_min, double x_max, double y_min,
                         double y_max, std::size_t n) {
    require(spec.input_dim() == 2, ErrorCode::Config, "decision-boundary plots need a 2-D input space");
    Lattice L{x_min, x_max, y_min, y_max, n, n, std::vector<int>(n * n)};
    for (std::size_t iy = 0; iy < n; ++iy)
        for (std::size_t ix = 0; ix < n; ++ix) {
            const double x = x_min + (x_max - x_min) * (ix + 0.5) / n;
            const double y = y_min + (y_max - y_min) * (iy + 0.5) / n;
            const double p[2] = {x, y};
            L.cls[iy * n + ix] = static_cast<int>(argmax(forward_point(spec, theta, p)));
        }
    return L;
}

/// Lattice cells assigned to each class.
inline std::vector<std::size_t> region_areas(const Lattice& L, std::size_t classes) {
    std::vector<std::size_t> area(classes, 0);
    for (int c : L.cls) ++area[static_cast<std::size_t>(c)];
    return area;
}

/// 4-connected components per class.
inline std::vector<std::size_t> region_components(const Lattice& L, std::size_t classes) {
    std::vector<std::size_t> comps(classes, 0);
    std::vector<std::uint8_t> seen(L.cls.size(), 0);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < L.cls.size(); ++s) {
        if (seen[s]) continue;
        const int c = L.cls[s];
        ++comps[static_cast<std::size_t>(c)];
        seen[s] = 1;
        stack.push_back(s);
        while (!stack.empty()) {
            const std::size_t k = stack.back();
            stack.pop_back();
            const std::size_t ix = k % L.nx, iy = k / L.nx;
            const std::size_t nb[4] = {ix > 0 ? k - 1 : k, ix + 1 < L.nx ? k + 1 : k, iy > 0 ? k - L.nx : k,
                                       iy + 1 < L.ny ? k + L.nx : k};
            for (auto q : nb)
                if (!seen[q] && L.cls[q] == c) {
                    seen[q] = 1;
                    stack.push_back(q);
                }
        }
    }
    return comps;
}

inline std::string lattice_svg(const Lattice& L, const LabeledDataset& data, const std::string& title) {
    const double size = 480, margin = 40;
    svg::Document doc(size + 2 * margin, size + 2 * margin);
    doc.rect(0, 0, size + 2 * margin, size + 2 * margin, "#ffffff");
    doc.text(margin + size / 2, 26, title, 14, "middle");
    svg::Axes ax{margin, margin, size, size, L.x_min, L.x_max, L.y_min, L.y_max};
    const double cw = size / static_cast<double>(L.nx), ch = size / static_cast<double>(L.ny);
    for (std::size_t iy = 0; iy < L.ny; ++iy) {
        // merge horizontal runs of equal class into one rect
        std::size_t ix = 0;
        while (ix < L.nx) {
            std::size_t end = ix;
            while (end + 1 < L.nx && L.at(end + 1, iy) == L.at(ix, iy)) ++end;
            doc.rect(margin + ix * cw, margin + size - (iy + 1) * ch, (end - ix + 1) * cw, ch,
                     svg::palette(static_cast<std::size_t>(L.at(ix, iy))), 0.35);
            ix = end + 1;
        }
    }
    for (std::size_t n = 0; n < data.size(); n += 4) {
        const auto r = data.row(n);
        if (r[0] < L.x_min || r[0] > L.x_max || r[1] < L.y_min || r[1] > L.y_max) continue;
        doc.circle(ax.px(r[0]), ax.py(r[1]), 1.8, svg::palette(static_cast<std::size_t>(data.label(n))));
    }
    return doc.str();
}

struct ToyFigPanel {
    std::string name;
    ParamVector theta;
    Lattice lattice;
    Vec class_accuracy;  // on the training set
};

/// Pretrains, then unlearns the forget split with GA, WS and CUP; writes one
/// decision-boundary SVG per panel plus toyfig.json with region statistics.
inline std::vector<ToyFigPanel> cmd_toyfig(const ExperimentConfig& cfg, const std::string& out_dir) {
    require(cfg.model.input_dim() == 2, ErrorCode::Config, "toyfig needs a 2-D model");
    ensure_dir(out_dir);
    const auto data = make_experiment_data(cfg);
    const auto theta0 = pretrain_model(cfg, data.train);

    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (std::size_t n = 0; n < data.train.size(); ++n) {
        const auto r = data.train.row(n);
        x0 = std::min(x0, r[0]);
        x1 = std::max(x1, r[0]);
        y0 = std::min(y0, r[1]);
        y1 = std::max(y1, r[1]);
    }
    x0 = std::floor(x0 - 1);
    x1 = std::ceil(x1 + 1);
    y0 = std::floor(y0 - 1);
    y1 = std::ceil(y1 + 1);

    std::vector<std::pair<std::string, UnlearnConfig>> methods = {
        {"ga", cfg.toyfig.ga}, {"ws", cfg.toyfig.ws}, {"cup", cfg.toyfig.cup}};
    std::vector<ToyFigPanel> panels;
    panels.push_back({"pretrained", theta0, {}, {}});
    for (auto& [name, u] : methods) {
        u.seed = derive_seed(cfg.seed, kToyFigSeed);
        panels.push_back({name, run_method(cfg.model, theta0, data.split, u).final_params, {}, {}});
    }

    json summary = json::object();
    const std::size_t K = cfg.model.output_dim();
    for (auto& p : panels) {
        p.lattice = rasterize(cfg.model, p.theta, x0, x1, y0, y1, cfg.toyfig.lattice);
        p.class_accuracy = per_class_accuracy(cfg.model, p.theta, data.train);
        write_file(out_dir + "/toyfig_" + p.name + ".svg", lattice_svg(p.lattice, data.train, p.name));
        json acc = json::array();
        for (double a : p.class_accuracy) acc.push_back(std::isnan(a) ? json(nullptr) : json(a));
        summary[p.name] = {{"region_area", region_areas(p.lattice, K)},
                           {"region_components", region_components(p.lattice, K)},
                           {"class_accuracy", acc}};
    }
    write_file(out_dir + "/toyfig.json", summary.dump(2) + "\n");
    return panels;
}

}  // namespace cupmu
