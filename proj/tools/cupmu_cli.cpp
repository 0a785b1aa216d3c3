// SPDX-License-Identifier: Apache-2.0
// Command-line driver: pretrain, sweep, report, toyfig.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "cupmu/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;
constexpr int kExitIo = 4;

int exit_code_for(const cupmu::Error& e) {
    switch (e.code()) {
        case cupmu::ErrorCode::Config: return kExitConfig;
        case cupmu::ErrorCode::Io: return kExitIo;
        default: return kExitOther;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conflict-free unlearning experiments on a Gaussian-mixture toy problem"};
    app.require_subcommand(1);

    std::string config_path, out_dir, method, csv_path, retrain_path;
    std::optional<std::uint64_t> seed;
    unsigned jobs = 1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (defaults to the config's output_dir)");
        sub->add_option("--seed", seed, "override the master seed");
    };

    auto* pretrain = app.add_subcommand("pretrain", "train the original model and write the datasets");
    add_common(pretrain);
    auto* sweep = app.add_subcommand("sweep", "retrain and run every configured unlearning method");
    add_common(sweep);
    sweep->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    sweep->add_option("--method", method, "run only this method");
    auto* report = app.add_subcommand("report", "summarize a metrics CSV: Delta, Pareto fronts, hypervolume");
    add_common(report);
    report->add_option("--csv", csv_path, "metrics CSV (default <out>/metrics.csv)");
    report->add_option("--retrain", retrain_path, "retrain manifest (default <out>/retrain.manifest.json)");
    auto* toyfig = app.add_subcommand("toyfig", "decision-boundary plots for GA, WS and CUP");
    add_common(toyfig);

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = cupmu::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (out_dir.empty()) out_dir = cfg.output_dir;

        if (pretrain->parsed()) {
            const auto r = cupmu::cmd_pretrain(cfg, out_dir);
            std::printf("pretrained: train accuracy %.2f%%, final loss %.4f\n", r.train_accuracy,
                        r.curve.empty() ? 0.0 : r.curve.back());
        } else if (sweep->parsed()) {
            const auto r = cupmu::cmd_sweep(cfg, out_dir, jobs, method);
            std::printf("sweep: %zu rows written, %zu failed\n", r.rows.size(), r.failures.size());
            for (const auto& f : r.failures) std::fprintf(stderr, "  %s\n", f.c_str());
            if (!r.failures.empty()) return kExitPartial;
        } else if (report->parsed()) {
            if (csv_path.empty()) csv_path = out_dir + "/metrics.csv";
            if (retrain_path.empty()) retrain_path = out_dir + "/retrain.manifest.json";
            const auto r = cupmu::cmd_report(csv_path, retrain_path, out_dir, cfg.hv_scale);
            for (const auto& [name, m] : r.report.at("methods").items())
                std::printf("%-10s n=%-4zu delta=%8.3f hv=%9.4f pareto=%zu\n", name.c_str(),
                            m.at("count").get<std::size_t>(), m.at("delta").get<double>(), m.at("hv").get<double>(),
                            m.at("pareto").size());
            for (const auto& s : r.skipped) std::fprintf(stderr, "skipped %s\n", s.c_str());
        } else if (toyfig->parsed()) {
            const auto panels = cupmu::cmd_toyfig(cfg, out_dir);
            for (const auto& p : panels) {
                std::printf("%-10s", p.name.c_str());
                for (double a : p.class_accuracy) std::printf(" %6.2f", a);
                std::printf("\n");
            }
        }
    } catch (const cupmu::Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", cupmu::to_string(e.code()), e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitOther;
    }
    return kExitOk;
}
