// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cupmu/common.hpp"
#include "cupmu/datagen.hpp"
#include "cupmu/nn.hpp"

namespace cupmu {

/// Evaluation vector (RA, UA, TA, MIA), every component a percentage.
struct PerfVector {
    double ra = 0.0;
    double ua = 0.0;
    double ta = 0.0;
    double mia = 0.0;

    Vec as_vec() const { return {ra, ua, ta, mia}; }

    bool in_range() const {
        for (double v : as_vec())
            if (!(v >= 0.0 && v <= 100.0)) return false;
        return true;
    }

    bool operator==(const PerfVector&) const = default;
};

/// One evaluated configuration. Fields mirror the metrics CSV columns.
struct SolutionRow {
    std::string method;
    double lr = 0.0;
    double gamma = 0.0;
    double w_f = 0.0;
    double w_r = 0.0;
    double alpha = 0.0;
    double threshold = 0.0;
    std::uint64_t seed = 0;
    PerfVector perf;
    std::string checkpoint;  // not serialized to CSV

    bool operator==(const SolutionRow&) const = default;
};

using SolutionSet = std::vector<SolutionRow>;

// ---- membership inference ---------------------------------------------------

struct MiaResult {
    double score = 50.0;
    double threshold = 0.0;
    bool degenerate = false;
};

/// Loss-threshold attack. The threshold maximizes balanced accuracy of
/// "member iff loss <= tau" on the two reference sets (ties: smallest tau);
/// the score is the percentage of forget losses above it.
inline MiaResult mia_from_losses(std::span<const double> forget, std::span<const double> member,
                                 std::span<const double> nonmember) {
    require(!member.empty() && !nonmember.empty(), ErrorCode::EmptyDataset, "MIA reference sets are empty");
    require(!forget.empty(), ErrorCode::EmptyDataset, "MIA forget set is empty");

    struct Item {
        double loss;
        bool member;
    };
    std::vector<Item> pool;
    pool.reserve(member.size() + nonmember.size());
    for (double l : member) pool.push_back({l, true});
    for (double l : nonmember) pool.push_back({l, false});
    std::sort(pool.begin(), pool.end(), [](const Item& a, const Item& b) { return a.loss < b.loss; });

    const double nm = static_cast<double>(member.size());
    const double nn = static_cast<double>(nonmember.size());
    // tau = -inf: nothing is called a member
    double best_ba = 0.5;
    double best_tau = -std::numeric_limits<double>::infinity();
    double members_below = 0.0, nonmembers_below = 0.0;
    for (std::size_t i = 0; i < pool.size();) {
        const double tau = pool[i].loss;
        for (; i < pool.size() && pool[i].loss == tau; ++i) (pool[i].member ? members_below : nonmembers_below) += 1.0;
        const double ba = 0.5 * (members_below / nm + (nn - nonmembers_below) / nn);
        if (ba > best_ba) {
            best_ba = ba;
            best_tau = tau;
        }
    }

    MiaResult r;
    r.threshold = best_tau;
    if (!(best_ba > 0.5)) {
        r.degenerate = true;
        r.score = 50.0;
        return r;
    }
    std::size_t above = 0;
    for (double l : forget) above += l > best_tau;
    r.score = 100.0 * static_cast<double>(above) / static_cast<double>(forget.size());
    return r;
}

inline MiaResult mia_score(const MlpSpec& spec, const ParamVector& theta, const LabeledDataset& forget,
                           const LabeledDataset& member_ref, const LabeledDataset& nonmember_ref) {
    require(!member_ref.empty() && !nonmember_ref.empty(), ErrorCode::EmptyDataset, "MIA reference sets are empty");
    const auto lf = per_sample_ce(spec, theta, forget);
    const auto lm = per_sample_ce(spec, theta, member_ref);
    const auto ln = per_sample_ce(spec, theta, nonmember_ref);
    return mia_from_losses(lf, lm, ln);
}

/// RA on the remain set, UA = 100 - forget accuracy, TA on the test set
/// without the forgotten classes, MIA against (remain, restricted test).
inline PerfVector eval_perf(const MlpSpec& spec, const ParamVector& theta, const ForgetSplit& split,
                            const LabeledDataset& test_set) {
    require(!split.forget.empty() && !split.remain.empty() && !test_set.empty(), ErrorCode::EmptyDataset,
            "evaluation needs non-empty datasets");
    const LabeledDataset test = without_classes(test_set, split.forget_classes);
    require(!test.empty(), ErrorCode::EmptyDataset, "test set has no rows outside the forget classes");
    PerfVector p;
    p.ra = accuracy(spec, theta, split.remain);
    p.ua = 100.0 - accuracy(spec, theta, split.forget);
    p.ta = accuracy(spec, theta, test);
    p.mia = mia_score(spec, theta, split.forget, split.remain, test).score;
    return p;
}

// ---- set analysis -----------------------------------------------------------

inline double perf_distance(const PerfVector& a, const PerfVector& b) {
    const double d0 = a.ra - b.ra, d1 = a.ua - b.ua, d2 = a.ta - b.ta, d3 = a.mia - b.mia;
    return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3);
}

struct DeltaResult {
    double delta = 0.0;
    std::size_t index = 0;
};

/// Smallest Euclidean distance to the retrained model's vector; first row wins ties.
inline DeltaResult delta_to_retrain(const SolutionSet& candidates, const PerfVector& retrain) {
    require(!candidates.empty(), ErrorCode::EmptyDataset, "delta over an empty solution set");
    DeltaResult best{perf_distance(candidates[0].perf, retrain), 0};
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double d = perf_distance(candidates[i].perf, retrain);
        if (d < best.delta) best = {d, i};
    }
    return best;
}

/// p >= q componentwise with at least one strict inequality.
inline bool dominates(std::span<const double> p, std::span<const double> q) {
    bool strict = false;
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j] < q[j]) return false;
        if (p[j] > q[j]) strict = true;
    }
    return strict;
}

/// Indices of points not dominated by any other point, in input order.
/// Sorting by coordinate sum first means a dominator always precedes the
/// points it dominates, so each point is only tested against the current front.
inline std::vector<std::size_t> nondominated_indices(const std::vector<Vec>& points) {
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto sum = [&](std::size_t i) { return std::accumulate(points[i].begin(), points[i].end(), 0.0); };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sum(a) > sum(b); });
    std::vector<std::size_t> front;
    for (auto i : order) {
        bool dominated = false;
        for (auto k : front)
            if (dominates(points[k], points[i])) {
                dominated = true;
                break;
            }
        if (!dominated) front.push_back(i);
    }
    std::sort(front.begin(), front.end());
    return front;
}

inline SolutionSet pareto_filter(const SolutionSet& set) {
    std::vector<Vec> pts;
    pts.reserve(set.size());
    for (const auto& r : set) pts.push_back(r.perf.as_vec());
    SolutionSet out;
    for (auto i : nondominated_indices(pts)) out.push_back(set[i]);
    return out;
}

// ---- metrics CSV ----------------------------------------------------------

inline constexpr const char* kMetricsHeader = "method,lr,gamma,w_f,w_r,alpha,threshold,seed,ra,ua,ta,mia";

inline std::string metrics_csv_line(const SolutionRow& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%llu,%.6f,%.6f,%.6f,%.6f", r.method.c_str(), r.lr,
                  r.gamma, r.w_f, r.w_r, r.alpha, r.threshold, static_cast<unsigned long long>(r.seed), r.perf.ra,
                  r.perf.ua, r.perf.ta, r.perf.mia);
    return buf;
}

inline std::string metrics_to_csv(const SolutionSet& set) {
    std::string out = std::string(kMetricsHeader) + "\n";
    for (const auto& r : set) out += metrics_csv_line(r) + "\n";
    return out;
}

struct ParsedMetrics {
    SolutionSet rows;
    std::vector<std::string> skipped;  // "line N: reason"
};

inline ParsedMetrics metrics_from_csv(const std::string& text) {
    ParsedMetrics out;
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::Io, "metrics CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == kMetricsHeader, ErrorCode::Io, "unexpected metrics CSV header");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != 12) {
            out.skipped.push_back("line " + std::to_string(lineno) + ": expected 12 fields");
            continue;
        }
        try {
            auto num = [](const std::string& s) {
                std::size_t used = 0;
                const double v = std::stod(s, &used);
                if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
                return v;
            };
            SolutionRow r;
            r.method = cells[0];
            if (r.method.empty()) throw std::invalid_argument("empty method");
            r.lr = num(cells[1]);
            r.gamma = num(cells[2]);
            r.w_f = num(cells[3]);
            r.w_r = num(cells[4]);
            r.alpha = num(cells[5]);
            r.threshold = num(cells[6]);
            std::size_t used = 0;
            r.seed = std::stoull(cells[7], &used);
            if (used != cells[7].size()) throw std::invalid_argument(cells[7]);
            r.perf = {num(cells[8]), num(cells[9]), num(cells[10]), num(cells[11])};
            if (!r.perf.in_range()) throw std::out_of_range("metric outside [0,100]");
            out.rows.push_back(std::move(r));
        } catch (const std::exception& e) {
            out.skipped.push_back("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace cupmu
