// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <thread>
#include <vector>

#include "cupmu/common.hpp"

namespace cupmu {

/// Points to be measured against a reference corner (maximization).
struct PointSet {
    std::vector<Vec> points;
    Vec reference;  // empty means the origin

    std::size_t dim() const {
        if (!reference.empty()) return reference.size();
        return points.empty() ? 0 : points.front().size();
    }
};

struct HvResult {
    double value = 0.0;
    bool empty_input = false;
};

namespace detail {

// Points shifted so the reference is the origin, negative coordinates
// clipped to zero.
inline std::vector<Vec> normalized_points(const PointSet& ps) {
    const std::size_t m = ps.dim();
    require(m >= 1 && m <= 4, ErrorCode::Config, "hypervolume supports 1 to 4 objectives");
    require(ps.reference.empty() || ps.reference.size() == m, ErrorCode::DimensionMismatch,
            "reference dimension mismatch");
    std::vector<Vec> out;
    out.reserve(ps.points.size());
    for (const auto& p : ps.points) {
        require(p.size() == m, ErrorCode::DimensionMismatch, "inconsistent point dimension");
        require(all_finite(p), ErrorCode::NonFinite, "non-finite point coordinate");
        Vec q(m);
        for (std::size_t j = 0; j < m; ++j) q[j] = std::max(0.0, p[j] - (ps.reference.empty() ? 0.0 : ps.reference[j]));
        out.push_back(std::move(q));
    }
    return out;
}

// Volume dominated by `pts` in their first `m` coordinates, origin reference.
inline double hv_recursive(std::vector<const Vec*> pts, std::size_t m) {
    if (pts.empty()) return 0.0;
    if (m == 1) {
        double best = 0.0;
        for (auto* p : pts) best = std::max(best, (*p)[0]);
        return best;
    }
    const std::size_t last = m - 1;
    std::stable_sort(pts.begin(), pts.end(), [last](const Vec* a, const Vec* b) { return (*a)[last] > (*b)[last]; });
    if (m == 2) {
        // sweep down in y, keep the widest x seen so far
        double area = 0.0, xmax = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            xmax = std::max(xmax, (*pts[i])[0]);
            const double next = i + 1 < pts.size() ? (*pts[i + 1])[1] : 0.0;
            area += xmax * ((*pts[i])[1] - next);
        }
        return area;
    }
    double vol = 0.0;
    std::vector<const Vec*> prefix;
    prefix.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        prefix.push_back(pts[i]);
        const double next = i + 1 < pts.size() ? (*pts[i + 1])[last] : 0.0;
        const double height = (*pts[i])[last] - next;
        if (height > 0.0) vol += height * hv_recursive(prefix, last);
    }
    return vol;
}

inline bool weakly_dominates(const Vec& a, const Vec& b) {
    for (std::size_t j = 0; j < a.size(); ++j)
        if (a[j] < b[j]) return false;
    return true;
}

}  // namespace detail

/// Exact Lebesgue measure of the union of boxes [r, p] by dimension sweep.
inline HvResult hv_exact(const PointSet& ps) {
    if (ps.points.empty()) return {0.0, true};
    const auto pts = detail::normalized_points(ps);
    std::vector<const Vec*> ptrs;
    for (const auto& p : pts) ptrs.push_back(&p);
    return {detail::hv_recursive(std::move(ptrs), ps.dim()), false};
}

struct HvEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

/// Uniform sampling in the bounding box [r, max]. Samples are drawn in fixed
/// chunks with per-chunk seeds, so the result does not depend on `jobs`.
inline HvEstimate hv_monte_carlo(const PointSet& ps, std::uint64_t samples, std::uint64_t seed, unsigned jobs = 1) {
    require(samples >= 1, ErrorCode::Config, "need at least one sample");
    if (ps.points.empty()) return {};
    auto pts = detail::normalized_points(ps);
    const std::size_t m = ps.dim();

    // Only non-dominated points matter; larger boxes first for early exit.
    std::vector<Vec> front;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        bool dominated = false;
        for (std::size_t k = 0; k < pts.size() && !dominated; ++k) {
            if (k == i) continue;
            if (detail::weakly_dominates(pts[k], pts[i]) && (pts[k] != pts[i] || k < i)) dominated = true;
        }
        if (!dominated) front.push_back(pts[i]);
    }
    auto box = [](const Vec& p) { return std::accumulate(p.begin(), p.end(), 1.0, std::multiplies<>()); };
    std::stable_sort(front.begin(), front.end(), [&](const Vec& a, const Vec& b) { return box(a) > box(b); });

    Vec upper(m, 0.0);
    for (const auto& p : front)
        for (std::size_t j = 0; j < m; ++j) upper[j] = std::max(upper[j], p[j]);
    const double volume = box(upper);
    if (volume == 0.0) return {};

    constexpr std::uint64_t kChunk = 1u << 16;
    const std::uint64_t chunks = (samples + kChunk - 1) / kChunk;
    std::vector<std::uint64_t> hits(chunks, 0);

    auto run_chunk = [&](std::uint64_t c) {
        std::mt19937_64 rng(derive_seed(seed, c));
        const std::uint64_t n = std::min(kChunk, samples - c * kChunk);
        double u[4];
        std::uint64_t h = 0;
        for (std::uint64_t s = 0; s < n; ++s) {
            for (std::size_t j = 0; j < m; ++j)
                u[j] = upper[j] * static_cast<double>(rng() >> 11) * 0x1.0p-53;
            for (const auto& p : front) {
                bool in = true;
                for (std::size_t j = 0; j < m; ++j)
                    if (u[j] > p[j]) {
                        in = false;
                        break;
                    }
                if (in) {
                    ++h;
                    break;
                }
            }
        }
        hits[c] = h;
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(chunks)));
    if (workers == 1) {
        for (std::uint64_t c = 0; c < chunks; ++c) run_chunk(c);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::uint64_t c = w; c < chunks; c += workers) run_chunk(c);
            });
    }
    const double total_hits = static_cast<double>(std::accumulate(hits.begin(), hits.end(), std::uint64_t{0}));
    const double n = static_cast<double>(samples);
    const double p = total_hits / n;
    return {volume * p, volume * std::sqrt(p * (1.0 - p) / n)};
}

}  // namespace cupmu
