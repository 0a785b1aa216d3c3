// SPDX-License-Identifier: Apache-2.0
// Generators and reference computations shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cupmu/nn.hpp"
#include "cupmu/pivot.hpp"

namespace cupmu::testing {

struct Rng {
    std::mt19937_64 eng;
    explicit Rng(std::uint64_t seed) : eng(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(eng); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng); }
    std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
        return std::uniform_int_distribution<std::size_t>(lo, hi)(eng);
    }
    Vec normal_vec(std::size_t d) {
        Vec v(d);
        for (double& x : v) x = normal();
        return v;
    }
};

struct MlpInstance {
    MlpSpec spec;
    ParamVector theta;
    LabeledDataset data;
};

/// Small random network and dataset with d <= max_params.
inline MlpInstance random_mlp_instance(Rng& rng, std::size_t max_params = 200) {
    for (;;) {
        const std::size_t in = rng.index(1, 4);
        const std::size_t layers = rng.index(1, 2);
        std::vector<std::size_t> hidden;
        for (std::size_t l = 0; l < layers; ++l) hidden.push_back(rng.index(1, 8));
        const std::size_t out = rng.index(2, 5);
        MlpSpec spec(in, hidden, out);
        if (spec.num_params() > max_params) continue;
        ParamVector theta{rng.normal_vec(spec.num_params()), spec.hash()};
        for (double& v : theta.values) v *= 0.7;
        const std::size_t n = rng.index(1, 12);
        Vec feats(n * in);
        for (double& f : feats) f = rng.uniform(-2.0, 2.0);
        std::vector<int> labels(n);
        for (int& y : labels) y = static_cast<int>(rng.index(0, out - 1));
        return {spec, theta, LabeledDataset(in, feats, labels)};
    }
}

/// Smallest |pre-activation| over every hidden unit and sample. Central
/// differences are only meaningful when no ReLU kink lies within one step.
inline double min_hidden_preactivation(const MlpInstance& inst) {
    const auto& spec = inst.spec;
    const auto& th = inst.theta.values;
    double best = 1e300;
    for (std::size_t n = 0; n < inst.data.size(); ++n) {
        auto r = inst.data.row(n);
        Vec a(r.begin(), r.end());
        for (std::size_t l = 0; l + 1 < spec.num_layers(); ++l) {
            const std::size_t fi = spec.fan_in(l), fo = spec.fan_out(l), off = spec.layer_offset(l);
            Vec next(fo);
            for (std::size_t o = 0; o < fo; ++o) {
                double z = th[off + fi * fo + o];
                for (std::size_t i = 0; i < fi; ++i) z += th[off + o * fi + i] * a[i];
                best = std::min(best, std::abs(z));
                next[o] = std::max(0.0, z);
            }
            a = std::move(next);
        }
    }
    return best;
}

/// Central-difference gradient of ce_loss with the given sign.
inline Vec finite_difference_grad(const MlpInstance& inst, int sign, double h = 1e-4) {
    Vec g(inst.theta.size());
    ParamVector probe = inst.theta;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = probe.values[i];
        probe.values[i] = v + h;
        const double up = ce_loss(inst.spec, probe, inst.data, sign);
        probe.values[i] = v - h;
        const double down = ce_loss(inst.spec, probe, inst.data, sign);
        probe.values[i] = v;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double relative_l2(const Vec& a, const Vec& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

/// Gradient pair with random dimension and weights. `conflict` forces
/// <grad_f, grad_r> < 0 by reflecting grad_r when needed.
inline GradientPair random_gradient_pair(Rng& rng, std::size_t max_dim, bool conflict) {
    const std::size_t d = rng.index(2, max_dim);
    GradientPair gp{rng.normal_vec(d), rng.normal_vec(d), rng.uniform(0.05, 2.0), rng.uniform(0.05, 2.0)};
    for (double& v : gp.grad_r) v *= std::exp(rng.uniform(-2.0, 2.0));
    if (conflict) {
        // mix in -grad_f so the pair is clearly conflicting even in high dimension
        const double mix = rng.uniform(0.1, 3.0);
        const double scale = norm(gp.grad_r) / norm(gp.grad_f);
        for (std::size_t i = 0; i < d; ++i) gp.grad_r[i] -= mix * scale * gp.grad_f[i];
        if (dot(gp.grad_f, gp.grad_r) >= 0.0)
            for (double& v : gp.grad_r) v = -v;
    }
    return gp;
}

/// Residual of v after least-squares projection onto span{a, b}.
inline double span_residual(const Vec& v, const Vec& a, const Vec& b) {
    const double aa = dot(a, a), ab = dot(a, b), bb = dot(b, b);
    const double va = dot(v, a), vb = dot(v, b);
    const double det = aa * bb - ab * ab;
    const double x = (va * bb - vb * ab) / det;
    const double y = (vb * aa - va * ab) / det;
    double r2 = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double e = v[i] - x * a[i] - y * b[i];
        r2 += e * e;
    }
    return std::sqrt(r2);
}

}  // namespace cupmu::testing
