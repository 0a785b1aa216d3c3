// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cupmu/common.hpp"

namespace cupmu {

/// Gradients of the forgetting and remaining losses at one point, with the
/// scalarization weights that define the total gradient
/// w_f * grad_f + w_r * grad_r.
struct GradientPair {
    Vec grad_f;
    Vec grad_r;
    double w_f = 1.0;
    double w_r = 1.0;

    std::size_t dim() const noexcept { return grad_f.size(); }

    void validate() const {
        require(grad_f.size() == grad_r.size(), ErrorCode::DimensionMismatch, "gradient lengths differ");
        require(!grad_f.empty(), ErrorCode::DimensionMismatch, "empty gradients");
        require(all_finite(grad_f) && all_finite(grad_r), ErrorCode::NonFinite, "gradient contains non-finite entries");
        require(w_f >= 0.0 && w_r >= 0.0, ErrorCode::Config, "weights must be non-negative");
        require(w_f > 0.0 || w_r > 0.0, ErrorCode::Config, "weights must not both be zero");
    }
};

/// Degeneracy markers attached to an anchor frame.
enum FrameFlag : std::uint32_t {
    kZeroGradF = 1u << 0,
    kZeroGradR = 1u << 1,
    kZeroAnchorEff = 1u << 2,
    kZeroAnchorFid = 1u << 3,
    kNoConflict = 1u << 4,
};

inline std::vector<std::string> flag_names(std::uint32_t flags) {
    std::vector<std::string> out;
    if (flags & kZeroGradF) out.emplace_back("ZERO_GRAD_F");
    if (flags & kZeroGradR) out.emplace_back("ZERO_GRAD_R");
    if (flags & kZeroAnchorEff) out.emplace_back("ZERO_ANCHOR_EFF");
    if (flags & kZeroAnchorFid) out.emplace_back("ZERO_ANCHOR_FID");
    if (flags & kNoConflict) out.emplace_back("NO_CONFLICT");
    return out;
}

class DegenerateFrameError : public Error {
public:
    DegenerateFrameError(std::uint32_t flags, const std::string& what)
        : Error(ErrorCode::DegenerateFrame, what), flags_(flags) {}
    std::uint32_t flags() const noexcept { return flags_; }

private:
    std::uint32_t flags_;
};

/// Squared-norm threshold per dimension below which a vector counts as zero.
inline constexpr double kDegenerateEps = 1e-12;

struct AnchorFrame {
    Vec g_total;
    Vec g_eff;  // g_total with its grad_r component removed
    Vec g_fid;  // g_total with its grad_f component removed
    double phi = 0.0;
    std::uint32_t flags = 0;

    bool has(FrameFlag f) const noexcept { return (flags & f) != 0; }

    /// All three vectors entering the rotation are non-zero.
    bool usable() const noexcept {
        return !(flags & (kZeroGradF | kZeroAnchorEff | kZeroAnchorFid));
    }
};

inline Vec total_gradient(const GradientPair& gp) {
    gp.validate();
    Vec g(gp.dim());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = gp.w_f * gp.grad_f[i] + gp.w_r * gp.grad_r[i];
    return g;
}

namespace detail {

inline bool is_zero(std::span<const double> v, double eps) {
    return dot(v, v) < eps * static_cast<double>(v.size());
}

// v minus its projection onto u; v unchanged when u is zero.
inline Vec reject(std::span<const double> v, std::span<const double> u, bool u_zero) {
    Vec out(v.begin(), v.end());
    if (u_zero) return out;
    axpy(-dot(v, u) / dot(u, u), u, out);
    return out;
}

}  // namespace detail

/// Builds the efficacy/fidelity anchors and the angle between them.
/// Throws DegenerateFrameError when both anchors vanish.
inline AnchorFrame anchors(const GradientPair& gp, double eps = kDegenerateEps) {
    AnchorFrame fr;
    fr.g_total = total_gradient(gp);
    const bool zf = detail::is_zero(gp.grad_f, eps);
    const bool zr = detail::is_zero(gp.grad_r, eps);
    if (zf) fr.flags |= kZeroGradF;
    if (zr) fr.flags |= kZeroGradR;

    fr.g_eff = detail::reject(fr.g_total, gp.grad_r, zr);
    fr.g_fid = detail::reject(fr.g_total, gp.grad_f, zf);
    const bool ze = detail::is_zero(fr.g_eff, eps);
    const bool zd = detail::is_zero(fr.g_fid, eps);
    if (ze) fr.flags |= kZeroAnchorEff;
    if (zd) fr.flags |= kZeroAnchorFid;
    if (ze && zd) throw DegenerateFrameError(fr.flags, "both anchors vanish");

    if (!ze && !zd) {
        const double c = dot(fr.g_fid, fr.g_eff) / (norm(fr.g_fid) * norm(fr.g_eff));
        fr.phi = std::acos(std::clamp(c, -1.0, 1.0));
    }
    if (!zf && !ze && dot(fr.g_eff, gp.grad_f) < 0.0) fr.flags |= kNoConflict;
    return fr;
}

/// Unit direction rotated from g_fid toward grad_f by gamma * phi:
///   cos(gamma phi) g_fid/|g_fid| + sin(gamma phi) grad_f/|grad_f|.
inline Vec pivot_direction(const AnchorFrame& frame, std::span<const double> grad_f, double gamma) {
    require(gamma >= 0.0 && gamma <= 1.0, ErrorCode::Config, "gamma must lie in [0,1]");
    require(grad_f.size() == frame.g_fid.size(), ErrorCode::DimensionMismatch, "gradient length mismatch");
    if (!frame.usable()) throw DegenerateFrameError(frame.flags, "anchor frame is not usable for pivoting");
    const double a = gamma * frame.phi;
    const double cf = std::cos(a) / norm(frame.g_fid);
    const double sf = std::sin(a) / norm(grad_f);
    Vec g(grad_f.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = cf * frame.g_fid[i] + sf * grad_f[i];
    return g;
}

struct CupStep {
    Vec direction;
    AnchorFrame frame;  // empty vectors if anchors() threw
    std::uint32_t flags = 0;
    bool fallback = false;  // direction is g_total
};

/// |g_total| * g_gamma, or g_total itself when the frame cannot be pivoted.
inline CupStep cup_step(const GradientPair& gp, double gamma, double eps = kDegenerateEps) {
    require(gamma >= 0.0 && gamma <= 1.0, ErrorCode::Config, "gamma must lie in [0,1]");
    CupStep out;
    try {
        out.frame = anchors(gp, eps);
        out.flags = out.frame.flags;
        if (out.frame.usable()) {
            out.direction = pivot_direction(out.frame, gp.grad_f, gamma);
            const double scale = norm(out.frame.g_total);
            for (double& v : out.direction) v *= scale;
            return out;
        }
    } catch (const DegenerateFrameError& e) {
        out.flags = e.flags();
    }
    out.fallback = true;
    out.direction = out.frame.g_total.empty() ? total_gradient(gp) : out.frame.g_total;
    return out;
}

inline Vec cup_gradient(const GradientPair& gp, double gamma, double eps = kDegenerateEps) {
    return cup_step(gp, gamma, eps).direction;
}

struct ConflictCheck {
    bool ok = false;
    double ip_f = 0.0;
    double ip_r = 0.0;
};

/// Whether stepping along -g increases neither loss to first order.
inline ConflictCheck conflict_free_check(std::span<const double> g, const GradientPair& gp, double slack = 0.0) {
    ConflictCheck c;
    c.ip_f = dot(g, gp.grad_f);
    c.ip_r = dot(g, gp.grad_r);
    c.ok = c.ip_f >= -slack && c.ip_r >= -slack;
    return c;
}

/// One row of the per-step pivot log.
struct StepDiagnostic {
    std::size_t step = 0;
    double grad_dot = 0.0;  // <grad_f, grad_r>
    double phi = 0.0;
    double gamma_phi = 0.0;
    double ip_f = 0.0;
    double ip_r = 0.0;
    std::uint32_t flags = 0;
    bool fallback = false;
};

}  // namespace cupmu
