// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cupmu/pivot.hpp"
#include "support.hpp"

using namespace cupmu;
using cupmu::testing::Rng;

namespace {

constexpr double kPi = std::numbers::pi;

void expect_vec_near(const Vec& a, const Vec& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

// grad_f = (1,0), grad_r = (-1,2): a conflicting pair in the plane
GradientPair conflict_pair() { return {{1, 0}, {-1, 2}, 1, 1}; }

}  // namespace

TEST(TotalGradient, WeightedSum) {
    EXPECT_EQ(total_gradient({{1, 0}, {0, 1}, 1, 1}), (Vec{1, 1}));
    EXPECT_EQ(total_gradient({{1, 0}, {0, 3}, 0, 2}), (Vec{0, 6}));
    EXPECT_EQ(total_gradient({{1, 5}, {7, 3}, 2, 0}), (Vec{2, 10}));
}

TEST(GradientPairValidation, RejectsBadInputs) {
    EXPECT_THROW(total_gradient({{1, 0}, {0}, 1, 1}), Error);
    EXPECT_THROW(total_gradient({{1, 0}, {0, 1}, 0, 0}), Error);
    EXPECT_THROW(total_gradient({{1, 0}, {0, 1}, -1, 1}), Error);
    EXPECT_THROW(total_gradient({{1, std::nan("")}, {0, 1}, 1, 1}), Error);
}

TEST(Anchors, OrthogonalGradients) {
    const auto fr = anchors({{1, 0}, {0, 1}, 1, 1});
    expect_vec_near(fr.g_eff, {1, 0}, 1e-15);
    expect_vec_near(fr.g_fid, {0, 1}, 1e-15);
    EXPECT_NEAR(fr.phi, kPi / 2, 1e-15);
    EXPECT_EQ(fr.flags, 0u);
}

TEST(Anchors, ConflictExample) {
    const auto fr = anchors(conflict_pair());
    expect_vec_near(fr.g_total, {0, 2}, 0);
    expect_vec_near(fr.g_eff, {4.0 / 5, 2.0 / 5}, 1e-15);
    expect_vec_near(fr.g_fid, {0, 2}, 1e-15);
    EXPECT_NEAR(std::cos(fr.phi), 1 / std::sqrt(5.0), 1e-15);
    EXPECT_FALSE(fr.has(kNoConflict));
}

TEST(Anchors, ZeroGradRKeepsTotalAsEfficacyAnchor) {
    const auto fr = anchors({{1, 1}, {0, 0}, 1, 1});
    EXPECT_TRUE(fr.has(kZeroGradR));
    EXPECT_EQ(fr.g_eff, fr.g_total);
    EXPECT_TRUE(fr.has(kZeroAnchorFid));
    EXPECT_FALSE(fr.usable());
}

TEST(Anchors, ParallelGradientsThrowDegenerate) {
    try {
        anchors({{1, 2}, {1, 2}, 1, 1});
        FAIL();
    } catch (const DegenerateFrameError& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateFrame);
        EXPECT_TRUE(e.flags() & kZeroAnchorEff);
        EXPECT_TRUE(e.flags() & kZeroAnchorFid);
    }
}

TEST(Anchors, EpsilonScalesWithDimension) {
    // |v|^2 = 1e-12 is zero in 2-D only when eps * d exceeds it
    GradientPair gp{{1e-6, 0}, {0, 1}, 1, 1};
    EXPECT_TRUE(anchors(gp).has(kZeroGradF));
    EXPECT_FALSE(anchors(gp, 1e-14).has(kZeroGradF));
}

TEST(PivotDirection, GammaZeroIsFidelityAnchor) {
    const auto fr = anchors(conflict_pair());
    expect_vec_near(pivot_direction(fr, conflict_pair().grad_f, 0.0), {0, 1}, 0);
}

TEST(PivotDirection, GammaOneIsColinearWithEfficacyAnchor) {
    const auto fr = anchors(conflict_pair());
    const auto g = pivot_direction(fr, conflict_pair().grad_f, 1.0);
    expect_vec_near(g, {2 / std::sqrt(5.0), 1 / std::sqrt(5.0)}, 1e-15);
    EXPECT_NEAR(cosine(g, fr.g_eff), 1.0, 1e-9);
}

TEST(PivotDirection, HalfRotationOfOrthonormalFrame) {
    const auto fr = anchors({{1, 0}, {0, 1}, 1, 1});
    const double h = std::sqrt(2.0) / 2;
    expect_vec_near(pivot_direction(fr, Vec{1, 0}, 0.5), {h, h}, 1e-15);
}

TEST(PivotDirection, RejectsBadGammaAndFrames) {
    const auto fr = anchors(conflict_pair());
    EXPECT_THROW(pivot_direction(fr, conflict_pair().grad_f, -0.1), Error);
    EXPECT_THROW(pivot_direction(fr, conflict_pair().grad_f, 1.1), Error);
    const auto bad = anchors({{1, 1}, {0, 0}, 1, 1});
    EXPECT_THROW(pivot_direction(bad, Vec{1, 1}, 0.5), DegenerateFrameError);
}

TEST(CupGradient, ConflictExampleAtGammaOne) {
    const auto g = cup_gradient(conflict_pair(), 1.0);
    expect_vec_near(g, {2 * 2 / std::sqrt(5.0), 2 * 1 / std::sqrt(5.0)}, 1e-15);
}

TEST(CupGradient, NormEqualsTotalGradientNorm) {
    Rng rng(8);
    for (int t = 0; t < 500; ++t) {
        const auto gp = cupmu::testing::random_gradient_pair(rng, 50, t % 2 == 0);
        const double gamma = rng.uniform();
        const auto g = cup_gradient(gp, gamma);
        EXPECT_NEAR(norm(g), norm(total_gradient(gp)), 1e-9 * norm(total_gradient(gp)));
    }
}

TEST(CupGradient, ParallelGradientsFallBackToTotal) {
    GradientPair gp{{1, 2}, {1, 2}, 1, 1};
    const auto step = cup_step(gp, 0.7);
    EXPECT_TRUE(step.fallback);
    EXPECT_TRUE(step.flags & kZeroAnchorEff);
    EXPECT_EQ(step.direction, (Vec{2, 4}));
    EXPECT_EQ(cup_gradient(gp, 0.7), (Vec{2, 4}));
}

TEST(CupGradient, ZeroForgetGradientFallsBack) {
    const auto step = cup_step({{0, 0}, {1, 1}, 1, 1}, 0.3);
    EXPECT_TRUE(step.fallback);
    EXPECT_TRUE(step.flags & kZeroGradF);
    EXPECT_EQ(step.direction, (Vec{1, 1}));
}

TEST(ConflictFreeCheck, EfficacyAnchorOfConflictExample) {
    const auto fr = anchors(conflict_pair());
    const auto c = conflict_free_check(fr.g_eff, conflict_pair(), 1e-12);
    EXPECT_TRUE(c.ok);
    EXPECT_NEAR(c.ip_f, 0.8, 1e-15);
    EXPECT_NEAR(c.ip_r, 0.0, 1e-15);
}

TEST(ConflictFreeCheck, SmallConflictCanStillBeFree) {
    // grad_f = (1,0), grad_r = (-1,0.1): g_total = (0,0.1) has inner
    // products (0, 0.01), so this particular pair passes
    GradientPair gp{{1, 0}, {-1, 0.1}, 1, 1};
    const auto c = conflict_free_check(total_gradient(gp), gp);
    EXPECT_TRUE(c.ok);
    EXPECT_NEAR(c.ip_f, 0.0, 1e-15);
    EXPECT_NEAR(c.ip_r, 0.01, 1e-15);
}

TEST(ConflictFreeCheck, DominantForgetGradientIncreasesRemainLoss) {
    GradientPair gp{{3, 0}, {-1, 0.1}, 1, 1};
    const auto c = conflict_free_check(total_gradient(gp), gp);
    EXPECT_FALSE(c.ok);
    EXPECT_NEAR(c.ip_r, -1.99, 1e-12);
}

TEST(ConflictFreeCheck, ZeroVectorPasses) {
    const auto c = conflict_free_check(Vec{0, 0}, conflict_pair());
    EXPECT_TRUE(c.ok);
    EXPECT_EQ(c.ip_f, 0.0);
    EXPECT_EQ(c.ip_r, 0.0);
}

// ---- properties over random pairs ----------------------------------------

TEST(PivotProperty, AnchorsAreOrthogonal) {
    Rng rng(100);
    for (int t = 0; t < 2000; ++t) {
        const auto gp = cupmu::testing::random_gradient_pair(rng, t < 1900 ? 64 : 10000, t % 3 == 0);
        const auto fr = anchors(gp);
        ASSERT_TRUE(fr.usable());
        EXPECT_LE(std::abs(dot(fr.g_eff, gp.grad_r)), 1e-9 * norm(fr.g_eff) * norm(gp.grad_r));
        EXPECT_LE(std::abs(dot(fr.g_fid, gp.grad_f)), 1e-9 * norm(fr.g_fid) * norm(gp.grad_f));
        EXPECT_GE(fr.phi, 0.0);
        EXPECT_LE(fr.phi, kPi);
    }
}

TEST(PivotProperty, UnitNormAndCoplanarity) {
    Rng rng(101);
    for (int t = 0; t < 1000; ++t) {
        const auto gp = cupmu::testing::random_gradient_pair(rng, 200, t % 2 == 0);
        const auto fr = anchors(gp);
        for (double gamma : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) {
            const auto g = pivot_direction(fr, gp.grad_f, gamma);
            EXPECT_NEAR(norm(g), 1.0, 1e-9);
            EXPECT_LT(cupmu::testing::span_residual(g, gp.grad_f, gp.grad_r), 1e-9);
        }
    }
}

TEST(PivotProperty, EndpointsAlignWithAnchors) {
    Rng rng(102);
    for (int t = 0; t < 1000; ++t) {
        const auto gp = cupmu::testing::random_gradient_pair(rng, 200, true);
        const auto fr = anchors(gp);
        ASSERT_GT(dot(fr.g_eff, gp.grad_f), 0.0);
        EXPECT_GE(cosine(pivot_direction(fr, gp.grad_f, 0.0), fr.g_fid), 1 - 1e-6);
        EXPECT_GE(cosine(pivot_direction(fr, gp.grad_f, 1.0), fr.g_eff), 1 - 1e-6);
    }
}

TEST(PivotProperty, ConeIsConflictFree) {
    Rng rng(103);
    for (int t = 0; t < 2000; ++t) {
        const auto gp = cupmu::testing::random_gradient_pair(rng, 200, true);
        ASSERT_LT(dot(gp.grad_f, gp.grad_r), 0.0);
        const auto fr = anchors(gp);
        const double c1 = rng.uniform(0, 3), c2 = rng.uniform(0, 3);
        Vec g(gp.dim());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = c1 * fr.g_eff[i] + c2 * fr.g_fid[i];
        EXPECT_TRUE(conflict_free_check(g, gp, 1e-8).ok);
    }
}

TEST(PivotProperty, CupDirectionIsConflictFree) {
    Rng rng(104);
    for (int t = 0; t < 2000; ++t) {
        const auto gp = cupmu::testing::random_gradient_pair(rng, 100, t % 2 == 0);
        EXPECT_TRUE(conflict_free_check(cup_gradient(gp, rng.uniform()), gp, 1e-8).ok);
    }
}

// In the conflict regime the pivot angle stays below pi/2, so the forgetting
// component sin(gamma phi) |grad_f| grows with gamma.
TEST(PivotProperty, ForgettingComponentMonotoneUnderConflict) {
    Rng rng(105);
    for (int t = 0; t < 1000; ++t) {
        const auto gp = cupmu::testing::random_gradient_pair(rng, 100, true);
        const auto fr = anchors(gp);
        EXPECT_LE(fr.phi, kPi / 2 + 1e-12);
        double prev = -1e300;
        for (int k = 0; k <= 20; ++k) {
            const double gamma = k / 20.0;
            const double ip = dot(pivot_direction(fr, gp.grad_f, gamma), gp.grad_f);
            EXPECT_NEAR(ip, std::sin(gamma * fr.phi) * norm(gp.grad_f), 1e-9 * norm(gp.grad_f));
            EXPECT_GE(ip, prev - 1e-12);
            prev = ip;
        }
    }
}

// Without conflict phi exceeds pi/2 and the forgetting component peaks before gamma = 1.
TEST(PivotProperty, AlignedGradientsGiveObtusePivotAngle) {
    GradientPair gp{{1, 0}, {1, 1}, 1, 1};
    const auto fr = anchors(gp);
    EXPECT_GT(fr.phi, kPi / 2);
    const double mid = dot(pivot_direction(fr, gp.grad_f, kPi / 2 / fr.phi), gp.grad_f);
    const double end = dot(pivot_direction(fr, gp.grad_f, 1.0), gp.grad_f);
    EXPECT_GT(mid, end);
    EXPECT_FALSE(fr.has(kNoConflict));
}
