// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>

#include "cupmu/hypervolume.hpp"
#include "support.hpp"

using namespace cupmu;
using cupmu::testing::Rng;

namespace {

// Inclusion-exclusion over all non-empty subsets: the volume of an
// intersection of origin-anchored boxes is the box at the componentwise min.
double hv_inclusion_exclusion(const std::vector<Vec>& pts) {
    const std::size_t n = pts.size(), m = pts.front().size();
    double total = 0.0;
    for (std::uint64_t mask = 1; mask < (1ull << n); ++mask) {
        Vec lo(m, 1e300);
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (1ull << i))
                for (std::size_t j = 0; j < m; ++j) lo[j] = std::min(lo[j], std::max(0.0, pts[i][j]));
        double v = 1.0;
        for (double x : lo) v *= x;
        total += (std::popcount(mask) % 2 ? 1.0 : -1.0) * v;
    }
    return total;
}

std::vector<Vec> random_points(Rng& rng, std::size_t n, std::size_t m) {
    std::vector<Vec> pts(n, Vec(m));
    for (auto& p : pts)
        for (double& x : p) x = rng.uniform(0.0, 1.0);
    return pts;
}

}  // namespace

TEST(HvExact, SingleBox) { EXPECT_DOUBLE_EQ(hv_exact({{{3, 4}}, {}}).value, 12.0); }

TEST(HvExact, StaircaseOfThree) {
    // 3 + 4 + 3 - 2 - 1 - 2 + 1
    EXPECT_DOUBLE_EQ(hv_exact({{{1, 3}, {2, 2}, {3, 1}}, {}}).value, 6.0);
}

TEST(HvExact, DominatedPointIgnored) { EXPECT_DOUBLE_EQ(hv_exact({{{3, 4}, {1, 1}}, {}}).value, 12.0); }

TEST(HvExact, EmptyInputFlagged) {
    const auto r = hv_exact({{}, {0, 0}});
    EXPECT_EQ(r.value, 0.0);
    EXPECT_TRUE(r.empty_input);
}

TEST(HvExact, PointsBelowReferenceAreClipped) {
    EXPECT_DOUBLE_EQ(hv_exact({{{-1, 5}, {2, 2}}, {}}).value, 4.0);
    EXPECT_DOUBLE_EQ(hv_exact({{{3, 4}}, {1, 1}}).value, 6.0);
    EXPECT_DOUBLE_EQ(hv_exact({{{3, 4}}, {3, 4}}).value, 0.0);
}

TEST(HvExact, ThreeAndFourDimensionalBoxes) {
    EXPECT_DOUBLE_EQ(hv_exact({{{1, 2, 3}}, {}}).value, 6.0);
    EXPECT_DOUBLE_EQ(hv_exact({{{1, 2, 3, 4}}, {}}).value, 24.0);
    // two unit-overlapping boxes in 3-D: 2*1*1 + 1*2*1 - 1
    EXPECT_DOUBLE_EQ(hv_exact({{{2, 1, 1}, {1, 2, 1}}, {}}).value, 3.0);
}

TEST(HvExact, RetrainIdentityUnderPercentScaling) {
    // RA = UA = MIA = 100 leaves TA as the scaled hypervolume
    const Vec p{1.0, 1.0, 0.9488, 1.0};
    EXPECT_NEAR(100 * hv_exact({{p}, {}}).value, 94.88, 1e-12);
}

TEST(HvExact, RejectsBadInput) {
    EXPECT_THROW(hv_exact({{{1, 2, 3, 4, 5}}, {}}), Error);
    EXPECT_THROW(hv_exact({{{1, 2}, {1, 2, 3}}, {}}), Error);
    EXPECT_THROW(hv_exact({{{1, 2}}, {0, 0, 0}}), Error);
    EXPECT_THROW(hv_exact({{{1, INFINITY}}, {}}), Error);
}

TEST(HvProperty, MatchesInclusionExclusion) {
    Rng rng(1);
    for (int t = 0; t < 300; ++t) {
        const std::size_t m = rng.index(1, 4), n = rng.index(1, 10);
        const auto pts = random_points(rng, n, m);
        EXPECT_NEAR(hv_exact({pts, {}}).value, hv_inclusion_exclusion(pts), 1e-12);
    }
}

TEST(HvProperty, MonotoneUnderInsertion) {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
        const std::size_t m = rng.index(2, 4);
        auto pts = random_points(rng, rng.index(1, 30), m);
        const double before = hv_exact({pts, {}}).value;
        pts.push_back(random_points(rng, 1, m).front());
        EXPECT_GE(hv_exact({pts, {}}).value, before - 1e-15);
    }
}

TEST(HvProperty, DominatedRemovalInvariant) {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        const std::size_t m = rng.index(2, 4);
        auto pts = random_points(rng, rng.index(1, 30), m);
        const double before = hv_exact({pts, {}}).value;
        Vec dominated = pts[rng.index(0, pts.size() - 1)];
        for (double& x : dominated) x *= rng.uniform(0.0, 1.0);
        pts.insert(pts.begin() + static_cast<std::ptrdiff_t>(rng.index(0, pts.size())), dominated);
        EXPECT_NEAR(hv_exact({pts, {}}).value, before, 1e-12);
    }
}

TEST(HvProperty, ScaleCovariance) {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        const std::size_t m = rng.index(2, 4);
        auto pts = random_points(rng, rng.index(1, 30), m);
        const double c = rng.uniform(0.1, 10.0);
        const double base = hv_exact({pts, {}}).value;
        for (auto& p : pts)
            for (double& x : p) x *= c;
        EXPECT_NEAR(hv_exact({pts, {}}).value, base * std::pow(c, static_cast<double>(m)),
                    1e-11 * base * std::pow(c, static_cast<double>(m)));
    }
}

TEST(HvProperty, PermutationInvariant) {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        auto pts = random_points(rng, rng.index(1, 30), rng.index(2, 4));
        const double base = hv_exact({pts, {}}).value;
        std::shuffle(pts.begin(), pts.end(), rng.eng);
        EXPECT_NEAR(hv_exact({pts, {}}).value, base, 1e-12);
    }
}

TEST(HvMonteCarlo, SinglePointWithinThreeStandardErrors) {
    // the bounding box is the point's own box, so every sample hits
    const auto e = hv_monte_carlo({{{3, 4}}, {}}, 1'000'000, 1);
    EXPECT_NEAR(e.estimate, 12.0, 3 * e.std_error + 1e-12);
}

TEST(HvMonteCarlo, SeedDeterminismAndJobIndependence) {
    PointSet ps{{{1, 3}, {2, 2}, {3, 1}}, {}};
    const auto a = hv_monte_carlo(ps, 300'000, 7, 1);
    const auto b = hv_monte_carlo(ps, 300'000, 7, 1);
    const auto c = hv_monte_carlo(ps, 300'000, 7, 3);
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_EQ(a.estimate, c.estimate);
    EXPECT_EQ(a.std_error, c.std_error);
    EXPECT_NE(a.estimate, hv_monte_carlo(ps, 300'000, 8, 1).estimate);
    EXPECT_NEAR(a.estimate, 6.0, 4 * a.std_error);
}

TEST(HvMonteCarlo, DegenerateBoxIsExactZero) {
    const auto e = hv_monte_carlo({{{3, 4}}, {3, 4}}, 1000, 1);
    EXPECT_EQ(e.estimate, 0.0);
    EXPECT_EQ(e.std_error, 0.0);
    EXPECT_THROW(hv_monte_carlo({{{3, 4}}, {}}, 0, 1), Error);
}

TEST(HvMonteCarlo, AgreesWithExactOnRandomSets) {
    Rng rng(6);
    int within = 0;
    const int trials = 40;
    for (int t = 0; t < trials; ++t) {
        PointSet ps{random_points(rng, rng.index(1, 50), rng.index(2, 4)), {}};
        const double exact = hv_exact(ps).value;
        const auto e = hv_monte_carlo(ps, 200'000, static_cast<std::uint64_t>(t));
        within += std::abs(e.estimate - exact) <= 4 * e.std_error + 1e-12 * exact;
    }
    EXPECT_GE(within, trials - 1);
}
