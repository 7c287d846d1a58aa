#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "spinpump/rng.hpp"

using namespace spinpump;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswers) {
    using C = Philox4x32::Counter;
    using K = Philox4x32::Key;
    EXPECT_EQ(Philox4x32::round10(C{0, 0, 0, 0}, K{0, 0}), (C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
    EXPECT_EQ(Philox4x32::round10(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, K{0xffffffffu, 0xffffffffu}),
              (C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
    EXPECT_EQ(Philox4x32::round10(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, K{0xa4093822u, 0x299f31d0u}),
              (C{0xd16cfe09u, 0x94fdcceb, 0x5001e420u, 0x24126ea1u}));
}

TEST(TrajectoryRng, DeterministicAndIndependentStreams) {
    TrajectoryRng a(7, 12, 0), b(7, 12, 0), c(7, 13, 0), d(7, 12, 1), e(8, 12, 0);
    std::set<double> seen;
    for (int i = 0; i < 10; ++i) {
        const double x = a.uniform();
        EXPECT_EQ(x, b.uniform());
        EXPECT_GE(x, 0.0);
        EXPECT_LT(x, 1.0);
        seen.insert(x);
        seen.insert(c.uniform());
        seen.insert(d.uniform());
        seen.insert(e.uniform());
    }
    EXPECT_EQ(seen.size(), 40u);
}

TEST(TrajectoryRng, MomentsOfUniform) {
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        TrajectoryRng r(1, static_cast<std::uint64_t>(i), 0);
        const double u = r.uniform();
        s += u;
        s2 += u * u;
    }
    const double m = s / n, v = s2 / n - m * m;
    EXPECT_NEAR(m, 0.5, 5 * std::sqrt(1.0 / 12 / n));
    EXPECT_NEAR(v, 1.0 / 12, 2e-3);
}

TEST(TrajectoryRng, OpenClosedRange) {
    TrajectoryRng r(3, 0, 0);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform_open_closed(0.0, 1.0);
        EXPECT_GT(u, 0.0);
        EXPECT_LE(u, 1.0);
    }
}
