#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spinpump/quantum.hpp"

using namespace spinpump;

namespace {

using M2 = std::array<std::array<cplx, 2>, 2>;

M2 mul(const M2& a, const M2& b) {
    M2 r{};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
    return r;
}

// exp(i H) by Taylor series
M2 expi(const M2& H) {
    const cplx i{0, 1};
    M2 term{{{1, 0}, {0, 1}}}, sum = term;
    for (int n = 1; n < 60; ++n) {
        M2 t = mul(term, H);
        for (auto& row : t)
            for (auto& v : row) v *= i / static_cast<double>(n);
        term = t;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) sum[a][b] += term[a][b];
    }
    return sum;
}

SpinorField gaussian(const Grid& g, double x0, double sx, double p0, double hbar, Spinor chi) {
    SpinorField f(g.N);
    for (std::size_t j = 0; j < g.N; ++j) {
        const double x = g.x(j);
        const cplx v = std::polar(std::exp(-(x - x0) * (x - x0) / (4 * sx * sx)), p0 * x / hbar);
        f.psi_plus[j] = chi[0] * v;
        f.psi_minus[j] = chi[1] * v;
    }
    const double n = std::sqrt(f.norm2(g.dx()));
    for (std::size_t j = 0; j < g.N; ++j) f.psi_plus[j] /= n, f.psi_minus[j] /= n;
    return f;
}

}  // namespace

TEST(Grid, MirrorIsExactParity) {
    const Grid g{64.0, 1024};
    for (std::size_t j = 1; j < g.N; ++j) EXPECT_EQ(g.x(g.mirror(j)), -g.x(j));
    EXPECT_EQ(g.x(g.N / 2), 0.0);
    EXPECT_EQ(g.index_of(g.x(300)), 300u);
    EXPECT_THROW((Grid{64.0, 1000}).validate(), std::invalid_argument);
    EXPECT_THROW(g.index_of(100.0), std::out_of_range);
}

TEST(Kick, MatchesMatrixExponential) {
    ModelParams p;
    p.A1 = 8.0;
    p.A2 = 3.0;
    p.a = 1.0;  // overlapping supports are impossible, so test each sector
    const Grid g{8.0, 256};
    const KickTable k = kick_unitary(g, p);
    const cplx i{0, 1};
    for (std::size_t j = 0; j < g.N; j += 7) {
        const FieldPair B = field(g.x(j), p);
        const double s = p.muB / p.hbar;
        // H = s (B1 sigma_y + B2 sigma_z)
        const M2 H{{{s * B.B2, -i * s * B.B1}, {i * s * B.B1, -s * B.B2}}};
        const M2 U = expi(H), K = k.matrix(j);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) EXPECT_NEAR(std::abs(U[a][b] - K[a][b]), 0.0, 1e-12) << j;
    }
}

TEST(Kick, IsUnitaryEverywhere) {
    ModelParams p;
    p.A1 = 8.0;
    const Grid g{64.0, 4096};
    const KickTable k = kick_unitary(g, p);
    for (std::size_t j = 0; j < g.N; ++j) {
        const M2 U = k.matrix(j);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                const cplx v = std::conj(U[0][a]) * U[0][b] + std::conj(U[1][a]) * U[1][b];
                ASSERT_NEAR(std::abs(v - (a == b ? 1.0 : 0.0)), 0.0, 1e-14);
            }
    }
}

TEST(Propagator, NormConservedWithoutSourceOrAbsorber) {
    ModelParams p;
    p.A1 = 8.0;
    const Grid g{64.0, 8192};
    AbsorberSpec ab;
    ab.enabled = false;
    Propagator prop(g, p, 64, ab);
    SpinorField psi = gaussian(g, -10.0, 2.0, 5.0, p.hbar, {std::sqrt(0.5), cplx(0, std::sqrt(0.5))});
    const double n0 = psi.norm2(g.dx());
    for (long n = 0; n < 100; ++n) prop.propagate_period(psi, n);
    EXPECT_LT(std::abs(psi.norm2(g.dx()) - n0), 1e-12);
}

TEST(Propagator, SubstepPathAgreesWithFusedFlight) {
    ModelParams p;
    p.A1 = 8.0;
    p.phi_kick = 1.0;
    const Grid g{64.0, 8192};
    AbsorberSpec ab;
    ab.enabled = false;
    Propagator prop(g, p, 64, ab);
    SpinorField a = gaussian(g, -10.0, 2.0, 5.0, p.hbar, {1.0, 0.0});
    SpinorField b = a;
    const double n0 = a.norm2(g.dx());
    std::size_t calls = 0;
    for (long n = 0; n < 100; ++n) {
        prop.propagate_period(a, n);
        prop.propagate_period(b, n, [&](std::size_t, const SpinorField&) { ++calls; });
    }
    EXPECT_EQ(calls, 6400u);
    double d = 0;
    for (std::size_t j = 0; j < g.N; ++j) d = std::max(d, std::abs(a.psi_plus[j] - b.psi_plus[j]) + std::abs(a.psi_minus[j] - b.psi_minus[j]));
    EXPECT_LT(d, 1e-10);
    // 6400 FFT round trips accumulate a biased roundoff of ~2e-16 each
    EXPECT_LT(std::abs(b.norm2(g.dx()) - n0), 5e-12);
}

TEST(Propagator, FreeSpreadingMatchesAnalyticGaussian) {
    ModelParams p;
    p.A1 = p.A2 = 0.0;
    const Grid g{64.0, 4096};
    const double s0 = 1.5, p0 = 2.0, t = 3.0;
    SpinorField psi = gaussian(g, -5.0, s0, p0, p.hbar, {1.0, 0.0});
    free_step(psi, t, g, p);
    const double st2 = s0 * s0 * (1 + std::pow(p.hbar * t / (2 * p.m0 * s0 * s0), 2));
    const double xc = -5.0 + p0 * t / p.m0;
    double err = 0;
    for (std::size_t j = 0; j < g.N; ++j) {
        const double x = g.x(j);
        const double rho = std::exp(-(x - xc) * (x - xc) / (2 * st2)) / std::sqrt(2 * std::numbers::pi * st2);
        err = std::max(err, std::abs(std::norm(psi.psi_plus[j]) - rho));
    }
    EXPECT_LT(err, 1e-10);
}

TEST(Propagator, KickPhaseSelectsSubstep) {
    ModelParams p;
    const Grid g{64.0, 1024};
    AbsorberSpec ab;
    p.phi_kick = std::numbers::pi;
    EXPECT_EQ(Propagator(g, p, 64, ab).kick_substep(), 32u);
    p.phi_kick = -std::numbers::pi / 2;
    EXPECT_EQ(Propagator(g, p, 64, ab).kick_substep(), 48u);
}

class AbsorberReflection : public ::testing::TestWithParam<double> {};

// Packet sent into the right absorber: whatever survives (reflected or
// wrapped through) bounds the absorber reflectivity.
TEST_P(AbsorberReflection, BelowOneInAMillion) {
    ModelParams p;
    p.A1 = p.A2 = 0.0;
    const Grid g{64.0, 8192};
    const double p0 = GetParam();
    const double sx = 4.0;  // momentum spread hbar/(2 sx) = 0.031
    AbsorberSpec ab;
    Propagator prop(g, p, 64, ab);
    SpinorField psi = gaussian(g, 25.0, sx, p0, p.hbar, {1.0, 0.0});
    const long periods = static_cast<long>(std::ceil(3.0 * 64.0 / p0)) + 20;
    for (long n = 0; n < periods; ++n) prop.propagate_period(psi, n);
    EXPECT_LT(psi.norm2(g.dx()), 1e-6) << "p0 = " << p0;
}
INSTANTIATE_TEST_SUITE_P(Channels, AbsorberReflection, ::testing::Values(1.73, 3.0, 5.0, 7.0, 9.0));

TEST(Analysis, FlatTopWindowShape) {
    const auto w = flat_top_window(101);
    EXPECT_NEAR(w[50], 1.0, 1e-6);
    for (std::size_t i = 0; i < 101; ++i) EXPECT_NEAR(w[i], w[100 - i], 1e-15);
    EXPECT_NEAR(w[0], 0.0, 1e-3);
}

TEST(Analysis, ProjectionSeparatesPlaneWaves) {
    ModelParams p;
    const Grid g{64.0, 8192};
    const AnalysisWindow win{g.index_of(-24.0), g.index_of(-8.0)};
    const auto w = flat_top_window(win.length());
    SpinorField f(g.N);
    const double k1 = 5.0, k2 = 4.82;  // neighbouring channels at hbar omega = pi/2
    for (std::size_t j = 0; j < g.N; ++j) {
        f.psi_plus[j] = 0.7 * std::polar(1.0, k1 * g.x(j) / p.hbar) + 0.3 * std::polar(1.0, -k2 * g.x(j) / p.hbar);
        f.psi_minus[j] = cplx(0, 0.2) * std::polar(1.0, -k1 * g.x(j) / p.hbar);
    }
    // leakage is bounded by the flat-top sidelobe level (about -93 dB)
    const double tol = 1e-5;
    const Spinor a = project_momentum(f, g, win, w, k1, p.hbar);
    EXPECT_NEAR(std::abs(a[0] - 0.7), 0.0, tol);
    EXPECT_NEAR(std::abs(a[1]), 0.0, tol);
    const Spinor b = project_momentum(f, g, win, w, -k1, p.hbar);
    EXPECT_NEAR(std::abs(b[1] - cplx(0, 0.2)), 0.0, tol);
    const Spinor c = project_momentum(f, g, win, w, -k2, p.hbar);
    EXPECT_NEAR(std::abs(c[0] - 0.3), 0.0, tol);
}

TEST(Source, ExpmOverIsAccurateNearZero) {
    for (double r : {1e-8, 1e-4, 9e-4, 2e-3, 0.5}) {
        // (e^{iy} - 1)/(iy) = sin(y)/y + i 2 sin^2(y/2)/y, free of cancellation
        const cplx z(0, r);
        const cplx ref(std::sin(r) / r, 2 * std::pow(std::sin(r / 2), 2) / r);
        EXPECT_NEAR(std::abs(expm1_over(z) - ref), 0.0, 1e-14);
    }
}

TEST(Steady, SubstepsAreCommonMultiple) {
    EXPECT_EQ(effective_substeps(64, 64), 64u);
    EXPECT_EQ(effective_substeps(64, 128), 128u);
    EXPECT_EQ(effective_substeps(48, 64), 192u);
}
