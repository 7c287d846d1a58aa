#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spinpump/pipeline.hpp"

using namespace spinpump;

namespace {

// psi(x, t) = sum_l c_l e^{i s_l p_l x / hbar} e^{-i E_l t / hbar}
struct Synthetic {
    std::vector<int> ls;
    std::vector<cplx> amps;
    std::vector<int> dirs;
};

SpinorField sample(const Synthetic& s, const Grid& g, const ModelParams& prm, double E, double t) {
    SpinorField f(g.N);
    const double hw = prm.hbar * 2 * std::numbers::pi / prm.T;
    for (std::size_t i = 0; i < s.ls.size(); ++i) {
        const double El = E + s.ls[i] * hw, p = std::sqrt(2 * prm.m0 * El);
        for (std::size_t j = 0; j < g.N; ++j) {
            const cplx v = s.amps[i] * std::polar(1.0, s.dirs[i] * p * g.x(j) / prm.hbar - El * t / prm.hbar);
            f.psi_plus[j] += v;
            f.psi_minus[j] += cplx(0, 0.5) * v;
        }
    }
    return f;
}

}  // namespace

TEST(Harmonics, DecomposeSeparatesSidebandsAndAliases) {
    ModelParams prm;
    const Grid g{16.0, 1024};
    const double E = 12.5;
    const std::size_t Ns = 16;
    // l = 18 folds onto l = 2 and must be told apart by momentum
    const Synthetic syn{{-3, 0, 2, 18}, {0.2, 1.0, cplx(0, 0.3), -0.1}, {+1, -1, +1, +1}};
    std::vector<SpinorField> snaps;
    std::vector<double> times;
    const double t0 = 37.0;
    for (std::size_t k = 0; k < Ns; ++k) {
        times.push_back(t0 + static_cast<double>(k) / Ns);
        snaps.push_back(sample(syn, g, prm, E, times.back()));
    }
    const SidebandSet s = harmonic_decompose(snaps, times, E, g, prm);
    EXPECT_EQ(s.l_min(), -8);
    EXPECT_EQ(s.l_max(), 7);
    EXPECT_EQ(s.alias_shift(18), 1);
    EXPECT_EQ(s.alias_shift(-9), -1);
    const AnalysisWindow win{g.index_of(-14.0), g.index_of(-2.0)};
    const double tol = 1e-5;
    EXPECT_NEAR(std::abs(channel_amplitude(s, -3, win, +1)[0] - 0.2), 0, tol);
    EXPECT_NEAR(std::abs(channel_amplitude(s, 0, win, -1)[0] - 1.0), 0, tol);
    EXPECT_NEAR(std::abs(channel_amplitude(s, 0, win, +1)[0]), 0, tol);
    EXPECT_NEAR(std::abs(channel_amplitude(s, 2, win, +1)[0] - cplx(0, 0.3)), 0, tol);
    EXPECT_NEAR(std::abs(channel_amplitude(s, 2, win, +1)[1] - cplx(0, 0.5) * cplx(0, 0.3)), 0, tol);
    EXPECT_NEAR(std::abs(channel_amplitude(s, 18, win, +1)[0] - (-0.1)), 0, tol);
    // a sideband-free time in between the snapshots is reproduced exactly
    const SpinorField direct = sample({{-3, 0, 2}, {0.2, 1.0, cplx(0, 0.3)}, {+1, -1, +1}}, g, prm, E, 40.3);
    std::vector<SpinorField> snaps2;
    for (std::size_t k = 0; k < Ns; ++k)
        snaps2.push_back(sample({{-3, 0, 2}, {0.2, 1.0, cplx(0, 0.3)}, {+1, -1, +1}}, g, prm, E, times[k]));
    const SpinorField synth = synthesize(harmonic_decompose(snaps2, times, E, g, prm), 40.3);
    double d = 0;
    for (std::size_t j = 0; j < g.N; ++j) d = std::max(d, std::abs(direct.psi_plus[j] - synth.psi_plus[j]));
    EXPECT_LT(d, 1e-12);
}

TEST(Harmonics, RejectsClosedChannelsShortWindowsAndBadSpacing) {
    ModelParams prm;
    const Grid g{16.0, 1024};
    std::vector<SpinorField> snaps(4, SpinorField(g.N));
    std::vector<double> times{0, 0.25, 0.5, 0.75};
    const SidebandSet s = harmonic_decompose(snaps, times, 0.5, g, prm);  // l = -1 closed: 0.5 - pi/2 < 0
    const AnalysisWindow win{g.index_of(-14.0), g.index_of(-2.0)};
    EXPECT_THROW(channel_amplitude(s, -1, win, +1), std::invalid_argument);
    EXPECT_THROW(channel_amplitude(s, 0, AnalysisWindow{g.index_of(-3.0), g.index_of(-2.9)}, +1), std::invalid_argument);
    times[2] = 0.51;
    EXPECT_THROW(harmonic_decompose(snaps, times, 0.5, g, prm), std::invalid_argument);
}

TEST(Tables, ConventionsAndBases) {
    EXPECT_DOUBLE_EQ(ratio_factor(RatioConvention::Flux, 5.0, 4.0), 0.8);
    EXPECT_DOUBLE_EQ(ratio_factor(RatioConvention::Inverse, 5.0, 4.0), 25.0 / 16.0);
    for (Side s : {Side::Left, Side::Right})
        for (SpinAxisMode m : {SpinAxisMode::ExitSector, SpinAxisMode::LabZ}) {
            const auto b = analysis_basis(s, m);
            EXPECT_NEAR(std::abs(inner(b[0], b[0])), 1.0, 1e-15);
            EXPECT_NEAR(std::abs(inner(b[0], b[1])), 0.0, 1e-15);
        }
    // left incidence axis is lab y: sigma_y (1, i)/sqrt2 = +(1, i)/sqrt2
    const Spinor up = incidence_basis(Side::Left)[0];
    EXPECT_NEAR(std::abs(cplx(0, -1) * up[1] - up[0]), 0.0, 1e-15);
}

TEST(Tables, UnpolarizedTotalIsFrobeniusNorm) {
    SideScattering sc;
    sc.side_in = Side::Left;
    sc.p_in = 5.0;
    sc.reference = cplx(0, 2.0);
    ChannelAmps t{Side::Right, 0, 5.0, {Spinor{0.6, cplx(0, 0.8)}, Spinor{cplx(0.3, 0.1), -0.5}}};
    ChannelAmps r{Side::Left, 1, 4.0, {Spinor{0.1, 0.2}, Spinor{cplx(0, 0.4), 0.3}}};
    sc.channels = {t, r};
    auto frob = [](const ChannelAmps& c) {
        double s = 0;
        for (const auto& v : c.by_injection) s += std::norm(v[0]) + std::norm(v[1]);
        return s;
    };
    const ChannelTable tab = transmissions(sc, Polarization::Unpolarized, RatioConvention::Flux);
    EXPECT_NEAR(tab.transmitted, frob(t) / 2 / 4.0, 1e-15);
    EXPECT_NEAR(tab.reflected, frob(r) / 2 / 4.0 * (4.0 / 5.0), 1e-15);
    EXPECT_EQ(tab.entries.size(), 4u);
    // up and down average to unpolarized
    const ChannelTable u = transmissions(sc, Polarization::Up, RatioConvention::Flux);
    const ChannelTable d = transmissions(sc, Polarization::Down, RatioConvention::Flux);
    for (std::size_t i = 0; i < tab.entries.size(); ++i)
        EXPECT_NEAR(tab.entries[i].probability, 0.5 * (u.entries[i].probability + d.entries[i].probability), 1e-15);
    EXPECT_THROW(transmissions(sc, Polarization::Up, RatioConvention::Auto), std::invalid_argument);
}

TEST(Tables, CurrentsFromTables) {
    ChannelTable l, r;
    l.side_in = Side::Left;
    r.side_in = Side::Right;
    l.entries = {{Side::Left, Side::Right, 0, +1, 0.5, 5}, {Side::Left, Side::Left, 1, -1, 0.5, 5}};
    r.entries = {{Side::Right, Side::Right, 0, +1, 1.0, 5}};
    const QuantumCurrents q = quantum_currents(l, r);
    EXPECT_DOUBLE_EQ(q.I_p, 1.0);
    EXPECT_DOUBLE_EQ(q.I_s, 2.0);
    r.convention = RatioConvention::Inverse;
    EXPECT_THROW(quantum_currents(l, r), std::invalid_argument);
    EXPECT_THROW(quantum_currents(r, l), std::invalid_argument);
}

TEST(Pipeline, FieldsOffTransmitEverythingIntoElasticChannel) {
    ModelParams prm;
    prm.A1 = prm.A2 = 0.0;
    QuantumSetup qs;
    const SideScattering sc = compute_side(prm, qs, Side::Left);
    EXPECT_TRUE(sc.converged);
    const ChannelTable t = transmissions(sc, Polarization::Unpolarized, RatioConvention::Flux, qs.axis);
    EXPECT_NEAR(t.channel(Side::Right, 0), 1.0, 1e-3);
    EXPECT_LT(t.reflected, 1e-6);
    EXPECT_LT(t.transmitted - t.channel(Side::Right, 0), 1e-6);
}

TEST(Pipeline, RegulaFalsiFindsBracketedRoot) {
    int calls = 0;
    auto f = [&](double x) {
        ++calls;
        return x * x * x - 2.0;
    };
    const ZeroSearch z = refine_zero(f, 0.0, -2.0, 2.0, 6.0, 1e-10, 60);
    EXPECT_TRUE(z.found);
    EXPECT_NEAR(z.x, std::cbrt(2.0), 1e-9);
    EXPECT_EQ(calls, z.evaluations);
    EXPECT_FALSE(refine_zero(f, 2.0, 6.0, 3.0, 25.0, 1e-10, 10).found);
}

TEST(Pipeline, SetupRejectsInconsistentGeometry) {
    ModelParams prm;
    QuantumSetup qs;
    EXPECT_NO_THROW(qs.validate(prm));
    qs.source_offset = 10.0;  // inside the analysis window
    EXPECT_THROW(qs.validate(prm), std::invalid_argument);
    qs = QuantumSetup{};
    prm.a = 40.0;
    EXPECT_THROW(qs.validate(prm), std::invalid_argument);
    qs = QuantumSetup{};
    prm = ModelParams{};
    qs.grid.N = 1000;
    EXPECT_THROW(qs.validate(prm), std::invalid_argument);
}
