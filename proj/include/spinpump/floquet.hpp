#pragma once

// Floquet channel analysis of steady-state snapshots: harmonic decomposition,
// windowed channel amplitudes, channel tables and currents.

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinpump/classical.hpp"
#include "spinpump/quantum.hpp"

namespace spinpump {

/// Folded harmonics psi_l(x) = (1/Ns) sum_k psi(x, t_k) e^{+i E_l t_k / hbar}
/// for l in [-Ns/2, Ns/2). Channel l + m Ns shares the folded profile of l
/// (times e^{i m Ns omega t0}); such aliases sit at different momenta and are
/// separated by channel_amplitude.
struct SidebandSet {
    Grid grid;
    double E_in = 0, hbar = 0, T = 1, m0 = 1, t0 = 0;
    std::size_t Ns = 0;
    std::vector<SpinorField> folded;  // index l - l_min()
    double edge_power_fraction = 0;  // power in l = l_min, l_max over total

    double omega() const { return 2.0 * std::numbers::pi / T; }
    int l_min() const { return -static_cast<int>(Ns / 2); }
    int l_max() const { return l_min() + static_cast<int>(Ns) - 1; }
    double energy(int l) const { return E_in + l * hbar * omega(); }
    bool closed(int l) const { return energy(l) <= 0; }
    double momentum(int l) const { return std::sqrt(2.0 * m0 * energy(l)); }

    long alias_shift(int l) const {
        const long r = static_cast<long>(l) - l_min();
        const long ns = static_cast<long>(Ns);
        return (r >= 0 ? r / ns : -((-r + ns - 1) / ns));
    }
    const SpinorField& profile(int l) const {
        const long m = alias_shift(l);
        return folded[static_cast<std::size_t>(static_cast<long>(l) - m * static_cast<long>(Ns) - l_min())];
    }
    cplx alias_phase(int l) const {
        const long m = alias_shift(l);
        return std::polar(1.0, static_cast<double>(m) * static_cast<double>(Ns) * omega() * t0);
    }
    double power(int l) const { return profile(l).norm2(grid.dx()); }
};

inline SidebandSet harmonic_decompose(const std::vector<SpinorField>& snaps, const std::vector<double>& times,
                                      double E_in, const Grid& g, const ModelParams& prm) {
    const std::size_t Ns = snaps.size();
    if (Ns < 2 || times.size() != Ns) throw std::invalid_argument("harmonic_decompose needs >= 2 snapshots with times");
    const double h = prm.T / static_cast<double>(Ns);
    for (std::size_t k = 1; k < Ns; ++k)
        if (std::abs(times[k] - times[0] - static_cast<double>(k) * h) > 1e-9 * prm.T)
            throw std::invalid_argument("harmonic_decompose needs snapshots equally spaced over one period");
    SidebandSet s;
    s.grid = g;
    s.E_in = E_in;
    s.hbar = prm.hbar;
    s.T = prm.T;
    s.m0 = prm.m0;
    s.t0 = times[0];
    s.Ns = Ns;
    s.folded.assign(Ns, SpinorField(g.N));
    // weight[l][k] = e^{i E_l t_k / hbar} / Ns
    std::vector<cplx> wt(Ns * Ns);
    for (std::size_t li = 0; li < Ns; ++li) {
        const int l = s.l_min() + static_cast<int>(li);
        for (std::size_t k = 0; k < Ns; ++k) {
            const double tk = s.t0 + static_cast<double>(k) * h;
            const double ph = E_in * tk / prm.hbar + 2.0 * std::numbers::pi * l * (tk / prm.T);
            wt[li * Ns + k] = std::polar(1.0 / static_cast<double>(Ns), ph);
        }
    }
    std::vector<cplx> col(Ns);
    for (int c = 0; c < 2; ++c)
        for (std::size_t j = 0; j < g.N; ++j) {
            for (std::size_t k = 0; k < Ns; ++k) col[k] = snaps[k].component(c)[j];
            for (std::size_t li = 0; li < Ns; ++li) {
                cplx acc = 0;
                const cplx* w = &wt[li * Ns];
                for (std::size_t k = 0; k < Ns; ++k) acc += w[k] * col[k];
                s.folded[li].component(c)[j] = acc;
            }
        }
    double tot = 0;
    for (const auto& f : s.folded) tot += f.norm2(g.dx());
    s.edge_power_fraction = tot > 0 ? (s.folded.front().norm2(g.dx()) + s.folded.back().norm2(g.dx())) / tot : 0.0;
    return s;
}

/// Inverse of harmonic_decompose at time t.
inline SpinorField synthesize(const SidebandSet& s, double t) {
    SpinorField out(s.grid.N);
    for (int l = s.l_min(); l <= s.l_max(); ++l) {
        const cplx e = std::polar(1.0, -s.energy(l) * t / s.hbar);
        const auto& f = s.folded[static_cast<std::size_t>(l - s.l_min())];
        for (std::size_t j = 0; j < s.grid.N; ++j) {
            out.psi_plus[j] += e * f.psi_plus[j];
            out.psi_minus[j] += e * f.psi_minus[j];
        }
    }
    return out;
}

/// Flat-top windowed amplitude of channel l travelling in `direction` (+1 to
/// the right, -1 to the left) inside `win`.
inline Spinor channel_amplitude(const SidebandSet& s, int l, const AnalysisWindow& win, int direction) {
    if (s.closed(l)) throw std::invalid_argument("channel_amplitude: closed channel");
    const double p = s.momentum(l);
    const double lambda = 2.0 * std::numbers::pi * s.hbar / p;
    if (win.span(s.grid) < 4.0 * lambda)
        throw std::invalid_argument("channel_amplitude: window shorter than 4 wavelengths, lengthen the window");
    const auto w = flat_top_window(win.length());
    Spinor a = project_momentum(s.profile(l), s.grid, win, w, direction * p, s.hbar);
    const cplx ph = s.alias_phase(l);
    a[0] *= ph;
    a[1] *= ph;
    return a;
}

// --------------------------------------------------------------- tables

enum class RatioConvention { Flux, Inverse, Auto };
enum class SpinAxisMode { ExitSector, LabZ };

inline const char* convention_name(RatioConvention c) {
    switch (c) {
        case RatioConvention::Flux: return "flux (p_out/p_in)";
        case RatioConvention::Inverse: return "inverse (p_in/p_out)^2";
        case RatioConvention::Auto: return "auto";
    }
    return "?";
}

/// Probability factor multiplying |A/ref|^2.
inline double ratio_factor(RatioConvention c, double p_in, double p_out) {
    return c == RatioConvention::Inverse ? (p_in / p_out) * (p_in / p_out) : p_out / p_in;
}

/// Spin-up / spin-down eigenvectors of the analysis axis at the exit side.
inline std::array<Spinor, 2> analysis_basis(Side exit, SpinAxisMode mode) {
    const double r = 1.0 / std::sqrt(2.0);
    if (mode == SpinAxisMode::ExitSector && exit == Side::Left)
        return {Spinor{r, cplx{0, r}}, Spinor{r, cplx{0, -r}}};  // sigma_y = +1, -1
    return {Spinor{1.0, 0.0}, Spinor{0.0, 1.0}};
}

/// Spin-up / spin-down along the incidence sector's field axis.
inline std::array<Spinor, 2> incidence_basis(Side side) { return analysis_basis(side, SpinAxisMode::ExitSector); }

inline cplx inner(const Spinor& a, const Spinor& b) { return std::conj(a[0]) * b[0] + std::conj(a[1]) * b[1]; }

/// Raw scattering data of one incidence side: channel amplitudes for the two
/// injected basis spinors (1,0) and (0,1), plus the calibration reference.
struct ChannelAmps {
    Side exit = Side::Left;
    int l = 0;
    double p_out = 0;
    std::array<Spinor, 2> by_injection;  // [injected basis][component]
};

struct SideScattering {
    Side side_in = Side::Left;
    double p_in = 0;
    cplx reference = 0;
    std::vector<ChannelAmps> channels;
    bool converged = true;
    std::size_t periods = 0;
    double residual = 0, edge_power_fraction = 0;
};

struct ChannelEntry {
    Side side_in = Side::Left, side_out = Side::Left;
    int l = 0;
    int spin = +1;
    double probability = 0, p_out = 0;
};

enum class Polarization { Unpolarized, Up, Down };

inline const char* polarization_name(Polarization p) {
    switch (p) {
        case Polarization::Unpolarized: return "unpolarized";
        case Polarization::Up: return "up";
        case Polarization::Down: return "down";
    }
    return "?";
}

struct ChannelTable {
    Side side_in = Side::Left;
    RatioConvention convention = RatioConvention::Flux;
    SpinAxisMode axis = SpinAxisMode::ExitSector;
    Polarization polarization = Polarization::Unpolarized;
    std::vector<ChannelEntry> entries;
    double total = 0, transmitted = 0, reflected = 0;
    bool valid = true;

    double sum(Side out, int l_filter_min = INT32_MIN, int l_filter_max = INT32_MAX) const {
        double s = 0;
        for (const auto& e : entries)
            if (e.side_out == out && e.l >= l_filter_min && e.l <= l_filter_max) s += e.probability;
        return s;
    }
    double channel(Side out, int l) const { return sum(out, l, l); }
};

/// Channel probability table for one incidence side. Up/Down inject the
/// incidence-axis eigenstates; Unpolarized averages the two.
inline ChannelTable transmissions(const SideScattering& sc, Polarization pol, RatioConvention conv,
                                  SpinAxisMode axis = SpinAxisMode::ExitSector, double flux_tolerance = 0.02) {
    if (conv == RatioConvention::Auto) throw std::invalid_argument("transmissions needs a concrete convention");
    if (std::abs(sc.reference) == 0.0) throw std::invalid_argument("transmissions: zero reference amplitude");
    ChannelTable t;
    t.side_in = sc.side_in;
    t.convention = conv;
    t.axis = axis;
    t.polarization = pol;
    const double ref2 = std::norm(sc.reference);
    const auto inc = incidence_basis(sc.side_in);
    std::vector<Spinor> chis;
    if (pol == Polarization::Unpolarized) chis = {inc[0], inc[1]};
    else chis = {inc[pol == Polarization::Up ? 0 : 1]};
    for (const auto& ch : sc.channels) {
        const auto basis = analysis_basis(ch.exit, axis);
        for (int s = 0; s < 2; ++s) {
            double prob = 0;
            for (const auto& chi : chis) {
                Spinor A{0.0, 0.0};
                for (int c = 0; c < 2; ++c) A[c] = chi[0] * ch.by_injection[0][c] + chi[1] * ch.by_injection[1][c];
                prob += std::norm(inner(basis[s], A));
            }
            prob *= ratio_factor(conv, sc.p_in, ch.p_out) / ref2 / static_cast<double>(chis.size());
            t.entries.push_back({sc.side_in, ch.exit, ch.l, s == 0 ? +1 : -1, prob, ch.p_out});
            t.total += prob;
            (ch.exit == sc.side_in ? t.reflected : t.transmitted) += prob;
        }
    }
    t.valid = std::abs(t.total - 1.0) <= flux_tolerance;
    return t;
}

struct FluxReport {
    double deviation = 0;  // max over the entries below
    double unpolarized = 0, up = 0, down = 0;
};

/// |sum of probabilities - 1| for the unpolarized table and both injected
/// incidence-axis polarizations.
inline FluxReport flux_check(const SideScattering& sc, RatioConvention conv, SpinAxisMode axis = SpinAxisMode::ExitSector) {
    FluxReport r;
    r.unpolarized = std::abs(transmissions(sc, Polarization::Unpolarized, conv, axis).total - 1.0);
    r.up = std::abs(transmissions(sc, Polarization::Up, conv, axis).total - 1.0);
    r.down = std::abs(transmissions(sc, Polarization::Down, conv, axis).total - 1.0);
    r.deviation = std::max({r.unpolarized, r.up, r.down});
    return r;
}

inline FluxReport flux_check(const ChannelTable& t) {
    FluxReport r;
    r.unpolarized = std::abs(t.total - 1.0);
    r.deviation = r.unpolarized;
    return r;
}

struct QuantumCurrents {
    double I_p = 0, I_s = 0;
    SpinAxisMode axis = SpinAxisMode::ExitSector;
    Polarization polarization = Polarization::Unpolarized;
    RatioConvention convention = RatioConvention::Flux;
};

inline QuantumCurrents quantum_currents(const ChannelTable& left, const ChannelTable& right) {
    if (left.side_in != Side::Left || right.side_in != Side::Right)
        throw std::invalid_argument("quantum_currents: expected left- and right-incidence tables");
    if (left.axis != right.axis || left.polarization != right.polarization || left.convention != right.convention)
        throw std::invalid_argument("quantum_currents: tables use different conventions");
    QuantumCurrents q;
    q.axis = left.axis;
    q.polarization = left.polarization;
    q.convention = left.convention;
    for (const ChannelTable* t : {&left, &right})
        for (const auto& e : t->entries) {
            const double d = e.side_out == Side::Right ? 1.0 : -1.0;
            q.I_p += d * e.probability;
            q.I_s += d * e.spin * e.probability;
        }
    return q;
}

}  // namespace spinpump
