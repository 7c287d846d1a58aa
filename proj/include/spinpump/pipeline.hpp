#pragma once

// Source-term scattering pipeline for one parameter point, and the
// wavepacket run used to cross-check it.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinpump/floquet.hpp"
#include "spinpump/parallel.hpp"
#include "spinpump/quantum.hpp"

namespace spinpump {

struct QuantumSetup {
    Grid grid{64.0, 8192};
    AbsorberSpec absorber{};
    SteadyConfig steady{};
    double p_in = 5.0;
    double source_offset = 24.0;  // source at -/+(a + offset)
    double window_gap = 4.0;      // analysis window [a + gap, a + gap + length]
    double window_length = 16.0;
    double ramp_periods = 60.0;
    double momentum_cap = 0.8;  // retained |p_out| <= cap x grid Nyquist momentum
    RatioConvention convention = RatioConvention::Auto;
    SpinAxisMode axis = SpinAxisMode::ExitSector;
    double flux_tolerance = 0.02;

    double E_in(const ModelParams& prm) const { return p_in * p_in / (2.0 * prm.m0); }

    /// Left window; the right one is its exact index mirror.
    AnalysisWindow left_window(const ModelParams& prm) const {
        return {grid.index_of(-(prm.a + window_gap + window_length)), grid.index_of(-(prm.a + window_gap))};
    }
    AnalysisWindow window(Side s, const ModelParams& prm) const {
        const auto w = left_window(prm);
        return s == Side::Left ? w : w.mirrored(grid);
    }
    double source_position(Side s, const ModelParams& prm) const {
        const std::size_t j = grid.index_of(-(prm.a + source_offset));
        return s == Side::Left ? grid.x(j) : grid.x(grid.mirror(j));
    }

    void validate(const ModelParams& prm) const {
        grid.validate();
        absorber.validate(grid);
        if (!(p_in > 0)) throw std::invalid_argument("QuantumSetup invariant violated: p_in > 0");
        if (!(window_gap >= 0 && window_length > 0)) throw std::invalid_argument("QuantumSetup invariant violated: window_length > 0, window_gap >= 0");
        if (!(source_offset > window_gap + window_length))
            throw std::invalid_argument("QuantumSetup invariant violated: source must lie beyond the analysis window");
        const double edge = grid.L - (absorber.enabled ? absorber.width : 0.0);
        if (!(prm.a + source_offset < edge))
            throw std::invalid_argument("QuantumSetup invariant violated: L > a + absorber width + source offset");
        if (!(momentum_cap > 0 && momentum_cap <= 1)) throw std::invalid_argument("QuantumSetup invariant violated: 0 < momentum_cap <= 1");
        if (!(flux_tolerance > 0)) throw std::invalid_argument("QuantumSetup invariant violated: flux_tolerance > 0");
    }

    /// Open channels with p_out below the momentum cap.
    std::vector<int> channels(const ModelParams& prm) const {
        const double E = E_in(prm), hw = prm.hbar * 2.0 * std::numbers::pi / prm.T;
        const double pmax = momentum_cap * grid.nyquist_momentum(prm.hbar);
        std::vector<int> ls;
        for (int l = -static_cast<int>(std::floor(E / hw)) - 1;; ++l) {
            const double El = E + l * hw;
            if (El <= 0) continue;
            if (std::sqrt(2.0 * prm.m0 * El) > pmax) break;
            ls.push_back(l);
        }
        return ls;
    }

    Probe probe(const ModelParams& prm) const {
        Probe pr;
        pr.windows = {window(Side::Left, prm), window(Side::Right, prm)};
        const double E = E_in(prm), hw = prm.hbar * 2.0 * std::numbers::pi / prm.T;
        for (int l : channels(prm)) {
            const double p = std::sqrt(2.0 * prm.m0 * (E + l * hw));
            pr.momenta.push_back(p);
            pr.momenta.push_back(-p);
        }
        return pr;
    }
};

struct RunDiagnostics {
    bool converged = true;
    std::size_t periods = 0;
    double residual = 0, edge_power_fraction = 0;
};

/// One steady-state run injecting chi from `side`, reduced to its sideband set.
inline SidebandSet steady_sidebands(const ModelParams& prm, const QuantumSetup& qs, Side side, Spinor chi,
                                    RunDiagnostics* diag = nullptr) {
    SourceSpec src;
    src.x_s = qs.source_position(side, prm);
    src.E_in = qs.E_in(prm);
    src.chi = chi;
    src.ramp_periods = qs.ramp_periods;
    const SteadyState st = run_to_steady(qs.grid, prm, qs.absorber, src, qs.steady, qs.probe(prm));
    SidebandSet sb = harmonic_decompose(st.snapshots, st.times, src.E_in, qs.grid, prm);
    if (diag) *diag = {st.converged, st.periods_run, st.final_residual(), sb.edge_power_fraction};
    return sb;
}

/// Calibration (fields off) plus the two basis injections for one side.
inline SideScattering compute_side(const ModelParams& prm, const QuantumSetup& qs, Side side) {
    prm.validate();
    qs.validate(prm);
    SideScattering sc;
    sc.side_in = side;
    sc.p_in = qs.p_in;
    const AnalysisWindow inc = qs.window(side, prm);
    const AnalysisWindow far = qs.window(side == Side::Left ? Side::Right : Side::Left, prm);
    const int in_dir = side == Side::Left ? +1 : -1;

    ModelParams off = prm;
    off.A1 = off.A2 = 0.0;
    RunDiagnostics dcal;
    const SidebandSet cal = steady_sidebands(off, qs, side, Spinor{1.0, 0.0}, &dcal);
    sc.reference = channel_amplitude(cal, 0, inc, in_dir)[0];

    const std::vector<int> ls = qs.channels(prm);
    for (int l : ls) {
        const double p = std::sqrt(2.0 * prm.m0 * (qs.E_in(prm) + l * prm.hbar * 2.0 * std::numbers::pi / prm.T));
        sc.channels.push_back({Side::Left, l, p, {}});
        sc.channels.push_back({Side::Right, l, p, {}});
    }
    sc.converged = dcal.converged;
    sc.periods = dcal.periods;
    sc.residual = dcal.residual;
    for (int b = 0; b < 2; ++b) {
        RunDiagnostics d;
        const SidebandSet sb = steady_sidebands(prm, qs, side, b == 0 ? Spinor{1.0, 0.0} : Spinor{0.0, 1.0}, &d);
        sc.converged = sc.converged && d.converged;
        sc.periods = std::max(sc.periods, d.periods);
        sc.residual = std::max(sc.residual, d.residual);
        sc.edge_power_fraction = std::max(sc.edge_power_fraction, d.edge_power_fraction);
        for (auto& ch : sc.channels) {
            // outgoing: leftward in the left window, rightward in the right one
            const bool exit_left = ch.exit == Side::Left;
            const AnalysisWindow& w = (exit_left == (side == Side::Left)) ? inc : far;
            ch.by_injection[b] = channel_amplitude(sb, ch.l, w, exit_left ? -1 : +1);
        }
    }
    return sc;
}

struct QuantumPoint {
    double a = 0;
    SideScattering left, right;
    RatioConvention convention = RatioConvention::Flux;
    double flux_dev = 0;             // gate value for the chosen convention
    double flux_dev_alternative = 0; // same for the other convention
    ChannelTable table_left, table_right;
    QuantumCurrents currents;
    bool converged = true;
    bool flux_ok = true;
};

/// Picks the convention (when Auto) whose flux deviation passes the gate;
/// if both or neither pass, the smaller deviation wins.
inline QuantumPoint finish_point(double a, SideScattering left, SideScattering right, const QuantumSetup& qs) {
    QuantumPoint q;
    q.a = a;
    q.left = std::move(left);
    q.right = std::move(right);
    auto dev = [&](RatioConvention c) {
        return std::max(flux_check(q.left, c, qs.axis).deviation, flux_check(q.right, c, qs.axis).deviation);
    };
    const double df = dev(RatioConvention::Flux), dp = dev(RatioConvention::Inverse);
    if (qs.convention == RatioConvention::Auto) {
        q.convention = df <= dp ? RatioConvention::Flux : RatioConvention::Inverse;
    } else {
        q.convention = qs.convention;
    }
    q.flux_dev = q.convention == RatioConvention::Flux ? df : dp;
    q.flux_dev_alternative = q.convention == RatioConvention::Flux ? dp : df;
    q.table_left = transmissions(q.left, Polarization::Unpolarized, q.convention, qs.axis, qs.flux_tolerance);
    q.table_right = transmissions(q.right, Polarization::Unpolarized, q.convention, qs.axis, qs.flux_tolerance);
    q.currents = quantum_currents(q.table_left, q.table_right);
    q.converged = q.left.converged && q.right.converged;
    q.flux_ok = q.flux_dev <= qs.flux_tolerance;
    return q;
}

inline QuantumPoint compute_point(const ModelParams& prm, const QuantumSetup& qs, unsigned workers = 1) {
    SideScattering sides[2];
    parallel_for(2, workers, [&](std::size_t i) { sides[i] = compute_side(prm, qs, i == 0 ? Side::Left : Side::Right); }, 1);
    return finish_point(prm.a, std::move(sides[0]), std::move(sides[1]), qs);
}

/// Regula falsi (Illinois) on a bracketed sign change of f.
struct ZeroSearch {
    double x = 0, fx = 0;
    int evaluations = 0;
    bool found = false;
};

inline ZeroSearch refine_zero(const std::function<double(double)>& f, double a, double fa, double b, double fb,
                              double ftol, int max_eval) {
    ZeroSearch z;
    if (!(fa * fb < 0)) return z;
    int side = 0;
    for (z.evaluations = 0; z.evaluations < max_eval;) {
        const double c = (a * fb - b * fa) / (fb - fa);
        const double fc = f(c);
        ++z.evaluations;
        if (std::abs(fc) < std::abs(z.fx) || !z.found) {
            z.x = c;
            z.fx = fc;
            z.found = true;
        }
        if (std::abs(fc) <= ftol) break;
        if (fc * fb > 0) {
            b = c, fb = fc;
            if (side == -1) fa *= 0.5;
            side = -1;
        } else {
            a = c, fa = fc;
            if (side == +1) fb *= 0.5;
            side = +1;
        }
    }
    return z;
}

// ------------------------------------------------------------- wavepacket

struct WavepacketResult {
    double transmitted = 0, reflected = 0, remaining = 0;
    std::size_t periods = 0;
};

/// Gaussian packet with momentum spread sigma_p launched from the left of
/// the field; transmitted/reflected probability is the flux swallowed by the
/// right/left absorber plus whatever is still on that side at the end.
inline WavepacketResult wavepacket_scatter(const ModelParams& prm, const Grid& g, const AbsorberSpec& ab, double p0,
                                           double sigma_p, Spinor chi, std::size_t M = 64, std::size_t max_periods = 600,
                                           double stop_norm = 1e-6) {
    const double sx = prm.hbar / (2.0 * sigma_p);
    const double x0 = -(prm.a + 4.0 + 4.0 * sx);
    if (x0 - 4.0 * sx < -(g.L - ab.width)) throw std::invalid_argument("wavepacket does not fit between absorber and field");
    SpinorField psi(g.N);
    double n2 = 0;
    for (std::size_t j = 0; j < g.N; ++j) {
        const double x = g.x(j);
        const cplx v = std::polar(std::exp(-(x - x0) * (x - x0) / (4.0 * sx * sx)), p0 * x / prm.hbar);
        psi.psi_plus[j] = chi[0] * v;
        psi.psi_minus[j] = chi[1] * v;
        n2 += std::norm(v);
    }
    const double s = 1.0 / std::sqrt(n2 * g.dx());
    for (std::size_t j = 0; j < g.N; ++j) psi.psi_plus[j] *= s, psi.psi_minus[j] *= s;

    Propagator prop(g, prm, M, ab);
    const auto& f = prop.absorber_table();
    WavepacketResult r;
    for (std::size_t n = 0; n < max_periods; ++n) {
        for (std::size_t m = 0; m < M; ++m) {
            if (m == prop.kick_substep()) prop.kick(psi);
            prop.drift(psi, 0.0);
            for (std::size_t j = 0; j < g.N; ++j) {
                if (f[j] == 1.0) continue;
                const double before = std::norm(psi.psi_plus[j]) + std::norm(psi.psi_minus[j]);
                psi.psi_plus[j] *= f[j];
                psi.psi_minus[j] *= f[j];
                const double lost = before * (1.0 - f[j] * f[j]) * g.dx();
                (g.x(j) < 0 ? r.reflected : r.transmitted) += lost;
            }
        }
        r.periods = n + 1;
        if (psi.norm2(g.dx()) < stop_norm) break;
    }
    for (std::size_t j = 0; j < g.N; ++j) {
        const double d = (std::norm(psi.psi_plus[j]) + std::norm(psi.psi_minus[j])) * g.dx();
        const double x = g.x(j);
        if (x > prm.a) r.transmitted += d;
        else if (x < -prm.a) r.reflected += d;
        else r.remaining += d;
    }
    return r;
}

}  // namespace spinpump
