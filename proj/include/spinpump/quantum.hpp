#pragma once

// Spinor propagation on a periodic grid: exact kick unitary, spectral free
// flight, a monochromatic source and absorbing ramps at both domain ends.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spinpump/fft.hpp"
#include "spinpump/model.hpp"

namespace spinpump {

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

/// x_j = (j - N/2) dx on [-L, L), so x_{N-j} = -x_j exactly and the grid is
/// parity symmetric up to the wrap point.
struct Grid {
    double L = 64.0;
    std::size_t N = 8192;

    double dx() const { return 2.0 * L / static_cast<double>(N); }
    double x(std::size_t j) const { return (static_cast<double>(j) - static_cast<double>(N / 2)) * dx(); }
    long k_index(std::size_t j) const { return j < N / 2 ? static_cast<long>(j) : static_cast<long>(j) - static_cast<long>(N); }
    double dk() const { return std::numbers::pi / L; }
    double momentum(std::size_t j, double hbar) const { return hbar * dk() * static_cast<double>(k_index(j)); }
    double nyquist_momentum(double hbar) const { return hbar * std::numbers::pi / dx(); }
    std::size_t index_of(double xv) const {
        const long j = std::lround(xv / dx()) + static_cast<long>(N / 2);
        if (j < 0 || j >= static_cast<long>(N)) throw std::out_of_range("position outside grid");
        return static_cast<std::size_t>(j);
    }
    std::size_t mirror(std::size_t j) const { return (N - j) % N; }

    void validate() const {
        if (!is_power_of_two(N) || N < 16) throw std::invalid_argument("Grid invariant violated: N must be a power of two >= 16");
        if (!(L > 0) || !std::isfinite(L)) throw std::invalid_argument("Grid invariant violated: L > 0");
    }
};

/// Two components in the lab-z basis; (psi_plus, psi_minus) is the column
/// order used by every 2x2 matrix here.
struct SpinorField {
    cvec psi_plus, psi_minus;

    SpinorField() = default;
    explicit SpinorField(std::size_t n) : psi_plus(n), psi_minus(n) {}

    std::size_t size() const { return psi_plus.size(); }
    double norm2(double dx) const {
        double s = 0;
        for (std::size_t j = 0; j < size(); ++j) s += std::norm(psi_plus[j]) + std::norm(psi_minus[j]);
        return s * dx;
    }
    cvec& component(int c) { return c == 0 ? psi_plus : psi_minus; }
    const cvec& component(int c) const { return c == 0 ? psi_plus : psi_minus; }
};

using Spinor = std::array<cplx, 2>;

// ------------------------------------------------------------------------ kick

/// U(x) = exp(i s muB (B1 sigma_y + B2 sigma_z)/hbar) stored as
/// [[c + i nz, ny], [-ny, c - i nz]] with ny, nz already multiplied by sin b.
struct KickTable {
    std::vector<double> c, ny, nz;

    std::size_t size() const { return c.size(); }
    std::array<std::array<cplx, 2>, 2> matrix(std::size_t j) const {
        const cplx i{0, 1};
        return {{{c[j] + i * nz[j], ny[j]}, {-ny[j], c[j] - i * nz[j]}}};
    }
};

inline KickTable kick_unitary(const Grid& g, const ModelParams& prm) {
    KickTable k;
    k.c.assign(g.N, 1.0);
    k.ny.assign(g.N, 0.0);
    k.nz.assign(g.N, 0.0);
    const double s = coupling_factor(prm.sign) * prm.muB / prm.hbar;
    for (std::size_t j = 0; j < g.N; ++j) {
        const FieldPair B = field(g.x(j), prm);
        const double mag = std::hypot(B.B1, B.B2);
        if (mag == 0.0) continue;
        const double b = s * mag;
        const double sb = std::sin(b);
        k.c[j] = std::cos(b);
        k.ny[j] = sb * B.B1 / mag;
        k.nz[j] = sb * B.B2 / mag;
    }
    return k;
}

inline void apply_kick(SpinorField& psi, const KickTable& k) {
    const cplx i{0, 1};
    for (std::size_t j = 0; j < psi.size(); ++j) {
        if (k.ny[j] == 0.0 && k.nz[j] == 0.0 && k.c[j] == 1.0) continue;
        const cplx u = psi.psi_plus[j], d = psi.psi_minus[j];
        psi.psi_plus[j] = (k.c[j] + i * k.nz[j]) * u + k.ny[j] * d;
        psi.psi_minus[j] = -k.ny[j] * u + (k.c[j] - i * k.nz[j]) * d;
    }
}

// -------------------------------------------------------------------- absorber

struct AbsorberSpec {
    double width = 12.0;
    double eta = 7.0;
    bool enabled = true;

    /// cos^2 ramp: 0 at |x| = L - w, 1 at |x| = L.
    double profile(double x, double L) const {
        const double ax = std::abs(x);
        if (!enabled || ax <= L - width) return 0.0;
        const double c = std::cos(0.5 * std::numbers::pi * (L - ax) / width);
        return c * c;
    }
    void validate(const Grid& g) const {
        if (!enabled) return;
        if (!(width > 0 && width < g.L)) throw std::invalid_argument("AbsorberSpec invariant violated: 0 < width < L");
        if (!(eta > 0)) throw std::invalid_argument("AbsorberSpec invariant violated: eta > 0");
    }
};

inline std::vector<double> absorber_factors(const Grid& g, const AbsorberSpec& ab, double dt, double hbar) {
    std::vector<double> f(g.N, 1.0);
    for (std::size_t j = 0; j < g.N; ++j) f[j] = std::exp(-ab.eta * ab.profile(g.x(j), g.L) * dt / hbar);
    return f;
}

inline void apply_absorber(SpinorField& psi, double dt, const AbsorberSpec& ab, const Grid& g, double hbar) {
    const auto f = absorber_factors(g, ab, dt, hbar);
    for (std::size_t j = 0; j < psi.size(); ++j) {
        psi.psi_plus[j] *= f[j];
        psi.psi_minus[j] *= f[j];
    }
}

// ---------------------------------------------------------------------- source

struct SourceSpec {
    double x_s = 0;
    double E_in = 12.5;
    Spinor chi{1.0, 0.0};
    double amplitude = 1.0;
    double ramp_periods = 60.0;  // sin^2 switch-on

    void validate(const ModelParams& prm, const Grid& g) const {
        if (!(E_in > 0)) throw std::invalid_argument("SourceSpec invariant violated: E_in > 0");
        const double n = std::norm(chi[0]) + std::norm(chi[1]);
        if (std::abs(n - 1.0) > 1e-12) throw std::invalid_argument("SourceSpec invariant violated: |chi| = 1");
        if (std::abs(x_s) < prm.a) throw std::invalid_argument("SourceSpec invariant violated: source inside field support");
        if (std::abs(x_s) >= g.L) throw std::invalid_argument("SourceSpec invariant violated: source outside grid");
        if (!(ramp_periods >= 0)) throw std::invalid_argument("SourceSpec invariant violated: ramp_periods >= 0");
    }
};

/// (e^z - 1)/z with a series near 0.
inline cplx expm1_over(cplx z) {
    if (std::abs(z) < 0.5) {
        // sum_{n=0}^{16} z^n / (n+1)! by Horner; the tail is below 1e-20
        double inv_fact[18];
        inv_fact[0] = 1.0;
        for (int n = 1; n < 18; ++n) inv_fact[n] = inv_fact[n - 1] / n;
        cplx acc = inv_fact[17];
        for (int n = 15; n >= 0; --n) acc = acc * z + inv_fact[n + 1];
        return acc;
    }
    return (std::exp(z) - 1.0) / z;
}

// ------------------------------------------------------------------ propagator

/// One-period map split into M substeps. The kick is applied at the substep
/// boundary nearest the kick phase; the source is integrated exactly over each
/// substep in momentum space, so a monochromatic drive injects only at E_in.
class Propagator {
public:
    Propagator(const Grid& g, const ModelParams& prm, std::size_t substeps, const AbsorberSpec& absorber,
               std::optional<SourceSpec> source = std::nullopt)
        : grid_(g), prm_(prm), M_(substeps), absorber_(absorber), source_(std::move(source)), fft_(g.N),
          work_plus_(g.N), work_minus_(g.N) {
        g.validate();
        prm.validate();
        absorber.validate(g);
        if (M_ < 1) throw std::invalid_argument("PropagatorConfig invariant violated: M >= 1");
        dt_ = prm.T / static_cast<double>(M_);
        kick_ = kick_unitary(g, prm);
        const double inv_n = 1.0 / static_cast<double>(g.N);
        prop_.resize(g.N);
        for (std::size_t j = 0; j < g.N; ++j) {
            const double p = g.momentum(j, prm.hbar);
            prop_[j] = std::polar(inv_n, -p * p / (2.0 * prm.m0) * dt_ / prm.hbar);
        }
        absorb_ = absorber_factors(g, absorber, dt_, prm.hbar);
        const double ph = 2.0 * std::numbers::pi * std::remainder(prm.phi_kick / (2.0 * std::numbers::pi), 1.0);
        long mk = std::lround((ph < 0 ? ph + 2.0 * std::numbers::pi : ph) / (2.0 * std::numbers::pi) * static_cast<double>(M_));
        kick_substep_ = static_cast<std::size_t>(mk) % M_;
        if (source_) {
            source_->validate(prm, g);
            js_ = g.index_of(source_->x_s);
            const double E = source_->E_in;
            const cplx i{0, 1};
            src_.resize(g.N);
            const cplx pre = std::polar(1.0, -E * dt_ / prm.hbar) * (-i * dt_ / prm.hbar);
            for (std::size_t k = 0; k < g.N; ++k) {
                const double p = g.momentum(k, prm.hbar);
                const double eps = p * p / (2.0 * prm.m0);
                const cplx z = -i * (eps - E) * dt_ / prm.hbar;
                const double arg = -2.0 * std::numbers::pi * static_cast<double>((k * js_) % g.N) / static_cast<double>(g.N);
                const cplx Sk = std::polar(source_->amplitude / g.dx(), arg);
                src_[k] = inv_n * Sk * pre * expm1_over(z);
            }
        }
    }

    const Grid& grid() const { return grid_; }
    const ModelParams& params() const { return prm_; }
    std::size_t substeps() const { return M_; }
    double dt() const { return dt_; }
    std::size_t kick_substep() const { return kick_substep_; }
    const KickTable& kick_table() const { return kick_; }
    const std::vector<double>& absorber_table() const { return absorb_; }
    std::size_t source_index() const { return js_; }

    void kick(SpinorField& psi) const { apply_kick(psi, kick_); }

    double source_ramp(double t) const {
        if (!source_ || source_->ramp_periods <= 0) return 1.0;
        const double tau = source_->ramp_periods * prm_.T;
        if (t >= tau) return 1.0;
        const double s = std::sin(0.5 * std::numbers::pi * t / tau);
        return s * s;
    }

    /// Free flight (plus source) over [t, t + dt], without the absorber.
    void drift(SpinorField& psi, double t) {
        fft_.forward(psi.psi_plus, work_plus_);
        fft_.forward(psi.psi_minus, work_minus_);
        if (source_) {
            const cplx drive = source_->amplitude == 0.0
                                   ? cplx{0, 0}
                                   : source_ramp(t + 0.5 * dt_) * std::polar(1.0, -source_->E_in * t / prm_.hbar);
            const cplx sp = drive * source_->chi[0], sm = drive * source_->chi[1];
            for (std::size_t k = 0; k < grid_.N; ++k) {
                work_plus_[k] = work_plus_[k] * prop_[k] + sp * src_[k];
                work_minus_[k] = work_minus_[k] * prop_[k] + sm * src_[k];
            }
        } else {
            for (std::size_t k = 0; k < grid_.N; ++k) {
                work_plus_[k] *= prop_[k];
                work_minus_[k] *= prop_[k];
            }
        }
        fft_.backward(work_plus_, psi.psi_plus);
        fft_.backward(work_minus_, psi.psi_minus);
    }

    void absorb(SpinorField& psi) const {
        if (!absorber_.enabled) return;
        for (std::size_t j = 0; j < grid_.N; ++j) {
            psi.psi_plus[j] *= absorb_[j];
            psi.psi_minus[j] *= absorb_[j];
        }
    }

    /// One period starting at t0 = period * T. `before_substep(m, psi)` is
    /// called at every substep boundary ahead of the kick.
    template <class Hook>
    void propagate_period(SpinorField& psi, long period, Hook&& before_substep) {
        const double t0 = static_cast<double>(period) * prm_.T;
        for (std::size_t m = 0; m < M_; ++m) {
            before_substep(m, static_cast<const SpinorField&>(psi));
            if (m == kick_substep_) kick(psi);
            drift(psi, t0 + static_cast<double>(m) * dt_);
            absorb(psi);
        }
    }
    /// Without source, absorber or observer the free substeps around the
    /// kick compose exactly into two flights (2 FFT pairs per period instead
    /// of M, which also keeps FFT roundoff out of the norm).
    void propagate_period(SpinorField& psi, long period) {
        if (source_ || absorber_.enabled) {
            propagate_period(psi, period, [](std::size_t, const SpinorField&) {});
            return;
        }
        if (flight_.empty()) {
            const double inv_n = 1.0 / static_cast<double>(grid_.N);
            const double pre = static_cast<double>(kick_substep_) * dt_, post = prm_.T - pre;
            for (double tau : {pre, post}) {
                std::vector<cplx> f(grid_.N);
                for (std::size_t k = 0; k < grid_.N; ++k) {
                    const double p = grid_.momentum(k, prm_.hbar);
                    f[k] = std::polar(inv_n, -p * p / (2.0 * prm_.m0) * tau / prm_.hbar);
                }
                flight_.push_back(std::move(f));
            }
        }
        if (kick_substep_ > 0) free_flight(psi, flight_[0]);
        kick(psi);
        free_flight(psi, flight_[1]);
    }

private:
    void free_flight(SpinorField& psi, const std::vector<cplx>& f) {
        fft_.forward(psi.psi_plus, work_plus_);
        fft_.forward(psi.psi_minus, work_minus_);
        for (std::size_t k = 0; k < grid_.N; ++k) {
            work_plus_[k] *= f[k];
            work_minus_[k] *= f[k];
        }
        fft_.backward(work_plus_, psi.psi_plus);
        fft_.backward(work_minus_, psi.psi_minus);
    }

    Grid grid_;
    ModelParams prm_;
    std::size_t M_;
    AbsorberSpec absorber_;
    std::optional<SourceSpec> source_;
    FftPair fft_;
    cvec work_plus_, work_minus_;
    double dt_ = 0;
    KickTable kick_;
    std::vector<cplx> prop_;
    std::vector<double> absorb_;
    std::vector<cplx> src_;
    std::size_t kick_substep_ = 0, js_ = 0;
    std::vector<std::vector<cplx>> flight_;
};

/// Standalone spectral free step exp(-i p^2 dt / (2 m hbar)).
inline void free_step(SpinorField& psi, double dt, const Grid& g, const ModelParams& prm) {
    if (dt == 0.0) return;
    FftPair fft(g.N);
    cvec w(g.N);
    const double inv_n = 1.0 / static_cast<double>(g.N);
    for (int c = 0; c < 2; ++c) {
        fft.forward(psi.component(c), w);
        for (std::size_t k = 0; k < g.N; ++k) {
            const double p = g.momentum(k, prm.hbar);
            w[k] *= std::polar(inv_n, -p * p / (2.0 * prm.m0) * dt / prm.hbar);
        }
        fft.backward(w, psi.component(c));
    }
}

// ------------------------------------------------------------ spatial analysis

/// 5-term flat-top window on n points, symmetric under reversal.
inline std::vector<double> flat_top_window(std::size_t n) {
    static constexpr double c[5] = {0.21557895, 0.41663158, 0.277263158, 0.083578947, 0.006947368};
    std::vector<double> w(n);
    if (n == 1) {
        w[0] = 1.0;
        return w;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double z = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1);
        w[i] = c[0] - c[1] * std::cos(z) + c[2] * std::cos(2 * z) - c[3] * std::cos(3 * z) + c[4] * std::cos(4 * z);
    }
    return w;
}

/// Closed index interval [j0, j1] of the grid used for momentum projection.
struct AnalysisWindow {
    std::size_t j0 = 0, j1 = 0;

    std::size_t length() const { return j1 - j0 + 1; }
    AnalysisWindow mirrored(const Grid& g) const { return {g.mirror(j1), g.mirror(j0)}; }
    double span(const Grid& g) const { return static_cast<double>(j1 - j0) * g.dx(); }
};

/// Windowed plane-wave projection sum_j w_j psi_j e^{-i p x_j / hbar} / sum_j w_j.
inline Spinor project_momentum(const SpinorField& psi, const Grid& g, const AnalysisWindow& win,
                               const std::vector<double>& w, double p, double hbar) {
    Spinor acc{0.0, 0.0};
    double wsum = 0;
    // phase by recurrence, re-anchored every 64 points
    const cplx step = std::polar(1.0, -p * g.dx() / hbar);
    cplx e;
    for (std::size_t i = 0; i < win.length(); ++i) {
        const std::size_t j = win.j0 + i;
        e = (i % 64 == 0) ? std::polar(1.0, -p * g.x(j) / hbar) : e * step;
        acc[0] += psi.psi_plus[j] * (w[i] * e);
        acc[1] += psi.psi_minus[j] * (w[i] * e);
        wsum += w[i];
    }
    acc[0] /= wsum;
    acc[1] /= wsum;
    return acc;
}

// -------------------------------------------------------------- steady state

struct SteadyConfig {
    std::size_t M = 64;
    std::size_t Ns = 64;
    std::size_t transient_periods = 0;  // 0: automatic
    std::size_t max_periods = 0;        // 0: 10 x transient
    double convergence_tol = 1e-5;
};

/// Signed momenta and windows whose projections form the convergence
/// observable.
struct Probe {
    std::vector<AnalysisWindow> windows;
    std::vector<double> momenta;
};

struct SteadyState {
    std::vector<SpinorField> snapshots;
    std::vector<double> times;
    std::size_t periods_run = 0, substeps = 0, transient_periods = 0, max_periods = 0;
    bool converged = false;
    std::vector<double> residual_history;
    double final_residual() const { return residual_history.empty() ? INFINITY : residual_history.back(); }
};

inline std::size_t effective_substeps(std::size_t M, std::size_t Ns) { return std::lcm(M, Ns); }

/// 3 x (domain crossing time at p_in) plus the source ramp.
inline std::size_t auto_transient_periods(const Grid& g, const ModelParams& prm, const SourceSpec& src) {
    const double v = std::sqrt(2.0 * src.E_in / prm.m0);
    const double cross = 2.0 * g.L / (v * prm.T);
    return 3 * static_cast<std::size_t>(std::ceil(cross)) + static_cast<std::size_t>(std::ceil(src.ramp_periods));
}

/// Runs from psi = 0 until the stroboscopic probe amplitudes repeat up to the
/// phase e^{-i E_in T / hbar} within tol, then records Ns pre-kick snapshots
/// over one more period.
inline SteadyState run_to_steady(const Grid& g, const ModelParams& prm, const AbsorberSpec& ab, const SourceSpec& src,
                                 const SteadyConfig& cfg, const Probe& probe) {
    if (cfg.Ns < 2) throw std::invalid_argument("SteadyConfig invariant violated: Ns >= 2");
    const std::size_t Meff = effective_substeps(cfg.M, cfg.Ns);
    Propagator prop(g, prm, Meff, ab, src);
    SteadyState out;
    out.substeps = Meff;
    out.transient_periods = cfg.transient_periods ? cfg.transient_periods : auto_transient_periods(g, prm, src);
    out.max_periods = cfg.max_periods ? cfg.max_periods : 10 * out.transient_periods;
    if (out.max_periods < out.transient_periods) out.max_periods = out.transient_periods;

    std::vector<std::vector<double>> wins;
    for (const auto& w : probe.windows) wins.push_back(flat_top_window(w.length()));
    auto observe = [&](const SpinorField& psi) {
        std::vector<cplx> v;
        for (std::size_t i = 0; i < probe.windows.size(); ++i)
            for (double p : probe.momenta) {
                const Spinor a = project_momentum(psi, g, probe.windows[i], wins[i], p, prm.hbar);
                v.push_back(a[0]);
                v.push_back(a[1]);
            }
        return v;
    };
    const cplx phase = std::polar(1.0, -src.E_in * prm.T / prm.hbar);

    SpinorField psi(g.N);
    std::vector<cplx> prev;
    long n = 0;
    for (; static_cast<std::size_t>(n) < out.max_periods; ++n) {
        prop.propagate_period(psi, n);
        if (static_cast<std::size_t>(n + 1) + 2 < out.transient_periods) continue;
        auto cur = observe(psi);
        if (!prev.empty()) {
            double num = 0, den = 0;
            for (std::size_t i = 0; i < cur.size(); ++i) {
                num += std::norm(cur[i] - phase * prev[i]);
                den += std::norm(cur[i]);
            }
            const double r = den > 0 ? std::sqrt(num / den) : INFINITY;
            out.residual_history.push_back(r);
            if (static_cast<std::size_t>(n + 1) >= out.transient_periods && r < cfg.convergence_tol) {
                out.converged = true;
                ++n;
                break;
            }
        }
        prev = std::move(cur);
    }
    const std::size_t stride = Meff / cfg.Ns;
    const double t0 = static_cast<double>(n) * prm.T;
    prop.propagate_period(psi, n, [&](std::size_t m, const SpinorField& s) {
        if (m % stride == 0) {
            out.snapshots.push_back(s);
            out.times.push_back(t0 + static_cast<double>(m) * prop.dt());
        }
    });
    out.periods_run = static_cast<std::size_t>(n) + 1;
    return out;
}

}  // namespace spinpump
