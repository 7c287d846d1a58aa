#pragma once

// Classical kicked spin-orbit map, scattering runs and ensemble observables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "spinpump/model.hpp"
#include "spinpump/parallel.hpp"
#include "spinpump/rng.hpp"

namespace spinpump {

enum class Side { Left, Right };

inline const char* side_name(Side s) { return s == Side::Left ? "left" : "right"; }
inline Sector incidence_sector(Side s) { return s == Side::Left ? Sector::S1 : Sector::S2; }

struct ClassicalState {
    double x = 0, p = 0;
    SpinVector s{0, 1, 0};
    long n = 0;
};

/// One period: kick at the current position, then free drift over T.
inline ClassicalState map_step(ClassicalState st, const ModelParams& prm) {
    const SectorField f = sector_field(st.x, prm);
    if (f.sector != Sector::Outside) {
        const Vec3 axis = frame_of(f.sector).field_axis();
        const double c = coupling_factor(prm.sign) * prm.gamma;
        st.p += c * dot(st.s, axis) * f.dB;
        st.s = rotate_spin(st.s, axis, -c * f.B);
    }
    st.x += st.p * prm.T / prm.m0;
    ++st.n;
    return st;
}

inline ClassicalState inverse_step(ClassicalState st, const ModelParams& prm) {
    st.x -= st.p * prm.T / prm.m0;
    const SectorField f = sector_field(st.x, prm);
    if (f.sector != Sector::Outside) {
        const Vec3 axis = frame_of(f.sector).field_axis();
        const double c = coupling_factor(prm.sign) * prm.gamma;
        st.s = rotate_spin(st.s, axis, c * f.B);
        st.p -= c * dot(st.s, axis) * f.dB;
    }
    --st.n;
    return st;
}

/// Incoming condition: launch at the support edge of `side`, moving inward,
/// with (theta, phi) measured in the incidence sector's frame.
struct Launch {
    Side side = Side::Left;
    double p_in = 1.0;  // magnitude
    double theta_in = 0.0, phi_in = 0.0;
};

inline ClassicalState launch_state(const Launch& l, const ModelParams& prm) {
    if (!(l.p_in > 0) || !std::isfinite(l.p_in)) throw std::invalid_argument("launch momentum must point inward (|p_in| > 0)");
    ClassicalState st;
    st.x = l.side == Side::Left ? -prm.a : prm.a;
    st.p = l.side == Side::Left ? l.p_in : -l.p_in;
    st.s = angles_to_spin(l.theta_in, l.phi_in, frame_of(incidence_sector(l.side)), prm.spin_norm);
    return st;
}

struct ScatterOutcome {
    Side side_in = Side::Left, side_out = Side::Left;
    double x_out = 0, p_out = 0;
    SpinVector s_out;
    long sojourn_kicks = 0;
    bool trapped = false;
    double theta_in = 0, phi_in = 0, p_in = 0;
    double theta_out = 0, phi_out = 0;  // exit-sector frame; NaN when trapped
    long kicks = 0;                     // total map iterations
};

struct NoObserver {
    void operator()(const ClassicalState&) const {}
};

/// Iterates the map from the launch until the particle leaves [-a, a] with
/// outward momentum. `observe` sees every state taken immediately before a
/// kick while |x| <= a.
template <class Observer = NoObserver>
ScatterOutcome scatter(const Launch& launch, const ModelParams& prm, long max_kicks, Observer&& observe = {}) {
    if (max_kicks < 1) throw std::invalid_argument("max_kicks must be >= 1");
    ClassicalState st = launch_state(launch, prm);
    ScatterOutcome out;
    out.side_in = launch.side;
    out.theta_in = launch.theta_in;
    out.phi_in = launch.phi_in;
    out.p_in = launch.p_in;
    long soj = 0;
    bool exited = false;
    for (long k = 0; k < max_kicks; ++k) {
        if (std::abs(st.x) <= prm.a) {
            ++soj;
            observe(st);
        }
        st = map_step(st, prm);
        if (std::abs(st.x) > prm.a && st.p * st.x > 0) {
            exited = true;
            break;
        }
    }
    out.x_out = st.x;
    out.p_out = st.p;
    out.s_out = st.s;
    out.kicks = st.n;
    out.trapped = !exited;
    out.sojourn_kicks = exited ? soj : max_kicks;
    out.side_out = st.x < 0 ? Side::Left : Side::Right;
    if (exited) {
        const SpinAngles ang = spin_to_angles(st.s, frame_of(incidence_sector(out.side_out)));
        out.theta_out = ang.theta;
        out.phi_out = wrap_angle(ang.phi);
    } else {
        out.theta_out = out.phi_out = std::nan("");
    }
    return out;
}

/// Final state of a completed scatter, for running the map backwards.
inline ClassicalState final_state(const ScatterOutcome& o) {
    return {o.x_out, o.p_out, o.s_out, o.kicks};
}

enum class ThetaSampling { UniformCos, Fixed };
enum class PhiSampling { Fixed, Uniform };

struct EnsembleSpec {
    std::size_t n_left = 10000, n_right = 10000;
    double p_min = 0.0, p_max = 1.0;  // |p_in| drawn uniformly in (p_min, p_max]
    ThetaSampling theta_sampling = ThetaSampling::UniformCos;
    double theta_fixed = 0.0;
    PhiSampling phi_sampling = PhiSampling::Fixed;
    double phi_in = 0.0;
    std::uint64_t seed = 1;
    long max_kicks = 10000;
    // Left and right trajectory i share their random draws (common random
    // numbers). Unpaired sides use independent streams.
    bool paired_sides = true;

    void validate() const {
        if (!(p_min >= 0 && p_max > p_min && std::isfinite(p_max)))
            throw std::invalid_argument("EnsembleSpec invariant violated: p_range must lie in (0, inf) with p_max > p_min >= 0");
        if (max_kicks < 1) throw std::invalid_argument("EnsembleSpec invariant violated: max_kicks >= 1");
        if (!(theta_fixed >= 0 && theta_fixed <= std::numbers::pi))
            throw std::invalid_argument("EnsembleSpec invariant violated: theta_fixed in [0, pi]");
    }
};

/// Launch of trajectory `index` on `side`. Three uniforms are always drawn so
/// the stream layout does not depend on the sampling options.
inline Launch draw_launch(const EnsembleSpec& spec, Side side, std::size_t index) {
    const std::uint32_t stream = spec.paired_sides ? 0u : (side == Side::Left ? 1u : 2u);
    TrajectoryRng rng(spec.seed, index, stream);
    const double p = rng.uniform_open_closed(spec.p_min, spec.p_max);
    const double u = 2.0 * rng.uniform() - 1.0;
    const double v = rng.uniform();
    Launch l;
    l.side = side;
    l.p_in = p;
    l.theta_in = spec.theta_sampling == ThetaSampling::UniformCos ? std::acos(u) : spec.theta_fixed;
    l.phi_in = spec.phi_sampling == PhiSampling::Uniform ? std::numbers::pi * (1.0 - 2.0 * v) : spec.phi_in;
    return l;
}

/// cos(theta_in) of a drawn launch; exact u for uniform-cos sampling.
inline double launch_cos(const EnsembleSpec& spec, std::size_t index, Side side) {
    if (spec.theta_sampling == ThetaSampling::Fixed) return std::cos(spec.theta_fixed);
    const std::uint32_t stream = spec.paired_sides ? 0u : (side == Side::Left ? 1u : 2u);
    TrajectoryRng rng(spec.seed, index, stream);
    (void)rng.uniform();
    return 2.0 * rng.uniform() - 1.0;
}

/// All left-incidence outcomes followed by all right-incidence outcomes.
inline std::vector<ScatterOutcome> run_ensemble(const EnsembleSpec& spec, const ModelParams& prm, unsigned workers = 0) {
    spec.validate();
    prm.validate();
    const std::size_t n = spec.n_left + spec.n_right;
    std::vector<ScatterOutcome> out(n);
    parallel_for(n, workers, [&](std::size_t i) {
        const bool left = i < spec.n_left;
        const std::size_t idx = left ? i : i - spec.n_left;
        out[i] = scatter(draw_launch(spec, left ? Side::Left : Side::Right, idx), prm, spec.max_kicks);
    });
    return out;
}

// ---------------------------------------------------------------- deflection

inline std::vector<ScatterOutcome> deflection_scan(const std::vector<double>& thetas, const ModelParams& prm,
                                                   double p_in = 1.0, double phi_in = 0.0, long max_kicks = 10000,
                                                   unsigned workers = 0) {
    prm.validate();
    std::vector<double> sorted = thetas;
    std::sort(sorted.begin(), sorted.end());
    for (double t : sorted)
        if (!(t >= 0 && t <= std::numbers::pi)) throw std::invalid_argument("theta grid must lie in [0, pi]");
    std::vector<ScatterOutcome> out(sorted.size());
    parallel_for(sorted.size(), workers, [&](std::size_t i) {
        out[i] = scatter(Launch{Side::Left, p_in, sorted[i], phi_in}, prm, max_kicks);
    });
    return out;
}

/// Sign changes of p_out along a uniform theta grid with 2^level + 1 points
/// on [lo, hi]. Growth with level signals structure on every scale.
inline int p_out_sign_changes(double lo, double hi, int level, const ModelParams& prm, double p_in = 1.0,
                              long max_kicks = 10000) {
    const std::size_t n = (std::size_t{1} << level) + 1;
    int changes = 0;
    double prev = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double th = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        const double p = scatter(Launch{Side::Left, p_in, th, 0.0}, prm, max_kicks).p_out;
        if (i > 0 && (p > 0) != (prev > 0)) ++changes;
        prev = p;
    }
    return changes;
}

// ------------------------------------------------------------------- sojourn

struct SojournFit {
    std::vector<std::size_t> histogram;  // histogram[k] = trajectories with sojourn k kicks
    double fitted_mean = 0, r2 = 0, raw_mean = 0;
    bool valid = false;
    double window_lo = 0, window_hi = 0;
    std::size_t bins_used = 0, n_used = 0, n_trapped = 0;
};

/// Linear-interpolated quantile of sorted data.
inline double sorted_quantile(const std::vector<long>& v, double q) {
    if (v.empty()) return 0;
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    if (i + 1 >= v.size()) return static_cast<double>(v.back());
    const double f = pos - static_cast<double>(i);
    return static_cast<double>(v[i]) * (1 - f) + static_cast<double>(v[i + 1]) * f;
}

/// Exponential tail fit of a sojourn sample: least squares of log(count)
/// against k, over unit bins with count >= min_count inside
/// [t_min + 0.1 (t_q - t_min), t_q], t_q the `tail_quantile` of the sample.
inline SojournFit fit_sojourn(std::vector<long> sojourns, double tail_quantile = 0.985, std::size_t min_count = 5) {
    SojournFit fit;
    fit.n_used = sojourns.size();
    if (sojourns.empty()) return fit;
    std::sort(sojourns.begin(), sojourns.end());
    fit.histogram.assign(static_cast<std::size_t>(sojourns.back()) + 1, 0);
    double sum = 0;
    for (long t : sojourns) {
        ++fit.histogram[static_cast<std::size_t>(t)];
        sum += static_cast<double>(t);
    }
    fit.raw_mean = sum / static_cast<double>(sojourns.size());
    const double tmin = static_cast<double>(sojourns.front());
    const double tq = sorted_quantile(sojourns, tail_quantile);
    fit.window_lo = tmin + 0.1 * (tq - tmin);
    fit.window_hi = tq;
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    std::size_t m = 0;
    for (std::size_t k = 0; k < fit.histogram.size(); ++k) {
        const double x = static_cast<double>(k);
        if (x < fit.window_lo || x > fit.window_hi || fit.histogram[k] < min_count) continue;
        const double y = std::log(static_cast<double>(fit.histogram[k]));
        sx += x, sy += y, sxx += x * x, syy += y * y, sxy += x * y;
        ++m;
    }
    fit.bins_used = m;
    if (m < 3) return fit;
    const double n = static_cast<double>(m);
    const double cxx = sxx - sx * sx / n, cyy = syy - sy * sy / n, cxy = sxy - sx * sy / n;
    if (!(cxx > 0) || !(cyy > 0)) return fit;
    const double slope = cxy / cxx;
    if (!(slope < 0)) return fit;
    fit.fitted_mean = -1.0 / slope;
    fit.r2 = cxy * cxy / (cxx * cyy);
    fit.valid = true;
    return fit;
}

inline SojournFit sojourn_histogram(const EnsembleSpec& spec, const ModelParams& prm, unsigned workers = 0,
                                    double tail_quantile = 0.985) {
    if (spec.n_left + spec.n_right < 1000) throw std::invalid_argument("sojourn_histogram needs >= 1000 trajectories");
    const auto outcomes = run_ensemble(spec, prm, workers);
    std::vector<long> t;
    t.reserve(outcomes.size());
    std::size_t trapped = 0;
    for (const auto& o : outcomes) {
        if (o.trapped) ++trapped;
        else t.push_back(o.sojourn_kicks);
    }
    SojournFit fit = fit_sojourn(std::move(t), tail_quantile);
    fit.n_trapped = trapped;
    return fit;
}

// ------------------------------------------------------------------ poincare

struct PoincarePoint {
    std::size_t trajectory = 0;
    long kick = 0;
    double x = 0, p = 0;
};

/// Pre-kick (x, p) while inside [-a, a], at most n_record points per
/// trajectory, tagged by ensemble index (left block first).
inline std::vector<PoincarePoint> poincare_section(const EnsembleSpec& spec, const ModelParams& prm, std::size_t n_record,
                                                   unsigned workers = 0) {
    if (n_record < 1) throw std::invalid_argument("n_record must be >= 1");
    spec.validate();
    prm.validate();
    const std::size_t n = spec.n_left + spec.n_right;
    std::vector<std::vector<PoincarePoint>> per(n);
    parallel_for(n, workers, [&](std::size_t i) {
        const bool left = i < spec.n_left;
        const Launch l = draw_launch(spec, left ? Side::Left : Side::Right, left ? i : i - spec.n_left);
        auto& rec = per[i];
        scatter(l, prm, spec.max_kicks, [&](const ClassicalState& st) {
            if (rec.size() < n_record) rec.push_back({i, st.n, st.x, st.p});
        });
    });
    std::vector<PoincarePoint> out;
    for (auto& r : per) out.insert(out.end(), r.begin(), r.end());
    return out;
}

// ------------------------------------------------------------------ spin map

enum class SpinAxisChoice { Exit, Incidence };

struct SpinMapCell {
    double theta_in = 0, p_in = 0;
    double mean_cos_out = 0;
    std::size_t n_used = 0, n_trapped = 0;
};

/// Mean outgoing s.axis per (theta_in, p_in) cell, averaged over one left and
/// one right incidence. Rows are theta-major.
inline std::vector<SpinMapCell> outgoing_spin_map(const std::vector<double>& thetas, const std::vector<double>& ps,
                                                  const ModelParams& prm, double phi_in = 0.0, long max_kicks = 10000,
                                                  SpinAxisChoice axis = SpinAxisChoice::Exit, unsigned workers = 0) {
    if (thetas.empty() || ps.empty()) throw std::invalid_argument("spin map grids must be non-empty");
    prm.validate();
    std::vector<SpinMapCell> cells(thetas.size() * ps.size());
    parallel_for(cells.size(), workers, [&](std::size_t c) {
        SpinMapCell& cell = cells[c];
        cell.theta_in = thetas[c / ps.size()];
        cell.p_in = ps[c % ps.size()];
        double acc = 0;
        for (Side side : {Side::Left, Side::Right}) {
            const auto o = scatter(Launch{side, cell.p_in, cell.theta_in, phi_in}, prm, max_kicks);
            if (o.trapped) {
                ++cell.n_trapped;
                continue;
            }
            const Side ref = axis == SpinAxisChoice::Exit ? o.side_out : side;
            acc += dot(o.s_out, frame_of(incidence_sector(ref)).field_axis()) / prm.spin_norm;
            ++cell.n_used;
        }
        cell.mean_cos_out = cell.n_used ? acc / static_cast<double>(cell.n_used) : std::nan("");
    });
    return cells;
}

// ------------------------------------------------------------------ currents

struct SideCounts {
    std::size_t n = 0, transmitted = 0, reflected = 0, trapped = 0;
};

struct CurrentEstimate {
    double I_p = 0, I_s = 0, stderr_p = 0, stderr_s = 0;
    double trapped_fraction = 0;
    bool warning = false;  // trapped_fraction > 0.05
    SideCounts left, right;
    double T_lr = 0, R_ll = 0, T_rl = 0, R_rr = 0;
    // Variant weighting by the outgoing s.(exit axis) instead of cos(theta_in).
    double I_s_outgoing = 0, stderr_s_outgoing = 0;
};

namespace detail {
struct MeanVar {
    double sum = 0, sumsq = 0;
    std::size_t n = 0;
    void add(double v) { sum += v, sumsq += v * v, ++n; }
    double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
    // squared standard error of the mean
    double sem2() const {
        if (n < 2) return 0.0;
        const double m = mean();
        const double var = std::max(0.0, (sumsq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
        return var / static_cast<double>(n);
    }
};
}  // namespace detail

/// Current estimators from a completed ensemble; outcome order as
/// returned by run_ensemble.
inline CurrentEstimate currents_from_outcomes(const std::vector<ScatterOutcome>& outcomes, const EnsembleSpec& spec,
                                              const ModelParams& prm) {
    if (spec.n_left != spec.n_right || spec.n_left == 0)
        throw std::invalid_argument("current estimators need n_left == n_right > 0");
    if (outcomes.size() != spec.n_left + spec.n_right) throw std::invalid_argument("outcome count does not match spec");
    CurrentEstimate ce;
    detail::MeanVar dp[2], ds[2], dso[2];
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        const int k = o.side_in == Side::Left ? 0 : 1;
        SideCounts& sc = k == 0 ? ce.left : ce.right;
        ++sc.n;
        if (o.trapped) {
            ++sc.trapped;
            continue;
        }
        (o.side_out == o.side_in ? sc.reflected : sc.transmitted)++;
        const double d = o.side_out == Side::Right ? 1.0 : -1.0;
        const std::size_t idx = k == 0 ? i : i - spec.n_left;
        const double u = launch_cos(spec, idx, o.side_in);
        const double uo = dot(o.s_out, frame_of(incidence_sector(o.side_out)).field_axis()) / prm.spin_norm;
        dp[k].add(d);
        ds[k].add(prm.spin_norm * u * d);
        dso[k].add(prm.spin_norm * uo * d);
    }
    auto frac = [](std::size_t a, const SideCounts& s) {
        const std::size_t m = s.n - s.trapped;
        return m ? static_cast<double>(a) / static_cast<double>(m) : 0.0;
    };
    ce.T_lr = frac(ce.left.transmitted, ce.left);
    ce.R_ll = frac(ce.left.reflected, ce.left);
    ce.T_rl = frac(ce.right.transmitted, ce.right);
    ce.R_rr = frac(ce.right.reflected, ce.right);
    ce.I_p = dp[0].mean() + dp[1].mean();
    ce.I_s = ds[0].mean() + ds[1].mean();
    ce.I_s_outgoing = dso[0].mean() + dso[1].mean();
    ce.stderr_p = std::sqrt(dp[0].sem2() + dp[1].sem2());
    ce.stderr_s = std::sqrt(ds[0].sem2() + ds[1].sem2());
    ce.stderr_s_outgoing = std::sqrt(dso[0].sem2() + dso[1].sem2());
    ce.trapped_fraction = static_cast<double>(ce.left.trapped + ce.right.trapped) /
                          static_cast<double>(ce.left.n + ce.right.n);
    ce.warning = ce.trapped_fraction > 0.05;
    return ce;
}

inline CurrentEstimate estimate_currents(const EnsembleSpec& spec, const ModelParams& prm, unsigned workers = 0) {
    if (spec.n_left != spec.n_right || spec.n_left == 0)
        throw std::invalid_argument("current estimators need n_left == n_right > 0");
    return currents_from_outcomes(run_ensemble(spec, prm, workers), spec, prm);
}

inline CurrentEstimate particle_current(const EnsembleSpec& spec, const ModelParams& prm, unsigned workers = 0) {
    return estimate_currents(spec, prm, workers);
}

inline CurrentEstimate spin_current(const EnsembleSpec& spec, const ModelParams& prm, unsigned workers = 0) {
    if (spec.theta_sampling != ThetaSampling::UniformCos)
        throw std::invalid_argument("spin_current requires uniform-cos theta sampling");
    return estimate_currents(spec, prm, workers);
}

struct CurrentSweepRow {
    double a = 0;
    CurrentEstimate est;
};

/// Same ensemble (seed and draws) at every a.
inline std::vector<CurrentSweepRow> current_sweep(const std::vector<double>& a_grid, const EnsembleSpec& spec,
                                                  ModelParams prm, unsigned workers = 0) {
    if (a_grid.empty()) throw std::invalid_argument("a_grid must be non-empty");
    std::vector<CurrentSweepRow> rows;
    rows.reserve(a_grid.size());
    for (double a : a_grid) {
        prm.a = a;
        rows.push_back({a, estimate_currents(spec, prm, workers)});
    }
    return rows;
}

}  // namespace spinpump
