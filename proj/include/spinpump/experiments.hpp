#pragma once

// Named experiments: run a module pipeline, produce CSV tables, optional SVG
// plots and a manifest with checksums.

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "spinpump/config.hpp"

#ifndef SPINPUMP_VERSION
#define SPINPUMP_VERSION "unknown"
#endif

namespace spinpump {

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

/// Shortest text that parses back to the same double.
inline std::string fmt_num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}
inline std::string fmt_num(long v) { return std::to_string(v); }
inline std::string fmt_num(int v) { return std::to_string(v); }
inline std::string fmt_num(std::size_t v) { return std::to_string(v); }
inline std::string fmt_bool(bool b) { return b ? "1" : "0"; }

class CsvTable {
  public:
    explicit CsvTable(std::vector<std::pair<std::string, std::string>> cols) : cols_(std::move(cols)) {}
    void add(std::vector<std::string> row) {
        if (row.size() != cols_.size()) throw std::logic_error("csv row width mismatch");
        rows_.push_back(std::move(row));
    }
    std::size_t size() const { return rows_.size(); }
    std::string str() const {
        std::string s;
        for (std::size_t i = 0; i < cols_.size(); ++i) s += (i ? "," : "") + cols_[i].first + " [" + cols_[i].second + "]";
        s += "\n";
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + r[i];
            s += "\n";
        }
        return s;
    }

  private:
    std::vector<std::pair<std::string, std::string>> cols_;
    std::vector<std::vector<std::string>> rows_;
};

// ------------------------------------------------------------------ plots

struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
    bool line = true;
};

inline std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                            const std::vector<SvgSeries>& series, bool log_y = false) {
    const double W = 720, H = 480, l = 80, r = 160, t = 40, b = 60;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0)) continue;
            x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, ty(s.y[i])), y1 = std::max(y1, ty(s.y[i]));
        }
    if (!(x1 >= x0)) x0 = 0, x1 = 1;
    if (!(y1 >= y0)) y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    auto px = [&](double x) { return l + (x - x0) / (x1 - x0) * (W - l - r); };
    auto py = [&](double y) { return H - b - (ty(y) - y0) / (y1 - y0) * (H - t - b); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
    std::ostringstream os;
    os << std::setprecision(6);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    os << "<rect x=\"" << l << "\" y=\"" << t << "\" width=\"" << W - l - r << "\" height=\"" << H - t - b
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
        const double X = l + (W - l - r) * k / 4.0, Y = H - b - (H - t - b) * k / 4.0;
        os << "<text x=\"" << X << "\" y=\"" << H - b + 16 << "\" text-anchor=\"middle\">" << fmt_num(std::round(xv * 1e3) / 1e3) << "</text>\n";
        const double lab = log_y ? std::pow(10.0, yv) : yv;
        os << "<text x=\"" << l - 6 << "\" y=\"" << Y + 4 << "\" text-anchor=\"end\">"
           << (log_y ? fmt_num(std::round(lab * 1e3) / 1e3) : fmt_num(std::round(yv * 1e3) / 1e3)) << "</text>\n";
    }
    os << "<text x=\"" << l + (W - l - r) / 2 << "\" y=\"" << H - 20 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    os << "<text transform=\"translate(20," << t + (H - t - b) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << ylabel << "</text>\n";
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* c = colors[si % 7];
        if (s.line) {
            os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.x.size(); ++i)
                if (std::isfinite(s.y[i]) && (!log_y || s.y[i] > 0)) os << px(s.x[i]) << "," << py(s.y[i]) << " ";
            os << "\"/>\n";
        } else {
            for (std::size_t i = 0; i < s.x.size(); ++i)
                if (std::isfinite(s.y[i]) && (!log_y || s.y[i] > 0))
                    os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"0.8\" fill=\"" << c << "\"/>\n";
        }
        os << "<text x=\"" << W - r + 10 << "\" y=\"" << t + 16 * (si + 1) << "\" fill=\"" << c << "\">" << s.label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// ------------------------------------------------------------------ results

struct PointStatus {
    std::string label;
    std::string status;  // ok | warning | failed
    std::string message;
};

struct RunOutput {
    std::vector<std::pair<std::string, std::string>> files;  // name, content
    std::vector<std::string> warnings;
    std::vector<PointStatus> points;
    nlohmann::json summary = nlohmann::json::object();

    std::size_t failed_points() const {
        return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const auto& p) { return p.status == "failed"; }));
    }
};

/// Evaluates every value, recording a failure instead of propagating it.
template <class Eval>
void sweep_points(const std::vector<double>& values, const std::string& param, RunOutput& out, Eval&& eval) {
    for (double v : values) {
        const std::string label = param + "=" + fmt_num(v);
        try {
            std::string warn = eval(v);
            out.points.push_back({label, warn.empty() ? "ok" : "warning", warn});
            if (!warn.empty()) out.warnings.push_back(label + ": " + warn);
        } catch (const std::exception& e) {
            out.points.push_back({label, "failed", e.what()});
            out.warnings.push_back(label + ": failed: " + e.what());
        }
    }
}

inline std::string sweep_unit(const std::string& p) {
    if (p == "a") return "length";
    if (p == "A1" || p == "A2") return "field";
    if (p == "hbar") return "action";
    if (p == "phi_kick") return "rad";
    if (p == "p_in") return "momentum";
    return "1";
}

namespace detail {

inline void log_line(std::ostream* log, const std::string& s) {
    if (log) *log << s << std::endl;
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

// ---------------------------------------------------------------- classical

inline void run_poincare(const ExperimentConfig& c, RunOutput& out, std::ostream* log) {
    CsvTable tab({{"theta_in", "rad"}, {"trajectory", "index"}, {"kick", "kicks"}, {"x", "length"}, {"p", "momentum"}});
    std::vector<SvgSeries> series;
    for (double th : c.poincare_thetas) {
        EnsembleSpec spec = c.ensemble;
        spec.n_left = c.poincare_trajectories;
        spec.n_right = 0;
        spec.theta_sampling = ThetaSampling::Fixed;
        spec.theta_fixed = th;
        log_line(log, "poincare: theta_in = " + fmt_num(th));
        const auto pts = poincare_section(spec, c.model, c.poincare_record, c.workers);
        SvgSeries s{"theta_in=" + fmt_num(std::round(th * 1e4) / 1e4), {}, {}, false};
        for (const auto& p : pts) {
            tab.add({fmt_num(th), fmt_num(p.trajectory), fmt_num(p.kick), fmt_num(p.x), fmt_num(p.p)});
            s.x.push_back(p.x);
            s.y.push_back(p.p);
        }
        series.push_back(std::move(s));
        out.points.push_back({"theta_in=" + fmt_num(th), "ok", ""});
    }
    out.files.emplace_back("poincare.csv", tab.str());
    if (c.plots) out.files.emplace_back("poincare.svg", svg_plot("Poincare section", "x", "p", series));
}

inline void run_deflection(const ExperimentConfig& c, RunOutput& out, std::ostream* log) {
    const auto thetas = linspace(c.deflection_theta_min, c.deflection_theta_max, c.deflection_points);
    log_line(log, "deflection: " + std::to_string(thetas.size()) + " launches");
    const auto res = deflection_scan(thetas, c.model, c.deflection_p_in, c.ensemble.phi_in, c.ensemble.max_kicks, c.workers);
    CsvTable tab({{"theta_in", "rad"}, {"p_out", "momentum"}, {"phi_out", "rad"}, {"sojourn_kicks", "kicks"}, {"trapped", "bool"}});
    SvgSeries sp{"p_out", {}, {}, false}, sf{"phi_out", {}, {}, false};
    std::size_t trapped = 0;
    for (std::size_t i = 0; i < res.size(); ++i) {
        const auto& o = res[i];
        trapped += o.trapped;
        tab.add({fmt_num(thetas[i]), fmt_num(o.p_out), fmt_num(o.phi_out), fmt_num(o.sojourn_kicks), fmt_bool(o.trapped)});
        sp.x.push_back(thetas[i]), sp.y.push_back(o.trapped ? NAN : o.p_out);
        sf.x.push_back(thetas[i]), sf.y.push_back(o.phi_out);
    }
    const int changes = p_out_sign_changes(c.deflection_theta_min, c.deflection_theta_max, 12, c.model, c.deflection_p_in,
                                           c.ensemble.max_kicks);
    out.summary["p_out_sign_changes_4097"] = changes;
    out.summary["trapped"] = trapped;
    out.points.push_back({"deflection", "ok", ""});
    out.files.emplace_back("deflection.csv", tab.str());
    if (c.plots) {
        out.files.emplace_back("deflection_p_out.svg", svg_plot("Deflection function", "theta_in", "p_out", {sp}));
        out.files.emplace_back("deflection_phi_out.svg", svg_plot("Deflection function", "theta_in", "phi_out", {sf}));
    }
}

inline void run_sojourn(const ExperimentConfig& c, RunOutput& out, std::ostream* log) {
    log_line(log, "sojourn: " + std::to_string(c.ensemble.n_left + c.ensemble.n_right) + " trajectories");
    const SojournFit fit = sojourn_histogram(c.ensemble, c.model, c.workers);
    CsvTable hist({{"sojourn_kicks", "kicks"}, {"count", "trajectories"}});
    SvgSeries sh{"histogram", {}, {}, false}, sl{"fit", {}, {}, true};
    for (std::size_t k = 0; k < fit.histogram.size(); ++k) {
        if (fit.histogram[k] == 0) continue;
        hist.add({fmt_num(k), fmt_num(fit.histogram[k])});
        sh.x.push_back(static_cast<double>(k));
        sh.y.push_back(static_cast<double>(fit.histogram[k]));
    }
    CsvTable f({{"fitted_mean", "kicks"}, {"r2", "1"}, {"raw_mean", "kicks"}, {"window_lo", "kicks"}, {"window_hi", "kicks"},
                {"bins_used", "bins"}, {"n_used", "trajectories"}, {"n_trapped", "trajectories"}, {"valid", "bool"}});
    f.add({fmt_num(fit.fitted_mean), fmt_num(fit.r2), fmt_num(fit.raw_mean), fmt_num(fit.window_lo), fmt_num(fit.window_hi),
           fmt_num(fit.bins_used), fmt_num(fit.n_used), fmt_num(fit.n_trapped), fmt_bool(fit.valid)});
    std::string warn;
    const double total = static_cast<double>(c.ensemble.n_left + c.ensemble.n_right);
    if (!fit.valid) warn = "exponential fit invalid";
    else if (static_cast<double>(fit.n_trapped) / total > 0.05) warn = "trapped fraction > 0.05";
    if (!warn.empty()) out.warnings.push_back("sojourn: " + warn);
    out.points.push_back({"sojourn", warn.empty() ? "ok" : "warning", warn});
    out.summary["fitted_mean"] = fit.fitted_mean;
    out.summary["r2"] = fit.r2;
    out.files.emplace_back("sojourn_histogram.csv", hist.str());
    out.files.emplace_back("sojourn_fit.csv", f.str());
    if (c.plots) {
        if (fit.valid) {
            // line through the window with the fitted slope, anchored at the window mean of log counts
            double sy = 0, sx = 0;
            std::size_t m = 0;
            for (std::size_t k = 0; k < fit.histogram.size(); ++k)
                if (k >= fit.window_lo && k <= fit.window_hi && fit.histogram[k] >= 5)
                    sx += static_cast<double>(k), sy += std::log(static_cast<double>(fit.histogram[k])), ++m;
            for (double k : {fit.window_lo, fit.window_hi}) {
                sl.x.push_back(k);
                sl.y.push_back(std::exp(sy / m - (k - sx / m) / fit.fitted_mean));
            }
        }
        out.files.emplace_back("sojourn.svg", svg_plot("Sojourn times", "kicks", "count", {sh, sl}, true));
    }
}

inline void run_spinmap(const ExperimentConfig& c, RunOutput& out, std::ostream* log) {
    const auto thetas = linspace(0.0, std::numbers::pi, c.spinmap_theta_points);
    std::vector<double> ps(c.spinmap_p_points);
    for (std::size_t k = 0; k < ps.size(); ++k)
        ps[k] = c.ensemble.p_min + (c.ensemble.p_max - c.ensemble.p_min) * static_cast<double>(k + 1) / static_cast<double>(ps.size());
    log_line(log, "spinmap: " + std::to_string(thetas.size() * ps.size()) + " cells");
    const auto cells = outgoing_spin_map(thetas, ps, c.model, c.ensemble.phi_in, c.ensemble.max_kicks, c.spinmap_axis, c.workers);
    CsvTable tab({{"theta_in", "rad"}, {"p_in", "momentum"}, {"cos_theta_out", "1"}, {"n_used", "trajectories"},
                  {"n_trapped", "trajectories"}});
    std::vector<SvgSeries> series;
    for (std::size_t k = 0; k < ps.size(); k += std::max<std::size_t>(1, ps.size() / 5)) series.push_back({"p_in=" + fmt_num(ps[k]), {}, {}, true});
    for (const auto& cell : cells) {
        tab.add({fmt_num(cell.theta_in), fmt_num(cell.p_in), fmt_num(cell.mean_cos_out), fmt_num(cell.n_used), fmt_num(cell.n_trapped)});
        for (auto& s : series)
            if (s.label == "p_in=" + fmt_num(cell.p_in)) s.x.push_back(std::cos(cell.theta_in)), s.y.push_back(cell.mean_cos_out);
    }
    out.points.push_back({"spinmap", "ok", ""});
    out.files.emplace_back("spinmap.csv", tab.str());
    if (c.plots) out.files.emplace_back("spinmap.svg", svg_plot("Outgoing spin", "cos theta_in", "cos theta_out", series));
}

inline void run_classical_current(const ExperimentConfig& c, RunOutput& out, std::ostream* log) {
    const std::string& par = c.sweep_param;
    CsvTable tab({{par, sweep_unit(par)}, {"I_p", "1"}, {"stderr_p", "1"}, {"I_s", "spin"}, {"stderr_s", "spin"},
                  {"I_s_outgoing", "spin"}, {"stderr_s_outgoing", "spin"}, {"trapped_fraction", "1"}, {"warning", "bool"}});
    SvgSeries sp{"I_p", {}, {}, true}, ss{"I_s", {}, {}, true};
    const std::vector<double> values = par == "none" ? std::vector<double>{c.model.a} : c.sweep_values();
    sweep_points(values, par == "none" ? "a" : par, out, [&](double v) -> std::string {
        ModelParams m = c.model;
        QuantumSetup q = c.quantum;
        if (par != "none") apply_sweep_value(par, v, m, q);
        log_line(log, "classical-current: " + par + " = " + fmt_num(v));
        const CurrentEstimate e = spin_current(c.ensemble, m, c.workers);
        tab.add({fmt_num(v), fmt_num(e.I_p), fmt_num(e.stderr_p), fmt_num(e.I_s), fmt_num(e.stderr_s), fmt_num(e.I_s_outgoing),
                 fmt_num(e.stderr_s_outgoing), fmt_num(e.trapped_fraction), fmt_bool(e.warning)});
        sp.x.push_back(v), sp.y.push_back(e.I_p);
        ss.x.push_back(v), ss.y.push_back(e.I_s);
        return e.warning ? "trapped fraction " + fmt_num(e.trapped_fraction) + " > 0.05" : "";
    });
    out.files.emplace_back("classical_current.csv", tab.str());
    if (c.plots) out.files.emplace_back("classical_current.svg", svg_plot("Classical currents", par, "current", {sp, ss}));
}

// ------------------------------------------------------------------ quantum

/// Share of total probability in the highest retained channel.
inline double outer_channel_fraction(const QuantumPoint& q) {
    double outer = 0, total = 0;
    int lmax = INT32_MIN;
    for (const ChannelTable* t : {&q.table_left, &q.table_right})
        for (const auto& e : t->entries) lmax = std::max(lmax, e.l);
    for (const ChannelTable* t : {&q.table_left, &q.table_right})
        for (const auto& e : t->entries) {
            total += e.probability;
            if (e.l == lmax) outer += e.probability;
        }
    return total > 0 ? outer / total : 0.0;
}

inline std::string quantum_warning(const QuantumPoint& q, const QuantumSetup& qs) {
    std::string w;
    auto add = [&](const std::string& s) { w += (w.empty() ? "" : "; ") + s; };
    if (!q.converged) add("steady state not converged");
    if (!q.flux_ok) add("flux deviation " + fmt_num(q.flux_dev) + " > " + fmt_num(qs.flux_tolerance));
    if (const double f = outer_channel_fraction(q); f > 1e-4) add("outermost retained channel carries " + fmt_num(f));
    return w;
}

inline void run_qtransmission(const ExperimentConfig& c, RunOutput& out, std::ostream* log) {
    const std::string par = c.sweep_param == "none" ? "a" : c.sweep_param;
    CsvTable tab({{par, sweep_unit(par)}, {"l", "1"}, {"spin", "hbar/2"}, {"side_in", "side"}, {"side_out", "side"},
                  {"probability", "1"}, {"flux_dev", "1"}});
    CsvTable pts({{par, sweep_unit(par)}, {"convention", "name"}, {"flux_dev", "1"}, {"flux_dev_alternative", "1"},
                  {"T_left", "1"}, {"R_left", "1"}, {"T_right", "1"}, {"R_right", "1"}, {"converged", "bool"},
                  {"periods", "periods"}, {"residual", "1"}});
    std::map<int, SvgSeries> by_l;
    const std::vector<double> values = c.sweep_param == "none" ? std::vector<double>{c.model.a} : c.sweep_values();
    sweep_points(values, par, out, [&](double v) -> std::string {
        ModelParams m = c.model;
        QuantumSetup q = c.quantum;
        apply_sweep_value(par, v, m, q);
        log_line(log, "qtransmission: " + par + " = " + fmt_num(v));
        const QuantumPoint p = compute_point(m, q, c.workers);
        for (const ChannelTable* t : {&p.table_left, &p.table_right})
            for (const auto& e : t->entries) {
                if (e.probability < c.report_floor) continue;
                tab.add({fmt_num(v), fmt_num(e.l), fmt_num(e.spin), side_name(e.side_in), side_name(e.side_out),
                         fmt_num(e.probability), fmt_num(p.flux_dev)});
            }
        for (int l = -2; l <= 2; ++l) {
            auto& s = by_l[l];
            s.label = "T_lr,l=" + std::to_string(l);
            s.x.push_back(v);
            s.y.push_back(p.table_left.channel(Side::Right, l));
        }
        pts.add({fmt_num(v), convention_name(p.convention), fmt_num(p.flux_dev), fmt_num(p.flux_dev_alternative),
                 fmt_num(p.table_left.transmitted), fmt_num(p.table_left.reflected), fmt_num(p.table_right.transmitted),
                 fmt_num(p.table_right.reflected), fmt_bool(p.converged), fmt_num(std::max(p.left.periods, p.right.periods)),
                 fmt_num(std::max(p.left.residual, p.right.residual))});
        return quantum_warning(p, q);
    });
    out.summary["polarization"] = "unpolarized";
    out.files.emplace_back("qtransmission.csv", tab.str());
    out.files.emplace_back("qtransmission_points.csv", pts.str());
    if (c.plots) {
        std::vector<SvgSeries> s;
        for (auto& [l, ser] : by_l) s.push_back(ser);
        out.files.emplace_back("qtransmission.svg", svg_plot("Floquet channel transmissions", par, "T_lr,l", s));
    }
}

struct QRow {
    double v = 0;
    QuantumPoint p;
    bool refined = false;
};

inline void run_qcurrent(const ExperimentConfig& c, RunOutput& out, std::ostream* log) {
    const std::string par = c.sweep_param == "none" ? "a" : c.sweep_param;
    std::vector<QRow> rows;
    auto eval = [&](double v) {
        ModelParams m = c.model;
        QuantumSetup q = c.quantum;
        apply_sweep_value(par, v, m, q);
        log_line(log, "qcurrent: " + par + " = " + fmt_num(v));
        return compute_point(m, q, c.workers);
    };
    const std::vector<double> values = c.sweep_param == "none" ? std::vector<double>{c.model.a} : c.sweep_values();
    sweep_points(values, par, out, [&](double v) {
        rows.push_back({v, eval(v), false});
        return quantum_warning(rows.back().p, c.quantum);
    });
    if (c.refine && rows.size() > 1) {
        const std::size_t n = rows.size();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const QRow a = rows[i], b = rows[i + 1];
            const double fa = a.p.currents.I_p, fb = b.p.currents.I_p;
            if (!(fa * fb < 0)) continue;
            const double ftol = std::max(1e-7, 0.5 * std::min(a.p.flux_dev, b.p.flux_dev));
            std::vector<double> tried;
            try {
                refine_zero(
                    [&](double v) {
                        rows.push_back({v, eval(v), true});
                        const auto& p = rows.back().p;
                        const std::string w = quantum_warning(p, c.quantum);
                        out.points.push_back({par + "=" + fmt_num(v) + " (refine)", w.empty() ? "ok" : "warning", w});
                        if (!w.empty()) out.warnings.push_back(par + "=" + fmt_num(v) + ": " + w);
                        return p.currents.I_p;
                    },
                    a.v, fa, b.v, fb, ftol, c.refine_max_eval);
            } catch (const std::exception& e) {
                out.points.push_back({par + " refine in [" + fmt_num(a.v) + ", " + fmt_num(b.v) + "]", "failed", e.what()});
                out.warnings.push_back("refinement failed: " + std::string(e.what()));
            }
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const QRow& x, const QRow& y) { return x.v < y.v; });
    CsvTable tab({{par, sweep_unit(par)}, {"I_p", "1"}, {"I_s", "hbar/2"}, {"flux_dev", "1"}, {"convention", "name"},
                  {"converged", "bool"}, {"refined", "bool"}});
    SvgSeries sp{"I_p", {}, {}, true}, ss{"I_s", {}, {}, true};
    for (const auto& r : rows) {
        tab.add({fmt_num(r.v), fmt_num(r.p.currents.I_p), fmt_num(r.p.currents.I_s), fmt_num(r.p.flux_dev),
                 convention_name(r.p.convention), fmt_bool(r.p.converged), fmt_bool(r.refined)});
        sp.x.push_back(r.v), sp.y.push_back(r.p.currents.I_p);
        ss.x.push_back(r.v), ss.y.push_back(r.p.currents.I_s);
    }
    out.summary["polarization"] = "unpolarized";
    out.files.emplace_back("qcurrent.csv", tab.str());
    if (c.plots) out.files.emplace_back("qcurrent.svg", svg_plot("Quantum currents", par, "current", {sp, ss}));
}

inline void run_oracle(const ExperimentConfig& c, RunOutput& out, std::ostream* log) {
    log_line(log, "oracle-wavepacket: source-term point");
    const QuantumPoint p = compute_point(c.model, c.quantum, c.workers);
    Grid g{c.oracle_L, c.oracle_N};
    const auto inc = incidence_basis(Side::Left);
    WavepacketResult acc;
    for (int k = 0; k < 2; ++k) {
        log_line(log, "oracle-wavepacket: packet " + std::to_string(k + 1) + "/2");
        const auto r = wavepacket_scatter(c.model, g, c.quantum.absorber, c.quantum.p_in, c.oracle_sigma_p, inc[k],
                                          c.quantum.steady.M, c.oracle_max_periods);
        acc.transmitted += 0.5 * r.transmitted;
        acc.reflected += 0.5 * r.reflected;
        acc.remaining += 0.5 * r.remaining;
        acc.periods = std::max(acc.periods, r.periods);
    }
    const double Ts = p.table_left.transmitted;
    const double rel = std::abs(acc.transmitted - Ts) / std::max(Ts, 1e-300);
    CsvTable tab({{"a", "length"}, {"T_source", "1"}, {"R_source", "1"}, {"T_wavepacket", "1"}, {"R_wavepacket", "1"},
                  {"remaining", "1"}, {"rel_diff", "1"}, {"sigma_p", "momentum"}, {"flux_dev", "1"}});
    tab.add({fmt_num(c.model.a), fmt_num(Ts), fmt_num(p.table_left.reflected), fmt_num(acc.transmitted), fmt_num(acc.reflected),
             fmt_num(acc.remaining), fmt_num(rel), fmt_num(c.oracle_sigma_p), fmt_num(p.flux_dev)});
    std::string w = quantum_warning(p, c.quantum);
    if (rel > 0.03) w += (w.empty() ? "" : "; ") + std::string("source-term and wavepacket transmission differ by ") + fmt_num(rel);
    if (acc.remaining > 1e-3) w += (w.empty() ? "" : "; ") + std::string("wavepacket not fully scattered");
    if (!w.empty()) out.warnings.push_back("oracle: " + w);
    out.points.push_back({"a=" + fmt_num(c.model.a), w.empty() ? "ok" : "warning", w});
    out.summary["rel_diff"] = rel;
    out.files.emplace_back("oracle_wavepacket.csv", tab.str());
}

}  // namespace detail

/// Runs the experiment in memory; nothing is written.
inline RunOutput run_experiment(const ExperimentConfig& c, std::ostream* log = nullptr) {
    validate_config(c);
    RunOutput out;
    const std::string& e = c.experiment;
    if (e == "poincare") detail::run_poincare(c, out, log);
    else if (e == "deflection") detail::run_deflection(c, out, log);
    else if (e == "sojourn") detail::run_sojourn(c, out, log);
    else if (e == "spinmap") detail::run_spinmap(c, out, log);
    else if (e == "classical-current") detail::run_classical_current(c, out, log);
    else if (e == "qtransmission") detail::run_qtransmission(c, out, log);
    else if (e == "qcurrent") detail::run_qcurrent(c, out, log);
    else if (e == "oracle-wavepacket") detail::run_oracle(c, out, log);
    return out;
}

/// Creates the directory and proves it writable; throws ConfigError.
inline void check_output_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw ConfigError("output.dir: cannot create '" + dir + "'");
    const fs::path probe = fs::path(dir) / ".spinpump_write_probe";
    {
        std::ofstream f(probe);
        if (!f || !(f << "x") || !f.flush()) throw ConfigError("output.dir: '" + dir + "' is not writable");
    }
    fs::remove(probe, ec);
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
    const std::time_t t = std::chrono::system_clock::to_time_t(tp);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Writes data files and manifest.json; returns the manifest.
inline nlohmann::json write_outputs(const ParsedConfig& pc, const RunOutput& out, std::chrono::system_clock::time_point started,
                                    std::chrono::system_clock::time_point finished) {
    namespace fs = std::filesystem;
    const fs::path dir(pc.config.out_dir);
    nlohmann::json m;
    m["tool"] = "spinpump";
    m["version"] = SPINPUMP_VERSION;
    m["experiment"] = pc.config.experiment;
    m["config"] = pc.materialized;
    m["config_hash"] = sha256_hex(config_text(pc));
    nlohmann::json ov = nlohmann::json::object();
    for (const auto& [k, v] : pc.overridden) ov[k] = {{"file", v.first}, {"flag", v.second}};
    m["overrides"] = ov;
    m["started"] = utc_timestamp(started);
    m["finished"] = utc_timestamp(finished);
    m["workers"] = resolve_workers(pc.config.workers);
    nlohmann::json files = nlohmann::json::array();
    for (const auto& [name, content] : out.files) {
        std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
        if (!f || !f.write(content.data(), static_cast<std::streamsize>(content.size())))
            throw std::runtime_error("cannot write " + (dir / name).string());
        files.push_back({{"name", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
    }
    m["files"] = files;
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : out.points) pts.push_back({{"point", p.label}, {"status", p.status}, {"message", p.message}});
    m["points"] = pts;
    m["warnings"] = out.warnings;
    m["summary"] = out.summary;
    std::ofstream f(dir / "manifest.json", std::ios::trunc);
    if (!(f << m.dump(2) << "\n")) throw std::runtime_error("cannot write manifest.json");
    return m;
}

/// 0 ok, 2 nothing succeeded, 3 completed with warnings or some failed points.
inline int exit_code_for(const RunOutput& out) {
    if (!out.points.empty() && out.failed_points() == out.points.size()) return 2;
    if (!out.warnings.empty()) return 3;
    return 0;
}

}  // namespace spinpump
