#pragma once

// Experiment configuration: a flat `key = value` text format ('#' starts a
// comment). Unknown keys and out-of-range values are errors.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spinpump/classical.hpp"
#include "spinpump/pipeline.hpp"

namespace spinpump {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {"poincare",          "deflection",  "sojourn",  "spinmap",
                                                   "classical-current", "qtransmission", "qcurrent", "oracle-wavepacket"};
    return names;
}

inline bool is_sweep_experiment(const std::string& e) {
    return e == "classical-current" || e == "qtransmission" || e == "qcurrent";
}

struct ExperimentConfig {
    std::string experiment;
    ModelParams model;
    EnsembleSpec ensemble;
    QuantumSetup quantum;

    std::size_t poincare_trajectories = 2000, poincare_record = 500;
    std::vector<double> poincare_thetas{0.0, std::numbers::pi};

    std::size_t deflection_points = 2001;
    double deflection_p_in = 1.0, deflection_theta_min = 0.0, deflection_theta_max = std::numbers::pi;

    std::size_t spinmap_theta_points = 61, spinmap_p_points = 50;
    SpinAxisChoice spinmap_axis = SpinAxisChoice::Exit;

    std::string sweep_param = "none";
    double sweep_from = 1.0, sweep_to = 6.0;
    std::size_t sweep_points = 11;

    bool refine = true;
    int refine_max_eval = 6;
    double report_floor = 1e-6;
    double oracle_sigma_p = 0.025, oracle_L = 128.0;
    std::size_t oracle_N = 16384, oracle_max_periods = 600;

    std::string out_dir = "out";
    unsigned workers = 0;
    bool plots = false;

    std::vector<double> sweep_values() const {
        if (sweep_param == "none") return {};
        std::vector<double> v(sweep_points);
        for (std::size_t i = 0; i < sweep_points; ++i)
            v[i] = sweep_points == 1 ? sweep_from
                                     : sweep_from + (sweep_to - sweep_from) * static_cast<double>(i) / static_cast<double>(sweep_points - 1);
        return v;
    }
};

/// Sets a swept parameter by name on a copy of the model/setup.
inline void apply_sweep_value(const std::string& param, double v, ModelParams& m, QuantumSetup& q) {
    if (param == "a") m.a = v;
    else if (param == "A1") m.A1 = v;
    else if (param == "A2") m.A2 = v;
    else if (param == "hbar") m.hbar = v;
    else if (param == "phi_kick") m.phi_kick = v;
    else if (param == "p_in") q.p_in = v;
    else throw ConfigError("unknown sweep parameter '" + param + "'");
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& key, const std::string& s) {
    double v = 0;
    const std::string t = trim(s);
    if (t == "pi") return std::numbers::pi;
    auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size() || !std::isfinite(v))
        throw ConfigError(key + ": expected a finite number, got '" + s + "'");
    return v;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const std::string t = trim(s);
    auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size())
        throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
    const std::string t = trim(s);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(key + ": expected true/false, got '" + s + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) v.push_back(parse_double(key, item));
    if (v.empty()) throw ConfigError(key + ": expected a comma-separated list");
    return v;
}

inline std::string fmt_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
    return s;
}

template <class E>
E parse_enum(const std::string& key, const std::string& s, const std::vector<std::pair<std::string, E>>& opts) {
    const std::string t = trim(s);
    for (const auto& [name, val] : opts)
        if (name == t) return val;
    std::string msg = key + ": expected one of";
    for (const auto& o : opts) msg += " " + o.first;
    throw ConfigError(msg + ", got '" + s + "'");
}

template <class E>
std::string enum_name(E v, const std::vector<std::pair<std::string, E>>& opts) {
    for (const auto& [name, val] : opts)
        if (val == v) return name;
    return "?";
}

inline const std::vector<std::pair<std::string, CouplingSign>> kSignOpts{{"positive", CouplingSign::Positive},
                                                                          {"negative", CouplingSign::Negative}};
inline const std::vector<std::pair<std::string, ThetaSampling>> kThetaOpts{{"uniform-cos", ThetaSampling::UniformCos},
                                                                            {"fixed", ThetaSampling::Fixed}};
inline const std::vector<std::pair<std::string, PhiSampling>> kPhiOpts{{"fixed", PhiSampling::Fixed},
                                                                        {"uniform", PhiSampling::Uniform}};
inline const std::vector<std::pair<std::string, RatioConvention>> kConvOpts{
    {"auto", RatioConvention::Auto}, {"flux", RatioConvention::Flux}, {"inverse", RatioConvention::Inverse}};
inline const std::vector<std::pair<std::string, SpinAxisMode>> kAxisOpts{{"exit", SpinAxisMode::ExitSector},
                                                                          {"lab-z", SpinAxisMode::LabZ}};
inline const std::vector<std::pair<std::string, SpinAxisChoice>> kMapAxisOpts{{"exit", SpinAxisChoice::Exit},
                                                                               {"incidence", SpinAxisChoice::Incidence}};

struct KeySpec {
    std::string name;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define SP_DOUBLE(key, field)                                                                   \
    KeySpec {                                                                                   \
        key, [](ExperimentConfig& c, const std::string& v) { c.field = parse_double(key, v); }, \
            [](const ExperimentConfig& c) { return fmt_double(c.field); }                       \
    }
#define SP_UINT(key, field, T)                                                                               \
    KeySpec {                                                                                                \
        key, [](ExperimentConfig& c, const std::string& v) { c.field = static_cast<T>(parse_uint(key, v)); }, \
            [](const ExperimentConfig& c) { return std::to_string(c.field); }                                \
    }
#define SP_BOOL(key, field)                                                                   \
    KeySpec {                                                                                 \
        key, [](ExperimentConfig& c, const std::string& v) { c.field = parse_bool(key, v); }, \
            [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); } \
    }
#define SP_ENUM(key, field, opts)                                                                   \
    KeySpec {                                                                                       \
        key, [](ExperimentConfig& c, const std::string& v) { c.field = parse_enum(key, v, opts); }, \
            [](const ExperimentConfig& c) { return enum_name(c.field, opts); }                      \
    }

inline const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> keys = {
        SP_DOUBLE("model.a", model.a),
        SP_DOUBLE("model.A1", model.A1),
        SP_DOUBLE("model.A2", model.A2),
        SP_DOUBLE("model.T", model.T),
        SP_DOUBLE("model.m0", model.m0),
        SP_DOUBLE("model.gamma", model.gamma),
        SP_DOUBLE("model.spin_norm", model.spin_norm),
        SP_DOUBLE("model.hbar", model.hbar),
        SP_DOUBLE("model.muB", model.muB),
        SP_DOUBLE("model.phi_kick", model.phi_kick),
        SP_ENUM("model.sign", model.sign, kSignOpts),

        SP_UINT("ensemble.n_left", ensemble.n_left, std::size_t),
        SP_UINT("ensemble.n_right", ensemble.n_right, std::size_t),
        SP_DOUBLE("ensemble.p_min", ensemble.p_min),
        SP_DOUBLE("ensemble.p_max", ensemble.p_max),
        SP_ENUM("ensemble.theta_sampling", ensemble.theta_sampling, kThetaOpts),
        SP_DOUBLE("ensemble.theta_in", ensemble.theta_fixed),
        SP_ENUM("ensemble.phi_sampling", ensemble.phi_sampling, kPhiOpts),
        SP_DOUBLE("ensemble.phi_in", ensemble.phi_in),
        SP_UINT("ensemble.seed", ensemble.seed, std::uint64_t),
        SP_UINT("ensemble.max_kicks", ensemble.max_kicks, long),
        SP_BOOL("ensemble.paired_sides", ensemble.paired_sides),

        SP_DOUBLE("quantum.L", quantum.grid.L),
        SP_UINT("quantum.N", quantum.grid.N, std::size_t),
        SP_UINT("quantum.M", quantum.steady.M, std::size_t),
        SP_UINT("quantum.Ns", quantum.steady.Ns, std::size_t),
        SP_UINT("quantum.transient_periods", quantum.steady.transient_periods, std::size_t),
        SP_UINT("quantum.max_periods", quantum.steady.max_periods, std::size_t),
        SP_DOUBLE("quantum.convergence_tol", quantum.steady.convergence_tol),
        SP_DOUBLE("quantum.p_in", quantum.p_in),
        SP_DOUBLE("quantum.absorber_width", quantum.absorber.width),
        SP_DOUBLE("quantum.absorber_eta", quantum.absorber.eta),
        SP_DOUBLE("quantum.source_offset", quantum.source_offset),
        SP_DOUBLE("quantum.window_gap", quantum.window_gap),
        SP_DOUBLE("quantum.window_length", quantum.window_length),
        SP_DOUBLE("quantum.ramp_periods", quantum.ramp_periods),
        SP_DOUBLE("quantum.momentum_cap", quantum.momentum_cap),
        SP_ENUM("quantum.ratio_convention", quantum.convention, kConvOpts),
        SP_ENUM("quantum.spin_axis", quantum.axis, kAxisOpts),
        SP_DOUBLE("quantum.flux_tolerance", quantum.flux_tolerance),
        SP_DOUBLE("quantum.report_floor", report_floor),
        SP_BOOL("quantum.refine", refine),
        SP_UINT("quantum.refine_max_eval", refine_max_eval, int),
        SP_DOUBLE("oracle.sigma_p", oracle_sigma_p),
        SP_DOUBLE("oracle.L", oracle_L),
        SP_UINT("oracle.N", oracle_N, std::size_t),
        SP_UINT("oracle.max_periods", oracle_max_periods, std::size_t),

        SP_UINT("poincare.trajectories", poincare_trajectories, std::size_t),
        SP_UINT("poincare.n_record", poincare_record, std::size_t),
        KeySpec{"poincare.theta_in",
                [](ExperimentConfig& c, const std::string& v) { c.poincare_thetas = parse_list("poincare.theta_in", v); },
                [](const ExperimentConfig& c) { return fmt_list(c.poincare_thetas); }},
        SP_UINT("deflection.points", deflection_points, std::size_t),
        SP_DOUBLE("deflection.p_in", deflection_p_in),
        SP_DOUBLE("deflection.theta_min", deflection_theta_min),
        SP_DOUBLE("deflection.theta_max", deflection_theta_max),
        SP_UINT("spinmap.theta_points", spinmap_theta_points, std::size_t),
        SP_UINT("spinmap.p_points", spinmap_p_points, std::size_t),
        SP_ENUM("spinmap.axis", spinmap_axis, kMapAxisOpts),

        KeySpec{"sweep.param", [](ExperimentConfig& c, const std::string& v) { c.sweep_param = trim(v); },
                [](const ExperimentConfig& c) { return c.sweep_param; }},
        SP_DOUBLE("sweep.from", sweep_from),
        SP_DOUBLE("sweep.to", sweep_to),
        SP_UINT("sweep.points", sweep_points, std::size_t),

        KeySpec{"output.dir", [](ExperimentConfig& c, const std::string& v) { c.out_dir = trim(v); },
                [](const ExperimentConfig& c) { return c.out_dir; }},
        SP_UINT("output.workers", workers, unsigned),
        SP_BOOL("output.plots", plots),
    };
    return keys;
}

#undef SP_DOUBLE
#undef SP_UINT
#undef SP_BOOL
#undef SP_ENUM

inline const KeySpec& find_key(const std::string& name) {
    for (const auto& k : key_specs())
        if (k.name == name) return k;
    throw ConfigError("unknown configuration key '" + name + "'");
}

}  // namespace detail

/// Parses `key = value` lines into pairs, in order.
inline std::vector<std::pair<std::string, std::string>> parse_kv_text(const std::string& text, const std::string& origin) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return out;
}

/// Experiment-dependent defaults applied before any file or flag.
inline void apply_experiment_defaults(ExperimentConfig& c) {
    if (is_sweep_experiment(c.experiment)) {
        c.sweep_param = "a";
        c.model.A1 = 8.0;
        c.model.A2 = 1.0;
    }
    if (c.experiment == "classical-current" || c.experiment == "sojourn") c.ensemble.n_left = c.ensemble.n_right = 100000;
    if (c.experiment == "poincare" || c.experiment == "deflection") c.ensemble.n_left = c.ensemble.n_right = 0;
    if (c.experiment == "oracle-wavepacket") {
        c.model.A1 = 8.0;
        c.model.A2 = 1.0;
    }
}

/// Throws ConfigError naming the violated invariant.
inline void validate_config(const ExperimentConfig& c) {
    const auto& names = experiment_names();
    if (std::find(names.begin(), names.end(), c.experiment) == names.end())
        throw ConfigError("unknown experiment '" + c.experiment + "'");
    auto wrap = [](auto&& f) {
        try {
            f();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    };
    wrap([&] { c.model.validate(); });
    const bool quantum = c.experiment == "qtransmission" || c.experiment == "qcurrent" || c.experiment == "oracle-wavepacket";
    if (!quantum) wrap([&] { c.ensemble.validate(); });
    if (c.sweep_param != "none") {
        if (!is_sweep_experiment(c.experiment))
            throw ConfigError("sweep.param: experiment '" + c.experiment + "' does not support a sweep (use none)");
        static const std::vector<std::string> classical_params = {"a", "A1", "A2", "phi_kick"};
        static const std::vector<std::string> quantum_params = {"a", "A1", "A2", "hbar", "phi_kick", "p_in"};
        const auto& ok = c.experiment == "classical-current" ? classical_params : quantum_params;
        if (std::find(ok.begin(), ok.end(), c.sweep_param) == ok.end())
            throw ConfigError("sweep.param: '" + c.sweep_param + "' is not a valid sweep axis for " + c.experiment);
        if (c.sweep_points < 1) throw ConfigError("sweep.points invariant violated: >= 1");
        for (double v : c.sweep_values()) {
            ModelParams m = c.model;
            QuantumSetup q = c.quantum;
            apply_sweep_value(c.sweep_param, v, m, q);
            wrap([&] { m.validate(); });
            if (quantum) wrap([&] { q.validate(m); });
        }
    } else if (quantum) {
        wrap([&] { c.quantum.validate(c.model); });
    }
    if (c.experiment == "classical-current" && (c.ensemble.n_left != c.ensemble.n_right || c.ensemble.n_left == 0))
        throw ConfigError("ensemble: current estimators need n_left == n_right > 0");
    if (c.experiment == "classical-current" && c.ensemble.theta_sampling != ThetaSampling::UniformCos)
        throw ConfigError("ensemble.theta_sampling: spin current estimator needs uniform-cos");
    if (c.experiment == "sojourn" && c.ensemble.n_left + c.ensemble.n_right < 1000)
        throw ConfigError("ensemble: sojourn statistics need >= 1000 trajectories");
    if (c.experiment == "spinmap" && (c.spinmap_theta_points < 1 || c.spinmap_p_points < 1))
        throw ConfigError("spinmap grids must be non-empty");
    if (c.experiment == "deflection" &&
        !(c.deflection_points >= 1 && c.deflection_theta_min >= 0 && c.deflection_theta_max <= std::numbers::pi &&
          c.deflection_theta_min <= c.deflection_theta_max))
        throw ConfigError("deflection grid must lie in [0, pi] with at least one point");
    if (c.experiment == "poincare")
        for (double t : c.poincare_thetas)
            if (!(t >= 0 && t <= std::numbers::pi)) throw ConfigError("poincare.theta_in values must lie in [0, pi]");
    if (!(c.report_floor >= 0)) throw ConfigError("quantum.report_floor invariant violated: >= 0");
    if (quantum && !(c.quantum.steady.Ns >= 2 && c.quantum.steady.M >= 1))
        throw ConfigError("quantum invariant violated: Ns >= 2 and M >= 1");
    if (quantum && !(c.quantum.steady.convergence_tol > 0)) throw ConfigError("quantum.convergence_tol invariant violated: > 0");
}

struct ConfigSource {
    std::string file_path;                                      // empty: none
    std::vector<std::pair<std::string, std::string>> flag_sets;  // --set key=value, in order
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    bool plots = false;
};

struct ParsedConfig {
    ExperimentConfig config;
    std::map<std::string, std::string> materialized;           // every key
    std::map<std::string, std::pair<std::string, std::string>> overridden;  // key -> (file, flag)
};

inline ParsedConfig parse_config(const std::string& experiment, const ConfigSource& src) {
    ParsedConfig pc;
    ExperimentConfig& c = pc.config;
    c.experiment = experiment;
    {
        const auto& names = experiment_names();
        if (std::find(names.begin(), names.end(), experiment) == names.end())
            throw ConfigError("unknown experiment '" + experiment + "'");
    }
    apply_experiment_defaults(c);
    std::map<std::string, std::string> from_file;
    if (!src.file_path.empty()) {
        std::ifstream in(src.file_path);
        if (!in) throw ConfigError("cannot read config file '" + src.file_path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        for (const auto& [k, v] : parse_kv_text(ss.str(), src.file_path)) {
            detail::find_key(k).set(c, v);
            from_file[k] = v;
        }
    }
    std::vector<std::pair<std::string, std::string>> flags = src.flag_sets;
    if (src.out_dir) flags.emplace_back("output.dir", *src.out_dir);
    if (src.seed) flags.emplace_back("ensemble.seed", std::to_string(*src.seed));
    if (src.workers) flags.emplace_back("output.workers", std::to_string(*src.workers));
    if (src.plots) flags.emplace_back("output.plots", "true");
    for (const auto& [k, v] : flags) {
        detail::find_key(k).set(c, v);
        if (auto it = from_file.find(k); it != from_file.end() && it->second != v) pc.overridden[k] = {it->second, v};
    }
    validate_config(c);
    for (const auto& k : detail::key_specs()) pc.materialized[k.name] = k.get(c);
    return pc;
}

/// Canonical text of every result-determining key (sorted; output.* excluded).
inline std::string config_text(const ParsedConfig& pc) {
    std::string s = "experiment = " + pc.config.experiment + "\n";
    for (const auto& [k, v] : pc.materialized)
        if (k.rfind("output.", 0) != 0) s += k + " = " + v + "\n";
    return s;
}

}  // namespace spinpump
