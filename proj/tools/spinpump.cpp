#include <chrono>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spinpump/experiments.hpp"

int main(int argc, char** argv) {
    using namespace spinpump;
    CLI::App app{"Chaotic spin pump: classical and quantum scattering experiments"};
    std::string experiment, config_path, out_dir;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    unsigned workers = 0;
    bool plots = false;
    std::string names;
    for (const auto& n : experiment_names()) names += (names.empty() ? "" : ", ") + n;
    app.add_option("experiment", experiment, "One of: " + names)->required();
    app.add_option("--config", config_path, "key = value configuration file");
    app.add_option("--set", sets, "Override one key (key=value); repeatable");
    auto* o_out = app.add_option("--out", out_dir, "Output directory");
    auto* o_seed = app.add_option("--seed", seed, "Ensemble seed");
    auto* o_workers = app.add_option("--workers", workers, "Worker threads (0: hardware concurrency)");
    app.add_flag("--plots", plots, "Also write SVG plots");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    ParsedConfig pc;
    try {
        ConfigSource src;
        src.file_path = config_path;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
            src.flag_sets.emplace_back(detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
        }
        if (*o_out) src.out_dir = out_dir;
        if (*o_seed) src.seed = seed;
        if (*o_workers) src.workers = workers;
        src.plots = plots;
        pc = parse_config(experiment, src);
        check_output_dir(pc.config.out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }

    try {
        const auto started = std::chrono::system_clock::now();
        const RunOutput out = run_experiment(pc.config, &std::cerr);
        write_outputs(pc, out, started, std::chrono::system_clock::now());
        for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
        const int rc = exit_code_for(out);
        std::cerr << "wrote " << out.files.size() << " file(s) and manifest.json to " << pc.config.out_dir << "\n";
        return rc;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}
