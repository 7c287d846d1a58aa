#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "spinpump/config.hpp"

using namespace spinpump;

namespace {

std::string write_tmp(const std::string& name, const std::string& text) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::ofstream(p) << text;
    return p.string();
}

std::string error_of(const std::string& exp, const ConfigSource& src) {
    try {
        parse_config(exp, src);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, EmptyConfigMaterializesDefaults) {
    const ParsedConfig pc = parse_config("sojourn", {});
    EXPECT_EQ(pc.materialized.at("model.a"), "4");
    EXPECT_EQ(pc.materialized.at("model.T"), "1");
    EXPECT_EQ(pc.materialized.at("model.m0"), "1");
    EXPECT_EQ(pc.materialized.at("model.gamma"), "1");
    EXPECT_EQ(pc.materialized.at("model.spin_norm"), "1");
    EXPECT_EQ(pc.materialized.at("model.hbar"), "0.25");
    EXPECT_EQ(pc.materialized.at("ensemble.theta_sampling"), "uniform-cos");
    EXPECT_EQ(pc.materialized.at("sweep.param"), "none");
    EXPECT_EQ(pc.materialized.size(), detail::key_specs().size());
    EXPECT_TRUE(pc.overridden.empty());
}

TEST(Config, SweepExperimentsDefaultToAmplitudeRatioEight) {
    const ParsedConfig pc = parse_config("qcurrent", {});
    EXPECT_EQ(pc.config.sweep_param, "a");
    EXPECT_EQ(pc.config.model.A1, 8.0);
    EXPECT_EQ(pc.config.sweep_values().size(), 11u);
    EXPECT_DOUBLE_EQ(pc.config.sweep_values().front(), 1.0);
    EXPECT_DOUBLE_EQ(pc.config.sweep_values().back(), 6.0);
}

TEST(Config, FlagsOverrideFileAndAreRecorded) {
    ConfigSource src;
    src.file_path = write_tmp("spinpump_cfg_a.conf", "# comment\nmodel.A1 = 2   # trailing\n\nensemble.seed = 5\n");
    src.flag_sets = {{"model.A1", "3"}};
    src.seed = 9;
    const ParsedConfig pc = parse_config("sojourn", src);
    EXPECT_EQ(pc.config.model.A1, 3.0);
    EXPECT_EQ(pc.config.ensemble.seed, 9u);
    ASSERT_EQ(pc.overridden.size(), 2u);
    EXPECT_EQ(pc.overridden.at("model.A1").first, "2");
    EXPECT_EQ(pc.overridden.at("model.A1").second, "3");
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    ConfigSource src;
    src.flag_sets = {{"model.b", "1"}};
    EXPECT_NE(error_of("sojourn", src).find("unknown configuration key 'model.b'"), std::string::npos);
    src.flag_sets = {{"model.a", "-1"}};
    EXPECT_NE(error_of("sojourn", src).find("ModelParams invariant violated: a > 0"), std::string::npos);
    src.flag_sets = {{"model.a", "four"}};
    EXPECT_NE(error_of("sojourn", src).find("model.a"), std::string::npos);
    src.flag_sets = {{"ensemble.n_left", "-3"}};
    EXPECT_NE(error_of("sojourn", src).find("ensemble.n_left"), std::string::npos);
    src.flag_sets = {{"model.sign", "sideways"}};
    EXPECT_NE(error_of("sojourn", src).find("positive"), std::string::npos);
    src.flag_sets = {{"quantum.N", "1000"}};
    EXPECT_NE(error_of("qcurrent", src).find("Grid invariant"), std::string::npos);
    src.flag_sets = {};
    EXPECT_NE(error_of("fig5", src).find("unknown experiment"), std::string::npos);
    src.file_path = write_tmp("spinpump_cfg_b.conf", "model.a 4\n");
    EXPECT_NE(error_of("sojourn", src).find(":1: expected 'key = value'"), std::string::npos);
    src.file_path = "/nonexistent/spinpump.conf";
    EXPECT_NE(error_of("sojourn", src).find("cannot read"), std::string::npos);
}

TEST(Config, SweepAxisMustSuitExperiment) {
    ConfigSource src;
    src.flag_sets = {{"sweep.param", "a"}};
    EXPECT_NE(error_of("poincare", src).find("does not support a sweep"), std::string::npos);
    src.flag_sets = {{"sweep.param", "hbar"}};
    EXPECT_NE(error_of("classical-current", src).find("not a valid sweep axis"), std::string::npos);
    EXPECT_EQ(error_of("qcurrent", src), "");
    // every swept value is validated before anything runs
    src.flag_sets = {{"sweep.from", "-1"}};
    EXPECT_NE(error_of("classical-current", src).find("a > 0"), std::string::npos);
    src.flag_sets = {{"sweep.to", "30"}};
    EXPECT_NE(error_of("qcurrent", src).find("QuantumSetup invariant"), std::string::npos);
}

TEST(Config, MaterializedTextParsesBackToSameConfig) {
    ConfigSource src;
    src.flag_sets = {{"model.phi_kick", "0.1"}, {"poincare.theta_in", "0.5,pi"}, {"quantum.ratio_convention", "inverse"}};
    const ParsedConfig a = parse_config("poincare", src);
    EXPECT_EQ(a.config.poincare_thetas.size(), 2u);
    EXPECT_EQ(a.config.quantum.convention, RatioConvention::Inverse);
    ConfigSource again;
    for (const auto& [k, v] : a.materialized) again.flag_sets.emplace_back(k, v);
    const ParsedConfig b = parse_config("poincare", again);
    EXPECT_EQ(config_text(a), config_text(b));
    EXPECT_EQ(b.config.model.phi_kick, 0.1);
}

TEST(Config, KeyValueTextParsing) {
    const auto kv = parse_kv_text("a = 1\n  # only comment\nb=two words # c\n", "x");
    ASSERT_EQ(kv.size(), 2u);
    EXPECT_EQ(kv[1].first, "b");
    EXPECT_EQ(kv[1].second, "two words");
}
