#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mcparareal/experiment.hpp"

using namespace mcparareal;
using namespace mcparareal::experiment;

namespace {

const char* kSmallOU = R"(
schema_version = 1
id = "small-ou"
problem = "perturbed-ou"

[model]
a = -1.0
a_E = -0.5
B = 0.2
eps_M = 0.5

[initial]
kind = "normal"
mean = 2.0
variance = 0.5

[parareal]
N = 4
T0 = 0.25
dt = 0.05
P = 200
replicates = 2
seed = 11
)";

const char* kSmallWell = R"(
schema_version = 1
id = "small-well"
problem = "double-well"

[model]
J = 0.5

[initial]
kind = "normal"
mean = 1.2
variance = 0.8

[parareal]
N = 4
T0 = 0.5
dt = 0.05
P = 300
seed = 2
noise = "fresh"
)";

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::filesystem::path temp_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("mcparareal_test_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MCPARAREAL_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Config, ParsesAndResolvesDefaults) {
    const auto c = parse_toml(kSmallOU);
    EXPECT_EQ(c.problem, "perturbed-ou");
    EXPECT_EQ(c.N, 4u);
    EXPECT_EQ(c.iterations(), 4);
    EXPECT_EQ(c.steps_per_slice(), 5u);
    EXPECT_EQ(c.coarse, "first-order");
    EXPECT_EQ(c.ou.eps_M, 0.5);
    EXPECT_EQ(c.ou.eps_V, 0.0);
    EXPECT_EQ(c.noise, NoiseMode::frozen);
    EXPECT_EQ(parse_toml(kSmallWell).coarse, "multimodal");
}

TEST(Config, DiagnosticsCarryLineAndField) {
    try {
        parse_toml("schema_version = 1\nproblem = \"burgers\"\n[parareal]\nN = 0\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("parareal.N"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_toml("schema_version = 2\nproblem = \"burgers\"\n"), ConfigError);
    EXPECT_THROW(parse_toml("schema_version = 1\nproblem = \"heat\"\n"), ConfigError);
    EXPECT_THROW(parse_toml("schema_version = 1\nproblem = \"burgers\"\n[parareal]\nNN = 3\n"), ConfigError);
    EXPECT_THROW(parse_toml("schema_version = 1\nproblem = \"burgers\"\n[parareal]\nT0 = 1.0\ndt = 0.3\n"), ConfigError);
    EXPECT_THROW(parse_toml("schema_version = 1\nproblem = \"burgers\"\n[coarse]\nvariant = \"taylor\"\n"), ConfigError);
    EXPECT_THROW(parse_toml("schema_version = 1\nproblem = \"ou\" = \n"), ConfigError);
    EXPECT_THROW(parse_toml("schema_version = 1\nproblem = \"burgers\"\n[parareal]\ncorrection = \"both\"\n"),
                 ConfigError);
    EXPECT_EQ(parse_toml("schema_version = 1\nproblem = \"burgers\"\n[parareal]\ncorrection = \"restriction\"\n")
                  .correction,
              CorrectionBase::restriction);
    EXPECT_THROW(parse_toml("schema_version = 1\nproblem = \"perturbed-ou\"\n[coarse]\nvariant = \"multimodal\"\n"),
                 ConfigError);
}

TEST(Config, ResolvedJsonRoundTrip) {
    for (const char* text : {kSmallOU, kSmallWell}) {
        const auto c = parse_toml(text);
        const auto j = to_json(c);
        const auto back = parse_json(j);
        EXPECT_EQ(to_json(back).dump(), j.dump());
    }
}

TEST(Config, LintWarnsOnUnbalancedParticleCount) {
    auto c = parse_toml(kSmallOU);
    c.P = 2;
    c.N = 100;
    EXPECT_FALSE(lint(c).empty());
}

TEST(Csv, QuotingAndNumbers) {
    Csv csv({"a", "b,c"});
    csv.add(std::string("x\"y"), 0.1);
    EXPECT_EQ(csv.str(), "a,\"b,c\"\r\n\"x\"\"y\",0.1\r\n");
    EXPECT_EQ(Csv::number(1e-300), "1e-300");
    EXPECT_EQ(std::stod(Csv::number(0.1 + 0.2)), 0.1 + 0.2);
}

TEST(Run, ProducesAllArtifactsWithStableOrdering) {
    const auto a = cmd_run(parse_toml(kSmallOU), 1);
    ASSERT_TRUE(a.files.contains("iterates.csv"));
    ASSERT_TRUE(a.files.contains("errors.csv"));
    ASSERT_TRUE(a.files.contains("histogram.csv"));
    std::istringstream errors(a.files.at("errors.csv"));
    std::string line;
    std::getline(errors, line);
    EXPECT_EQ(line, "experiment_id,replicate,k,E_mean,E_var,E_wass,statistical_floor,floor_mean,floor_var,noise_mode\r");
    int rows = 0;
    while (std::getline(errors, line)) {
        ++rows;
    }
    EXPECT_EQ(rows, 5 * 2); // k = 0..4, two replicates
    EXPECT_EQ(a.meta["schema_version"], kSchemaVersion);
    EXPECT_GT(a.meta["statistical_floor"]["E_wass"].get<double>(), 0.0);
}

TEST(Run, ByteIdenticalAcrossWorkerCounts) {
    for (const char* text : {kSmallOU, kSmallWell}) {
        const auto c = parse_toml(text);
        const auto one = cmd_run(c, 1);
        const auto many = cmd_run(c, 8);
        for (const auto& [name, content] : one.files) {
            EXPECT_EQ(content, many.files.at(name)) << name;
        }
    }
}

TEST(Run, FreshNoiseRecordedInCsv) {
    const auto a = cmd_run(parse_toml(kSmallWell), 1);
    EXPECT_NE(a.files.at("errors.csv").find(",fresh\r\n"), std::string::npos);
    EXPECT_NE(a.files.at("iterates.csv").find(",1,"), std::string::npos);
}

TEST(Sweep, NormalisedNorms) {
    auto c = parse_toml(kSmallOU);
    c.sweep_N = {1, 2};
    c.replicates = 1;
    const auto a = cmd_sweep_n(c, 1);
    const std::string csv = a.files.at("scaling.csv");
    EXPECT_NE(csv.find("small-ou,1,0,1,0,0,0,"), std::string::npos) << csv; // N = 1: exact at k = 1
    c.sweep_N.clear();
    EXPECT_THROW(cmd_sweep_n(c, 1), ConfigError);
}

TEST(Bounds, RowsAndZeroRowAtKEqualsN) {
    auto c = parse_toml(kSmallOU);
    const auto rows = ou_bounds(c);
    ASSERT_EQ(rows.size(), 2u * 5u);
    for (const auto& r : rows) {
        EXPECT_LE(r.observed, r.superlinear * (1.0 + 1e-9) + 1e-300);
        if (r.k == 4) {
            EXPECT_EQ(r.superlinear, 0.0);
        }
        ASSERT_TRUE(r.linear.has_value());
        EXPECT_LE(r.observed, *r.linear * (1.0 + 1e-9) + 1e-300);
    }
    c.ou.eps_M = 0.0;
    for (const auto& r : ou_bounds(c)) {
        if (r.k >= 1) {
            EXPECT_EQ(r.superlinear, 0.0);
        }
    }
    EXPECT_THROW(ou_bounds(parse_toml(kSmallWell)), ConfigError);
}

TEST(CompareMoment, BurgersMeanTravelsAtHalfSpeed) {
    auto c = parse_toml("schema_version = 1\nproblem = \"burgers\"\n[initial]\nkind = \"dirac\"\nmean = 0.0\n"
                        "[parareal]\ndt = 0.1\nT0 = 1.0\n[compare]\nP = 2000\nT = 4.0\nsamples = 8\n");
    const auto cmp = compare_moments(c);
    ASSERT_EQ(cmp.models.size(), 1u);
    const auto& fo = cmp.models.at("first-order");
    for (std::size_t j = 0; j < cmp.t.size(); ++j) {
        ASSERT_TRUE(fo[j].has_value());
        EXPECT_NEAR(fo[j]->mean, cmp.t[j] / 2.0, 1e-6);
        EXPECT_NEAR(cmp.mc_mean[j], cmp.t[j] / 2.0, 0.1);
    }
}

TEST(CompareMoment, LinearOUVariantsCoincide) {
    auto c = parse_toml(kSmallOU);
    c.ou.eps_M = 0.0;
    c.compare_P = 20000;
    c.compare_T = 1.0;
    c.compare_samples = 4;
    const auto cmp = compare_moments(c);
    const auto& a = cmp.models.at("first-order");
    const auto& b = cmp.models.at("taylor");
    for (std::size_t j = 0; j < cmp.t.size(); ++j) {
        EXPECT_EQ(a[j]->mean, b[j]->mean);
        EXPECT_NEAR(a[j]->mean, cmp.mc_mean[j], 0.05);
    }
}

TEST(Cli, ExitCodesAndMetaRerun) {
    const auto dir = temp_dir("cli");
    {
        std::ofstream(dir / "ou.toml") << kSmallOU;
        std::ofstream(dir / "bad.toml") << "schema_version = 1\nproblem = \"burgers\"\n[parareal]\nP = -5\n";
    }
    EXPECT_EQ(run_cli("run --config " + (dir / "ou.toml").string() + " --out " + (dir / "a").string()), 0);
    EXPECT_EQ(run_cli("run --config " + (dir / "bad.toml").string() + " --out " + (dir / "b").string()), 2);
    EXPECT_EQ(run_cli("run --config " + (dir / "missing.toml").string()), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    // meta.json is a complete configuration
    EXPECT_EQ(run_cli("run --config " + (dir / "a" / "meta.json").string() + " --out " + (dir / "c").string() +
                      " --workers 3"),
              0);
    for (const char* f : {"iterates.csv", "errors.csv", "histogram.csv"}) {
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "c" / f)) << f;
    }
    EXPECT_EQ(run_cli("run --config " + (dir / "ou.toml").string() + " --out " + (dir / "d").string() +
                      " --seed 12345"),
              0);
    EXPECT_NE(slurp(dir / "a" / "errors.csv"), slurp(dir / "d" / "errors.csv"));
    EXPECT_EQ(run_cli("bounds --config " + (dir / "ou.toml").string() + " --out " + (dir / "e").string()), 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "e" / "bounds.csv"));
}

TEST(Cli, NumericalFailureExitCode) {
    const auto dir = temp_dir("cli_fail");
    std::ofstream(dir / "rot.toml") << "schema_version = 1\nproblem = \"plane-rotator\"\n[coarse]\nvariant = "
                                       "\"taylor\"\n[initial]\nkind = \"dirac\"\nmean = 0.0\n"
                                       "[parareal]\nN = 2\nT0 = 0.1\ndt = 0.05\nP = 10\n";
    EXPECT_EQ(run_cli("run --config " + (dir / "rot.toml").string() + " --out " + (dir / "o").string()), 3);
}

TEST(Cli, ShippedConfigsParse) {
    for (const auto& entry : std::filesystem::directory_iterator(std::filesystem::path(MCPARAREAL_SOURCE_DIR) / "configs")) {
        EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
    }
}
