#include <cstdlib>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "oadg/config.hpp"
#include "oadg/error.hpp"
#include "support/oracles.hpp"

using namespace oadg;
using nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no oadg::Error thrown";
    return ErrorCode::InvalidArgument;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(OADG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_json(const std::filesystem::path& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST(RunConfig, EmptyObjectGivesDefaults) {
    const RunConfig c = parse_run_config(json::object());
    EXPECT_EQ(c.seed, 0u);
    EXPECT_EQ(c.hyper.tau, 0.06);
    EXPECT_EQ(c.hyper.lambda, 10.0);
    EXPECT_EQ(c.hyper.gamma, 0.001);
    EXPECT_EQ(c.gates.seeds, 3);
    EXPECT_EQ(c.synth.train_count, 2000);
}

TEST(RunConfig, PartialOverrides) {
    const RunConfig c = parse_run_config(json::parse(R"({
        "seed": 4,
        "synth": {"train": 10, "val": 3},
        "train": {"epochs": 2, "oamix": {"transforms": {"pool": ["gamma", "posterize"]}}},
        "hyper": {"lambda": 0.0},
        "corruptions": {"fog_alpha": [0.1, 0.2, 0.3, 0.4, 0.5]}
    })"));
    EXPECT_EQ(c.seed, 4u);
    EXPECT_EQ(c.synth.train_count, 10);
    EXPECT_EQ(c.synth.test_count, 500);
    EXPECT_EQ(c.train.epochs, 2);
    EXPECT_EQ(c.train.oamix.transforms.pool.size(), 2u);
    EXPECT_EQ(c.hyper.lambda, 0.0);
    EXPECT_EQ(c.corruptions.fog_alpha[4], 0.5);
}

TEST(RunConfig, RoundTripsThroughJson) {
    RunConfig c;
    c.seed = 9;
    c.train.epochs = 7;
    c.hyper.tau = 0.2;
    const RunConfig back = parse_run_config(json::parse(to_json(c).dump()));
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(RunConfig, UnknownKeysRejected) {
    EXPECT_EQ(code_of([] { parse_run_config(json::parse(R"({"sead": 1})")); }), ErrorCode::ConfigError);
    EXPECT_EQ(code_of([] { parse_run_config(json::parse(R"({"train": {"epoch": 1}})")); }), ErrorCode::ConfigError);
    EXPECT_EQ(code_of([] { parse_run_config(json::parse(R"({"hyper": {"beta": 1}})")); }), ErrorCode::ConfigError);
}

TEST(RunConfig, WrongTypesRejected) {
    EXPECT_EQ(code_of([] { parse_run_config(json::parse(R"({"train": {"epochs": "ten"}})")); }), ErrorCode::ConfigError);
    EXPECT_EQ(code_of([] { parse_run_config(json::parse(R"({"corruptions": {"fog_alpha": [0.1]}})")); }),
              ErrorCode::ConfigError);
    EXPECT_EQ(code_of([] { parse_run_config(json::parse(R"({"train": {"oamix": {"transforms": {"pool": ["blur"]}}}})")); }),
              ErrorCode::ConfigError);
}

TEST(RunConfig, HyperparameterRanges) {
    EXPECT_EQ(code_of([] { parse_run_config(json::parse(R"({"hyper": {"tau": 0.0}})")); }), ErrorCode::ConfigError);
    EXPECT_EQ(code_of([] { parse_run_config(json::parse(R"({"hyper": {"tau": -1.0}})")); }), ErrorCode::ConfigError);
    EXPECT_EQ(code_of([] { parse_run_config(json::parse(R"({"hyper": {"lambda": -0.5}})")); }), ErrorCode::ConfigError);
    EXPECT_EQ(code_of([] { parse_run_config(json::parse(R"({"hyper": {"gamma": -1e-3}})")); }), ErrorCode::ConfigError);
}

TEST(RunConfig, UnparseableFile) {
    oracle::TempDir dir("cfg");
    write_json(dir.path() / "c.json", "{ nope");
    EXPECT_EQ(code_of([&] { load_run_config(dir.path() / "c.json"); }), ErrorCode::ConfigError);
}

TEST(Cli, UnknownConfigKeyExitsTwoWithoutArtifacts) {
    oracle::TempDir dir("cli_cfg");
    write_json(dir.path() / "bad.json", R"({"train": {"epochz": 3}})");
    const auto cfg = (dir.path() / "bad.json").string();
    EXPECT_EQ(run_cli("repro --config " + cfg + " --out " + (dir.path() / "repro").string()), 2);
    EXPECT_FALSE(std::filesystem::exists(dir.path() / "repro"));
    EXPECT_EQ(run_cli("train --mode oadg --config " + cfg + " --out " + (dir.path() / "p.json").string()), 2);
    EXPECT_FALSE(std::filesystem::exists(dir.path() / "p.json"));
    EXPECT_EQ(run_cli("synth --config " + cfg + " --out " + (dir.path() / "data").string()), 2);
    EXPECT_FALSE(std::filesystem::exists(dir.path() / "data"));
}

TEST(Cli, NonPositiveTauExitsTwo) {
    oracle::TempDir dir("cli_tau");
    EXPECT_EQ(run_cli("train --mode oadg --tau 0 --out " + (dir.path() / "p.json").string()), 2);
    EXPECT_FALSE(std::filesystem::exists(dir.path() / "p.json"));
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("train --mode sideways --out x.json"), 2);
    EXPECT_EQ(run_cli("corrupt --dataset /nonexistent --out /tmp/x --kinds snow"), 2);
}

TEST(Cli, HelpExitsZero) {
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("repro --help"), 0);
}

TEST(Cli, MissingInputsExitFour) {
    oracle::TempDir dir("cli_io");
    EXPECT_EQ(run_cli("saliency --input /nonexistent/img.png --out " + (dir.path() / "s.png").string()), 4);
    EXPECT_EQ(run_cli("eval --params /nonexistent/p.json --clean /nonexistent --corrupted /nonexistent --out " +
                      (dir.path() / "r.json").string()),
              4);
}

TEST(Cli, SynthThenTrainThenEvalEndToEnd) {
    oracle::TempDir dir("cli_e2e");
    const auto d = dir.path();
    write_json(d / "cfg.json", R"({"synth": {"train": 12, "val": 4, "test": 4}, "train": {"epochs": 1, "batch_size": 6}})");
    const std::string cfg = (d / "cfg.json").string();
    ASSERT_EQ(run_cli("synth --config " + cfg + " --out " + (d / "data").string()), 0);
    EXPECT_TRUE(std::filesystem::exists(d / "data" / "train" / "annotations.json"));
    ASSERT_EQ(run_cli("train --mode oadg --config " + cfg + " --data " + (d / "data").string() + " --out " +
                      (d / "p.json").string() + " --log " + (d / "log.csv").string()),
              0);
    ASSERT_EQ(run_cli("corrupt --dataset " + (d / "data" / "test").string() + " --out " + (d / "c").string() +
                      " --kinds fog-haze,jpeg --severities 1..5"),
              0);
    ASSERT_EQ(run_cli("eval --params " + (d / "p.json").string() + " --clean " + (d / "data" / "test").string() +
                      " --corrupted " + (d / "c").string() + " --out " + (d / "r.json").string()),
              0);
    json report;
    std::ifstream(d / "r.json") >> report;
    EXPECT_EQ(report["N_C"], 2);
    EXPECT_EQ(report["N_S"], 5);
    std::filesystem::remove_all(d / "c" / "jpeg" / "3");
    EXPECT_EQ(run_cli("eval --params " + (d / "p.json").string() + " --clean " + (d / "data" / "test").string() +
                      " --corrupted " + (d / "c").string() + " --out " + (d / "r2.json").string()),
              1);
}
