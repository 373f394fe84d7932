#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "oadg/config.hpp"
#include "oadg/corruptions.hpp"
#include "oadg/dataset.hpp"
#include "oadg/detector.hpp"
#include "oadg/metrics.hpp"

namespace oadg {

/// Stream for the corrupted copy of image `index` under `spec`. Shared by the
/// `corrupt` subcommand and in-memory evaluation so both see the same noise.
std::uint64_t corruption_seed(std::uint64_t seed, const CorruptionSpec& spec, std::size_t index);

Dataset corrupt_dataset(const Dataset& dataset, const CorruptionSpec& spec, std::uint64_t seed,
                        const CorruptionTables& tables = {}, int jobs = 1);

/// Writes `<out>/<kind>/<severity>/` for every kind and severity 1..5.
void write_corrupted_suite(const Dataset& dataset, const std::filesystem::path& out, std::uint64_t seed,
                           const CorruptionTables& tables = {}, int jobs = 1);

/// Clean mAP plus the corruption matrix, corrupting `test` on the fly.
EvalReport evaluate_robustness(const Model& model, const Dataset& test, std::uint64_t seed,
                               const CorruptionTables& tables, double score_threshold, int jobs = 1);

/// Same report from a clean directory and a `<kind>/<severity>/` tree.
/// Kinds missing from the tree are skipped; a kind with missing severities
/// leaves the matrix ragged and raises IncompleteMatrix.
EvalReport evaluate_directories(const Model& model, const std::filesystem::path& clean,
                                const std::filesystem::path& corrupted, double score_threshold, int jobs = 1);

/// Penultimate-layer cell features grouped by cell label: K foreground
/// classes then background.
std::vector<Eigen::MatrixXd> features_by_class(const Model& model, const Dataset& dataset, double label_threshold = 0.5);

std::string matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& labels);

struct ModeResult {
    double clean_map = 0.0;
    double mpc = 0.0;
};

struct SeedResult {
    std::uint64_t seed = 0;
    ModeResult baseline;
    ModeResult oadg;
};

struct ReproSummary {
    std::vector<SeedResult> seeds;
    double mean_mpc_gain = 0.0;
    double mean_clean_delta = 0.0;
    bool robustness_gate = false;
    bool clean_gate = false;

    bool passed() const { return robustness_gate && clean_gate; }
};

nlohmann::json to_json(const ReproSummary& summary);

/// synth -> train baseline -> train oadg -> corrupt -> eval, for seeds
/// config.seed, config.seed + 1, ... Writes `report.json` plus per-seed
/// params, logs and corruption matrices under `out`.
ReproSummary run_repro(const RunConfig& config, const std::filesystem::path& out, int jobs = 1,
                       const std::function<void(const std::string&)>& progress = {});

/// FNV-1a 64 digest of the relative paths and contents of every file under `dir`, in
/// sorted path order.
std::uint64_t directory_digest(const std::filesystem::path& dir);

}  // namespace oadg
