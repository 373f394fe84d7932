#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "oadg/corruptions.hpp"
#include "oadg/detector.hpp"
#include "oadg/oaloss.hpp"
#include "oadg/synth.hpp"

namespace oadg {

/// Thresholds checked by `repro`.
struct GateConfig {
    double min_mpc_gain = 0.02;
    double clean_tolerance = 0.01;
    int seeds = 3;
};

struct RunConfig {
    std::uint64_t seed = 0;
    SynthConfig synth;
    TrainConfig train;
    Hyper hyper;
    CorruptionTables corruptions;
    GateConfig gates;
};

/// Parses a (possibly partial) config on top of the defaults. Unknown keys,
/// wrong types, tau <= 0 and negative lambda or gamma raise ConfigError.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

/// Throws ConfigError on out-of-range values.
void validate(const RunConfig& config);

}  // namespace oadg
