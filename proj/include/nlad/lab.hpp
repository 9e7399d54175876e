#pragma once

#include "nlad/builtin_models.hpp"
#include "nlad/io.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nlad {

inline constexpr const char* kToolVersion = "nladlab 0.1.0";

struct ExperimentConfig {
    std::string kind;
    std::string model_name;
    Json model_params = Json::object();
    Json numeric = Json::object();
    std::string out_dir = "out";
    std::vector<std::string> formats{"csv", "json"};
    std::uint64_t seed = 1;
    int jobs = 1;
    Json raw;
};

const std::vector<std::string>& experiment_kinds();

ScalarFunction scalar_from_json(const Json& j);
ModelParams params_from_json(const Json& j);
// Builds the model; for truncated_anharmonic a "delta" entry rescales b to that measured delta.
ModelSpec model_from_config(const std::string& name, const Json& params);

// Throws ConfigInvalid with the offending key named.
ExperimentConfig parse_config(const Json& j);
ExperimentConfig load_config(const std::string& path);

struct InvariantCheck {
    std::string name;
    std::string claim;
    double value = 0;
    std::string relation; // "<=", ">=", "in"
    double lo = 0, hi = 0;
    bool pass = false;
};

struct RunManifest {
    Json config;
    std::string version = kToolVersion;
    double wall_time = 0;
    Json diagnostics = Json::object();
    std::vector<InvariantCheck> invariants;
    std::vector<std::string> artifacts;
    std::string status = "ok";
    std::string stage;
    std::string error;
    int exit_code = 0;

    bool all_pass() const;
    Json to_json() const;
};

// Runs one experiment, writes its artifacts and manifest.json into cfg.out_dir.
RunManifest run_experiment(const ExperimentConfig& cfg);

// `<tool> run <config> [--out DIR] [--seed N] [--jobs K]`
int run_cli(int argc, char** argv);

} // namespace nlad
