#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "varmion/dataset.hpp"
#include "varmion/train.hpp"

namespace varmion {

struct DiagnosticsConfig {
    int lipschitz_pairs = 200;
    int stability_probes = 20;
    int covering_probes = 10;
    int structural_rows = 20;
    int histogram_bins = 20;
    std::vector<int> quadrature_counts = {100, 400, 1600, 6400};
    int quadrature_trials = 50;
};

// One experiment file drives generate, train, and the diagnostics knobs.
// Validation rejects unknown keys at every level; the accepted shape is
// published in configs/schema.json.
struct ExperimentConfig {
    std::string name;
    std::string out_dir;
    int threads = 1;
    GenerateConfig generate;
    std::string architecture;  // canonical name; empty for generate-only configs
    TrainConfig train;
    DiagnosticsConfig diagnostics;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace varmion
