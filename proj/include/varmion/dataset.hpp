#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "json.hpp"
#include "varmion/fem.hpp"
#include "varmion/grf.hpp"
#include "varmion/model.hpp"
#include "varmion/sensors.hpp"

namespace varmion {

struct GrfParams {
    double length_scale = 0.4;
    double lo = 0.0;
    double hi = 1.0;
    RescaleMode rescale = RescaleMode::per_sample;
};

struct SplitConfig {
    std::string kind = "randomized";  // randomized | nested
    double val_fraction = 0.1;
    double test_fraction = 0.1;
};

// Everything that determines the generated bytes. Model architecture is kept
// out on purpose: two runs that differ only in the network must produce
// byte-identical datasets.
struct GenerateConfig {
    std::uint64_t seed = 1;
    std::string experiment = "heat2";  // heat2 | heat3 | eikonal
    int mesh_n = 32;
    DirichletMode dirichlet = DirichletMode::strong;
    double beta_scale = 10.0;
    SideSet gamma_eta = {Side::left, Side::right};
    EikonalSettings eikonal;
    GrfParams grf_f, grf_theta, grf_eta;
    SensorLayoutConfig sensors;
    OutputNodesConfig outputs;
    int n_samples = 2000;  // randomized split
    int n_f = 20, n_theta = 10, n_eta = 10;  // nested split factor counts
    SplitConfig split;
};

GenerateConfig default_generate_config(const std::string& experiment);

// Generation-relevant metadata only (no label hash yet).
nlohmann::json generate_metadata(const GenerateConfig& cfg);
GenerateConfig generate_config_from_metadata(const nlohmann::json& meta);

struct Dataset {
    nlohmann::json metadata;

    Eigen::MatrixXd sensors_interior;  // (k,2)
    Eigen::MatrixXd sensors_boundary;  // (k_eta,2)
    Eigen::MatrixXd output_points;     // (L,2)
    Eigen::VectorXd output_weights;    // (L)

    Eigen::MatrixXd inputs_f;      // (J,k)
    Eigen::MatrixXd inputs_theta;  // (J,k) or (J,0)
    Eigen::MatrixXd inputs_eta;    // (J,k_eta) or (J,0)
    Eigen::MatrixXd labels;        // (J,L)

    Eigen::MatrixXd nodal_f, nodal_theta, nodal_u;  // (J,q)
    Eigen::MatrixXd nodal_eta;                      // (J, |gamma_eta nodes|)

    std::vector<std::int64_t> split_train, split_val, split_test;
    Eigen::MatrixXd factor_ids;  // (J,3) nested factor indices, (0,0) otherwise

    std::vector<int> output_ids;  // in-memory only, recomputed after load

    std::int64_t sample_count() const { return inputs_f.rows(); }
};

Dataset build_dataset(const GenerateConfig& cfg);

InputDims dataset_input_dims(const Dataset& ds);

// FNV-1a over the raw label bytes, recorded in the metadata as hex.
std::string label_hash(const Eigen::MatrixXd& labels);

Mesh mesh_from_metadata(const nlohmann::json& meta);

}  // namespace varmion
