#pragma once

#include <Eigen/Dense>
#include <string>

#include "varmion/mesh.hpp"
#include "varmion/rng.hpp"

namespace varmion {

struct SensorLayoutConfig {
    std::string layout = "uniform_grid";  // uniform_grid | random
    int count = 100;
    int boundary_per_side = 12;
};

struct OutputNodesConfig {
    std::string recipe = "interior_random_plus_boundary";  // | random_mesh_nodes | mesh_nodes
    int count = 100;
};

// Interior sensor positions (count x 2). uniform_grid places the centers of a
// sqrt(count)-per-side cell grid, row-major from the bottom-left; random draws
// points from the open unit square on a fixed substream of the seed.
Eigen::MatrixXd interior_sensor_points(const SensorLayoutConfig& cfg, std::uint64_t seed);

// Flux sensor positions: per_side midpoints (i+0.5)/per_side along every
// gamma_eta side, sides visited in the fixed order left, right, bottom, top.
Eigen::MatrixXd boundary_sensor_points(const SideSet& gamma_eta, int per_side);

// Label evaluation points. All recipes pick mesh nodes, so labels are exact
// nodal solution values; weights are the uniform 1/L Monte-Carlo weights.
struct OutputNodes {
    std::vector<int> ids;
    Eigen::MatrixXd points;
    Eigen::VectorXd weights;
};

OutputNodes select_output_nodes(const Mesh& mesh, const OutputNodesConfig& cfg, std::uint64_t seed);

// Node ids for stored output points (used after loading a dataset from disk).
std::vector<int> match_output_nodes(const Mesh& mesh, const Eigen::MatrixXd& points);

}  // namespace varmion
