#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "varmion/dataset.hpp"
#include "varmion/model.hpp"

namespace varmion {

// Mesh and mass matrices rebuilt from dataset metadata, shared by the
// diagnostics that need field-space norms.
struct DiagnosticsContext {
    Mesh mesh;
    Eigen::MatrixXd M;        // P1 mass
    Eigen::MatrixXd M_tilde;  // boundary mass on gamma_eta
    DirichletMode dirichlet = DirichletMode::strong;
    double beta_scale = 10.0;
};

DiagnosticsContext make_context(const Dataset& ds);

enum class Quadrature { output_nodes, dense_grid };

struct ErrorStats {
    std::vector<std::int64_t> sample_ids;  // rows that produced a value
    std::vector<double> raw;               // relative L2 error per row
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
    int excluded = 0;     // rows skipped for a zero-norm reference
};

// Per-sample ||u_ref - u_net|| / ||u_ref||. output_nodes uses the dataset's
// weighted nodes; dense_grid evaluates at every mesh node under the mass norm.
ErrorStats relative_l2_errors(Model& model, const Dataset& ds, const DiagnosticsContext& ctx,
                              const std::vector<std::int64_t>& ids, Quadrature quad);

nlohmann::json error_stats_json(const ErrorStats& s);

struct LipschitzEstimate {
    double value = 0.0;
    int pairs_used = 0;
};

// Max over sampled pairs of ||D(a)-D(b)||_2 / ||a-b||_2. A finite-sample
// lower bound; coincident pairs are skipped.
LipschitzEstimate estimate_lipschitz_D(Model& model, const Eigen::MatrixXd& theta_samples,
                                       int pair_count, std::uint64_t seed);

// Nodal fields; eta lives on the gamma_eta nodes in ascending node order.
struct FieldTriple {
    Eigen::VectorXd f, theta, eta;
};

// Sensor-space inputs; eta may be empty.
struct SensorTriple {
    Eigen::VectorXd f, theta, eta;
};

// ||u - u'||_M over the sum of the input L2 changes, for the discrete solver.
double stability_ratio_fem(const DiagnosticsContext& ctx, const FieldTriple& base,
                           const FieldTriple& pert);

// Weighted output-node norm of the prediction change over the sum of the
// sensor-vector changes.
double stability_ratio_model(Model& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& W,
                             const SensorTriple& base, const SensorTriple& pert);

struct CoveringResult {
    double radius_max = 0.0;   // min over samples of the componentwise max distance
    double radius_sum = 0.0;   // same with the additive aggregate
    std::int64_t nearest_max = -1;
    std::int64_t nearest_sum = -1;
};

CoveringResult covering_radius(const Dataset& ds, const DiagnosticsContext& ctx,
                               const std::vector<std::int64_t>& ids, const FieldTriple& probe);

struct QuadratureFit {
    std::vector<int> node_counts;
    std::vector<double> mean_abs_err;
    double slope = 0.0;
};

// |sum_l w g(x_l)^2 - integral| with w = 1/L, averaged over trials, fitted
// log-log against L. Zero-error entries are left out of the fit; if fewer
// than two remain the slope is reported as 0.
QuadratureFit quadrature_convergence(const std::function<double(double, double)>& g,
                                     double integral_g2, const std::vector<int>& node_counts,
                                     int trials, std::uint64_t seed, bool uniform_grid = false);

struct StructuralRow {
    std::int64_t theta_id = -1;
    double dist_spectral = 0.0;  // ||K^-1 - Q||_2
    double dist_reduced = 0.0;   // (1/sqrt(L)) ||(K^-1 - Q) M||_2
};

// Compares the learned branch composition Q = T D(theta_hat) A Vhat M^-1
// against the inverse of the assembled operator, one row per theta sample.
// Requires the nodal frame: outputs at all mesh nodes, weak Dirichlet
// assembly, no flux inputs. Violations raise FrameError.
std::vector<StructuralRow> structural_estimate(Model& model, const Dataset& ds,
                                               const DiagnosticsContext& ctx,
                                               const std::vector<std::int64_t>& theta_rows);

struct Histogram {
    std::vector<double> bin_left, bin_right, density;
};

// Density-normalized bins: sum of density * width is 1.
Histogram export_error_histogram(const std::vector<double>& raw, int bins);

// Rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

void write_errors_csv(const std::string& path, const ErrorStats& s);
void write_histogram_csv(const std::string& path, const Histogram& h);
void write_structural_csv(const std::string& path, const std::vector<StructuralRow>& rows);
void write_stability_csv(const std::string& path, const std::vector<double>& ratios);
void write_covering_csv(const std::string& path, const std::vector<CoveringResult>& rows);
void write_quadrature_csv(const std::string& path, const QuadratureFit& fit);

}  // namespace varmion
