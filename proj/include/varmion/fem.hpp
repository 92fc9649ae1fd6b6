#pragma once

#include <Eigen/Dense>
#include <optional>

#include "varmion/mesh.hpp"

namespace varmion {

enum class DirichletMode { strong, nitsche };

DirichletMode dirichlet_mode_from_string(const std::string& s);

// Assembled weak-form matrices, prior to any Dirichlet treatment.
//   K        stiffness with P1-interpolated coefficient field
//   M        mass
//   M_tilde  boundary mass on gamma_eta
//   M_breve  weak-Dirichlet data matrix on gamma_g (nitsche mode)
struct FemMatrices {
    Eigen::MatrixXd K;
    Eigen::MatrixXd M;
    Eigen::MatrixXd M_tilde;
    Eigen::MatrixXd M_breve;
};

struct CoefficientVectors {
    Eigen::VectorXd F;
    Eigen::VectorXd Theta;
    Eigen::VectorXd N;  // zero off gamma_eta
    Eigen::VectorXd U;
};

Eigen::MatrixXd assemble_mass(const Mesh& mesh);
Eigen::MatrixXd assemble_boundary_mass(const Mesh& mesh, const SideSet& boundary);
Eigen::MatrixXd assemble_stiffness(const Mesh& mesh, const Eigen::VectorXd& theta_coeffs);

// Piecewise-constant advection a (one row per triangle) and P1 reaction rho.
// Advection uses the 3-point mid-edge rule per triangle; other terms are exact.
Eigen::MatrixXd assemble_advection(const Mesh& mesh, const Eigen::Matrix<double, Eigen::Dynamic, 2>& advect);
Eigen::MatrixXd assemble_reaction(const Mesh& mesh, const Eigen::VectorXd& rho_coeffs);

// Consistency + penalty boundary terms on gamma_g with beta = beta_scale/h_edge:
//   K_out  += -(phi_i, theta dphi_j.n) - (theta dphi_i.n, phi_j) + beta (phi_i, phi_j)
//   M_breve = (-theta dphi_i.n + beta phi_i, phi_j)
void add_nitsche_terms(const Mesh& mesh, const Eigen::VectorXd& theta_coeffs, double beta_scale,
                       Eigen::MatrixXd& K_out, Eigen::MatrixXd* M_breve_out);

// Dirichlet-treated linear system ready to solve. Strong mode keeps the free
// nodes only; nitsche mode keeps all q nodes with the modified K.
struct LinearSystem {
    DirichletMode mode;
    std::vector<int> free_nodes;   // identity map in nitsche mode
    Eigen::MatrixXd K;             // reduced or modified
    bool spd = false;
};

LinearSystem apply_dirichlet(const Mesh& mesh, const Eigen::MatrixXd& K, const Eigen::VectorXd& theta_coeffs,
                             DirichletMode mode, double beta_scale = 10.0,
                             Eigen::MatrixXd* M_breve_out = nullptr);

// Solves system.K u = rhs (rhs given over all q nodes; strong mode restricts
// internally and scatters zeros back). Relative residual is checked against
// 1e-10 with one refinement pass before failing.
Eigen::VectorXd solve_reduced(const LinearSystem& system, const Eigen::VectorXd& rhs_full);

// K(theta) U = M F + M_tilde N with the requested Dirichlet treatment.
// Homogeneous Dirichlet data on gamma_g; coeffs.Theta feeds the nitsche edge terms.
Eigen::VectorXd solve_linear(const Mesh& mesh, const FemMatrices& fem, const CoefficientVectors& coeffs,
                             DirichletMode mode, double beta_scale = 10.0);

// Nodal projection. P1 Lagrange + nodal data means projection is
// interpolation; eta values on gamma_eta nodes are extended by zero.
CoefficientVectors project_data(const Mesh& mesh, const Eigen::VectorXd& f_nodal, const Eigen::VectorXd& theta_nodal,
                                const Eigen::VectorXd& eta_gamma_nodal);

// r_i(U) = a(phi_i, U_j phi_j) for the advection-diffusion-reaction form,
// including the gamma_g boundary terms when mode is nitsche.
Eigen::VectorXd assemble_adr_residual(const Mesh& mesh, const Eigen::VectorXd& theta_coeffs,
                                      const Eigen::Matrix<double, Eigen::Dynamic, 2>& advect,
                                      const Eigen::VectorXd& rho_coeffs, const Eigen::VectorXd& U,
                                      DirichletMode mode = DirichletMode::strong, double beta_scale = 10.0);

struct EikonalSettings {
    double diffusion = 0.01;
    double grad_reg = 1e-6;
    double tol = 1e-8;
    int max_iter = 200;
    double damping = 0.7;
    DirichletMode mode = DirichletMode::strong;
    double beta_scale = 10.0;
};

struct PicardResult {
    Eigen::VectorXd U;
    int iterations = 0;
    double last_change = 0.0;
};

// Damped Picard loop for -diffusion*lap(u) + |grad u| = f, u = 0 on the whole
// boundary. The advection field is frozen per iterate as grad(u)/|grad u|_eps.
PicardResult solve_eikonal_picard(const Mesh& mesh, const Eigen::VectorXd& F, const EikonalSettings& settings);

// Per-triangle gradient of a P1 field.
Eigen::Matrix<double, Eigen::Dynamic, 2> element_gradients(const Mesh& mesh, const Eigen::VectorXd& U);

// sqrt(v' M v)
double mass_norm(const Eigen::MatrixXd& M, const Eigen::VectorXd& v);

// L2 norm of (P1 field - reference function) by degree-4 quadrature.
double l2_error_vs_function(const Mesh& mesh, const Eigen::VectorXd& U, double (*fn)(double, double));

}  // namespace varmion
