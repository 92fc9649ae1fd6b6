#include "varmion/fem.hpp"

#include <cmath>

namespace varmion {

DirichletMode dirichlet_mode_from_string(const std::string& s) {
    if (s == "strong") return DirichletMode::strong;
    if (s == "nitsche") return DirichletMode::nitsche;
    throw ConfigError("dirichlet mode must be strong|nitsche, got '" + s + "'");
}

Eigen::MatrixXd assemble_mass(const Mesh& mesh) {
    const int q = mesh.node_count();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(q, q);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double A = mesh.triangle_area(static_cast<int>(t));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) M(tri[i], tri[j]) += A / 12.0 * (i == j ? 2.0 : 1.0);
    }
    return M;
}

Eigen::MatrixXd assemble_boundary_mass(const Mesh& mesh, const SideSet& boundary) {
    const int q = mesh.node_count();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(q, q);
    for (const auto& e : mesh.boundary_edges) {
        if (!boundary.count(e.side)) continue;
        const double len = (mesh.nodes.row(e.b) - mesh.nodes.row(e.a)).norm();
        const int id[2] = {e.a, e.b};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) M(id[i], id[j]) += len / 6.0 * (i == j ? 2.0 : 1.0);
    }
    return M;
}

Eigen::MatrixXd assemble_stiffness(const Mesh& mesh, const Eigen::VectorXd& theta_coeffs) {
    const int q = mesh.node_count();
    if (theta_coeffs.size() != q) throw MismatchError("stiffness: theta length != node count");
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(q, q);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double A = mesh.triangle_area(static_cast<int>(t));
        const auto g = mesh.p1_gradients(static_cast<int>(t));
        // theta is linear on the element, so the integral is area * mean(theta)
        const double tbar = (theta_coeffs(tri[0]) + theta_coeffs(tri[1]) + theta_coeffs(tri[2])) / 3.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) K(tri[i], tri[j]) += A * tbar * g.row(i).dot(g.row(j));
    }
    return K;
}

Eigen::MatrixXd assemble_advection(const Mesh& mesh, const Eigen::Matrix<double, Eigen::Dynamic, 2>& advect) {
    const int q = mesh.node_count();
    if (advect.rows() != static_cast<Eigen::Index>(mesh.triangles.size()))
        throw MismatchError("advection: one row per triangle required");
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(q, q);
    // mid-edge quadrature: phi_i values at the midpoints of edges 01, 12, 20
    static const double phi_mid[3][3] = {{0.5, 0.0, 0.5}, {0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}};
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double A = mesh.triangle_area(static_cast<int>(t));
        const auto g = mesh.p1_gradients(static_cast<int>(t));
        const Eigen::Vector2d a = advect.row(static_cast<Eigen::Index>(t));
        for (int m = 0; m < 3; ++m)
            for (int j = 0; j < 3; ++j) {
                const double adg = a.dot(g.row(j));
                for (int i = 0; i < 3; ++i) C(tri[i], tri[j]) += A / 3.0 * phi_mid[i][m] * adg;
            }
    }
    return C;
}

Eigen::MatrixXd assemble_reaction(const Mesh& mesh, const Eigen::VectorXd& rho_coeffs) {
    const int q = mesh.node_count();
    if (rho_coeffs.size() != q) throw MismatchError("reaction: rho length != node count");
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(q, q);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double A = mesh.triangle_area(static_cast<int>(t));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) {
                    // exact integral of three barycentric factors
                    double w;
                    if (i == j && j == k) w = A / 10.0;
                    else if (i == j || j == k || i == k) w = A / 30.0;
                    else w = A / 60.0;
                    R(tri[i], tri[j]) += rho_coeffs(tri[k]) * w;
                }
    }
    return R;
}

void add_nitsche_terms(const Mesh& mesh, const Eigen::VectorXd& theta_coeffs, double beta_scale,
                       Eigen::MatrixXd& K_out, Eigen::MatrixXd* M_breve_out) {
    if (beta_scale <= 0.0) throw ConfigError("nitsche: beta_scale must be positive");
    const int q = mesh.node_count();
    if (M_breve_out) *M_breve_out = Eigen::MatrixXd::Zero(q, q);
    for (const auto& e : mesh.boundary_edges) {
        if (!mesh.gamma_g_spec.count(e.side)) continue;
        const Eigen::Vector2d pa = mesh.nodes.row(e.a), pb = mesh.nodes.row(e.b);
        const Eigen::Vector2d d = pb - pa;
        const double len = d.norm();
        const Eigen::Vector2d normal(d(1) / len, -d(0) / len);  // outward for CCW edges
        const double beta = beta_scale / len;
        const auto& tri = mesh.triangles[static_cast<std::size_t>(e.triangle)];
        const auto g = mesh.p1_gradients(e.triangle);

        const int edge_nodes[2] = {e.a, e.b};
        const double th[2] = {theta_coeffs(e.a), theta_coeffs(e.b)};
        // edge integrals of phi_i * theta: len/6 * (2 th_i + th_other)
        const double phi_theta[2] = {len / 6.0 * (2.0 * th[0] + th[1]), len / 6.0 * (th[0] + 2.0 * th[1])};
        const double edge_mass[2][2] = {{len / 3.0, len / 6.0}, {len / 6.0, len / 3.0}};

        for (int jt = 0; jt < 3; ++jt) {
            const double dn_j = g.row(jt).dot(normal);
            for (int i = 0; i < 2; ++i) {
                const double c1 = phi_theta[i] * dn_j;       // (phi_i, theta dphi_j.n)
                K_out(edge_nodes[i], tri[jt]) -= c1;
                K_out(tri[jt], edge_nodes[i]) -= c1;         // adjoint term
                if (M_breve_out) (*M_breve_out)(tri[jt], edge_nodes[i]) -= c1;
            }
        }
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                K_out(edge_nodes[i], edge_nodes[j]) += beta * edge_mass[i][j];
                if (M_breve_out) (*M_breve_out)(edge_nodes[i], edge_nodes[j]) += beta * edge_mass[i][j];
            }
    }
}

LinearSystem apply_dirichlet(const Mesh& mesh, const Eigen::MatrixXd& K, const Eigen::VectorXd& theta_coeffs,
                             DirichletMode mode, double beta_scale, Eigen::MatrixXd* M_breve_out) {
    if (mesh.gamma_g_spec.empty()) throw ConfigError("dirichlet: gamma_g is empty");
    LinearSystem sys;
    sys.mode = mode;
    if (mode == DirichletMode::strong) {
        sys.free_nodes = mesh.free_nodes();
        const auto& fn = sys.free_nodes;
        const int nf = static_cast<int>(fn.size());
        sys.K.resize(nf, nf);
        for (int i = 0; i < nf; ++i)
            for (int j = 0; j < nf; ++j) sys.K(i, j) = K(fn[i], fn[j]);
    } else {
        sys.free_nodes.resize(static_cast<std::size_t>(mesh.node_count()));
        for (int i = 0; i < mesh.node_count(); ++i) sys.free_nodes[static_cast<std::size_t>(i)] = i;
        sys.K = K;
        add_nitsche_terms(mesh, theta_coeffs, beta_scale, sys.K, M_breve_out);
    }
    sys.spd = sys.K.isApprox(sys.K.transpose(), 1e-12);
    return sys;
}

namespace {

struct Factorized {
    const LinearSystem& sys;
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    bool use_llt = false;

    explicit Factorized(const LinearSystem& s) : sys(s) {
        if (s.spd) {
            llt.compute(s.K);
            use_llt = llt.info() == Eigen::Success;
        }
        if (!use_llt) {
            lu.compute(s.K);
            const double rc = lu.rcond();
            if (!(rc > 0.0) || !std::isfinite(rc) || rc < 1e-15)
                throw SolverError("linear solve: factorization failed, rcond estimate " + std::to_string(rc));
        }
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
        if (use_llt) return llt.solve(b);
        return lu.solve(b);
    }
};

}  // namespace

Eigen::VectorXd solve_reduced(const LinearSystem& system, const Eigen::VectorXd& rhs_full) {
    const int nf = static_cast<int>(system.free_nodes.size());
    Eigen::VectorXd b(nf);
    for (int i = 0; i < nf; ++i) b(i) = rhs_full(system.free_nodes[static_cast<std::size_t>(i)]);

    Factorized fac(system);
    Eigen::VectorXd u = fac.solve(b);
    const double bn = b.norm();
    if (bn > 0.0) {
        double rel = (system.K * u - b).norm() / bn;
        if (rel > 1e-10) {
            u += fac.solve(b - system.K * u);  // one refinement pass
            rel = (system.K * u - b).norm() / bn;
            if (rel > 1e-10) {
                const double rc = fac.use_llt ? fac.llt.rcond() : fac.lu.rcond();
                throw SolverError("linear solve: residual " + std::to_string(rel) + " above 1e-10, rcond " +
                                  std::to_string(rc));
            }
        }
    }
    Eigen::VectorXd full = Eigen::VectorXd::Zero(rhs_full.size());
    for (int i = 0; i < nf; ++i) full(system.free_nodes[static_cast<std::size_t>(i)]) = u(i);
    return full;
}

Eigen::VectorXd solve_linear(const Mesh& mesh, const FemMatrices& fem, const CoefficientVectors& coeffs,
                             DirichletMode mode, double beta_scale) {
    Eigen::VectorXd rhs = fem.M * coeffs.F;
    if (fem.M_tilde.size() > 0) rhs += fem.M_tilde * coeffs.N;
    LinearSystem sys = apply_dirichlet(mesh, fem.K, coeffs.Theta, mode, beta_scale);
    return solve_reduced(sys, rhs);
}

CoefficientVectors project_data(const Mesh& mesh, const Eigen::VectorXd& f_nodal, const Eigen::VectorXd& theta_nodal,
                                const Eigen::VectorXd& eta_gamma_nodal) {
    const int q = mesh.node_count();
    if (f_nodal.size() != q || theta_nodal.size() != q)
        throw MismatchError("project_data: nodal field length != node count");
    CoefficientVectors c;
    c.F = f_nodal;
    c.Theta = theta_nodal;
    c.N = Eigen::VectorXd::Zero(q);
    const auto eta_nodes = mesh.gamma_eta_nodes();
    if (eta_gamma_nodal.size() != static_cast<Eigen::Index>(eta_nodes.size()))
        throw MismatchError("project_data: eta length != gamma_eta node count");
    for (std::size_t i = 0; i < eta_nodes.size(); ++i)
        c.N(eta_nodes[i]) = eta_gamma_nodal(static_cast<Eigen::Index>(i));
    return c;
}

Eigen::VectorXd assemble_adr_residual(const Mesh& mesh, const Eigen::VectorXd& theta_coeffs,
                                      const Eigen::Matrix<double, Eigen::Dynamic, 2>& advect,
                                      const Eigen::VectorXd& rho_coeffs, const Eigen::VectorXd& U,
                                      DirichletMode mode, double beta_scale) {
    Eigen::MatrixXd K = assemble_stiffness(mesh, theta_coeffs);
    K += assemble_advection(mesh, advect);
    if (rho_coeffs.cwiseAbs().maxCoeff() > 0.0) K += assemble_reaction(mesh, rho_coeffs);
    if (mode == DirichletMode::nitsche) add_nitsche_terms(mesh, theta_coeffs, beta_scale, K, nullptr);
    return K * U;
}

Eigen::Matrix<double, Eigen::Dynamic, 2> element_gradients(const Mesh& mesh, const Eigen::VectorXd& U) {
    Eigen::Matrix<double, Eigen::Dynamic, 2> g(mesh.triangles.size(), 2);
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const auto gt = mesh.p1_gradients(static_cast<int>(t));
        Eigen::Vector2d acc = Eigen::Vector2d::Zero();
        for (int i = 0; i < 3; ++i) acc += U(tri[i]) * gt.row(i).transpose();
        g.row(static_cast<Eigen::Index>(t)) = acc;
    }
    return g;
}

PicardResult solve_eikonal_picard(const Mesh& mesh, const Eigen::VectorXd& F, const EikonalSettings& settings) {
    if (settings.diffusion <= 0.0) throw ConfigError("eikonal: diffusion must be positive");
    if (settings.grad_reg <= 0.0) throw ConfigError("eikonal: grad_reg must be positive");
    const int q = mesh.node_count();
    if (F.size() != q) throw MismatchError("eikonal: F length != node count");

    const Eigen::MatrixXd M = assemble_mass(mesh);
    const Eigen::VectorXd rhs = M * F;
    const Eigen::VectorXd theta = Eigen::VectorXd::Constant(q, settings.diffusion);

    PicardResult res;
    res.U = Eigen::VectorXd::Zero(q);
    if (rhs.norm() == 0.0) return res;

    const Eigen::MatrixXd K_diff = assemble_stiffness(mesh, theta);

    auto picard_solve = [&](const Eigen::VectorXd& Ucur) {
        auto grads = element_gradients(mesh, Ucur);
        Eigen::Matrix<double, Eigen::Dynamic, 2> a(grads.rows(), 2);
        for (Eigen::Index t = 0; t < grads.rows(); ++t) {
            const double mag = std::sqrt(grads.row(t).squaredNorm() + settings.grad_reg * settings.grad_reg);
            a.row(t) = grads.row(t) / mag;
        }
        Eigen::MatrixXd K = K_diff + assemble_advection(mesh, a);
        LinearSystem sys = apply_dirichlet(mesh, K, theta, settings.mode, settings.beta_scale);
        return solve_reduced(sys, rhs);
    };

    for (int it = 0; it < settings.max_iter; ++it) {
        Eigen::VectorXd Unew = picard_solve(res.U);
        Eigen::VectorXd Unext = settings.damping * Unew + (1.0 - settings.damping) * res.U;
        res.last_change = (Unext - res.U).norm() / (res.U.norm() + 1e-30);
        res.U = Unext;
        ++res.iterations;
        if (res.last_change < settings.tol) {
            // final undamped pass so the returned iterate solves its own system
            res.U = picard_solve(res.U);
            ++res.iterations;
            return res;
        }
    }
    throw SolverError("eikonal: no convergence after " + std::to_string(settings.max_iter) +
                      " iterations, last relative change " + std::to_string(res.last_change));
}

double mass_norm(const Eigen::MatrixXd& M, const Eigen::VectorXd& v) {
    return std::sqrt(std::max(0.0, v.dot(M * v)));
}

double l2_error_vs_function(const Mesh& mesh, const Eigen::VectorXd& U, double (*fn)(double, double)) {
    // 6-point degree-4 rule in barycentric coordinates
    static const double qa = 0.816847572980459, qb = 0.091576213509771, wa = 0.109951743655322;
    static const double qc = 0.108103018168070, qd = 0.445948490915965, wb = 0.223381589678011;
    static const double pts[6][3] = {{qa, qb, qb}, {qb, qa, qb}, {qb, qb, qa},
                                     {qc, qd, qd}, {qd, qc, qd}, {qd, qd, qc}};
    static const double wts[6] = {wa, wa, wa, wb, wb, wb};
    double acc = 0.0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const double A = mesh.triangle_area(static_cast<int>(t));
        for (int p = 0; p < 6; ++p) {
            double x = 0.0, y = 0.0, uh = 0.0;
            for (int i = 0; i < 3; ++i) {
                x += pts[p][i] * mesh.nodes(tri[i], 0);
                y += pts[p][i] * mesh.nodes(tri[i], 1);
                uh += pts[p][i] * U(tri[i]);
            }
            const double d = uh - fn(x, y);
            acc += A * wts[p] * d * d;
        }
    }
    return std::sqrt(acc);
}

}  // namespace varmion
