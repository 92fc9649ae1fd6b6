#include "varmion/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "varmion/common.hpp"
#include "varmion/fem.hpp"
#include "varmion/nn.hpp"
#include "varmion/sensors.hpp"

namespace varmion {

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<std::int64_t>& ids) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), m.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(ids[i]);
        if (r < 0 || r >= m.rows())
            throw MismatchError("sample id " + std::to_string(ids[i]) + " outside dataset of " +
                                std::to_string(m.rows()) + " rows");
        out.row(static_cast<Eigen::Index>(i)) = m.row(r);
    }
    return out;
}

Eigen::VectorXd extend_eta(const Mesh& mesh, const Eigen::VectorXd& eta_gamma) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(mesh.node_count());
    if (eta_gamma.size() == 0) return full;
    const std::vector<int> gn = mesh.gamma_eta_nodes();
    if (static_cast<std::size_t>(eta_gamma.size()) != gn.size())
        throw MismatchError("eta carries " + std::to_string(eta_gamma.size()) + " values for " +
                            std::to_string(gn.size()) + " gamma_eta nodes");
    for (std::size_t i = 0; i < gn.size(); ++i) full[gn[i]] = eta_gamma[static_cast<Eigen::Index>(i)];
    return full;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_csv(const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FrameError("cannot open '" + path + "' for writing");
    return os;
}

std::vector<double> average_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

DiagnosticsContext make_context(const Dataset& ds) {
    const GenerateConfig cfg = generate_config_from_metadata(ds.metadata);
    DiagnosticsContext ctx;
    ctx.mesh = mesh_from_metadata(ds.metadata);
    ctx.M = assemble_mass(ctx.mesh);
    ctx.M_tilde = assemble_boundary_mass(ctx.mesh, ctx.mesh.gamma_eta_spec);
    ctx.dirichlet = cfg.dirichlet;
    ctx.beta_scale = cfg.beta_scale;
    return ctx;
}

ErrorStats relative_l2_errors(Model& model, const Dataset& ds, const DiagnosticsContext& ctx,
                              const std::vector<std::int64_t>& ids, Quadrature quad) {
    if (ids.empty()) throw MismatchError("error statistics over an empty id list");
    const bool dense = quad == Quadrature::dense_grid;
    const Eigen::MatrixXd X = dense ? Eigen::MatrixXd(ctx.mesh.nodes) : ds.output_points;
    const Eigen::MatrixXd pred =
        model.forward(gather_rows(ds.inputs_f, ids), gather_rows(ds.inputs_theta, ids),
                      gather_rows(ds.inputs_eta, ids), X, false);

    ErrorStats out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        double num = 0.0, den = 0.0;
        if (dense) {
            const Eigen::VectorXd ref = ds.nodal_u.row(static_cast<Eigen::Index>(ids[i])).transpose();
            num = mass_norm(ctx.M, pred.row(row).transpose() - ref);
            den = mass_norm(ctx.M, ref);
        } else {
            const Eigen::VectorXd ref = ds.labels.row(static_cast<Eigen::Index>(ids[i])).transpose();
            const Eigen::VectorXd e = pred.row(row).transpose() - ref;
            num = std::sqrt((ds.output_weights.array() * e.array().square()).sum());
            den = std::sqrt((ds.output_weights.array() * ref.array().square()).sum());
        }
        if (den <= 0.0) {
            ++out.excluded;
            continue;
        }
        out.sample_ids.push_back(ids[i]);
        out.raw.push_back(num / den);
    }
    if (!out.raw.empty()) {
        const double n = static_cast<double>(out.raw.size());
        out.mean = std::accumulate(out.raw.begin(), out.raw.end(), 0.0) / n;
        double sq = 0.0;
        for (double v : out.raw) sq += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(sq / n);
    }
    return out;
}

nlohmann::json error_stats_json(const ErrorStats& s) {
    return nlohmann::json{{"mean", s.mean},     {"std", s.stddev},
                          {"count", s.raw.size()}, {"excluded", s.excluded},
                          {"sample_ids", s.sample_ids}, {"raw", s.raw}};
}

LipschitzEstimate estimate_lipschitz_D(Model& model, const Eigen::MatrixXd& theta_samples,
                                       int pair_count, std::uint64_t seed) {
    if (theta_samples.rows() < 2) throw MismatchError("need at least two theta samples");
    if (pair_count <= 0) throw ConfigError("pair count must be positive");
    const auto n = static_cast<std::uint64_t>(theta_samples.rows());
    Rng rng(seed);
    LipschitzEstimate est;
    for (int t = 0; t < pair_count; ++t) {
        const auto i = static_cast<Eigen::Index>(rng.below(n));
        auto j = static_cast<Eigen::Index>(rng.below(n - 1));
        if (j >= i) ++j;
        const double dtheta = (theta_samples.row(i) - theta_samples.row(j)).norm();
        if (dtheta == 0.0) continue;
        const Eigen::MatrixXd Di = model.coefficient_matrix(theta_samples.row(i));
        const Eigen::MatrixXd Dj = model.coefficient_matrix(theta_samples.row(j));
        const double ratio = spectral_norm(Di - Dj).value / dtheta;
        est.value = std::max(est.value, ratio);
        ++est.pairs_used;
    }
    return est;
}

double stability_ratio_fem(const DiagnosticsContext& ctx, const FieldTriple& base,
                           const FieldTriple& pert) {
    const Mesh& mesh = ctx.mesh;
    // An empty eta stands for a zero flux trace.
    const auto n_gamma = static_cast<Eigen::Index>(mesh.gamma_eta_nodes().size());
    const auto pad = [&](const Eigen::VectorXd& e) {
        return e.size() == 0 ? Eigen::VectorXd(Eigen::VectorXd::Zero(n_gamma)) : e;
    };
    const CoefficientVectors cb = project_data(mesh, base.f, base.theta, pad(base.eta));
    const CoefficientVectors cp = project_data(mesh, pert.f, pert.theta, pad(pert.eta));

    FemMatrices fem;
    fem.M = ctx.M;
    fem.M_tilde = ctx.M_tilde;
    fem.K = assemble_stiffness(mesh, cb.Theta);
    const Eigen::VectorXd ub = solve_linear(mesh, fem, cb, ctx.dirichlet, ctx.beta_scale);
    fem.K = assemble_stiffness(mesh, cp.Theta);
    const Eigen::VectorXd up = solve_linear(mesh, fem, cp, ctx.dirichlet, ctx.beta_scale);

    const double den = mass_norm(ctx.M, cb.F - cp.F) + mass_norm(ctx.M, cb.Theta - cp.Theta) +
                       std::sqrt(std::max(0.0, (cb.N - cp.N).dot(ctx.M_tilde * (cb.N - cp.N))));
    if (den == 0.0) throw MismatchError("zero input perturbation");
    return mass_norm(ctx.M, ub - up) / den;
}

double stability_ratio_model(Model& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& W,
                             const SensorTriple& base, const SensorTriple& pert) {
    if (base.f.size() != pert.f.size() || base.theta.size() != pert.theta.size() ||
        base.eta.size() != pert.eta.size())
        throw MismatchError("perturbed sensor vectors change size");
    const double den =
        (base.f - pert.f).norm() + (base.theta - pert.theta).norm() + (base.eta - pert.eta).norm();
    if (den == 0.0) throw MismatchError("zero input perturbation");

    Eigen::MatrixXd F(2, base.f.size()), Th(2, base.theta.size()), N(2, base.eta.size());
    F.row(0) = base.f.transpose();
    F.row(1) = pert.f.transpose();
    Th.row(0) = base.theta.transpose();
    Th.row(1) = pert.theta.transpose();
    N.row(0) = base.eta.transpose();
    N.row(1) = pert.eta.transpose();
    const Eigen::MatrixXd P = model.forward(F, Th, N, X, false);
    const Eigen::VectorXd d = (P.row(0) - P.row(1)).transpose();
    return std::sqrt((W.array() * d.array().square()).sum()) / den;
}

CoveringResult covering_radius(const Dataset& ds, const DiagnosticsContext& ctx,
                               const std::vector<std::int64_t>& ids, const FieldTriple& probe) {
    if (ids.empty()) throw MismatchError("covering radius over an empty id list");
    const bool has_theta = ds.nodal_theta.cols() > 0;
    const bool has_eta = ds.nodal_eta.cols() > 0;
    const Eigen::VectorXd probe_eta_full = extend_eta(ctx.mesh, probe.eta);

    CoveringResult best;
    best.radius_max = std::numeric_limits<double>::infinity();
    best.radius_sum = std::numeric_limits<double>::infinity();
    for (std::int64_t id : ids) {
        const auto r = static_cast<Eigen::Index>(id);
        const double df = mass_norm(ctx.M, probe.f - ds.nodal_f.row(r).transpose());
        const double dt =
            has_theta ? mass_norm(ctx.M, probe.theta - ds.nodal_theta.row(r).transpose()) : 0.0;
        double de = 0.0;
        if (has_eta) {
            const Eigen::VectorXd d =
                probe_eta_full - extend_eta(ctx.mesh, ds.nodal_eta.row(r).transpose());
            de = std::sqrt(std::max(0.0, d.dot(ctx.M_tilde * d)));
        }
        const double dmax = std::max(df, std::max(dt, de));
        const double dsum = df + dt + de;
        if (dmax < best.radius_max) {
            best.radius_max = dmax;
            best.nearest_max = id;
        }
        if (dsum < best.radius_sum) {
            best.radius_sum = dsum;
            best.nearest_sum = id;
        }
    }
    return best;
}

QuadratureFit quadrature_convergence(const std::function<double(double, double)>& g,
                                     double integral_g2, const std::vector<int>& node_counts,
                                     int trials, std::uint64_t seed, bool uniform_grid) {
    if (node_counts.size() < 3) throw ConfigError("need at least three node counts");
    if (trials <= 0) throw ConfigError("trial count must be positive");

    QuadratureFit fit;
    fit.node_counts = node_counts;
    for (std::size_t idx = 0; idx < node_counts.size(); ++idx) {
        const int L = node_counts[idx];
        if (L <= 0) throw ConfigError("node counts must be positive");
        double acc = 0.0;
        const int reps = uniform_grid ? 1 : trials;
        for (int t = 0; t < reps; ++t) {
            double sum = 0.0;
            if (uniform_grid) {
                const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(L))));
                if (s * s != L)
                    throw ConfigError("uniform grid needs a square node count, got " + std::to_string(L));
                for (int iy = 0; iy < s; ++iy)
                    for (int ix = 0; ix < s; ++ix) {
                        const double v = g((ix + 0.5) / s, (iy + 0.5) / s);
                        sum += v * v;
                    }
            } else {
                Rng rng = Rng::stream(seed, (static_cast<std::uint64_t>(idx) << 16) +
                                                static_cast<std::uint64_t>(t));
                for (int l = 0; l < L; ++l) {
                    const double v = g(rng.uniform(), rng.uniform());
                    sum += v * v;
                }
            }
            acc += std::abs(sum / L - integral_g2);
        }
        fit.mean_abs_err.push_back(acc / reps);
    }

    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < fit.mean_abs_err.size(); ++i)
        if (fit.mean_abs_err[i] > 0.0) {
            xs.push_back(std::log(static_cast<double>(fit.node_counts[i])));
            ys.push_back(std::log(fit.mean_abs_err[i]));
        }
    if (xs.size() >= 2) {
        const double xbar = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
        const double ybar = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sxx += (xs[i] - xbar) * (xs[i] - xbar);
            sxy += (xs[i] - xbar) * (ys[i] - ybar);
        }
        if (sxx == 0.0) throw ConfigError("degenerate fit: identical node counts");
        fit.slope = sxy / sxx;
    }
    return fit;
}

std::vector<StructuralRow> structural_estimate(Model& model, const Dataset& ds,
                                               const DiagnosticsContext& ctx,
                                               const std::vector<std::int64_t>& theta_rows) {
    const Mesh& mesh = ctx.mesh;
    const auto q = static_cast<Eigen::Index>(mesh.node_count());
    if (ds.inputs_eta.cols() != 0) throw FrameError("the nodal frame forbids flux inputs");
    if (ctx.dirichlet != DirichletMode::nitsche)
        throw FrameError("the nodal frame needs the weak Dirichlet assembly");
    if (ds.output_points.rows() != q)
        throw FrameError("outputs must cover all " + std::to_string(q) + " mesh nodes, got " +
                         std::to_string(ds.output_points.rows()));
    std::vector<int> out_ids;
    try {
        out_ids = match_output_nodes(mesh, ds.output_points);
    } catch (const MismatchError& e) {
        throw FrameError(std::string("output nodes are not mesh nodes: ") + e.what());
    }
    for (Eigen::Index i = 0; i < q; ++i)
        if (out_ids[static_cast<std::size_t>(i)] != i)
            throw FrameError("output nodes must follow mesh node order");
    // Point evaluation at the outputs is now exactly the identity matrix.

    const auto k = ds.sensors_interior.rows();
    Eigen::MatrixXd Vhat = Eigen::MatrixXd::Zero(k, q);
    for (Eigen::Index i = 0; i < k; ++i) {
        int tri = -1;
        Eigen::Vector3d bary;
        mesh.locate(ds.sensors_interior(i, 0), ds.sensors_interior(i, 1), tri, bary);
        for (int v = 0; v < 3; ++v) Vhat(i, mesh.triangles[static_cast<std::size_t>(tri)][v]) += bary[v];
    }

    const Eigen::MatrixXd T = model.trunk_values(mesh.nodes);
    const Eigen::MatrixXd A = model.matrix_A();
    const Eigen::LLT<Eigen::MatrixXd> mass_llt(ctx.M);
    const double inv_sqrt_L = 1.0 / std::sqrt(static_cast<double>(q));

    std::vector<StructuralRow> rows;
    rows.reserve(theta_rows.size());
    for (std::int64_t id : theta_rows) {
        const auto r = static_cast<Eigen::Index>(id);
        if (r < 0 || r >= ds.sample_count())
            throw MismatchError("theta row " + std::to_string(id) + " outside the dataset");
        const Eigen::VectorXd theta_nodal = ds.nodal_theta.row(r).transpose();
        const Eigen::MatrixXd K = assemble_stiffness(mesh, theta_nodal);
        const LinearSystem sys =
            apply_dirichlet(mesh, K, theta_nodal, DirichletMode::nitsche, ctx.beta_scale);
        const Eigen::MatrixXd Kinv = sys.K.inverse();

        const Eigen::MatrixXd D = model.coefficient_matrix(ds.inputs_theta.row(r));
        const Eigen::MatrixXd TDAV = T * D * A * Vhat;
        const Eigen::MatrixXd Q = mass_llt.solve(TDAV.transpose()).transpose();

        StructuralRow row;
        row.theta_id = id;
        row.dist_spectral = spectral_norm(Kinv - Q).value;
        row.dist_reduced = inv_sqrt_L * spectral_norm((Kinv - Q) * ctx.M).value;
        rows.push_back(row);
    }
    return rows;
}

Histogram export_error_histogram(const std::vector<double>& raw, int bins) {
    if (raw.empty()) throw MismatchError("histogram of an empty list");
    if (bins <= 0) throw ConfigError("bin count must be positive");
    double lo = raw[0], hi = raw[0];
    for (double v : raw) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo <= 0.0) hi = lo + 1e-9;
    const double width = (hi - lo) / bins;

    Histogram h;
    std::vector<std::int64_t> counts(static_cast<std::size_t>(bins), 0);
    for (double v : raw) {
        auto idx = static_cast<std::int64_t>((v - lo) / width);
        idx = std::clamp<std::int64_t>(idx, 0, bins - 1);
        ++counts[static_cast<std::size_t>(idx)];
    }
    for (int b = 0; b < bins; ++b) {
        h.bin_left.push_back(lo + b * width);
        h.bin_right.push_back(b + 1 == bins ? hi : lo + (b + 1) * width);
        // Density uses the stored edges so the exported table integrates to one.
        const double w = h.bin_right.back() - h.bin_left.back();
        h.density.push_back(static_cast<double>(counts[static_cast<std::size_t>(b)]) /
                            (static_cast<double>(raw.size()) * w));
    }
    return h;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw MismatchError("rank correlation needs equal-length lists");
    if (a.size() < 2) throw MismatchError("rank correlation needs at least two points");
    const std::vector<double> ra = average_ranks(a);
    const std::vector<double> rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
        sab += (ra[i] - ma) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

void write_errors_csv(const std::string& path, const ErrorStats& s) {
    std::ofstream os = open_csv(path);
    os << "sample_id,rel_l2\n";
    for (std::size_t i = 0; i < s.raw.size(); ++i)
        os << s.sample_ids[i] << "," << fmt(s.raw[i]) << "\n";
}

void write_histogram_csv(const std::string& path, const Histogram& h) {
    std::ofstream os = open_csv(path);
    os << "bin_left,bin_right,density\n";
    for (std::size_t i = 0; i < h.density.size(); ++i)
        os << fmt(h.bin_left[i]) << "," << fmt(h.bin_right[i]) << "," << fmt(h.density[i]) << "\n";
}

void write_structural_csv(const std::string& path, const std::vector<StructuralRow>& rows) {
    std::ofstream os = open_csv(path);
    os << "theta_id,dist_spectral,dist_reduced\n";
    for (const StructuralRow& r : rows)
        os << r.theta_id << "," << fmt(r.dist_spectral) << "," << fmt(r.dist_reduced) << "\n";
}

void write_stability_csv(const std::string& path, const std::vector<double>& ratios) {
    std::ofstream os = open_csv(path);
    os << "probe_id,ratio\n";
    for (std::size_t i = 0; i < ratios.size(); ++i) os << i << "," << fmt(ratios[i]) << "\n";
}

void write_covering_csv(const std::string& path, const std::vector<CoveringResult>& rows) {
    std::ofstream os = open_csv(path);
    os << "probe_id,radius_max,radius_sum,nearest_max,nearest_sum\n";
    for (std::size_t i = 0; i < rows.size(); ++i)
        os << i << "," << fmt(rows[i].radius_max) << "," << fmt(rows[i].radius_sum) << ","
           << rows[i].nearest_max << "," << rows[i].nearest_sum << "\n";
}

void write_quadrature_csv(const std::string& path, const QuadratureFit& fit) {
    std::ofstream os = open_csv(path);
    os << "L,mean_abs_err\n";
    for (std::size_t i = 0; i < fit.node_counts.size(); ++i)
        os << fit.node_counts[i] << "," << fmt(fit.mean_abs_err[i]) << "\n";
}

}  // namespace varmion
