#include "varmion/dataset.hpp"

#include <cmath>

namespace varmion {

namespace {

// Substream ids, part of the reproducibility contract.
constexpr std::uint64_t kSplitStream = 903;
constexpr std::uint64_t kFieldTagF = 1;
constexpr std::uint64_t kFieldTagTheta = 2;
constexpr std::uint64_t kFieldTagEta = 3;

std::uint64_t field_seed(std::uint64_t seed, std::uint64_t tag) { return Rng::mix(seed + tag); }

bool has_theta(const std::string& experiment) { return experiment == "heat2" || experiment == "heat3"; }
bool has_eta(const std::string& experiment) { return experiment == "heat3"; }

nlohmann::json grf_json(const GrfParams& g) {
    return {{"length_scale", g.length_scale}, {"lo", g.lo}, {"hi", g.hi}, {"rescale", rescale_mode_name(g.rescale)}};
}

GrfParams grf_from_json(const nlohmann::json& j) {
    GrfParams g;
    g.length_scale = j.at("length_scale").get<double>();
    g.lo = j.at("lo").get<double>();
    g.hi = j.at("hi").get<double>();
    g.rescale = rescale_mode_from_string(j.at("rescale").get<std::string>());
    return g;
}

}  // namespace

GenerateConfig default_generate_config(const std::string& experiment) {
    GenerateConfig cfg;
    cfg.experiment = experiment;
    if (experiment == "heat2") {
        cfg.grf_theta = {0.4, 0.02, 0.99, RescaleMode::per_sample};
        cfg.grf_f = {0.2, 0.02, 0.99, RescaleMode::per_sample};
        cfg.sensors.count = 100;
        cfg.outputs = {"interior_random_plus_boundary", 100};
        cfg.split.kind = "randomized";
    } else if (experiment == "heat3") {
        cfg.grf_theta = {0.4, 0.02, 0.99, RescaleMode::per_sample};
        cfg.grf_f = {0.2, 0.02, 0.99, RescaleMode::per_sample};
        cfg.grf_eta = {0.3, -1.0, 1.0, RescaleMode::per_sample};
        cfg.sensors.count = 144;
        cfg.sensors.boundary_per_side = 12;
        cfg.outputs = {"interior_random_plus_boundary", 100};
        cfg.split.kind = "nested";
    } else if (experiment == "eikonal") {
        cfg.gamma_eta.clear();
        cfg.grf_f = {0.4, 0.1, 2.0, RescaleMode::per_sample};
        cfg.sensors.count = 1024;
        cfg.outputs = {"random_mesh_nodes", 140};
        cfg.split.kind = "randomized";
    } else {
        throw ConfigError("unknown experiment '" + experiment + "'");
    }
    return cfg;
}

nlohmann::json generate_metadata(const GenerateConfig& cfg) {
    nlohmann::json pde;
    pde["n"] = cfg.mesh_n;
    pde["dirichlet"] = cfg.dirichlet == DirichletMode::strong ? "strong" : "nitsche";
    pde["beta_scale"] = cfg.beta_scale;
    nlohmann::json sides = nlohmann::json::array();
    for (Side s : {Side::left, Side::right, Side::bottom, Side::top})
        if (cfg.gamma_eta.count(s)) sides.push_back(side_to_string(s));
    pde["gamma_eta"] = sides;
    if (cfg.experiment == "eikonal")
        pde["eikonal"] = {{"diffusion", cfg.eikonal.diffusion}, {"grad_reg", cfg.eikonal.grad_reg},
                          {"tol", cfg.eikonal.tol},             {"max_iter", cfg.eikonal.max_iter},
                          {"damping", cfg.eikonal.damping}};

    nlohmann::json grf;
    grf["f"] = grf_json(cfg.grf_f);
    if (has_theta(cfg.experiment)) grf["theta"] = grf_json(cfg.grf_theta);
    if (has_eta(cfg.experiment)) grf["eta"] = grf_json(cfg.grf_eta);

    nlohmann::json sensors;
    sensors["layout"] = cfg.sensors.layout;
    sensors["count"] = cfg.sensors.count;
    if (has_eta(cfg.experiment)) sensors["boundary_per_side"] = cfg.sensors.boundary_per_side;
    sensors["outputs"] = {{"recipe", cfg.outputs.recipe}, {"count", cfg.outputs.count}};

    nlohmann::json ds;
    ds["split"] = cfg.split.kind;
    ds["val_fraction"] = cfg.split.val_fraction;
    ds["test_fraction"] = cfg.split.test_fraction;
    if (cfg.split.kind == "nested") {
        ds["n_f"] = cfg.n_f;
        ds["n_theta"] = cfg.n_theta;
        ds["n_eta"] = cfg.n_eta;
    } else {
        ds["n_samples"] = cfg.n_samples;
    }

    return {{"seed", cfg.seed}, {"experiment", cfg.experiment}, {"pde", pde},
            {"grf", grf},       {"sensors", sensors},           {"dataset", ds}};
}

GenerateConfig generate_config_from_metadata(const nlohmann::json& meta) {
    GenerateConfig cfg;
    cfg.seed = meta.at("seed").get<std::uint64_t>();
    cfg.experiment = meta.at("experiment").get<std::string>();
    const auto& pde = meta.at("pde");
    cfg.mesh_n = pde.at("n").get<int>();
    cfg.dirichlet = dirichlet_mode_from_string(pde.at("dirichlet").get<std::string>());
    cfg.beta_scale = pde.at("beta_scale").get<double>();
    cfg.gamma_eta.clear();
    for (const auto& s : pde.at("gamma_eta")) cfg.gamma_eta.insert(side_from_string(s.get<std::string>()));
    if (pde.contains("eikonal")) {
        const auto& e = pde.at("eikonal");
        cfg.eikonal.diffusion = e.at("diffusion").get<double>();
        cfg.eikonal.grad_reg = e.at("grad_reg").get<double>();
        cfg.eikonal.tol = e.at("tol").get<double>();
        cfg.eikonal.max_iter = e.at("max_iter").get<int>();
        cfg.eikonal.damping = e.at("damping").get<double>();
    }
    const auto& grf = meta.at("grf");
    cfg.grf_f = grf_from_json(grf.at("f"));
    if (grf.contains("theta")) cfg.grf_theta = grf_from_json(grf.at("theta"));
    if (grf.contains("eta")) cfg.grf_eta = grf_from_json(grf.at("eta"));
    const auto& sensors = meta.at("sensors");
    cfg.sensors.layout = sensors.at("layout").get<std::string>();
    cfg.sensors.count = sensors.at("count").get<int>();
    if (sensors.contains("boundary_per_side")) cfg.sensors.boundary_per_side = sensors.at("boundary_per_side").get<int>();
    cfg.outputs.recipe = sensors.at("outputs").at("recipe").get<std::string>();
    cfg.outputs.count = sensors.at("outputs").at("count").get<int>();
    const auto& ds = meta.at("dataset");
    cfg.split.kind = ds.at("split").get<std::string>();
    cfg.split.val_fraction = ds.at("val_fraction").get<double>();
    cfg.split.test_fraction = ds.at("test_fraction").get<double>();
    if (cfg.split.kind == "nested") {
        cfg.n_f = ds.at("n_f").get<int>();
        cfg.n_theta = ds.at("n_theta").get<int>();
        cfg.n_eta = ds.at("n_eta").get<int>();
    } else {
        cfg.n_samples = ds.at("n_samples").get<int>();
    }
    return cfg;
}

std::string label_hash(const Eigen::MatrixXd& labels) {
    MatrixRM rm = labels;
    return hex64(fnv1a64(rm.data(), static_cast<std::size_t>(rm.size()) * sizeof(double)));
}

Mesh mesh_from_metadata(const nlohmann::json& meta) {
    const auto& pde = meta.at("pde");
    SideSet gamma_eta;
    for (const auto& s : pde.at("gamma_eta")) gamma_eta.insert(side_from_string(s.get<std::string>()));
    return build_unit_square_mesh(pde.at("n").get<int>(), gamma_eta);
}

InputDims dataset_input_dims(const Dataset& ds) {
    InputDims d;
    d.k_f = static_cast<int>(ds.inputs_f.cols());
    d.k_theta = static_cast<int>(ds.inputs_theta.cols());
    d.k_eta = static_cast<int>(ds.inputs_eta.cols());
    return d;
}

namespace {

Eigen::VectorXd sense_at(const Mesh& mesh, const Eigen::VectorXd& nodal, const Eigen::MatrixXd& points) {
    Eigen::VectorXd out(points.rows());
    for (Eigen::Index i = 0; i < points.rows(); ++i) out(i) = mesh.interpolate(nodal, points(i, 0), points(i, 1));
    return out;
}

void make_splits(const GenerateConfig& cfg, std::int64_t J, Dataset& ds) {
    const auto n_test = static_cast<std::int64_t>(std::llround(cfg.split.test_fraction * static_cast<double>(J)));
    const auto n_val = static_cast<std::int64_t>(std::llround(cfg.split.val_fraction * static_cast<double>(J)));
    if (n_test + n_val >= J) throw ConfigError("val/test fractions leave no training samples");

    std::vector<std::int64_t> perm(static_cast<std::size_t>(J));
    for (std::int64_t i = 0; i < J; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng rng = Rng::stream(cfg.seed, kSplitStream);
    shuffle(perm, rng);

    ds.split_test.assign(perm.begin(), perm.begin() + n_test);
    ds.split_val.assign(perm.begin() + n_test, perm.begin() + n_test + n_val);
    if (cfg.split.kind == "nested") {
        // training samples stay in nested generation order so that a prefix
        // sweeps the f factor fastest
        std::vector<bool> held(static_cast<std::size_t>(J), false);
        for (std::int64_t i : ds.split_test) held[static_cast<std::size_t>(i)] = true;
        for (std::int64_t i : ds.split_val) held[static_cast<std::size_t>(i)] = true;
        ds.split_train.clear();
        for (std::int64_t i = 0; i < J; ++i)
            if (!held[static_cast<std::size_t>(i)]) ds.split_train.push_back(i);
    } else if (cfg.split.kind == "randomized") {
        ds.split_train.assign(perm.begin() + n_test + n_val, perm.end());
    } else {
        throw ConfigError("unknown split kind '" + cfg.split.kind + "'");
    }
}

}  // namespace

Dataset build_dataset(const GenerateConfig& cfg) {
    if (cfg.experiment != "heat2" && cfg.experiment != "heat3" && cfg.experiment != "eikonal")
        throw ConfigError("unknown experiment '" + cfg.experiment + "'");
    const bool theta_in = has_theta(cfg.experiment);
    const bool eta_in = has_eta(cfg.experiment);
    const bool eikonal = cfg.experiment == "eikonal";
    if (eikonal && !cfg.gamma_eta.empty()) throw ConfigError("eikonal uses a fully Dirichlet boundary");
    if (theta_in && cfg.gamma_eta.empty()) throw ConfigError("heat experiments need a flux boundary");

    Mesh mesh = build_unit_square_mesh(cfg.mesh_n, cfg.gamma_eta);
    const int q = mesh.node_count();
    const std::vector<int> eta_nodes = mesh.gamma_eta_nodes();

    FemMatrices fem;
    fem.M = assemble_mass(mesh);
    fem.M_tilde = assemble_boundary_mass(mesh, cfg.gamma_eta);

    Dataset ds;
    ds.sensors_interior = interior_sensor_points(cfg.sensors, cfg.seed);
    ds.sensors_boundary = eta_in ? boundary_sensor_points(cfg.gamma_eta, cfg.sensors.boundary_per_side)
                                 : Eigen::MatrixXd(0, 2);
    OutputNodes out = select_output_nodes(mesh, cfg.outputs, cfg.seed);
    ds.output_points = out.points;
    ds.output_weights = out.weights;
    ds.output_ids = out.ids;
    const auto L = static_cast<Eigen::Index>(out.ids.size());

    const Eigen::MatrixXd factor_f = build_covariance_factor(mesh.nodes, cfg.grf_f.length_scale);
    Eigen::MatrixXd factor_theta, factor_eta;
    if (theta_in) factor_theta = build_covariance_factor(mesh.nodes, cfg.grf_theta.length_scale);
    if (eta_in) {
        Eigen::MatrixXd pts(static_cast<Eigen::Index>(eta_nodes.size()), 2);
        for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) = mesh.nodes.row(eta_nodes[static_cast<std::size_t>(i)]);
        factor_eta = build_covariance_factor(pts, cfg.grf_eta.length_scale);
    }

    auto draw = [&](const Eigen::MatrixXd& factor, const GrfParams& g, std::uint64_t tag, std::uint64_t index) {
        return rescale_with_mode(sample_field_at(factor, field_seed(cfg.seed, tag), index), g.lo, g.hi, g.rescale);
    };

    const bool nested = cfg.split.kind == "nested";
    std::int64_t J;
    if (nested) {
        if (!eta_in) throw ConfigError("nested splits need the three-input heat experiment");
        if (cfg.n_f <= 0 || cfg.n_theta <= 0 || cfg.n_eta <= 0) throw ConfigError("nested factor counts must be positive");
        J = static_cast<std::int64_t>(cfg.n_f) * cfg.n_theta * cfg.n_eta;
    } else {
        if (cfg.n_samples <= 0) throw ConfigError("n_samples must be positive");
        J = cfg.n_samples;
    }

    ds.inputs_f.resize(J, ds.sensors_interior.rows());
    ds.inputs_theta.resize(J, theta_in ? ds.sensors_interior.rows() : 0);
    ds.inputs_eta.resize(J, ds.sensors_boundary.rows());
    ds.labels.resize(J, L);
    ds.nodal_f.resize(J, q);
    ds.nodal_theta.resize(J, theta_in ? q : 0);
    ds.nodal_eta.resize(J, eta_in ? static_cast<Eigen::Index>(eta_nodes.size()) : 0);
    ds.nodal_u.resize(J, q);
    if (nested) ds.factor_ids.resize(J, 3);

    for (std::int64_t j = 0; j < J; ++j) {
        std::uint64_t i_f = static_cast<std::uint64_t>(j), i_theta = static_cast<std::uint64_t>(j),
                      i_eta = static_cast<std::uint64_t>(j);
        if (nested) {
            i_f = static_cast<std::uint64_t>(j % cfg.n_f);
            i_theta = static_cast<std::uint64_t>((j / cfg.n_f) % cfg.n_theta);
            i_eta = static_cast<std::uint64_t>(j / (static_cast<std::int64_t>(cfg.n_f) * cfg.n_theta));
            ds.factor_ids.row(j) << static_cast<double>(i_f), static_cast<double>(i_theta),
                static_cast<double>(i_eta);
        }

        CoefficientVectors coeffs;
        const Eigen::VectorXd f = draw(factor_f, cfg.grf_f, kFieldTagF, i_f);
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(0), eta = Eigen::VectorXd::Zero(0);
        if (theta_in) theta = draw(factor_theta, cfg.grf_theta, kFieldTagTheta, i_theta);
        eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(eta_nodes.size()));
        if (eta_in) eta = draw(factor_eta, cfg.grf_eta, kFieldTagEta, i_eta);

        Eigen::VectorXd U;
        if (eikonal) {
            coeffs = project_data(mesh, f, Eigen::VectorXd::Zero(q), Eigen::VectorXd::Zero(0));
            U = solve_eikonal_picard(mesh, coeffs.F, cfg.eikonal).U;
        } else {
            coeffs = project_data(mesh, f, theta, eta);
            fem.K = assemble_stiffness(mesh, coeffs.Theta);
            U = solve_linear(mesh, fem, coeffs, cfg.dirichlet, cfg.beta_scale);
        }

        ds.nodal_f.row(j) = coeffs.F.transpose();
        if (theta_in) ds.nodal_theta.row(j) = coeffs.Theta.transpose();
        if (eta_in) ds.nodal_eta.row(j) = eta.transpose();
        ds.nodal_u.row(j) = U.transpose();

        ds.inputs_f.row(j) = sense_at(mesh, coeffs.F, ds.sensors_interior).transpose();
        if (theta_in) ds.inputs_theta.row(j) = sense_at(mesh, coeffs.Theta, ds.sensors_interior).transpose();
        if (eta_in) ds.inputs_eta.row(j) = sense_at(mesh, coeffs.N, ds.sensors_boundary).transpose();
        for (Eigen::Index l = 0; l < L; ++l) ds.labels(j, l) = U(out.ids[static_cast<std::size_t>(l)]);

        if ((j + 1) % 200 == 0)
            VARMION_INFO("generated %lld/%lld samples", static_cast<long long>(j + 1), static_cast<long long>(J));
    }

    make_splits(cfg, J, ds);

    ds.metadata = generate_metadata(cfg);
    ds.metadata["rng"] = Rng::kName;
    ds.metadata["generator"] = "varmion-datagen";
    ds.metadata["label_hash"] = label_hash(ds.labels);
    return ds;
}

}  // namespace varmion
