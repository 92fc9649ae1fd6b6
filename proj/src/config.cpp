#include "varmion/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "varmion/common.hpp"
#include "varmion/model.hpp"

namespace varmion {

namespace {

using nlohmann::json;

const json& expect_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    return j;
}

void reject_unknown(const json& j, const std::string& where,
                    std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (ok) continue;
        std::ostringstream msg;
        msg << "unknown key '" << key << "' in " << where << "; allowed:";
        for (const char* a : allowed) msg << " " << a;
        throw ConfigError(msg.str());
    }
}

std::string req_string(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) throw ConfigError(where + " is missing required key '" + key + "'");
    if (!j.at(key).is_string()) throw ConfigError(where + "." + key + " must be a string");
    return j.at(key).get<std::string>();
}

double opt_number(const json& j, const std::string& where, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw ConfigError(where + "." + key + " must be a number");
    return j.at(key).get<double>();
}

int opt_int(const json& j, const std::string& where, const char* key, int fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
    return j.at(key).get<int>();
}

void require_positive(double v, const std::string& what) {
    if (!(v > 0.0)) throw ConfigError(what + " must be positive");
}

void require_fraction(double v, const std::string& what) {
    if (!(v >= 0.0) || v >= 1.0) throw ConfigError(what + " must lie in [0, 1)");
}

GrfParams parse_grf(const json& j, const std::string& where, const GrfParams& base) {
    expect_object(j, where);
    reject_unknown(j, where, {"length_scale", "lo", "hi", "rescale"});
    GrfParams g = base;
    g.length_scale = opt_number(j, where, "length_scale", g.length_scale);
    require_positive(g.length_scale, where + ".length_scale");
    g.lo = opt_number(j, where, "lo", g.lo);
    g.hi = opt_number(j, where, "hi", g.hi);
    if (!(g.hi > g.lo)) throw ConfigError(where + ": hi must exceed lo");
    if (j.contains("rescale")) g.rescale = rescale_mode_from_string(req_string(j, where, "rescale"));
    return g;
}

void parse_pde(const json& j, ExperimentConfig& cfg) {
    const std::string where = "pde";
    expect_object(j, where);
    reject_unknown(j, where, {"n", "dirichlet", "beta_scale", "gamma_eta", "eikonal"});
    GenerateConfig& g = cfg.generate;
    g.mesh_n = opt_int(j, where, "n", g.mesh_n);
    if (g.mesh_n < 2) throw ConfigError("pde.n must be at least 2");
    if (j.contains("dirichlet"))
        g.dirichlet = dirichlet_mode_from_string(req_string(j, where, "dirichlet"));
    g.beta_scale = opt_number(j, where, "beta_scale", g.beta_scale);
    require_positive(g.beta_scale, "pde.beta_scale");
    if (j.contains("gamma_eta")) {
        if (!j.at("gamma_eta").is_array()) throw ConfigError("pde.gamma_eta must be an array");
        g.gamma_eta.clear();
        for (const auto& s : j.at("gamma_eta")) {
            if (!s.is_string()) throw ConfigError("pde.gamma_eta entries must be side names");
            g.gamma_eta.insert(side_from_string(s.get<std::string>()));
        }
    }
    if (j.contains("eikonal")) {
        if (g.experiment != "eikonal")
            throw ConfigError("pde.eikonal only applies to the eikonal recipe");
        const json& e = expect_object(j.at("eikonal"), "pde.eikonal");
        reject_unknown(e, "pde.eikonal", {"diffusion", "grad_reg", "tol", "max_iter", "damping"});
        g.eikonal.diffusion = opt_number(e, "pde.eikonal", "diffusion", g.eikonal.diffusion);
        g.eikonal.grad_reg = opt_number(e, "pde.eikonal", "grad_reg", g.eikonal.grad_reg);
        g.eikonal.tol = opt_number(e, "pde.eikonal", "tol", g.eikonal.tol);
        g.eikonal.max_iter = opt_int(e, "pde.eikonal", "max_iter", g.eikonal.max_iter);
        g.eikonal.damping = opt_number(e, "pde.eikonal", "damping", g.eikonal.damping);
        require_positive(g.eikonal.diffusion, "pde.eikonal.diffusion");
        require_positive(g.eikonal.grad_reg, "pde.eikonal.grad_reg");
        require_positive(g.eikonal.tol, "pde.eikonal.tol");
        if (g.eikonal.max_iter <= 0) throw ConfigError("pde.eikonal.max_iter must be positive");
        if (!(g.eikonal.damping > 0.0) || g.eikonal.damping > 1.0)
            throw ConfigError("pde.eikonal.damping must lie in (0, 1]");
    }
}

void parse_sensors(const json& j, ExperimentConfig& cfg) {
    const std::string where = "sensors";
    expect_object(j, where);
    const bool has_eta = cfg.generate.experiment == "heat3";
    reject_unknown(j, where, {"layout", "count", "boundary_per_side", "outputs"});
    SensorLayoutConfig& s = cfg.generate.sensors;
    if (j.contains("layout")) {
        s.layout = req_string(j, where, "layout");
        if (s.layout != "uniform_grid" && s.layout != "random")
            throw ConfigError("sensors.layout must be uniform_grid or random");
    }
    s.count = opt_int(j, where, "count", s.count);
    if (s.count <= 0) throw ConfigError("sensors.count must be positive");
    if (j.contains("boundary_per_side")) {
        if (!has_eta)
            throw ConfigError("sensors.boundary_per_side only applies to recipes with flux inputs");
        s.boundary_per_side = opt_int(j, where, "boundary_per_side", s.boundary_per_side);
        if (s.boundary_per_side <= 0)
            throw ConfigError("sensors.boundary_per_side must be positive");
    }
    if (j.contains("outputs")) {
        const json& o = expect_object(j.at("outputs"), "sensors.outputs");
        reject_unknown(o, "sensors.outputs", {"recipe", "count"});
        OutputNodesConfig& out = cfg.generate.outputs;
        if (o.contains("recipe")) {
            out.recipe = req_string(o, "sensors.outputs", "recipe");
            static const std::set<std::string> recipes{"interior_random_plus_boundary",
                                                       "random_mesh_nodes", "mesh_nodes"};
            if (!recipes.count(out.recipe))
                throw ConfigError("sensors.outputs.recipe must be one of "
                                  "interior_random_plus_boundary, random_mesh_nodes, mesh_nodes");
        }
        out.count = opt_int(o, "sensors.outputs", "count", out.count);
        if (out.recipe != "mesh_nodes" && out.count <= 0)
            throw ConfigError("sensors.outputs.count must be positive");
    }
}

void parse_dataset(const json& j, ExperimentConfig& cfg) {
    const std::string where = "dataset";
    expect_object(j, where);
    reject_unknown(j, where,
                   {"split", "n_samples", "n_f", "n_theta", "n_eta", "val_fraction", "test_fraction"});
    GenerateConfig& g = cfg.generate;
    if (j.contains("split")) {
        g.split.kind = req_string(j, where, "split");
        if (g.split.kind != "randomized" && g.split.kind != "nested")
            throw ConfigError("dataset.split must be randomized or nested");
    }
    const bool nested = g.split.kind == "nested";
    if (j.contains("n_samples")) {
        if (nested) throw ConfigError("dataset.n_samples does not apply to the nested split");
        g.n_samples = opt_int(j, where, "n_samples", g.n_samples);
        if (g.n_samples <= 0) throw ConfigError("dataset.n_samples must be positive");
    }
    for (const char* key : {"n_f", "n_theta", "n_eta"}) {
        if (!j.contains(key)) continue;
        if (!nested)
            throw ConfigError(std::string("dataset.") + key + " only applies to the nested split");
        const int v = opt_int(j, where, key, 1);
        if (v <= 0) throw ConfigError(std::string("dataset.") + key + " must be positive");
        if (key == std::string("n_f")) g.n_f = v;
        if (key == std::string("n_theta")) g.n_theta = v;
        if (key == std::string("n_eta")) g.n_eta = v;
    }
    g.split.val_fraction = opt_number(j, where, "val_fraction", g.split.val_fraction);
    g.split.test_fraction = opt_number(j, where, "test_fraction", g.split.test_fraction);
    require_fraction(g.split.val_fraction, "dataset.val_fraction");
    require_fraction(g.split.test_fraction, "dataset.test_fraction");
    if (g.split.val_fraction + g.split.test_fraction >= 1.0)
        throw ConfigError("dataset val and test fractions must leave room for training samples");
}

void parse_train(const json& j, ExperimentConfig& cfg) {
    const std::string where = "train";
    expect_object(j, where);
    reject_unknown(j, where, {"architecture", "seed", "epochs", "batch_size", "lr", "val_every",
                              "patience", "grad_clip", "lr_decay", "train_prefix"});
    cfg.architecture = req_string(j, where, "architecture");
    const auto names = canonical_architecture_names();
    if (std::find(names.begin(), names.end(), cfg.architecture) == names.end()) {
        std::ostringstream msg;
        msg << "train.architecture '" << cfg.architecture << "' is not a canonical name; pick one of:";
        for (const auto& n : names) msg << " " << n;
        throw ConfigError(msg.str());
    }
    TrainConfig& t = cfg.train;
    if (j.contains("seed")) {
        const auto& v = j.at("seed");
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
            throw ConfigError("train.seed must be a nonnegative integer");
        t.seed = v.get<std::uint64_t>();
    }
    t.epochs = opt_int(j, where, "epochs", t.epochs);
    t.batch_size = opt_int(j, where, "batch_size", t.batch_size);
    t.adam.lr = opt_number(j, where, "lr", t.adam.lr);
    t.val_every = opt_int(j, where, "val_every", t.val_every);
    t.patience = opt_int(j, where, "patience", t.patience);
    t.grad_clip = opt_number(j, where, "grad_clip", t.grad_clip);
    t.lr_decay = opt_number(j, where, "lr_decay", t.lr_decay);
    t.train_prefix = opt_int(j, where, "train_prefix", t.train_prefix);
    if (t.epochs <= 0) throw ConfigError("train.epochs must be positive");
    if (t.batch_size <= 0) throw ConfigError("train.batch_size must be positive");
    require_positive(t.adam.lr, "train.lr");
    if (t.val_every <= 0) throw ConfigError("train.val_every must be positive");
    if (t.grad_clip < 0.0) throw ConfigError("train.grad_clip must be nonnegative");
    if (!(t.lr_decay > 0.0) || t.lr_decay > 1.0)
        throw ConfigError("train.lr_decay must lie in (0, 1]");
    if (t.train_prefix < 0) throw ConfigError("train.train_prefix must be nonnegative");
}

void parse_diagnostics(const json& j, ExperimentConfig& cfg) {
    const std::string where = "diagnostics";
    expect_object(j, where);
    reject_unknown(j, where,
                   {"lipschitz_pairs", "stability_probes", "covering_probes", "structural_rows",
                    "histogram_bins", "quadrature_counts", "quadrature_trials"});
    DiagnosticsConfig& d = cfg.diagnostics;
    d.lipschitz_pairs = opt_int(j, where, "lipschitz_pairs", d.lipschitz_pairs);
    d.stability_probes = opt_int(j, where, "stability_probes", d.stability_probes);
    d.covering_probes = opt_int(j, where, "covering_probes", d.covering_probes);
    d.structural_rows = opt_int(j, where, "structural_rows", d.structural_rows);
    d.histogram_bins = opt_int(j, where, "histogram_bins", d.histogram_bins);
    d.quadrature_trials = opt_int(j, where, "quadrature_trials", d.quadrature_trials);
    for (int v : {d.lipschitz_pairs, d.stability_probes, d.covering_probes, d.structural_rows,
                  d.histogram_bins, d.quadrature_trials})
        if (v <= 0) throw ConfigError("diagnostics counts must be positive");
    if (j.contains("quadrature_counts")) {
        if (!j.at("quadrature_counts").is_array())
            throw ConfigError("diagnostics.quadrature_counts must be an array");
        d.quadrature_counts.clear();
        for (const auto& v : j.at("quadrature_counts")) {
            if (!v.is_number_integer() || v.get<int>() <= 0)
                throw ConfigError("diagnostics.quadrature_counts entries must be positive integers");
            d.quadrature_counts.push_back(v.get<int>());
        }
        if (d.quadrature_counts.size() < 3)
            throw ConfigError("diagnostics.quadrature_counts needs at least three entries");
    }
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j) {
    expect_object(j, "config");
    reject_unknown(j, "config", {"name", "experiment", "seed", "out_dir", "threads", "pde", "grf",
                                 "sensors", "dataset", "train", "diagnostics"});
    ExperimentConfig cfg;
    cfg.name = req_string(j, "config", "name");
    if (cfg.name.empty()) throw ConfigError("config.name must not be empty");
    const std::string experiment = req_string(j, "config", "experiment");
    if (experiment != "heat2" && experiment != "heat3" && experiment != "eikonal")
        throw ConfigError("config.experiment must be heat2, heat3, or eikonal");
    cfg.generate = default_generate_config(experiment);
    if (j.contains("seed")) {
        const auto& v = j.at("seed");
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
            throw ConfigError("config.seed must be a nonnegative integer");
        cfg.generate.seed = v.get<std::uint64_t>();
    }
    cfg.train.seed = cfg.generate.seed;
    cfg.out_dir = j.contains("out_dir") ? req_string(j, "config", "out_dir") : "runs/" + cfg.name;
    cfg.threads = opt_int(j, "config", "threads", 1);
    if (cfg.threads <= 0) throw ConfigError("config.threads must be positive");

    if (j.contains("pde")) parse_pde(j.at("pde"), cfg);
    if (j.contains("grf")) {
        const json& g = expect_object(j.at("grf"), "grf");
        const bool has_theta = experiment == "heat2" || experiment == "heat3";
        const bool has_eta = experiment == "heat3";
        reject_unknown(g, "grf", {"f", "theta", "eta"});
        if (g.contains("f")) cfg.generate.grf_f = parse_grf(g.at("f"), "grf.f", cfg.generate.grf_f);
        if (g.contains("theta")) {
            if (!has_theta) throw ConfigError("grf.theta does not apply to the " + experiment + " recipe");
            cfg.generate.grf_theta = parse_grf(g.at("theta"), "grf.theta", cfg.generate.grf_theta);
        }
        if (g.contains("eta")) {
            if (!has_eta) throw ConfigError("grf.eta does not apply to the " + experiment + " recipe");
            cfg.generate.grf_eta = parse_grf(g.at("eta"), "grf.eta", cfg.generate.grf_eta);
        }
    }
    if (j.contains("sensors")) parse_sensors(j.at("sensors"), cfg);
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg);
    if (j.contains("train")) parse_train(j.at("train"), cfg);
    if (j.contains("diagnostics")) parse_diagnostics(j.at("diagnostics"), cfg);
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
    return experiment_config_from_json(j);
}

}  // namespace varmion
