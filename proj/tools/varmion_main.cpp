#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#if defined(__has_include)
#if __has_include(<malloc.h>)
#include <malloc.h>
#define VARMION_HAS_MALLOPT 1
#endif
#endif

#include "CLI11.hpp"
#include "varmion/common.hpp"
#include "varmion/config.hpp"
#include "varmion/dataset.hpp"
#include "varmion/diagnostics.hpp"
#include "varmion/train.hpp"
#include "varmion/vmformat.hpp"

namespace {

using namespace varmion;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    ensure_parent_dir(path);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FrameError("cannot open '" + path + "' for writing");
    os << j.dump(2) << "\n";
}

Dataset load_dataset_checked(const std::string& path) {
    if (path.empty()) throw ConfigError("a dataset path is required (--dataset)");
    if (!fs::exists(path)) throw ConfigError("dataset file '" + path + "' does not exist");
    return read_dataset(path);
}

CheckpointData load_checkpoint_checked(const std::string& path) {
    if (path.empty()) throw ConfigError("a checkpoint path is required (--checkpoint)");
    if (!fs::exists(path)) throw ConfigError("checkpoint file '" + path + "' does not exist");
    return read_checkpoint(path);
}

void check_dims_match(const nlohmann::json& arch, const InputDims& dims) {
    const auto& d = arch.at("dims");
    const int kf = d.at("k_f").get<int>();
    const int kt = d.at("k_theta").get<int>();
    const int ke = d.at("k_eta").get<int>();
    if (kf != dims.k_f || kt != dims.k_theta || ke != dims.k_eta)
        throw MismatchError("checkpoint expects sensor counts (" + std::to_string(kf) + ", " +
                            std::to_string(kt) + ", " + std::to_string(ke) +
                            ") but the dataset provides (" + std::to_string(dims.k_f) + ", " +
                            std::to_string(dims.k_theta) + ", " + std::to_string(dims.k_eta) + ")");
}

void check_family_inputs(const ArchitectureSpec& spec, const InputDims& dims,
                         const std::string& recipe) {
    const bool needs_theta =
        spec.family == Family::varmion_linear || spec.family == Family::mionet;
    if (needs_theta && dims.k_theta == 0)
        throw MismatchError("architecture '" + spec.name +
                            "' expects conductivity sensors but the '" + recipe +
                            "' recipe provides none");
    if (!spec.eta_branch.empty() && dims.k_eta == 0)
        throw MismatchError("architecture '" + spec.name +
                            "' expects flux sensors but the '" + recipe + "' recipe provides none");
}

std::vector<std::int64_t> all_sample_ids(const Dataset& ds) {
    std::vector<std::int64_t> ids(static_cast<std::size_t>(ds.sample_count()));
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i);
    return ids;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Flags {
    std::string config, dataset, checkpoint, out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
    std::vector<std::int64_t> fields;
    bool covering = false, structural = false, stability = false, lipschitz = false,
         quadrature = false;
};

int cmd_generate(const Flags& fl) {
    const auto t0 = Clock::now();
    ExperimentConfig cfg = load_experiment_config(fl.config);
    if (fl.seed_set) cfg.generate.seed = fl.seed;
    Dataset ds = build_dataset(cfg.generate);
    ds.metadata["name"] = cfg.name;
    ds.metadata["threads"] = fl.threads;
    const std::string out = fl.out.empty() ? cfg.out_dir + "/dataset.vmds" : fl.out;
    ensure_parent_dir(out);
    write_dataset(out, ds);
    std::printf("dataset: %s\n", out.c_str());
    std::printf("samples: %lld\n", static_cast<long long>(ds.sample_count()));
    std::printf("label_hash: %s\n", ds.metadata.at("label_hash").get<std::string>().c_str());
    std::printf("wall_seconds: %.3f\n", seconds_since(t0));
    return 0;
}

int cmd_train(const Flags& fl) {
    const auto t0 = Clock::now();
    ExperimentConfig cfg = load_experiment_config(fl.config);
    if (cfg.architecture.empty())
        throw ConfigError("config has no train.architecture; nothing to train");
    if (fl.seed_set) cfg.train.seed = fl.seed;
    cfg.train.threads = fl.threads;

    const Dataset ds = load_dataset_checked(fl.dataset);
    const ArchitectureSpec spec = canonical_architecture(cfg.architecture);
    const InputDims dims = dataset_input_dims(ds);
    check_family_inputs(spec, dims, ds.metadata.at("experiment").get<std::string>());

    Rng init(cfg.train.seed);
    Model model(spec, dims, init);
    const std::string out_dir = fl.out.empty() ? cfg.out_dir : fl.out;
    fs::create_directories(out_dir);
    cfg.train.checkpoint_path = out_dir + "/checkpoint.vmck";

    TrainReport report = train(model, ds, cfg.train);

    nlohmann::json j = report_to_json(report);
    j["wall_seconds"] = 0.0;  // the measured time goes to stdout, files stay rerun-stable
    j["architecture"] = cfg.architecture;
    j["name"] = cfg.name;
    write_json_file(out_dir + "/report.json", j);

    std::printf("checkpoint: %s\n", cfg.train.checkpoint_path.c_str());
    std::printf("final_train_loss: %.12g\n", report.final_train_loss);
    if (report.best_epoch >= 0 && report.val_samples > 0)
        std::printf("best_val_loss: %.12g (epoch %d)\n", report.best_val_loss, report.best_epoch);
    std::printf("epsilon_t: %.12g (sample %lld)\n", report.epsilon_t,
                static_cast<long long>(report.epsilon_t_sample));
    std::printf("wall_seconds: %.3f\n", seconds_since(t0));
    return 0;
}

int cmd_eval(const Flags& fl) {
    const auto t0 = Clock::now();
    const CheckpointData ck = load_checkpoint_checked(fl.checkpoint);
    const Dataset ds = load_dataset_checked(fl.dataset);
    check_dims_match(ck.arch, dataset_input_dims(ds));
    Model model = model_from_checkpoint(ck);
    const DiagnosticsContext ctx = make_context(ds);

    const bool have_test = !ds.split_test.empty();
    const std::vector<std::int64_t> ids = have_test ? ds.split_test : all_sample_ids(ds);
    int bins = 20;
    if (!fl.config.empty()) bins = load_experiment_config(fl.config).diagnostics.histogram_bins;

    const ErrorStats at_outputs = relative_l2_errors(model, ds, ctx, ids, Quadrature::output_nodes);
    const ErrorStats at_nodes = relative_l2_errors(model, ds, ctx, ids, Quadrature::dense_grid);

    const std::string out_dir = fl.out.empty() ? "." : fl.out;
    fs::create_directories(out_dir);
    write_errors_csv(out_dir + "/errors.csv", at_outputs);
    write_histogram_csv(out_dir + "/histogram.csv",
                        export_error_histogram(at_outputs.raw, bins));

    nlohmann::json j;
    j["split"] = have_test ? "test" : "all";
    j["sample_count"] = ids.size();
    j["threads"] = fl.threads;
    j["wall_seconds"] = 0.0;
    j["quadrature_output_nodes"] = error_stats_json(at_outputs);
    j["quadrature_dense_grid"] = error_stats_json(at_nodes);
    write_json_file(out_dir + "/report.json", j);

    // Nodal field tables for figure scripts: predicted, true, pointwise error.
    for (std::int64_t id : fl.fields) {
        if (id < 0 || id >= ds.sample_count())
            throw MismatchError("field sample " + std::to_string(id) + " outside the dataset");
        const auto r = static_cast<Eigen::Index>(id);
        const Eigen::MatrixXd pred = model.forward(
            ds.inputs_f.row(r), ds.inputs_theta.middleRows(r, 1), ds.inputs_eta.middleRows(r, 1),
            ctx.mesh.nodes, false);
        const auto table = [&](const std::string& tag, const std::function<double(int)>& value) {
            std::ofstream os(out_dir + "/field_" + tag + "_" + std::to_string(id) + ".csv",
                             std::ios::trunc);
            os << "x,y,value\n";
            char buf[128];
            for (int i = 0; i < ctx.mesh.node_count(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", ctx.mesh.nodes(i, 0),
                              ctx.mesh.nodes(i, 1), value(i));
                os << buf;
            }
        };
        table("predicted", [&](int i) { return pred(0, i); });
        table("true", [&](int i) { return ds.nodal_u(r, i); });
        table("error", [&](int i) { return pred(0, i) - ds.nodal_u(r, i); });
    }

    std::printf("samples: %zu (split %s)\n", at_outputs.raw.size() + static_cast<std::size_t>(at_outputs.excluded),
                have_test ? "test" : "all");
    std::printf("mean_rel_l2: %.6g\n", at_outputs.mean);
    std::printf("mean_rel_l2_dense: %.6g\n", at_nodes.mean);
    std::printf("wall_seconds: %.3f\n", seconds_since(t0));
    return 0;
}

int cmd_diagnose(const Flags& fl) {
    const auto t0 = Clock::now();
    if (!fl.covering && !fl.structural && !fl.stability && !fl.lipschitz && !fl.quadrature)
        throw ConfigError(
            "select at least one diagnostic: --covering --structural --stability --lipschitz "
            "--quadrature");
    const CheckpointData ck = load_checkpoint_checked(fl.checkpoint);
    const Dataset ds = load_dataset_checked(fl.dataset);
    check_dims_match(ck.arch, dataset_input_dims(ds));
    Model model = model_from_checkpoint(ck);
    const DiagnosticsContext ctx = make_context(ds);
    DiagnosticsConfig knobs;
    if (!fl.config.empty()) knobs = load_experiment_config(fl.config).diagnostics;
    const std::uint64_t seed = fl.seed_set ? fl.seed : 1;

    const std::string out_dir = fl.out.empty() ? "." : fl.out;
    fs::create_directories(out_dir);
    nlohmann::json j;
    j["threads"] = fl.threads;
    j["seed"] = seed;
    j["wall_seconds"] = 0.0;
    nlohmann::json selected = nlohmann::json::array();

    if (fl.lipschitz) {
        selected.push_back("lipschitz");
        if (ds.inputs_theta.cols() == 0)
            throw MismatchError("the dataset has no conductivity sensors to probe");
        Eigen::MatrixXd thetas(static_cast<Eigen::Index>(ds.split_train.size()),
                               ds.inputs_theta.cols());
        for (std::size_t i = 0; i < ds.split_train.size(); ++i)
            thetas.row(static_cast<Eigen::Index>(i)) =
                ds.inputs_theta.row(static_cast<Eigen::Index>(ds.split_train[i]));
        const LipschitzEstimate est =
            estimate_lipschitz_D(model, thetas, knobs.lipschitz_pairs, seed);
        j["lipschitz"] = {{"value", est.value},
                          {"pairs_used", est.pairs_used},
                          {"pair_count", knobs.lipschitz_pairs},
                          {"theta_samples", thetas.rows()}};
    }

    if (fl.stability) {
        selected.push_back("stability");
        const std::vector<std::int64_t> ids = all_sample_ids(ds);
        if (ids.size() < 2) throw MismatchError("stability probes need at least two samples");
        std::vector<double> model_ratios, fem_ratios;
        const bool fem_ok = ds.nodal_theta.cols() > 0;  // the linear solver path
        for (int t = 0; t < knobs.stability_probes; ++t) {
            const auto a = ids[static_cast<std::size_t>(2 * t) % ids.size()];
            const auto b = ids[static_cast<std::size_t>(2 * t + 1) % ids.size()];
            if (a == b) continue;
            SensorTriple sa{ds.inputs_f.row(a).transpose(), ds.inputs_theta.row(a).transpose(),
                            ds.inputs_eta.row(a).transpose()};
            SensorTriple sb{ds.inputs_f.row(b).transpose(), ds.inputs_theta.row(b).transpose(),
                            ds.inputs_eta.row(b).transpose()};
            model_ratios.push_back(
                stability_ratio_model(model, ds.output_points, ds.output_weights, sa, sb));
            if (fem_ok) {
                FieldTriple fa{ds.nodal_f.row(a).transpose(), ds.nodal_theta.row(a).transpose(),
                               ds.nodal_eta.cols() ? Eigen::VectorXd(ds.nodal_eta.row(a).transpose())
                                                   : Eigen::VectorXd()};
                FieldTriple fb{ds.nodal_f.row(b).transpose(), ds.nodal_theta.row(b).transpose(),
                               ds.nodal_eta.cols() ? Eigen::VectorXd(ds.nodal_eta.row(b).transpose())
                                                   : Eigen::VectorXd()};
                fem_ratios.push_back(stability_ratio_fem(ctx, fa, fb));
            }
        }
        write_stability_csv(out_dir + "/stability.csv", model_ratios);
        j["stability"]["model"] = {{"ratios", model_ratios},
                                   {"max", *std::max_element(model_ratios.begin(), model_ratios.end())},
                                   {"count", model_ratios.size()}};
        if (fem_ok)
            j["stability"]["fem"] = {{"ratios", fem_ratios},
                                     {"max", *std::max_element(fem_ratios.begin(), fem_ratios.end())},
                                     {"count", fem_ratios.size()}};
        else
            VARMION_INFO("solver stability skipped: recipe has no conductivity field");
    }

    if (fl.covering) {
        selected.push_back("covering");
        const std::int64_t n_probes =
            std::min<std::int64_t>(knobs.covering_probes, ds.sample_count());
        std::vector<CoveringResult> rows;
        std::vector<double> radii_max, radii_sum;
        for (std::int64_t id = 0; id < n_probes; ++id) {
            const auto r = static_cast<Eigen::Index>(id);
            FieldTriple probe{ds.nodal_f.row(r).transpose(),
                              ds.nodal_theta.cols() ? Eigen::VectorXd(ds.nodal_theta.row(r).transpose())
                                                    : Eigen::VectorXd(),
                              ds.nodal_eta.cols() ? Eigen::VectorXd(ds.nodal_eta.row(r).transpose())
                                                  : Eigen::VectorXd()};
            rows.push_back(covering_radius(ds, ctx, ds.split_train, probe));
            radii_max.push_back(rows.back().radius_max);
            radii_sum.push_back(rows.back().radius_sum);
        }
        write_covering_csv(out_dir + "/covering.csv", rows);
        j["covering"] = {{"count", rows.size()},
                         {"radius_max", radii_max},
                         {"radius_sum", radii_sum},
                         {"median_radius_max", median(radii_max)},
                         {"train_samples", ds.split_train.size()}};
    }

    if (fl.quadrature) {
        selected.push_back("quadrature");
        const auto g = [](double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y); };
        const QuadratureFit mc = quadrature_convergence(g, 0.25, knobs.quadrature_counts,
                                                        knobs.quadrature_trials, seed);
        write_quadrature_csv(out_dir + "/quadrature.csv", mc);
        j["quadrature"] = {{"counts", mc.node_counts},
                           {"mean_abs_err", mc.mean_abs_err},
                           {"trials", knobs.quadrature_trials},
                           {"slope_mc", mc.slope}};
        bool squares = true;
        for (int L : knobs.quadrature_counts) {
            const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(L))));
            squares = squares && s * s == L;
        }
        if (squares) {
            // Midpoint lattices sum the sine probe exactly, so the grid rate
            // is measured on an integrand without that cancellation.
            const auto gexp = [](double x, double y) { return std::exp(x + y); };
            const double iexp = std::pow((std::exp(2.0) - 1.0) / 2.0, 2);
            const QuadratureFit grid =
                quadrature_convergence(gexp, iexp, knobs.quadrature_counts, 1, seed, true);
            j["quadrature"]["slope_grid"] = grid.slope;
        } else {
            VARMION_INFO("grid slope skipped: node counts are not perfect squares");
        }
    }

    if (fl.structural) {
        selected.push_back("structural");
        const std::int64_t n_rows = std::min<std::int64_t>(
            knobs.structural_rows, static_cast<std::int64_t>(ds.split_train.size()));
        if (n_rows == 0) throw MismatchError("structural estimate needs training samples");
        std::vector<std::int64_t> rows_ids(ds.split_train.begin(), ds.split_train.begin() + n_rows);
        const std::vector<StructuralRow> rows = structural_estimate(model, ds, ctx, rows_ids);
        write_structural_csv(out_dir + "/structural.csv", rows);
        std::vector<double> spectral, reduced;
        for (const StructuralRow& r : rows) {
            spectral.push_back(r.dist_spectral);
            reduced.push_back(r.dist_reduced);
        }
        j["structural"] = {{"count", rows.size()},
                           {"dist_spectral", spectral},
                           {"dist_reduced", reduced},
                           {"median_spectral", median(spectral)},
                           {"median_reduced", median(reduced)}};
    }

    j["selected"] = selected;
    write_json_file(out_dir + "/report.json", j);
    std::printf("report: %s/report.json\n", out_dir.c_str());
    std::printf("wall_seconds: %.3f\n", seconds_since(t0));
    return 0;
}

int run_guarded(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        VARMION_ERROR("config: %s", e.what());
        return 2;
    } catch (const SolverError& e) {
        VARMION_ERROR("solver: %s", e.what());
        return 3;
    } catch (const MismatchError& e) {
        VARMION_ERROR("mismatch: %s", e.what());
        return 4;
    } catch (const DivergenceError& e) {
        VARMION_ERROR("divergence: %s", e.what());
        return 5;
    } catch (const FrameError& e) {
        VARMION_ERROR("frame: %s", e.what());
        return 6;
    } catch (const nlohmann::json::exception& e) {
        VARMION_ERROR("config: %s", e.what());
        return 2;
    } catch (const std::exception& e) {
        VARMION_ERROR("%s", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
#if defined(VARMION_HAS_MALLOPT) && defined(M_MMAP_THRESHOLD)
    // keep big tensor buffers on the heap instead of round-tripping mmap
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"Operator-network workbench: data generation, training, evaluation, diagnostics"};
    app.require_subcommand(1);
    Flags fl;

    const auto add_common = [&](CLI::App* sub, bool with_config, bool with_dataset,
                                bool with_checkpoint) {
        if (with_config) sub->add_option("--config", fl.config, "experiment config (JSON)");
        if (with_dataset) sub->add_option("--dataset", fl.dataset, "dataset file (VMDS)");
        if (with_checkpoint) sub->add_option("--checkpoint", fl.checkpoint, "checkpoint file (VMCK)");
        sub->add_option("--out", fl.out, "output directory or file");
        sub->add_option("--seed", fl.seed, "override the config seed")
            ->each([&](const std::string&) { fl.seed_set = true; });
        sub->add_option("--threads", fl.threads, "worker threads, recorded in output metadata")
            ->check(CLI::PositiveNumber);
    };

    CLI::App* gen = app.add_subcommand("generate", "Build a dataset from an experiment config");
    add_common(gen, true, false, false);
    gen->get_option("--config")->required();

    CLI::App* train = app.add_subcommand("train", "Train an architecture on a dataset");
    add_common(train, true, true, false);
    train->get_option("--config")->required();
    train->get_option("--dataset")->required();

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    add_common(eval, true, true, true);
    eval->get_option("--dataset")->required();
    eval->get_option("--checkpoint")->required();
    eval->add_option("--fields", fl.fields, "emit nodal field tables for these sample ids");

    CLI::App* diag = app.add_subcommand("diagnose", "Run selected diagnostics on a checkpoint");
    add_common(diag, true, true, true);
    diag->get_option("--dataset")->required();
    diag->get_option("--checkpoint")->required();
    diag->add_flag("--covering", fl.covering, "covering radii of probes against the training split");
    diag->add_flag("--structural", fl.structural, "distance between the learned and assembled solvers");
    diag->add_flag("--stability", fl.stability, "output-change ratios under input perturbations");
    diag->add_flag("--lipschitz", fl.lipschitz, "spectral-norm Lipschitz estimate of the coefficient map");
    diag->add_flag("--quadrature", fl.quadrature, "Monte-Carlo quadrature convergence slopes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (app.got_subcommand(gen)) return run_guarded([&] { return cmd_generate(fl); });
    if (app.got_subcommand(train)) return run_guarded([&] { return cmd_train(fl); });
    if (app.got_subcommand(eval)) return run_guarded([&] { return cmd_eval(fl); });
    return run_guarded([&] { return cmd_diagnose(fl); });
}
