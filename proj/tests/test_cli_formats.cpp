#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "varmion/config.hpp"
#include "varmion/dataset.hpp"
#include "varmion/model.hpp"
#include "varmion/vmformat.hpp"

using namespace varmion;

namespace {

std::string tmp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "varmion_fmt_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

std::string file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void put_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

GenerateConfig tiny_heat2() {
    GenerateConfig cfg = default_generate_config("heat2");
    cfg.seed = 7;
    cfg.mesh_n = 8;
    cfg.sensors.count = 25;
    cfg.outputs.count = 10;
    cfg.n_samples = 12;
    return cfg;
}

GenerateConfig tiny_heat3() {
    GenerateConfig cfg = default_generate_config("heat3");
    cfg.seed = 7;
    cfg.mesh_n = 8;
    cfg.sensors.count = 25;
    cfg.sensors.boundary_per_side = 3;
    cfg.outputs.count = 10;
    cfg.n_f = 3;
    cfg.n_theta = 2;
    cfg.n_eta = 2;
    return cfg;
}

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (a.size() == 0) return true;
    return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("dataset file round trip is byte identical and field exact") {
    const Dataset ds = build_dataset(tiny_heat2());
    const std::string p1 = tmp_path("heat2.vmds");
    const std::string p2 = tmp_path("heat2_rewrite.vmds");
    write_dataset(p1, ds);
    const Dataset back = read_dataset(p1);
    write_dataset(p2, back);
    CHECK(file_bytes(p1) == file_bytes(p2));

    CHECK(back.metadata == ds.metadata);
    CHECK(same_matrix(back.sensors_interior, ds.sensors_interior));
    CHECK(same_matrix(back.sensors_boundary, ds.sensors_boundary));
    CHECK(same_matrix(back.output_points, ds.output_points));
    CHECK(back.output_weights.size() == ds.output_weights.size());
    CHECK((back.output_weights - ds.output_weights).norm() == 0.0);
    CHECK(same_matrix(back.inputs_f, ds.inputs_f));
    CHECK(same_matrix(back.inputs_theta, ds.inputs_theta));
    CHECK(same_matrix(back.inputs_eta, ds.inputs_eta));
    CHECK(same_matrix(back.labels, ds.labels));
    CHECK(same_matrix(back.nodal_f, ds.nodal_f));
    CHECK(same_matrix(back.nodal_theta, ds.nodal_theta));
    CHECK(same_matrix(back.nodal_eta, ds.nodal_eta));
    CHECK(same_matrix(back.nodal_u, ds.nodal_u));
    CHECK(back.split_train == ds.split_train);
    CHECK(back.split_val == ds.split_val);
    CHECK(back.split_test == ds.split_test);
    CHECK(back.factor_ids.size() == 0);
    CHECK(back.output_ids.empty());

    CHECK(label_hash(back.labels) == back.metadata.at("label_hash").get<std::string>());
}

TEST_CASE("nested dataset keeps its factor table through the file") {
    const Dataset ds = build_dataset(tiny_heat3());
    REQUIRE(ds.factor_ids.rows() == ds.sample_count());
    const std::string p1 = tmp_path("heat3.vmds");
    const std::string p2 = tmp_path("heat3_rewrite.vmds");
    write_dataset(p1, ds);
    const Dataset back = read_dataset(p1);
    write_dataset(p2, back);
    CHECK(file_bytes(p1) == file_bytes(p2));
    CHECK(same_matrix(back.factor_ids, ds.factor_ids));
    CHECK(back.metadata == ds.metadata);

    const GenerateConfig again = generate_config_from_metadata(back.metadata);
    const Dataset regen = build_dataset(again);
    CHECK(label_hash(regen.labels) == back.metadata.at("label_hash").get<std::string>());
}

TEST_CASE("checkpoint file round trip") {
    Rng rng(11);
    ArchitectureSpec spec = canonical_architecture("A3_varmion");
    InputDims dims{100, 100, 0};
    Model model(spec, dims, rng);

    CheckpointData ck;
    ck.arch = arch_to_json(model.spec(), model.dims());
    Adam opt(model.parameters(), AdamConfig{});
    for (Parameter* p : model.parameters()) ck.params.emplace_back(p->name, p->value);
    for (Parameter* p : model.parameters()) {
        if (!p->trainable) continue;
        ck.opt_arrays.emplace_back("m/" + p->name, opt.moment1(p->name));
        ck.opt_arrays.emplace_back("v/" + p->name, opt.moment2(p->name));
    }
    ck.opt_arrays.emplace_back("adam/step", Tensor({1}, {42.0}));
    ck.report = {{"train_loss", 0.125}, {"epochs", 7}, {"wall_seconds", 98.6}};

    const std::string p1 = tmp_path("model.vmck");
    const std::string p2 = tmp_path("model_rewrite.vmck");
    write_checkpoint(p1, ck);
    const CheckpointData back = read_checkpoint(p1);
    write_checkpoint(p2, back);
    CHECK(file_bytes(p1) == file_bytes(p2));

    CHECK(back.arch == ck.arch);
    REQUIRE(back.params.size() == ck.params.size());
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
        CHECK(back.params[i].first == ck.params[i].first);
        CHECK(back.params[i].second.shape == ck.params[i].second.shape);
        CHECK(back.params[i].second.data == ck.params[i].second.data);
    }
    REQUIRE(back.opt_arrays.size() == ck.opt_arrays.size());
    CHECK(back.opt_arrays.back().first == "adam/step");
    CHECK(back.opt_arrays.back().second.data[0] == 42.0);

    CHECK(back.report.at("train_loss") == 0.125);
    CHECK(back.report.at("epochs") == 7);
    // Stored wall clock is always zeroed so repeated runs match bit for bit.
    CHECK(back.report.at("wall_seconds") == 0.0);

    // The architecture block rebuilds the same network.
    auto [spec2, dims2] = arch_from_json(back.arch);
    Rng rng2(11);
    Model model2(spec2, dims2, rng2);
    CHECK(model2.count_parameters().learnable == model.count_parameters().learnable);
}

TEST_CASE("malformed files are rejected") {
    const Dataset ds = build_dataset(tiny_heat2());
    const std::string good = tmp_path("good.vmds");
    write_dataset(good, ds);
    const std::string bytes = file_bytes(good);

    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_dataset(tmp_path("nope.vmds")), FrameError);
    }
    SUBCASE("bad magic") {
        std::string b = bytes;
        b[0] = 'X';
        put_bytes(tmp_path("badmagic.vmds"), b);
        CHECK_THROWS_AS(read_dataset(tmp_path("badmagic.vmds")), FrameError);
    }
    SUBCASE("unsupported version") {
        std::string b = bytes;
        b[4] = 9;
        put_bytes(tmp_path("badver.vmds"), b);
        CHECK_THROWS_AS(read_dataset(tmp_path("badver.vmds")), FrameError);
    }
    SUBCASE("truncated payload") {
        put_bytes(tmp_path("trunc.vmds"), bytes.substr(0, bytes.size() / 2));
        CHECK_THROWS_AS(read_dataset(tmp_path("trunc.vmds")), FrameError);
    }
    SUBCASE("trailing garbage") {
        put_bytes(tmp_path("trail.vmds"), bytes + std::string(3, '\0'));
        CHECK_THROWS_AS(read_dataset(tmp_path("trail.vmds")), FrameError);
    }
    SUBCASE("wrong dtype tag") {
        std::string b = bytes;
        std::uint64_t meta_len = 0;
        std::memcpy(&meta_len, b.data() + 8, 8);
        // First array header sits right after the metadata block:
        // u16 name length, the 16 name bytes, then the dtype byte.
        const std::size_t dtype_at = 16 + meta_len + 2 + 16;
        REQUIRE(b[dtype_at] == 1);
        b[dtype_at] = 7;
        put_bytes(tmp_path("baddtype.vmds"), b);
        CHECK_THROWS_AS(read_dataset(tmp_path("baddtype.vmds")), FrameError);
    }
    SUBCASE("array out of order") {
        std::ostringstream ss;
        ss.write("VMDS", 4);
        const std::uint32_t ver = 1;
        ss.write(reinterpret_cast<const char*>(&ver), 4);
        const std::string meta = "{}";
        const std::uint64_t mlen = meta.size();
        ss.write(reinterpret_cast<const char*>(&mlen), 8);
        ss.write(meta.data(), static_cast<std::streamsize>(meta.size()));
        const std::string name = "bogus";
        const std::uint16_t nlen = static_cast<std::uint16_t>(name.size());
        ss.write(reinterpret_cast<const char*>(&nlen), 2);
        ss.write(name.data(), static_cast<std::streamsize>(name.size()));
        const char dtype = 1, rank = 2;
        ss.write(&dtype, 1);
        ss.write(&rank, 1);
        const std::uint64_t zero = 0;
        ss.write(reinterpret_cast<const char*>(&zero), 8);
        ss.write(reinterpret_cast<const char*>(&zero), 8);
        put_bytes(tmp_path("misordered.vmds"), ss.str());
        CHECK_THROWS_AS(read_dataset(tmp_path("misordered.vmds")), FrameError);
    }
    SUBCASE("checkpoint magic on dataset reader") {
        CheckpointData ck;
        ck.arch = {{"x", 1}};
        ck.report = nlohmann::json::object();
        const std::string p = tmp_path("tiny.vmck");
        write_checkpoint(p, ck);
        CHECK_THROWS_AS(read_dataset(p), FrameError);
        CHECK_THROWS_AS(read_checkpoint(good), FrameError);
    }
}

TEST_CASE("experiment config validation") {
    nlohmann::json base = {
        {"name", "smoke"},
        {"experiment", "heat2"},
        {"seed", 7},
        {"out_dir", "run"},
        {"pde", {{"n", 8}}},
        {"sensors",
         {{"layout", "uniform_grid"},
          {"count", 100},
          {"outputs", {{"recipe", "interior_random_plus_boundary"}, {"count", 40}}}}},
        {"dataset",
         {{"split", "randomized"}, {"n_samples", 20}, {"val_fraction", 0.2}, {"test_fraction", 0.2}}},
        {"train",
         {{"architecture", "A3_varmion"}, {"epochs", 8}, {"batch_size", 8}, {"lr", 1e-3},
          {"val_every", 2}}}};

    SUBCASE("valid config maps onto the generation and training settings") {
        const ExperimentConfig cfg = experiment_config_from_json(base);
        CHECK(cfg.name == "smoke");
        CHECK(cfg.generate.seed == 7);
        CHECK(cfg.train.seed == 7);
        CHECK(cfg.generate.mesh_n == 8);
        CHECK(cfg.generate.sensors.count == 100);
        CHECK(cfg.generate.outputs.count == 40);
        CHECK(cfg.generate.n_samples == 20);
        CHECK(cfg.architecture == "A3_varmion");
        CHECK(cfg.train.epochs == 8);
        CHECK(cfg.train.adam.lr == 1e-3);
        CHECK(cfg.out_dir == "run");
        // defaults fill whatever the file leaves out
        CHECK(cfg.train.patience == 50);
        CHECK(cfg.diagnostics.histogram_bins == 20);
    }
    SUBCASE("unknown keys are rejected at every level") {
        for (const auto& [pointer, key] :
             std::vector<std::pair<std::string, std::string>>{{"", "typo"},
                                                              {"/pde", "mesh"},
                                                              {"/sensors", "counts"},
                                                              {"/sensors/outputs", "n"},
                                                              {"/dataset", "samples"},
                                                              {"/train", "learning_rate"}}) {
            nlohmann::json bad = base;
            bad[nlohmann::json::json_pointer(pointer)][key] = 1;
            CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
        }
    }
    SUBCASE("enum and range violations") {
        auto expect_reject = [&](const std::string& pointer, const nlohmann::json& value) {
            nlohmann::json bad = base;
            bad[nlohmann::json::json_pointer(pointer)] = value;
            CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
        };
        expect_reject("/experiment", "heat4");
        expect_reject("/pde/n", 1);
        expect_reject("/pde/dirichlet", "weak");
        expect_reject("/sensors/layout", "hexagonal");
        expect_reject("/sensors/outputs/recipe", "everywhere");
        expect_reject("/dataset/val_fraction", 1.5);
        expect_reject("/dataset/n_samples", 0);
        expect_reject("/train/architecture", "A9_varmion");
        expect_reject("/train/lr", 0.0);
        expect_reject("/train/lr_decay", 1.5);
    }
    SUBCASE("split-specific keys must match the split kind") {
        nlohmann::json bad = base;
        bad["dataset"]["n_f"] = 4;
        CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
        nlohmann::json nested = base;
        nested["dataset"] = {{"split", "nested"}, {"n_f", 3}, {"n_theta", 2},
                             {"val_fraction", 0.2}, {"test_fraction", 0.2}};
        const ExperimentConfig cfg = experiment_config_from_json(nested);
        CHECK(cfg.generate.split.kind == "nested");
        CHECK(cfg.generate.n_f == 3);
        nested["dataset"]["n_samples"] = 10;
        CHECK_THROWS_AS(experiment_config_from_json(nested), ConfigError);
    }
    SUBCASE("field-specific sections respect the recipe") {
        nlohmann::json bad = base;
        bad["grf"] = {{"eta", {{"length_scale", 0.3}}}};
        CHECK_THROWS_AS(experiment_config_from_json(bad), ConfigError);
        bad["grf"] = {{"theta", {{"length_scale", 0.3}}}};
        CHECK(experiment_config_from_json(bad).generate.grf_theta.length_scale == 0.3);
        nlohmann::json eik = base;
        eik["experiment"] = "eikonal";
        eik["sensors"]["outputs"] = {{"recipe", "random_mesh_nodes"}, {"count", 40}};
        eik["pde"]["eikonal"] = {{"tol", 1e-5}};
        const ExperimentConfig cfg = experiment_config_from_json(eik);
        CHECK(cfg.generate.eikonal.tol == 1e-5);
        nlohmann::json heat_eik = base;
        heat_eik["pde"]["eikonal"] = {{"tol", 1e-5}};
        CHECK_THROWS_AS(experiment_config_from_json(heat_eik), ConfigError);
    }
    SUBCASE("missing required keys") {
        nlohmann::json no_name = base;
        no_name.erase("name");
        CHECK_THROWS_AS(experiment_config_from_json(no_name), ConfigError);
        nlohmann::json no_arch = base;
        no_arch["train"].erase("architecture");
        CHECK_THROWS_AS(experiment_config_from_json(no_arch), ConfigError);
        CHECK_THROWS_AS(load_experiment_config(tmp_path("does_not_exist.json")), ConfigError);
    }
}

namespace {

int run_cli(const std::string& args, const std::string& capture = "") {
    std::string cmd = std::string(VARMION_BIN) + " " + args;
    cmd += capture.empty() ? " >/dev/null" : " >" + capture;
    cmd += " 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string grep_value(const std::string& path, const std::string& key) {
    std::ifstream is(path);
    std::string line;
    while (std::getline(is, line))
        if (line.rfind(key + ": ", 0) == 0) return line.substr(key.size() + 2);
    return "";
}

std::string cli_dir(const std::string& rel) {
    const auto dir = std::filesystem::temp_directory_path() / "varmion_cli_tests";
    std::filesystem::create_directories(dir);
    return (dir / rel).string();
}

void write_config(const std::string& path, const nlohmann::json& j) {
    std::ofstream os(path, std::ios::trunc);
    os << j.dump(2);
}

nlohmann::json smoke_config() {
    return {{"name", "smoke"},
            {"experiment", "heat2"},
            {"seed", 7},
            {"out_dir", cli_dir("run")},
            {"pde", {{"n", 8}}},
            {"sensors",
             {{"layout", "uniform_grid"},
              {"count", 100},
              {"outputs", {{"recipe", "interior_random_plus_boundary"}, {"count", 40}}}}},
            {"dataset", {{"split", "randomized"}, {"n_samples", 20},
                         {"val_fraction", 0.2}, {"test_fraction", 0.2}}},
            {"train", {{"architecture", "A3_varmion"}, {"epochs", 8}, {"batch_size", 8},
                       {"lr", 1e-3}, {"val_every", 2}}},
            {"diagnostics", {{"covering_probes", 6}, {"stability_probes", 5},
                             {"lipschitz_pairs", 40}, {"quadrature_trials", 10},
                             {"quadrature_counts", {100, 400, 1600}}}}};
}

}  // namespace

TEST_CASE("cli pipeline: generate, train, eval, diagnose") {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string cfg_path = cli_dir("smoke.json");
    write_config(cfg_path, smoke_config());
    const std::string run = cli_dir("run");

    // generate, twice: identical bytes and identical printed label hash
    REQUIRE(run_cli("generate --config " + cfg_path, cli_dir("gen1.txt")) == 0);
    REQUIRE(run_cli("generate --config " + cfg_path + " --out " + run + "/d2.vmds",
                    cli_dir("gen2.txt")) == 0);
    const std::string ds_path = run + "/dataset.vmds";
    CHECK(file_bytes(ds_path) == file_bytes(run + "/d2.vmds"));
    const std::string hash1 = grep_value(cli_dir("gen1.txt"), "label_hash");
    CHECK(hash1.size() == 16);
    CHECK(hash1 == grep_value(cli_dir("gen2.txt"), "label_hash"));
    CHECK(grep_value(cli_dir("gen1.txt"), "samples") == "20");

    const Dataset ds = read_dataset(ds_path);
    CHECK(ds.metadata.at("label_hash").get<std::string>() == hash1);
    CHECK(ds.metadata.at("threads").get<int>() == 1);

    // train, the same command twice: identical checkpoint and report bytes
    const std::string train_cmd = "train --config " + cfg_path + " --dataset " + ds_path;
    REQUIRE(run_cli(train_cmd, cli_dir("tr1.txt")) == 0);
    const std::string ck_bytes = file_bytes(run + "/checkpoint.vmck");
    const std::string rep_bytes = file_bytes(run + "/report.json");
    REQUIRE(run_cli(train_cmd, cli_dir("tr2.txt")) == 0);
    CHECK(file_bytes(run + "/checkpoint.vmck") == ck_bytes);
    CHECK(file_bytes(run + "/report.json") == rep_bytes);
    {
        std::ifstream is(run + "/report.json");
        const nlohmann::json rep = nlohmann::json::parse(is);
        CHECK(rep.at("wall_seconds").get<double>() == 0.0);
        CHECK(rep.at("architecture") == "A3_varmion");
        CHECK(rep.at("epsilon_t").get<double>() > 0.0);
        CHECK(rep.at("threads").get<int>() == 1);
    }

    // eval: schema row counts, field tables, rerun-stable outputs
    const std::string ev = cli_dir("eval");
    REQUIRE(run_cli("eval --checkpoint " + run + "/checkpoint.vmck --dataset " + ds_path +
                    " --out " + ev + " --fields 3", cli_dir("ev1.txt")) == 0);
    {
        std::ifstream is(ev + "/errors.csv");
        std::string line;
        std::size_t rows = 0;
        std::getline(is, line);
        CHECK(line == "sample_id,rel_l2");
        while (std::getline(is, line)) ++rows;
        CHECK(rows == ds.split_test.size());
        for (const char* tag : {"predicted", "true", "error"}) {
            std::ifstream fs(ev + "/field_" + std::string(tag) + "_3.csv");
            REQUIRE(fs.good());
            std::size_t n = 0;
            while (std::getline(fs, line)) ++n;
            CHECK(n == 82);  // header + one row per mesh node at n=8
        }
        std::ifstream rs(ev + "/report.json");
        const nlohmann::json rep = nlohmann::json::parse(rs);
        CHECK(rep.at("split") == "test");
        CHECK(rep.at("quadrature_output_nodes").at("count").get<int>() ==
              static_cast<int>(ds.split_test.size()));
        CHECK(rep.at("quadrature_dense_grid").contains("mean"));
    }
    REQUIRE(run_cli("eval --checkpoint " + run + "/checkpoint.vmck --dataset " + ds_path +
                    " --out " + cli_dir("eval_b"), cli_dir("ev2.txt")) == 0);
    CHECK(file_bytes(ev + "/errors.csv") == file_bytes(cli_dir("eval_b") + "/errors.csv"));
    CHECK(file_bytes(ev + "/report.json") == file_bytes(cli_dir("eval_b") + "/report.json"));

    // diagnose: training-sample probes sit at radius zero, reports are rerun-stable
    const std::string dg = cli_dir("diag");
    REQUIRE(run_cli("diagnose --checkpoint " + run + "/checkpoint.vmck --dataset " + ds_path +
                    " --config " + cfg_path + " --out " + dg +
                    " --covering --stability --lipschitz --quadrature", cli_dir("dg1.txt")) == 0);
    {
        std::ifstream is(dg + "/covering.csv");
        std::string line;
        std::getline(is, line);
        CHECK(line == "probe_id,radius_max,radius_sum,nearest_max,nearest_sum");
        std::int64_t probe = 0;
        while (std::getline(is, line)) {
            const bool in_train = std::find(ds.split_train.begin(), ds.split_train.end(), probe) !=
                                  ds.split_train.end();
            if (in_train) {
                const std::string expect = std::to_string(probe) + ",0,0," + std::to_string(probe) +
                                           "," + std::to_string(probe);
                CHECK(line == expect);
            }
            ++probe;
        }
        CHECK(probe == 6);
        std::ifstream rs(dg + "/report.json");
        const nlohmann::json rep = nlohmann::json::parse(rs);
        CHECK(rep.at("lipschitz").at("pairs_used").get<int>() == 40);
        CHECK(rep.at("quadrature").at("slope_mc").get<double>() < -0.3);
        CHECK(rep.at("quadrature").at("slope_grid").get<double>() <
              rep.at("quadrature").at("slope_mc").get<double>());
        CHECK(rep.at("stability").at("model").at("max").get<double>() > 0.0);
        CHECK(rep.at("stability").at("fem").at("count").get<int>() == 5);
        const auto quad_lines = [&](const std::string& p) {
            std::ifstream qs(p);
            std::size_t n = 0;
            std::string l;
            while (std::getline(qs, l)) ++n;
            return n;
        };
        CHECK(quad_lines(dg + "/quadrature.csv") == 4);  // header + three node counts
    }
    REQUIRE(run_cli("diagnose --checkpoint " + run + "/checkpoint.vmck --dataset " + ds_path +
                    " --config " + cfg_path + " --out " + cli_dir("diag_b") +
                    " --covering --stability --lipschitz --quadrature", cli_dir("dg2.txt")) == 0);
    CHECK(file_bytes(dg + "/report.json") == file_bytes(cli_dir("diag_b") + "/report.json"));

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(wall < 300.0);  // the smoke pipeline has a five-minute budget
}

TEST_CASE("cli exit codes follow the error taxonomy") {
    const std::string cfg_path = cli_dir("smoke.json");
    write_config(cfg_path, smoke_config());
    const std::string ds_path = cli_dir("run") + "/dataset.vmds";
    if (!std::filesystem::exists(ds_path))
        REQUIRE(run_cli("generate --config " + cfg_path) == 0);

    SUBCASE("schema violations and missing files exit 2") {
        nlohmann::json bad = smoke_config();
        bad["typo"] = 1;
        write_config(cli_dir("bad.json"), bad);
        CHECK(run_cli("generate --config " + cli_dir("bad.json")) == 2);
        CHECK(run_cli("generate --config " + cli_dir("missing.json")) == 2);
        CHECK(run_cli("train --config " + cfg_path + " --dataset " + cli_dir("missing.vmds")) == 2);
        write_config(cli_dir("notjson.json"), nlohmann::json());
        std::ofstream(cli_dir("notjson.json"), std::ios::trunc) << "{broken";
        CHECK(run_cli("generate --config " + cli_dir("notjson.json")) == 2);
        CHECK(run_cli("diagnose --checkpoint x --dataset y") == 2);  // no selectors
    }
    SUBCASE("family mismatch exits 4") {
        nlohmann::json eik = smoke_config();
        eik["name"] = "smoke_eik";
        eik["experiment"] = "eikonal";
        eik["pde"] = {{"n", 16}};
        eik["sensors"] = {{"layout", "uniform_grid"}, {"count", 100},
                          {"outputs", {{"recipe", "random_mesh_nodes"}, {"count", 40}}}};
        eik["dataset"] = {{"split", "randomized"}, {"n_samples", 6},
                          {"val_fraction", 0.2}, {"test_fraction", 0.2}};
        write_config(cli_dir("eik.json"), eik);
        REQUIRE(run_cli("generate --config " + cli_dir("eik.json") + " --out " +
                        cli_dir("eik.vmds")) == 0);
        CHECK(run_cli("train --config " + cli_dir("eik.json") + " --dataset " + cli_dir("eik.vmds") +
                      " --out " + cli_dir("eik_out")) == 4);
    }
    SUBCASE("divergence exits 5") {
        nlohmann::json diverge = smoke_config();
        diverge["train"]["lr"] = 1e9;
        diverge["train"]["epochs"] = 3;
        write_config(cli_dir("diverge.json"), diverge);
        CHECK(run_cli("train --config " + cli_dir("diverge.json") + " --dataset " + ds_path +
                      " --out " + cli_dir("dv_out")) == 5);
    }
    SUBCASE("structural frame violation exits 6") {
        CHECK(run_cli("train --config " + cfg_path + " --dataset " + ds_path + " --out " +
                      cli_dir("fv_out")) == 0);
        CHECK(run_cli("diagnose --checkpoint " + cli_dir("fv_out") + "/checkpoint.vmck" +
                      " --dataset " + ds_path + " --structural --out " + cli_dir("fv_diag")) == 6);
    }
}
