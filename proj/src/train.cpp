#include "varmion/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "varmion/common.hpp"

namespace varmion {

namespace {

// Hard abort threshold relative to the pre-training loss.
constexpr double kDivergenceFactor = 1e6;

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

void check_loss_args(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& labels,
                     const Eigen::VectorXd& weights) {
    if (pred.rows() != labels.rows() || pred.cols() != labels.cols())
        throw MismatchError("prediction " + std::to_string(pred.rows()) + "x" +
                            std::to_string(pred.cols()) + " vs labels " +
                            std::to_string(labels.rows()) + "x" + std::to_string(labels.cols()));
    if (weights.size() != pred.cols())
        throw MismatchError("weight count " + std::to_string(weights.size()) +
                            " vs output count " + std::to_string(pred.cols()));
}

}  // namespace

Eigen::VectorXd pi_per_sample(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& labels,
                              const Eigen::VectorXd& weights) {
    check_loss_args(pred, labels, weights);
    Eigen::VectorXd pi(pred.rows());
    for (Eigen::Index j = 0; j < pred.rows(); ++j) {
        if (!pred.row(j).allFinite())
            throw SolverError("non-finite prediction for sample " + std::to_string(j));
        const Eigen::ArrayXd e = (pred.row(j) - labels.row(j)).transpose().array();
        pi[j] = (weights.array() * e * e).sum();
    }
    return pi;
}

double loss_pi(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& labels,
               const Eigen::VectorXd& weights) {
    if (pred.rows() == 0) throw MismatchError("loss over an empty batch");
    return pi_per_sample(pred, labels, weights).mean();
}

Eigen::MatrixXd loss_pi_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& labels,
                             const Eigen::VectorXd& weights) {
    check_loss_args(pred, labels, weights);
    const double scale = 2.0 / static_cast<double>(pred.rows());
    return scale * ((pred - labels).array().rowwise() * weights.transpose().array()).matrix();
}

double clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
    double sq = 0.0;
    for (const Parameter* p : params) {
        if (!p->trainable) continue;
        for (double g : p->grad.data) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (Parameter* p : params) {
            if (!p->trainable) continue;
            for (double& g : p->grad.data) g *= scale;
        }
    }
    return norm;
}

double evaluate_loss(Model& model, const Dataset& ds, const std::vector<std::int64_t>& ids) {
    if (ids.empty()) throw MismatchError("loss over an empty id list");
    const Eigen::MatrixXd pred =
        model.forward(gather_rows(ds.inputs_f, ids), gather_rows(ds.inputs_theta, ids),
                      gather_rows(ds.inputs_eta, ids), ds.output_points, false);
    return loss_pi(pred, gather_rows(ds.labels, ids), ds.output_weights);
}

EpsilonT epsilon_t(Model& model, const Dataset& ds, const std::vector<std::int64_t>& ids) {
    if (ids.empty()) throw MismatchError("epsilon_t over an empty id list");
    const Eigen::MatrixXd pred =
        model.forward(gather_rows(ds.inputs_f, ids), gather_rows(ds.inputs_theta, ids),
                      gather_rows(ds.inputs_eta, ids), ds.output_points, false);
    const Eigen::VectorXd pi = pi_per_sample(pred, gather_rows(ds.labels, ids), ds.output_weights);
    EpsilonT out;
    Eigen::Index arg = 0;
    out.value = pi.maxCoeff(&arg);
    out.sample = ids[static_cast<std::size_t>(arg)];
    return out;
}

nlohmann::json report_to_json(const TrainReport& r) {
    return nlohmann::json{{"train_curve", r.train_curve},
                          {"val_epochs", r.val_epochs},
                          {"val_curve", r.val_curve},
                          {"best_epoch", r.best_epoch},
                          {"best_val_loss", r.best_val_loss},
                          {"final_train_loss", r.final_train_loss},
                          {"epsilon_t", r.epsilon_t},
                          {"epsilon_t_sample", r.epsilon_t_sample},
                          {"train_samples", r.train_samples},
                          {"val_samples", r.val_samples},
                          {"wall_seconds", r.wall_seconds},
                          {"seed", r.seed},
                          {"threads", r.threads}};
}

TrainReport report_from_json(const nlohmann::json& j) {
    TrainReport r;
    r.train_curve = j.at("train_curve").get<std::vector<double>>();
    r.val_epochs = j.at("val_epochs").get<std::vector<int>>();
    r.val_curve = j.at("val_curve").get<std::vector<double>>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_val_loss = j.at("best_val_loss").get<double>();
    r.final_train_loss = j.at("final_train_loss").get<double>();
    r.epsilon_t = j.at("epsilon_t").get<double>();
    r.epsilon_t_sample = j.at("epsilon_t_sample").get<std::int64_t>();
    r.train_samples = j.at("train_samples").get<std::int64_t>();
    r.val_samples = j.at("val_samples").get<std::int64_t>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.threads = j.at("threads").get<int>();
    return r;
}

TrainReport train(Model& model, const Dataset& ds, const TrainConfig& cfg) {
    if (cfg.epochs <= 0 || cfg.batch_size <= 0 || cfg.val_every <= 0 || cfg.adam.lr <= 0.0)
        throw ConfigError("training needs positive epochs, batch size, cadence, and rate");

    std::vector<std::int64_t> ids_train = ds.split_train;
    if (cfg.train_prefix > 0) {
        if (static_cast<std::size_t>(cfg.train_prefix) > ids_train.size())
            throw ConfigError("train_prefix " + std::to_string(cfg.train_prefix) +
                              " exceeds the training split of " + std::to_string(ids_train.size()));
        ids_train.resize(static_cast<std::size_t>(cfg.train_prefix));
    }
    if (ids_train.empty()) throw ConfigError("dataset has no training samples");
    const std::vector<std::int64_t>& ids_val = ds.split_val;

    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.seed = cfg.seed;
    report.threads = cfg.threads;
    report.train_samples = static_cast<std::int64_t>(ids_train.size());
    report.val_samples = static_cast<std::int64_t>(ids_val.size());
    report.best_val_loss = -1.0;  // stays negative when there is no validation split

    Adam opt(model.parameters(), cfg.adam);
    const std::vector<Parameter*> all_params = model.parameters();

    const double initial_loss = evaluate_loss(model, ds, ids_train);
    const double abort_above = kDivergenceFactor * std::max(initial_loss, 1e-12);

    std::vector<Tensor> best_values;
    double best_val = std::numeric_limits<double>::infinity();
    int evals_since_improvement = 0;
    double lr = cfg.adam.lr;

    std::vector<std::int64_t> order = ids_train;
    std::vector<std::int64_t> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch > 0 && cfg.lr_decay != 1.0) {
            lr *= cfg.lr_decay;
            opt.set_lr(lr);
        }
        Rng shuffle_rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(epoch));
        shuffle(order, shuffle_rng);

        double accumulated = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
            const Eigen::MatrixXd y = gather_rows(ds.labels, batch);
            opt.zero_grad();
            const Eigen::MatrixXd pred =
                model.forward(gather_rows(ds.inputs_f, batch), gather_rows(ds.inputs_theta, batch),
                              gather_rows(ds.inputs_eta, batch), ds.output_points, true);
            accumulated += loss_pi(pred, y, ds.output_weights) * static_cast<double>(batch.size());
            model.backward(loss_pi_grad(pred, y, ds.output_weights));
            if (cfg.grad_clip > 0.0) clip_gradients(opt.params(), cfg.grad_clip);
            opt.step();
        }
        const double epoch_loss = accumulated / static_cast<double>(order.size());
        report.train_curve.push_back(epoch_loss);
        if (epoch_loss > abort_above)
            throw DivergenceError("training loss " + std::to_string(epoch_loss) + " at epoch " +
                                  std::to_string(epoch) + " exceeds " + std::to_string(abort_above));

        const bool last_epoch = epoch == cfg.epochs - 1;
        if (!ids_val.empty() && ((epoch + 1) % cfg.val_every == 0 || last_epoch)) {
            const double vloss = evaluate_loss(model, ds, ids_val);
            report.val_epochs.push_back(epoch);
            report.val_curve.push_back(vloss);
            VARMION_DEBUG("epoch %d train %.6g val %.6g", epoch, epoch_loss, vloss);
            if (vloss < best_val) {
                best_val = vloss;
                report.best_epoch = epoch;
                evals_since_improvement = 0;
                best_values.clear();
                for (const Parameter* p : all_params) best_values.push_back(p->value);
                if (!cfg.checkpoint_path.empty())
                    write_checkpoint(cfg.checkpoint_path, capture_checkpoint(model, &opt, nullptr));
            } else if (cfg.patience > 0 && ++evals_since_improvement >= cfg.patience) {
                VARMION_INFO("stopping at epoch %d: %d evaluations without improvement", epoch,
                             evals_since_improvement);
                break;
            }
        }
    }

    if (!best_values.empty()) {
        for (std::size_t i = 0; i < all_params.size(); ++i) all_params[i]->value = best_values[i];
        report.best_val_loss = best_val;
    } else if (report.best_epoch < 0) {
        report.best_epoch = static_cast<int>(report.train_curve.size()) - 1;
    }

    report.final_train_loss = evaluate_loss(model, ds, ids_train);
    const EpsilonT et = epsilon_t(model, ds, ids_train);
    report.epsilon_t = et.value;
    report.epsilon_t_sample = et.sample;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!cfg.checkpoint_path.empty())
        write_checkpoint(cfg.checkpoint_path, capture_checkpoint(model, &opt, &report));
    return report;
}

CheckpointData capture_checkpoint(Model& model, const Adam* opt, const TrainReport* report) {
    CheckpointData ck;
    ck.arch = arch_to_json(model.spec(), model.dims());
    for (const Parameter* p : model.parameters()) ck.params.emplace_back(p->name, p->value);
    if (opt != nullptr) {
        Adam& o = const_cast<Adam&>(*opt);
        for (const Parameter* p : opt->params()) {
            ck.opt_arrays.emplace_back("m/" + p->name, o.moment1(p->name));
            ck.opt_arrays.emplace_back("v/" + p->name, o.moment2(p->name));
        }
        ck.opt_arrays.emplace_back("adam/step",
                                   Tensor({1}, {static_cast<double>(opt->step_count())}));
    }
    ck.report = report != nullptr ? report_to_json(*report) : nlohmann::json::object();
    return ck;
}

void restore_parameters(Model& model, Adam* opt, const CheckpointData& ck) {
    const std::vector<Parameter*> params = model.parameters();
    std::size_t used = 0;
    for (const auto& [name, value] : ck.params) {
        Parameter* hit = nullptr;
        for (Parameter* p : params)
            if (p->name == name) {
                hit = p;
                break;
            }
        if (hit == nullptr) throw MismatchError("checkpoint parameter '" + name + "' has no home");
        if (hit->value.shape != value.shape)
            throw MismatchError("checkpoint parameter '" + name + "' is " +
                                Tensor::shape_str(value.shape) + ", model wants " +
                                Tensor::shape_str(hit->value.shape));
        hit->value = value;
        ++used;
    }
    if (used != params.size())
        throw MismatchError("checkpoint carries " + std::to_string(used) + " of " +
                            std::to_string(params.size()) + " model parameters");
    if (opt != nullptr) {
        for (const auto& [name, value] : ck.opt_arrays) {
            if (name == "adam/step") {
                opt->set_step_count(std::llround(value.data.at(0)));
            } else if (name.rfind("m/", 0) == 0) {
                Tensor& m = opt->moment1(name.substr(2));
                if (m.shape != value.shape) throw MismatchError("optimizer array '" + name + "' shape");
                m = value;
            } else if (name.rfind("v/", 0) == 0) {
                Tensor& v = opt->moment2(name.substr(2));
                if (v.shape != value.shape) throw MismatchError("optimizer array '" + name + "' shape");
                v = value;
            } else {
                throw MismatchError("unrecognized optimizer array '" + name + "'");
            }
        }
    }
}

Model model_from_checkpoint(const CheckpointData& ck) {
    auto [spec, dims] = arch_from_json(ck.arch);
    Rng rng(0);
    Model model(spec, dims, rng);
    restore_parameters(model, nullptr, ck);
    return model;
}

}  // namespace varmion
