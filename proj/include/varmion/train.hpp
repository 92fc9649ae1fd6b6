#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "varmion/dataset.hpp"
#include "varmion/model.hpp"
#include "varmion/vmformat.hpp"

namespace varmion {

struct TrainConfig {
    std::uint64_t seed = 1;
    int epochs = 1000;
    int batch_size = 64;
    AdamConfig adam;
    int val_every = 10;   // epochs between validation passes
    int patience = 50;    // validation passes without improvement; <= 0 disables
    double grad_clip = 0.0;   // global-norm threshold, 0 disables
    double lr_decay = 1.0;    // multiplied into the rate once per epoch
    int train_prefix = 0;     // use only the first N training ids when > 0
    std::string checkpoint_path;  // written on every validation improvement
    int threads = 1;
};

struct TrainReport {
    std::vector<double> train_curve;  // mean sample loss per epoch
    std::vector<int> val_epochs;
    std::vector<double> val_curve;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    double final_train_loss = 0.0;
    double epsilon_t = 0.0;
    std::int64_t epsilon_t_sample = -1;
    std::int64_t train_samples = 0;
    std::int64_t val_samples = 0;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    int threads = 1;
};

nlohmann::json report_to_json(const TrainReport& r);
TrainReport report_from_json(const nlohmann::json& j);

// Mean over rows of the weighted squared error: (1/B) sum_j sum_l w_l e_jl^2.
// Throws SolverError naming the first sample with a non-finite prediction.
double loss_pi(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& labels,
               const Eigen::VectorXd& weights);

// Per-row weighted squared errors, the summands of loss_pi.
Eigen::VectorXd pi_per_sample(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& labels,
                              const Eigen::VectorXd& weights);

// d loss_pi / d pred.
Eigen::MatrixXd loss_pi_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& labels,
                             const Eigen::VectorXd& weights);

// Scales every trainable gradient so their joint norm is at most max_norm.
// Returns the pre-clip norm.
double clip_gradients(const std::vector<Parameter*>& params, double max_norm);

// Eval-mode mean loss of the model over the given dataset rows.
double evaluate_loss(Model& model, const Dataset& ds, const std::vector<std::int64_t>& ids);

struct EpsilonT {
    double value = 0.0;
    std::int64_t sample = -1;  // dataset row attaining the max
};

// Largest per-sample loss over the given rows: the tightest certificate that
// every training sample sits below it.
EpsilonT epsilon_t(Model& model, const Dataset& ds, const std::vector<std::int64_t>& ids);

TrainReport train(Model& model, const Dataset& ds, const TrainConfig& cfg);

// Checkpoint glue. Optimizer state rides along when opt is given.
CheckpointData capture_checkpoint(Model& model, const Adam* opt, const TrainReport* report);
void restore_parameters(Model& model, Adam* opt, const CheckpointData& ck);
Model model_from_checkpoint(const CheckpointData& ck);

}  // namespace varmion
