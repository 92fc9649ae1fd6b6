#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "varmion/nn.hpp"

namespace varmion {

enum class Family { varmion_linear, varmion_nl, varmion_c, deeponet, mionet };

std::string family_name(Family f);
Family family_from_string(const std::string& s);

enum class TrunkKind { relu_mlp, rbf };

std::string trunk_kind_name(TrunkKind t);
TrunkKind trunk_kind_from_string(const std::string& s);

// Input widths of one dataset: interior sensors for f, interior sensors for
// theta, boundary flux sensors. Zero width means the input is absent.
struct InputDims {
    int k_f = 0;
    int k_theta = 0;
    int k_eta = 0;
};

// Declarative network description. Branch lists may be empty where a family
// fills in a default (mionet side branches become plain linear maps; the
// trunk is built from trunk_kind and p when no explicit layers are given).
struct ArchitectureSpec {
    std::string name;
    Family family = Family::deeponet;
    int p = 0;
    TrunkKind trunk_kind = TrunkKind::relu_mlp;
    std::vector<LayerSpec> trunk;
    std::vector<LayerSpec> theta_branch;  // varmion_linear: matrix net; mionet: theta factor
    std::vector<LayerSpec> f_branch;      // deeponet: whole branch; mionet: f factor; varmion_nl/_c: coefficient net
    std::vector<LayerSpec> eta_branch;    // mionet: flux factor
};

// The fifteen canonical model recipes used by the experiment configs.
ArchitectureSpec canonical_architecture(const std::string& name);
std::vector<std::string> canonical_architecture_names();

nlohmann::json layer_to_json(const LayerSpec& s);
LayerSpec layer_from_json(const nlohmann::json& j);
nlohmann::json arch_to_json(const ArchitectureSpec& spec, const InputDims& dims);
std::pair<ArchitectureSpec, InputDims> arch_from_json(const nlohmann::json& j);

struct ParamCounts {
    std::int64_t learnable = 0;
    std::int64_t with_bias_variant = 0;  // learnable plus one bias per bias-free linear map
};

// Operator network: per-sample coefficient vector c in R^p from the sensed
// inputs, trunk values T (L,p) at the query points, predictions P = C T^T.
class Model {
  public:
    Model(ArchitectureSpec spec, InputDims dims, Rng& rng);

    // F (B,k_f), Theta (B,k_theta), N (B,k_eta); absent inputs pass 0-column
    // matrices with B rows. X is (L,2). Returns (B,L).
    Eigen::MatrixXd forward(const Eigen::MatrixXd& F, const Eigen::MatrixXd& Theta, const Eigen::MatrixXd& N,
                            const Eigen::MatrixXd& X, bool train);

    // Accumulates parameter gradients from dLoss/dP of the last forward.
    void backward(const Eigen::MatrixXd& dP);

    std::vector<Parameter*> parameters();
    ParamCounts count_parameters() const;

    const ArchitectureSpec& spec() const { return spec_; }
    const InputDims& dims() const { return dims_; }
    int p() const { return spec_.p; }
    Family family() const { return spec_.family; }
    nlohmann::json to_json() const { return arch_to_json(spec_, dims_); }

    // Diagnostics access, eval mode.
    Eigen::MatrixXd trunk_values(const Eigen::MatrixXd& X);
    Eigen::MatrixXd coefficient_matrix(const Eigen::MatrixXd& theta_row);  // varmion_linear: D(theta), (p,p)
    Eigen::MatrixXd matrix_A() const;                                      // varmion_linear: (p,k_f)
    Eigen::MatrixXd matrix_A_tilde() const;                                // varmion_linear: (p,k_eta)

  private:
    Eigen::MatrixXd coefficients(const Eigen::MatrixXd& F, const Eigen::MatrixXd& Theta, const Eigen::MatrixXd& N,
                                 bool train);
    void coefficients_backward(const Eigen::MatrixXd& dC);

    ArchitectureSpec spec_;
    InputDims dims_;

    std::unique_ptr<Sequential> trunk_;
    std::unique_ptr<Sequential> theta_net_;  // varmion_linear matrix net / mionet theta factor
    std::unique_ptr<Sequential> f_net_;      // deeponet branch / mionet f factor / varmion_nl coefficient net
    std::unique_ptr<Sequential> eta_net_;    // mionet flux factor
    std::unique_ptr<Sequential> a_map_;      // varmion_linear A, varmion_nl/_c input map
    std::unique_ptr<Sequential> atilde_map_;

    // forward caches
    Eigen::MatrixXd C_, T_;
    std::vector<Eigen::MatrixXd> D_batch_;  // varmion_linear per-sample matrices
    Eigen::MatrixXd Z_, ZN_, Cn_;
    bool train_ = false;
    bool has_forward_ = false;
};

// Converts between row-per-sample Eigen matrices and batched tensors.
Tensor tensor_from_matrix(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_tensor(const Tensor& t);

}  // namespace varmion
