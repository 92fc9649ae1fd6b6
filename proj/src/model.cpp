#include "varmion/model.hpp"

#include <utility>

namespace varmion {

std::string family_name(Family f) {
    switch (f) {
        case Family::varmion_linear: return "varmion_linear";
        case Family::varmion_nl: return "varmion_nl";
        case Family::varmion_c: return "varmion_c";
        case Family::deeponet: return "deeponet";
        case Family::mionet: return "mionet";
    }
    throw ConfigError("bad family enum");
}

Family family_from_string(const std::string& s) {
    for (Family f : {Family::varmion_linear, Family::varmion_nl, Family::varmion_c, Family::deeponet, Family::mionet})
        if (family_name(f) == s) return f;
    throw ConfigError("unknown model family '" + s + "'");
}

std::string trunk_kind_name(TrunkKind t) { return t == TrunkKind::relu_mlp ? "relu_mlp" : "rbf"; }

TrunkKind trunk_kind_from_string(const std::string& s) {
    if (s == "relu_mlp") return TrunkKind::relu_mlp;
    if (s == "rbf") return TrunkKind::rbf;
    throw ConfigError("unknown trunk kind '" + s + "'");
}

namespace {

std::vector<LayerSpec> default_trunk(TrunkKind kind, int p) {
    if (kind == TrunkKind::rbf) return {LayerSpec::rbf(p)};
    std::vector<LayerSpec> layers;
    for (int i = 0; i < 4; ++i) {
        layers.push_back(LayerSpec::dense(100));
        layers.push_back(LayerSpec::relu());
    }
    layers.push_back(LayerSpec::dense(p));
    return layers;
}

std::vector<LayerSpec> conv_matrix_branch(int first_filters, int second_filters, int side) {
    return {LayerSpec::reshape({10, 10, 1}),
            LayerSpec::trconv2d(first_filters, 4, 1),
            LayerSpec::relu(),
            LayerSpec::batchnorm(),
            LayerSpec::trconv2d(second_filters, 4, 1),
            LayerSpec::relu(),
            LayerSpec::batchnorm(),
            LayerSpec::trconv2d(first_filters, 2, 2),
            LayerSpec::relu(),
            LayerSpec::batchnorm(),
            LayerSpec::trconv2d(1, 2, 2),
            LayerSpec::tanhshrink(),
            LayerSpec::reshape({side, side})};
}

}  // namespace

ArchitectureSpec canonical_architecture(const std::string& name) {
    ArchitectureSpec s;
    s.name = name;
    if (name == "A1_deeponet") {
        s.family = Family::deeponet;
        s.p = 64;
        s.trunk_kind = TrunkKind::relu_mlp;
        s.f_branch = {LayerSpec::dense(170), LayerSpec::relu(), LayerSpec::dense(170), LayerSpec::relu(),
                      LayerSpec::dense(64)};
    } else if (name == "A1_varmion") {
        s.family = Family::varmion_linear;
        s.p = 64;
        s.trunk_kind = TrunkKind::relu_mlp;
        s.theta_branch = {LayerSpec::dense(100),       LayerSpec::relu(),
                          LayerSpec::dense(512),       LayerSpec::relu(),
                          LayerSpec::reshape({4, 4, 32}),
                          LayerSpec::trconv2d(16, 2, 2), LayerSpec::relu(), LayerSpec::batchnorm(),
                          LayerSpec::trconv2d(16, 2, 2), LayerSpec::relu(), LayerSpec::batchnorm(),
                          LayerSpec::trconv2d(8, 2, 2),  LayerSpec::relu(), LayerSpec::batchnorm(),
                          LayerSpec::trconv2d(1, 2, 2),  LayerSpec::tanhshrink(),
                          LayerSpec::reshape({64, 64})};
    } else if (name == "A2_deeponet") {
        s.family = Family::deeponet;
        s.p = 64;
        s.trunk_kind = TrunkKind::relu_mlp;
        s.f_branch = {LayerSpec::dense(64), LayerSpec::relu()};
    } else if (name == "A2_varmion") {
        s.family = Family::varmion_linear;
        s.p = 64;
        s.trunk_kind = TrunkKind::relu_mlp;
        s.theta_branch = conv_matrix_branch(8, 16, 64);
    } else if (name == "A3_deeponet") {
        s.family = Family::deeponet;
        s.p = 64;
        s.trunk_kind = TrunkKind::rbf;
        s.f_branch = {LayerSpec::dense(55), LayerSpec::relu(), LayerSpec::dense(55), LayerSpec::relu(),
                      LayerSpec::dense(64)};
    } else if (name == "A3_varmion") {
        s.family = Family::varmion_linear;
        s.p = 64;
        s.trunk_kind = TrunkKind::rbf;
        s.theta_branch = conv_matrix_branch(16, 32, 64);
    } else if (name == "A3_mionet") {
        s.family = Family::mionet;
        s.p = 64;
        s.trunk_kind = TrunkKind::rbf;
        s.f_branch = {LayerSpec::linear_nobias(64)};
        s.theta_branch = {LayerSpec::dense(64), LayerSpec::relu(), LayerSpec::dense(64)};
    } else if (name == "A4_deeponet") {
        s.family = Family::deeponet;
        s.p = 72;
        s.trunk_kind = TrunkKind::rbf;
        s.f_branch = {LayerSpec::dense(55), LayerSpec::relu(), LayerSpec::dense(55), LayerSpec::relu(),
                      LayerSpec::dense(72)};
    } else if (name == "A4_varmion") {
        s.family = Family::varmion_linear;
        s.p = 72;
        s.trunk_kind = TrunkKind::rbf;
        s.theta_branch = conv_matrix_branch(16, 32, 72);
        s.theta_branch[0] = LayerSpec::reshape({12, 12, 1});
    } else if (name == "A4_mionet") {
        s.family = Family::mionet;
        s.p = 72;
        s.trunk_kind = TrunkKind::rbf;
        s.f_branch = {LayerSpec::linear_nobias(72)};
        s.theta_branch = {LayerSpec::dense(72), LayerSpec::relu()};
    } else if (name == "A5_deeponet_130") {
        s.family = Family::deeponet;
        s.p = 100;
        s.trunk_kind = TrunkKind::rbf;
        s.f_branch = {LayerSpec::dense(130), LayerSpec::relu(), LayerSpec::dense(100)};
    } else if (name == "A5_deeponet_200") {
        s.family = Family::deeponet;
        s.p = 100;
        s.trunk_kind = TrunkKind::rbf;
        s.f_branch = {LayerSpec::dense(200), LayerSpec::relu(), LayerSpec::dense(100)};
    } else if (name == "A5_deeponet_big") {
        s.family = Family::deeponet;
        s.p = 100;
        s.trunk_kind = TrunkKind::rbf;
        s.f_branch = {LayerSpec::dense(512), LayerSpec::relu(), LayerSpec::dense(256), LayerSpec::relu(),
                      LayerSpec::dense(128), LayerSpec::relu(), LayerSpec::dense(100), LayerSpec::relu(),
                      LayerSpec::dense(100)};
    } else if (name == "A5_varmion" || name == "A5_varmion_c") {
        s.family = name == "A5_varmion" ? Family::varmion_nl : Family::varmion_c;
        s.p = 100;
        s.trunk_kind = TrunkKind::rbf;
        s.f_branch = {LayerSpec::relu(),      LayerSpec::dense(100), LayerSpec::relu(), LayerSpec::dense(100),
                      LayerSpec::relu(),      LayerSpec::dense(100), LayerSpec::relu(), LayerSpec::dense(100)};
    } else {
        throw ConfigError("unknown architecture '" + name + "'");
    }
    return s;
}

std::vector<std::string> canonical_architecture_names() {
    return {"A1_deeponet", "A1_varmion",  "A2_deeponet",     "A2_varmion",      "A3_deeponet",
            "A3_varmion",  "A3_mionet",   "A4_deeponet",     "A4_varmion",      "A4_mionet",
            "A5_deeponet_130", "A5_deeponet_200", "A5_deeponet_big", "A5_varmion", "A5_varmion_c"};
}

nlohmann::json layer_to_json(const LayerSpec& s) {
    nlohmann::json j;
    j["kind"] = layer_kind_name(s.kind);
    switch (s.kind) {
        case LayerKind::dense:
        case LayerKind::linear_nobias: j["width"] = s.width; break;
        case LayerKind::trconv2d:
            j["filters"] = s.filters;
            j["kernel"] = s.kernel;
            j["stride"] = s.stride;
            break;
        case LayerKind::reshape: j["shape"] = s.target_shape; break;
        case LayerKind::rbf: j["basis"] = s.basis; break;
        default: break;
    }
    return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
    const LayerKind kind = layer_kind_from_string(j.at("kind").get<std::string>());
    switch (kind) {
        case LayerKind::dense: return LayerSpec::dense(j.at("width").get<int>());
        case LayerKind::linear_nobias: return LayerSpec::linear_nobias(j.at("width").get<int>());
        case LayerKind::trconv2d:
            return LayerSpec::trconv2d(j.at("filters").get<int>(), j.at("kernel").get<int>(),
                                       j.at("stride").get<int>());
        case LayerKind::batchnorm: return LayerSpec::batchnorm();
        case LayerKind::relu: return LayerSpec::relu();
        case LayerKind::tanhshrink: return LayerSpec::tanhshrink();
        case LayerKind::reshape: return LayerSpec::reshape(j.at("shape").get<std::vector<std::int64_t>>());
        case LayerKind::rbf: return LayerSpec::rbf(j.at("basis").get<int>());
    }
    throw ConfigError("bad layer kind");
}

namespace {

nlohmann::json layers_to_json(const std::vector<LayerSpec>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& s : v) a.push_back(layer_to_json(s));
    return a;
}

std::vector<LayerSpec> layers_from_json(const nlohmann::json& a) {
    std::vector<LayerSpec> v;
    for (const auto& j : a) v.push_back(layer_from_json(j));
    return v;
}

}  // namespace

nlohmann::json arch_to_json(const ArchitectureSpec& spec, const InputDims& dims) {
    nlohmann::json j;
    j["name"] = spec.name;
    j["family"] = family_name(spec.family);
    j["p"] = spec.p;
    j["trunk_kind"] = trunk_kind_name(spec.trunk_kind);
    j["trunk"] = layers_to_json(spec.trunk);
    j["theta_branch"] = layers_to_json(spec.theta_branch);
    j["f_branch"] = layers_to_json(spec.f_branch);
    j["eta_branch"] = layers_to_json(spec.eta_branch);
    j["dims"] = {{"k_f", dims.k_f}, {"k_theta", dims.k_theta}, {"k_eta", dims.k_eta}};
    return j;
}

std::pair<ArchitectureSpec, InputDims> arch_from_json(const nlohmann::json& j) {
    ArchitectureSpec s;
    s.name = j.at("name").get<std::string>();
    s.family = family_from_string(j.at("family").get<std::string>());
    s.p = j.at("p").get<int>();
    s.trunk_kind = trunk_kind_from_string(j.at("trunk_kind").get<std::string>());
    s.trunk = layers_from_json(j.at("trunk"));
    s.theta_branch = layers_from_json(j.at("theta_branch"));
    s.f_branch = layers_from_json(j.at("f_branch"));
    s.eta_branch = layers_from_json(j.at("eta_branch"));
    InputDims d;
    d.k_f = j.at("dims").at("k_f").get<int>();
    d.k_theta = j.at("dims").at("k_theta").get<int>();
    d.k_eta = j.at("dims").at("k_eta").get<int>();
    return {s, d};
}

Tensor tensor_from_matrix(const Eigen::MatrixXd& m) {
    Tensor t({m.rows(), m.cols()});
    MatMap(t.data.data(), m.rows(), m.cols()) = m;
    return t;
}

Eigen::MatrixXd matrix_from_tensor(const Tensor& t) {
    if (t.rank() < 2) throw MismatchError("matrix_from_tensor: rank-" + std::to_string(t.rank()) + " tensor");
    const std::int64_t rows = t.dim(0);
    return ConstMatMap(t.data.data(), rows, t.numel() / rows);
}

namespace {

void require_vector_out(const Sequential& s, int p, const std::string& what) {
    const auto& o = s.out_shape();
    if (o.size() != 1 || o[0] != p)
        throw ConfigError(what + " must produce " + std::to_string(p) + " values per sample, got " +
                          Tensor::shape_str(o));
}

}  // namespace

Model::Model(ArchitectureSpec spec, InputDims dims, Rng& rng) : spec_(std::move(spec)), dims_(dims) {
    if (dims_.k_f <= 0) throw ConfigError("model needs at least the f input");
    const int p_hint = spec_.p;

    switch (spec_.family) {
        case Family::deeponet: {
            if (spec_.f_branch.empty()) throw ConfigError("deeponet needs a branch");
            const int in = dims_.k_f + dims_.k_theta + dims_.k_eta;
            f_net_ = std::make_unique<Sequential>("branch", spec_.f_branch, std::vector<std::int64_t>{in}, rng);
            if (spec_.p <= 0) spec_.p = static_cast<int>(f_net_->out_shape()[0]);
            require_vector_out(*f_net_, spec_.p, "deeponet branch");
            break;
        }
        case Family::varmion_linear: {
            if (dims_.k_theta <= 0) throw ConfigError("varmion_linear needs theta sensors");
            if (spec_.theta_branch.empty()) throw ConfigError("varmion_linear needs a theta branch");
            theta_net_ = std::make_unique<Sequential>("theta_net", spec_.theta_branch,
                                                      std::vector<std::int64_t>{dims_.k_theta}, rng);
            const auto& o = theta_net_->out_shape();
            if (o.size() != 2 || o[0] != o[1])
                throw ConfigError("varmion_linear theta branch must produce a square matrix, got " +
                                  Tensor::shape_str(o));
            const int p_from_net = static_cast<int>(o[0]);
            if (p_hint > 0 && p_hint != p_from_net)
                throw ConfigError("architecture p=" + std::to_string(p_hint) + " but theta branch yields " +
                                  std::to_string(p_from_net));
            spec_.p = p_from_net;
            a_map_ = std::make_unique<Sequential>("a_map", std::vector<LayerSpec>{LayerSpec::linear_nobias(spec_.p)},
                                                  std::vector<std::int64_t>{dims_.k_f}, rng);
            if (dims_.k_eta > 0)
                atilde_map_ = std::make_unique<Sequential>(
                    "atilde_map", std::vector<LayerSpec>{LayerSpec::linear_nobias(spec_.p)},
                    std::vector<std::int64_t>{dims_.k_eta}, rng);
            break;
        }
        case Family::mionet: {
            if (dims_.k_theta <= 0) throw ConfigError("mionet needs theta sensors");
            if (spec_.p <= 0) throw ConfigError("mionet needs p");
            auto f_layers = spec_.f_branch.empty() ? std::vector<LayerSpec>{LayerSpec::linear_nobias(spec_.p)}
                                                   : spec_.f_branch;
            auto t_layers = spec_.theta_branch.empty() ? std::vector<LayerSpec>{LayerSpec::linear_nobias(spec_.p)}
                                                       : spec_.theta_branch;
            f_net_ = std::make_unique<Sequential>("branch_f", f_layers, std::vector<std::int64_t>{dims_.k_f}, rng);
            theta_net_ =
                std::make_unique<Sequential>("branch_theta", t_layers, std::vector<std::int64_t>{dims_.k_theta}, rng);
            require_vector_out(*f_net_, spec_.p, "mionet f branch");
            require_vector_out(*theta_net_, spec_.p, "mionet theta branch");
            if (dims_.k_eta > 0) {
                auto e_layers = spec_.eta_branch.empty() ? std::vector<LayerSpec>{LayerSpec::linear_nobias(spec_.p)}
                                                         : spec_.eta_branch;
                eta_net_ =
                    std::make_unique<Sequential>("branch_eta", e_layers, std::vector<std::int64_t>{dims_.k_eta}, rng);
                require_vector_out(*eta_net_, spec_.p, "mionet eta branch");
            }
            break;
        }
        case Family::varmion_nl:
        case Family::varmion_c: {
            if (spec_.p <= 0) throw ConfigError("varmion_nl needs p");
            if (spec_.f_branch.empty()) throw ConfigError("varmion_nl needs a coefficient net");
            a_map_ = std::make_unique<Sequential>("z_map", std::vector<LayerSpec>{LayerSpec::linear_nobias(spec_.p)},
                                                  std::vector<std::int64_t>{dims_.k_f}, rng);
            f_net_ = std::make_unique<Sequential>("n_net", spec_.f_branch, std::vector<std::int64_t>{spec_.p}, rng);
            require_vector_out(*f_net_, spec_.p, "varmion_nl coefficient net");
            break;
        }
    }

    auto trunk_layers = spec_.trunk.empty() ? default_trunk(spec_.trunk_kind, spec_.p) : spec_.trunk;
    trunk_ = std::make_unique<Sequential>("trunk", trunk_layers, std::vector<std::int64_t>{2}, rng);
    require_vector_out(*trunk_, spec_.p, "trunk");
}

Eigen::MatrixXd Model::coefficients(const Eigen::MatrixXd& F, const Eigen::MatrixXd& Theta, const Eigen::MatrixXd& N,
                                    bool train) {
    const auto B = F.rows();
    if (F.cols() != dims_.k_f) throw MismatchError("f input has " + std::to_string(F.cols()) + " sensors, model expects " + std::to_string(dims_.k_f));
    if (Theta.cols() != dims_.k_theta)
        throw MismatchError("theta input has " + std::to_string(Theta.cols()) + " sensors, model expects " +
                            std::to_string(dims_.k_theta));
    if (N.cols() != dims_.k_eta)
        throw MismatchError("eta input has " + std::to_string(N.cols()) + " sensors, model expects " +
                            std::to_string(dims_.k_eta));
    if ((dims_.k_theta > 0 && Theta.rows() != B) || (dims_.k_eta > 0 && N.rows() != B))
        throw MismatchError("input batches differ in size");

    const int p = spec_.p;
    switch (spec_.family) {
        case Family::deeponet: {
            Eigen::MatrixXd Xin(B, dims_.k_f + dims_.k_theta + dims_.k_eta);
            Xin.leftCols(dims_.k_f) = F;
            if (dims_.k_theta > 0) Xin.middleCols(dims_.k_f, dims_.k_theta) = Theta;
            if (dims_.k_eta > 0) Xin.rightCols(dims_.k_eta) = N;
            return matrix_from_tensor(f_net_->forward(tensor_from_matrix(Xin), train));
        }
        case Family::varmion_linear: {
            Z_ = matrix_from_tensor(a_map_->forward(tensor_from_matrix(F), train));
            Eigen::MatrixXd z = Z_;
            if (atilde_map_) {
                ZN_ = matrix_from_tensor(atilde_map_->forward(tensor_from_matrix(N), train));
                z += ZN_;
            }
            Tensor dflat = theta_net_->forward(tensor_from_matrix(Theta), train);
            Eigen::MatrixXd C(B, p);
            D_batch_.resize(static_cast<std::size_t>(B));
            for (Eigen::Index j = 0; j < B; ++j) {
                ConstMatMap Dj(dflat.data.data() + j * p * p, p, p);
                D_batch_[static_cast<std::size_t>(j)] = Dj;
                C.row(j) = (Dj * z.row(j).transpose()).transpose();
            }
            Z_ = z;  // keep the summed latent for backward
            return C;
        }
        case Family::mionet: {
            Z_ = matrix_from_tensor(f_net_->forward(tensor_from_matrix(F), train));
            ZN_ = matrix_from_tensor(theta_net_->forward(tensor_from_matrix(Theta), train));
            Eigen::MatrixXd C = Z_.cwiseProduct(ZN_);
            if (eta_net_) {
                Cn_ = matrix_from_tensor(eta_net_->forward(tensor_from_matrix(N), train));
                C = C.cwiseProduct(Cn_);
            }
            return C;
        }
        case Family::varmion_nl: {
            Z_ = matrix_from_tensor(a_map_->forward(tensor_from_matrix(F), train));
            return matrix_from_tensor(f_net_->forward(tensor_from_matrix(Z_), train));
        }
        case Family::varmion_c: {
            Z_ = matrix_from_tensor(a_map_->forward(tensor_from_matrix(F), train));
            Cn_ = matrix_from_tensor(f_net_->forward(tensor_from_matrix(Z_), train));
            return Z_.cwiseProduct(Cn_);
        }
    }
    throw ConfigError("bad family enum");
}

void Model::coefficients_backward(const Eigen::MatrixXd& dC) {
    const auto B = dC.rows();
    const int p = spec_.p;
    switch (spec_.family) {
        case Family::deeponet: {
            f_net_->backward(tensor_from_matrix(dC));
            return;
        }
        case Family::varmion_linear: {
            Eigen::MatrixXd dZ(B, p);
            Tensor dDflat({B, p, p});
            for (Eigen::Index j = 0; j < B; ++j) {
                const Eigen::MatrixXd& Dj = D_batch_[static_cast<std::size_t>(j)];
                dZ.row(j) = (Dj.transpose() * dC.row(j).transpose()).transpose();
                MatMap(dDflat.data.data() + j * p * p, p, p) = dC.row(j).transpose() * Z_.row(j);
            }
            theta_net_->backward(dDflat);
            a_map_->backward(tensor_from_matrix(dZ));
            if (atilde_map_) atilde_map_->backward(tensor_from_matrix(dZ));
            return;
        }
        case Family::mionet: {
            if (eta_net_) {
                f_net_->backward(tensor_from_matrix(dC.cwiseProduct(ZN_).cwiseProduct(Cn_)));
                theta_net_->backward(tensor_from_matrix(dC.cwiseProduct(Z_).cwiseProduct(Cn_)));
                eta_net_->backward(tensor_from_matrix(dC.cwiseProduct(Z_).cwiseProduct(ZN_)));
            } else {
                f_net_->backward(tensor_from_matrix(dC.cwiseProduct(ZN_)));
                theta_net_->backward(tensor_from_matrix(dC.cwiseProduct(Z_)));
            }
            return;
        }
        case Family::varmion_nl: {
            Tensor dZ = f_net_->backward(tensor_from_matrix(dC));
            a_map_->backward(dZ);
            return;
        }
        case Family::varmion_c: {
            Tensor dZ1 = f_net_->backward(tensor_from_matrix(dC.cwiseProduct(Z_)));
            Eigen::MatrixXd dZ = matrix_from_tensor(dZ1) + dC.cwiseProduct(Cn_);
            a_map_->backward(tensor_from_matrix(dZ));
            return;
        }
    }
    throw ConfigError("bad family enum");
}

Eigen::MatrixXd Model::forward(const Eigen::MatrixXd& F, const Eigen::MatrixXd& Theta, const Eigen::MatrixXd& N,
                               const Eigen::MatrixXd& X, bool train) {
    if (X.cols() != 2) throw MismatchError("query points must be (L,2)");
    C_ = coefficients(F, Theta, N, train);
    T_ = matrix_from_tensor(trunk_->forward(tensor_from_matrix(X), train));
    train_ = train;
    has_forward_ = true;
    return C_ * T_.transpose();
}

void Model::backward(const Eigen::MatrixXd& dP) {
    if (!has_forward_) throw MismatchError("model backward without forward");
    if (dP.rows() != C_.rows() || dP.cols() != T_.rows()) throw MismatchError("prediction gradient shape mismatch");
    Eigen::MatrixXd dC = dP * T_;
    Eigen::MatrixXd dT = dP.transpose() * C_;
    trunk_->backward(tensor_from_matrix(dT));
    coefficients_backward(dC);
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out;
    for (Sequential* s : {theta_net_.get(), f_net_.get(), eta_net_.get(), a_map_.get(), atilde_map_.get(),
                          trunk_.get()}) {
        if (!s) continue;
        for (Parameter* p : s->parameters()) out.push_back(p);
    }
    return out;
}

ParamCounts Model::count_parameters() const {
    ParamCounts c;
    for (const Sequential* s : {theta_net_.get(), f_net_.get(), eta_net_.get(), a_map_.get(), atilde_map_.get(),
                                trunk_.get()}) {
        if (!s) continue;
        for (const Parameter* p : const_cast<Sequential*>(s)->parameters())
            if (p->trainable) c.learnable += p->value.numel();
        for (const LayerSpec& l : s->specs())
            if (l.kind == LayerKind::linear_nobias) c.with_bias_variant += l.width;
    }
    c.with_bias_variant += c.learnable;
    return c;
}

Eigen::MatrixXd Model::trunk_values(const Eigen::MatrixXd& X) {
    return matrix_from_tensor(trunk_->forward(tensor_from_matrix(X), false));
}

Eigen::MatrixXd Model::coefficient_matrix(const Eigen::MatrixXd& theta_row) {
    if (spec_.family != Family::varmion_linear)
        throw ConfigError("coefficient_matrix is only defined for varmion_linear");
    if (theta_row.rows() != 1 || theta_row.cols() != dims_.k_theta)
        throw MismatchError("coefficient_matrix expects one theta sample");
    Tensor d = theta_net_->forward(tensor_from_matrix(theta_row), false);
    const int p = spec_.p;
    return Eigen::MatrixXd(ConstMatMap(d.data.data(), p, p));
}

Eigen::MatrixXd Model::matrix_A() const {
    if (!a_map_) throw ConfigError("no linear input map in this family");
    const Parameter* w = const_cast<Sequential*>(a_map_.get())->parameters()[0];
    return ConstMatMap(w->value.data.data(), w->value.dim(0), w->value.dim(1));
}

Eigen::MatrixXd Model::matrix_A_tilde() const {
    if (!atilde_map_) throw ConfigError("no boundary input map in this model");
    const Parameter* w = const_cast<Sequential*>(atilde_map_.get())->parameters()[0];
    return ConstMatMap(w->value.data.data(), w->value.dim(0), w->value.dim(1));
}

}  // namespace varmion
