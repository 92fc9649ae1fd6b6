#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "varmion/model.hpp"

using namespace varmion;

namespace {

Parameter* find_param(Model& m, const std::string& needle) {
    Parameter* hit = nullptr;
    for (Parameter* p : m.parameters())
        if (p->name.find(needle) != std::string::npos) {
            REQUIRE(hit == nullptr);
            hit = p;
        }
    REQUIRE(hit != nullptr);
    return hit;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
    return m;
}

Eigen::MatrixXd random_points(Eigen::Index n, Rng& rng) {
    Eigen::MatrixXd x(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i, 0) = rng.uniform();
        x(i, 1) = rng.uniform();
    }
    return x;
}

ParamCounts counts_of(const std::string& name, InputDims dims) {
    Rng rng(1);
    Model m(canonical_architecture(name), dims, rng);
    return m.count_parameters();
}

// finite-difference check of all parameter gradients for sum(R .* P)
void model_gradcheck(Model& m, const Eigen::MatrixXd& F, const Eigen::MatrixXd& Theta, const Eigen::MatrixXd& N,
                     const Eigen::MatrixXd& X, bool train, Rng& rng, int probes = 15) {
    Eigen::MatrixXd P = m.forward(F, Theta, N, X, train);
    Eigen::MatrixXd R = random_matrix(P.rows(), P.cols(), rng);

    for (Parameter* p : m.parameters()) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
    m.forward(F, Theta, N, X, train);
    m.backward(R);

    std::vector<std::vector<double>> grads;
    for (Parameter* p : m.parameters()) grads.push_back(p->grad.data);

    const double h = 1e-6;
    auto loss = [&] { return (m.forward(F, Theta, N, X, train).array() * R.array()).sum(); };
    std::size_t pi = 0;
    for (Parameter* p : m.parameters()) {
        const auto& g = grads[pi++];
        if (!p->trainable) continue;
        const std::size_t n = p->value.data.size();
        for (int k = 0; k < probes; ++k) {
            const std::size_t i = n <= static_cast<std::size_t>(probes) ? static_cast<std::size_t>(k) % n
                                                                        : rng.below(n);
            const double keep = p->value.data[i];
            p->value.data[i] = keep + h;
            const double fp = loss();
            p->value.data[i] = keep - h;
            const double fm = loss();
            p->value.data[i] = keep;
            const double fd = (fp - fm) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
            CHECK(std::abs(fd - g[i]) / denom < 1e-4);
        }
    }
}

}  // namespace

TEST_CASE("canonical architectures have the documented parameter counts") {
    const InputDims heat2{100, 100, 0};
    const InputDims heat3{144, 144, 24};
    const InputDims eik{1024, 0, 0};

    CHECK(counts_of("A1_deeponet", heat2).learnable == 111248);
    CHECK(counts_of("A1_varmion", heat2).learnable == 109013);
    CHECK(counts_of("A2_deeponet", heat2).learnable == 49928);
    CHECK(counts_of("A2_varmion", heat2).learnable == 46281);
    CHECK(counts_of("A3_deeponet", heat2).learnable == 17911);
    CHECK(counts_of("A3_varmion", heat2).learnable == 17345);
    CHECK(counts_of("A3_mionet", heat2).learnable == 17216);
    CHECK(counts_of("A4_deeponet", heat3).learnable == 24543);
    CHECK(counts_of("A4_varmion", heat3).learnable == 23065);
    CHECK(counts_of("A4_mionet", heat3).learnable == 22752);
    CHECK(counts_of("A5_deeponet_130", eik).learnable == 146650);
    CHECK(counts_of("A5_deeponet_200", eik).learnable == 225400);
    CHECK(counts_of("A5_deeponet_big", eik).learnable == 712324);

    // bias-free input map: both counting conventions
    ParamCounts vm = counts_of("A5_varmion", eik);
    CHECK(vm.learnable == 143100);
    CHECK(vm.with_bias_variant == 143200);
    ParamCounts vc = counts_of("A5_varmion_c", eik);
    CHECK(vc.learnable == 143100);
    CHECK(vc.with_bias_variant == 143200);

    // binding the same recipe to a dataset with flux sensors adds the flux factor
    CHECK(counts_of("A3_mionet", InputDims{100, 100, 24}).learnable == 17216 + 24 * 64);

    CHECK(canonical_architecture_names().size() == 15);
    CHECK_THROWS_AS(canonical_architecture("A9_nonsense"), ConfigError);
}

TEST_CASE("every canonical architecture builds and evaluates at its dataset dims") {
    for (const std::string& name : canonical_architecture_names()) {
        InputDims dims{100, 100, 0};
        if (name.rfind("A4", 0) == 0) dims = InputDims{144, 144, 24};
        if (name.rfind("A5", 0) == 0) dims = InputDims{1024, 0, 0};
        Rng rng(3);
        Model m(canonical_architecture(name), dims, rng);
        Eigen::MatrixXd F = random_matrix(2, dims.k_f, rng);
        Eigen::MatrixXd Th = random_matrix(2, dims.k_theta, rng);
        Eigen::MatrixXd N = random_matrix(2, dims.k_eta, rng);
        Eigen::MatrixXd X = random_points(5, rng);
        Eigen::MatrixXd P = m.forward(F, Th, N, X, false);
        CHECK(P.rows() == 2);
        CHECK(P.cols() == 5);
        CHECK(P.allFinite());
    }
}

TEST_CASE("hand-wired linear varmion evaluates the matrix-vector-trunk composition") {
    ArchitectureSpec spec;
    spec.name = "wired";
    spec.family = Family::varmion_linear;
    spec.theta_branch = {LayerSpec::dense(4), LayerSpec::reshape({2, 2})};
    spec.trunk = {LayerSpec::dense(2)};
    spec.p = 2;
    Rng rng(5);
    Model m(spec, InputDims{2, 3, 0}, rng);

    Parameter* tW = find_param(m, "theta_net/0_dense/W");
    Parameter* tb = find_param(m, "theta_net/0_dense/b");
    std::fill(tW->value.data.begin(), tW->value.data.end(), 0.0);
    tb->value.data = {1.0, 0.0, 0.0, 1.0};  // identity matrix, row-major

    Parameter* aW = find_param(m, "a_map/0_linear_nobias/W");
    aW->value.data = {1.0, 0.0, 0.0, 1.0};

    Parameter* kW = find_param(m, "trunk/0_dense/W");
    Parameter* kb = find_param(m, "trunk/0_dense/b");
    kW->value.data = {0.0, 0.0, 1.0, 0.0};  // tau(x) = (1, x_0)
    kb->value.data = {1.0, 0.0};

    Eigen::MatrixXd F(1, 2);
    F << 2.0, 3.0;
    Eigen::MatrixXd Th(1, 3);
    Th << 0.3, 0.4, 0.5;
    Eigen::MatrixXd X(1, 2);
    X << 0.5, 0.5;
    Eigen::MatrixXd P = m.forward(F, Th, Eigen::MatrixXd(1, 0), X, false);
    CHECK(P(0, 0) == doctest::Approx(3.5).epsilon(1e-14));

    CHECK(m.coefficient_matrix(Th).isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-14));
    CHECK(m.matrix_A().isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-14));
}

TEST_CASE("hand-wired deeponet multiplies branch and trunk") {
    ArchitectureSpec spec;
    spec.name = "wired";
    spec.family = Family::deeponet;
    spec.f_branch = {LayerSpec::dense(1)};
    spec.trunk = {LayerSpec::dense(1)};
    spec.p = 1;
    Rng rng(5);
    Model m(spec, InputDims{1, 0, 0}, rng);
    find_param(m, "branch/0_dense/W")->value.data = {0.0};
    find_param(m, "branch/0_dense/b")->value.data = {2.0};
    find_param(m, "trunk/0_dense/W")->value.data = {0.0, 0.0};
    find_param(m, "trunk/0_dense/b")->value.data = {3.0};

    Eigen::MatrixXd F(1, 1);
    F << 0.7;
    Eigen::MatrixXd X(1, 2);
    X << 0.1, 0.9;
    Eigen::MatrixXd P = m.forward(F, Eigen::MatrixXd(1, 0), Eigen::MatrixXd(1, 0), X, false);
    CHECK(P(0, 0) == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("hand-wired gated varmion multiplies latent and coefficient net") {
    ArchitectureSpec spec;
    spec.name = "wired";
    spec.family = Family::varmion_c;
    spec.f_branch = {LayerSpec::dense(1)};
    spec.trunk = {LayerSpec::dense(1)};
    spec.p = 1;
    Rng rng(5);
    Model m(spec, InputDims{1, 0, 0}, rng);
    find_param(m, "z_map/0_linear_nobias/W")->value.data = {2.0};
    find_param(m, "n_net/0_dense/W")->value.data = {0.0};
    find_param(m, "n_net/0_dense/b")->value.data = {3.0};
    find_param(m, "trunk/0_dense/W")->value.data = {0.0, 0.0};
    find_param(m, "trunk/0_dense/b")->value.data = {1.0};

    Eigen::MatrixXd F(1, 1);
    F << 1.0;
    Eigen::MatrixXd X(1, 2);
    X << 0.2, 0.8;
    Eigen::MatrixXd P = m.forward(F, Eigen::MatrixXd(1, 0), Eigen::MatrixXd(1, 0), X, false);
    CHECK(P(0, 0) == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("linear varmion is jointly linear in load and flux inputs") {
    ArchitectureSpec spec;
    spec.name = "sup";
    spec.family = Family::varmion_linear;
    spec.theta_branch = {LayerSpec::dense(9), LayerSpec::relu(), LayerSpec::dense(16), LayerSpec::reshape({4, 4})};
    spec.trunk_kind = TrunkKind::rbf;
    spec.p = 4;
    Rng rng(11);
    Model m(spec, InputDims{9, 9, 4}, rng);

    Eigen::MatrixXd F1 = random_matrix(3, 9, rng), F2 = random_matrix(3, 9, rng);
    Eigen::MatrixXd N1 = random_matrix(3, 4, rng), N2 = random_matrix(3, 4, rng);
    Eigen::MatrixXd Th = random_matrix(3, 9, rng);
    Eigen::MatrixXd X = random_points(7, rng);
    const double a = 0.7, b = -1.3;

    Eigen::MatrixXd P1 = m.forward(F1, Th, N1, X, false);
    Eigen::MatrixXd P2 = m.forward(F2, Th, N2, X, false);
    Eigen::MatrixXd Pc = m.forward(a * F1 + b * F2, Th, a * N1 + b * N2, X, false);
    CHECK((Pc - (a * P1 + b * P2)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mionet factors annihilate the product") {
    ArchitectureSpec spec;
    spec.name = "mio";
    spec.family = Family::mionet;
    spec.p = 5;
    spec.trunk_kind = TrunkKind::rbf;
    Rng rng(13);
    Model m(spec, InputDims{3, 4, 2}, rng);

    Eigen::MatrixXd F = random_matrix(2, 3, rng);
    Eigen::MatrixXd Th = random_matrix(2, 4, rng);
    Eigen::MatrixXd X = random_points(6, rng);

    Eigen::MatrixXd P = m.forward(F, Th, Eigen::MatrixXd::Zero(2, 2), X, false);
    CHECK(P.cwiseAbs().maxCoeff() <= 1e-12);
    P = m.forward(F, Eigen::MatrixXd::Zero(2, 4), random_matrix(2, 2, rng), X, false);
    CHECK(P.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("gated varmion vanishes at zero input, ungated does not") {
    ArchitectureSpec spec;
    spec.name = "nl";
    spec.family = Family::varmion_nl;
    spec.f_branch = {LayerSpec::relu(), LayerSpec::dense(2)};
    spec.trunk_kind = TrunkKind::rbf;
    spec.p = 2;
    Rng rng(17);
    Model nl(spec, InputDims{3, 0, 0}, rng);
    find_param(nl, "n_net/1_dense/b")->value.data = {0.7, -0.3};

    spec.family = Family::varmion_c;
    Rng rng2(17);
    Model gated(spec, InputDims{3, 0, 0}, rng2);
    find_param(gated, "n_net/1_dense/b")->value.data = {0.7, -0.3};

    Eigen::MatrixXd Z0 = Eigen::MatrixXd::Zero(1, 3);
    Eigen::MatrixXd X = random_points(4, rng);
    Eigen::MatrixXd none(1, 0);
    CHECK(nl.forward(Z0, none, none, X, false).cwiseAbs().maxCoeff() > 1e-6);
    CHECK(gated.forward(Z0, none, none, X, false).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("evaluation is pure and duplicate query points agree") {
    Rng rng(19);
    Model m(canonical_architecture("A3_varmion"), InputDims{100, 100, 0}, rng);
    Eigen::MatrixXd F = random_matrix(2, 100, rng);
    Eigen::MatrixXd Th = random_matrix(2, 100, rng);
    Eigen::MatrixXd X = random_points(8, rng);
    X.row(6) = X.row(2);

    Eigen::MatrixXd none(2, 0);
    Eigen::MatrixXd P1 = m.forward(F, Th, none, X, false);
    Eigen::MatrixXd P2 = m.forward(F, Th, none, X, false);
    CHECK((P1 - P2).cwiseAbs().maxCoeff() == 0.0);
    CHECK((P1.col(6) - P1.col(2)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("parameter gradients match finite differences for every family") {
    Rng rng(23);
    Eigen::MatrixXd F = random_matrix(3, 4, rng);
    Eigen::MatrixXd Th = random_matrix(3, 5, rng);
    Eigen::MatrixXd N = random_matrix(3, 3, rng);
    Eigen::MatrixXd X = random_points(6, rng);
    Eigen::MatrixXd none(3, 0);

    SUBCASE("varmion_linear") {
        ArchitectureSpec s;
        s.name = "g";
        s.family = Family::varmion_linear;
        s.theta_branch = {LayerSpec::dense(9), LayerSpec::reshape({3, 3})};
        s.trunk = {LayerSpec::dense(4), LayerSpec::tanhshrink(), LayerSpec::dense(3)};
        s.p = 3;
        Model m(s, InputDims{4, 5, 3}, rng);
        model_gradcheck(m, F, Th, N, X, false, rng);
    }
    SUBCASE("varmion_linear with batchnorm branch") {
        ArchitectureSpec s;
        s.name = "g";
        s.family = Family::varmion_linear;
        s.theta_branch = {LayerSpec::dense(4), LayerSpec::batchnorm(), LayerSpec::reshape({2, 2})};
        s.trunk = {LayerSpec::dense(2)};
        s.p = 2;
        Model m(s, InputDims{4, 5, 0}, rng);
        model_gradcheck(m, F, Th, none, X, true, rng);
    }
    SUBCASE("deeponet") {
        ArchitectureSpec s;
        s.name = "g";
        s.family = Family::deeponet;
        s.f_branch = {LayerSpec::dense(6), LayerSpec::relu(), LayerSpec::dense(3)};
        s.trunk_kind = TrunkKind::rbf;
        s.p = 3;
        Model m(s, InputDims{4, 5, 3}, rng);
        model_gradcheck(m, F, Th, N, X, false, rng);
    }
    SUBCASE("mionet") {
        ArchitectureSpec s;
        s.name = "g";
        s.family = Family::mionet;
        s.theta_branch = {LayerSpec::dense(3), LayerSpec::tanhshrink()};
        s.trunk_kind = TrunkKind::rbf;
        s.p = 3;
        Model m(s, InputDims{4, 5, 3}, rng);
        model_gradcheck(m, F, Th, N, X, false, rng);
    }
    SUBCASE("varmion_nl") {
        ArchitectureSpec s;
        s.name = "g";
        s.family = Family::varmion_nl;
        s.f_branch = {LayerSpec::tanhshrink(), LayerSpec::dense(3)};
        s.trunk_kind = TrunkKind::rbf;
        s.p = 3;
        Model m(s, InputDims{4, 0, 0}, rng);
        model_gradcheck(m, F, none, none, X, false, rng);
    }
    SUBCASE("varmion_c") {
        ArchitectureSpec s;
        s.name = "g";
        s.family = Family::varmion_c;
        s.f_branch = {LayerSpec::tanhshrink(), LayerSpec::dense(3)};
        s.trunk_kind = TrunkKind::rbf;
        s.p = 3;
        Model m(s, InputDims{4, 0, 0}, rng);
        model_gradcheck(m, F, none, none, X, false, rng);
    }
}

TEST_CASE("architecture json round trip preserves structure") {
    for (const std::string name : {"A3_varmion", "A4_mionet", "A5_varmion_c"}) {
        InputDims dims{100, 100, 0};
        if (name[1] == '4') dims = InputDims{144, 144, 24};
        if (name[1] == '5') dims = InputDims{1024, 0, 0};
        ArchitectureSpec spec = canonical_architecture(name);
        nlohmann::json j = arch_to_json(spec, dims);
        auto [back, bdims] = arch_from_json(j);
        CHECK(back.name == spec.name);
        CHECK(back.family == spec.family);
        CHECK(back.p == spec.p);
        CHECK(bdims.k_f == dims.k_f);
        CHECK(arch_to_json(back, bdims) == j);

        Rng r1(7), r2(7);
        Model m1(spec, dims, r1), m2(back, bdims, r2);
        CHECK(m1.count_parameters().learnable == m2.count_parameters().learnable);
        auto p1 = m1.parameters(), p2 = m2.parameters();
        REQUIRE(p1.size() == p2.size());
        for (std::size_t i = 0; i < p1.size(); ++i) {
            CHECK(p1[i]->name == p2[i]->name);
            CHECK(p1[i]->value.data == p2[i]->value.data);
        }
    }
}

TEST_CASE("model guards reject malformed inputs") {
    Rng rng(29);
    Model m(canonical_architecture("A3_deeponet"), InputDims{100, 100, 0}, rng);
    Eigen::MatrixXd F = random_matrix(2, 100, rng);
    Eigen::MatrixXd Th = random_matrix(2, 100, rng);
    Eigen::MatrixXd none(2, 0);
    Eigen::MatrixXd X = random_points(3, rng);

    CHECK_THROWS_AS(m.forward(random_matrix(2, 99, rng), Th, none, X, false), MismatchError);
    CHECK_THROWS_AS(m.forward(F, random_matrix(3, 100, rng), none, X, false), MismatchError);
    CHECK_THROWS_AS(m.forward(F, Th, none, random_matrix(3, 3, rng), false), MismatchError);
    CHECK_THROWS_AS(m.coefficient_matrix(Th.row(0)), ConfigError);

    Rng rng2(29);
    Model fresh(canonical_architecture("A3_deeponet"), InputDims{100, 100, 0}, rng2);
    CHECK_THROWS_AS(fresh.backward(Eigen::MatrixXd::Zero(2, 3)), MismatchError);

    ArchitectureSpec bad = canonical_architecture("A3_varmion");
    bad.p = 32;  // conv chain yields 64
    Rng rng3(29);
    CHECK_THROWS_AS(Model(bad, InputDims{100, 100, 0}, rng3), ConfigError);

    Rng rng4(29);
    CHECK_THROWS_AS(Model(canonical_architecture("A3_varmion"), InputDims{100, 0, 0}, rng4), ConfigError);
}

TEST_CASE("trunk values and input maps expose diagnostic views") {
    Rng rng(31);
    Model m(canonical_architecture("A4_varmion"), InputDims{144, 144, 24}, rng);
    Eigen::MatrixXd X = random_points(9, rng);
    Eigen::MatrixXd T = m.trunk_values(X);
    CHECK(T.rows() == 9);
    CHECK(T.cols() == 72);
    CHECK(m.matrix_A().rows() == 72);
    CHECK(m.matrix_A().cols() == 144);
    CHECK(m.matrix_A_tilde().cols() == 24);
    Eigen::MatrixXd D = m.coefficient_matrix(random_matrix(1, 144, rng));
    CHECK(D.rows() == 72);
    CHECK(D.cols() == 72);
    CHECK(D.allFinite());
}
