#include "varmion/grf.hpp"

#include <cmath>

namespace varmion {

Eigen::MatrixXd build_covariance_factor(const Eigen::MatrixXd& points, double length_scale) {
    if (length_scale <= 0.0) throw ConfigError("grf: length_scale must be positive");
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd C(n, n);
    const double inv = 1.0 / (2.0 * length_scale * length_scale);
    for (Eigen::Index i = 0; i < n; ++i) {
        C(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d2 = (points.row(i) - points.row(j)).squaredNorm();
            C(i, j) = C(j, i) = std::exp(-d2 * inv);
        }
    }
    for (double jitter = 1e-8; jitter <= 1e-4 * (1.0 + 1e-12); jitter *= 10.0) {
        Eigen::LLT<Eigen::MatrixXd> llt(C + jitter * Eigen::MatrixXd::Identity(n, n));
        if (llt.info() == Eigen::Success) {
            if (jitter > 1e-8) VARMION_INFO("grf: covariance factor needed jitter %.0e", jitter);
            return llt.matrixL();
        }
    }
    throw SolverError("grf: covariance factorization failed even with jitter 1e-4");
}

Eigen::VectorXd sample_field_at(const Eigen::MatrixXd& factor, std::uint64_t seed, std::uint64_t index) {
    Rng rng = Rng::stream(seed, index);
    Eigen::VectorXd z(factor.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return factor.template triangularView<Eigen::Lower>() * z;
}

std::vector<Eigen::VectorXd> sample_fields(const Eigen::MatrixXd& factor, int count, std::uint64_t seed) {
    if (count < 1) throw ConfigError("grf: sample count must be >= 1");
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(sample_field_at(factor, seed, static_cast<std::uint64_t>(i)));
    return out;
}

RescaleMode rescale_mode_from_string(const std::string& s) {
    if (s == "per_sample") return RescaleMode::per_sample;
    if (s == "global_quantile") return RescaleMode::global_quantile;
    throw ConfigError("grf: rescale_mode must be per_sample|global_quantile, got '" + s + "'");
}

std::string rescale_mode_name(RescaleMode mode) {
    return mode == RescaleMode::per_sample ? "per_sample" : "global_quantile";
}

Eigen::VectorXd rescale_field(const Eigen::VectorXd& field, double target_min, double target_max) {
    if (!(target_min < target_max)) throw ConfigError("grf: target_min must be below target_max");
    const double lo = field.minCoeff(), hi = field.maxCoeff();
    if (hi - lo < 1e-12)
        return Eigen::VectorXd::Constant(field.size(), 0.5 * (target_min + target_max));
    return (target_min + (target_max - target_min) / (hi - lo) * (field.array() - lo)).matrix();
}

Eigen::VectorXd rescale_field_quantile(const Eigen::VectorXd& field, double target_min, double target_max) {
    if (!(target_min < target_max)) throw ConfigError("grf: target_min must be below target_max");
    const double span = 3.090232306167813;  // standard-normal 99.9% quantile
    const double mid = 0.5 * (target_min + target_max), half = 0.5 * (target_max - target_min);
    Eigen::VectorXd out(field.size());
    for (Eigen::Index i = 0; i < field.size(); ++i) {
        const double v = mid + half * (field(i) / span);
        out(i) = std::min(target_max, std::max(target_min, v));
    }
    return out;
}

Eigen::VectorXd rescale_with_mode(const Eigen::VectorXd& field, double target_min, double target_max,
                                  RescaleMode mode) {
    if (mode == RescaleMode::per_sample) return rescale_field(field, target_min, target_max);
    return rescale_field_quantile(field, target_min, target_max);
}

}  // namespace varmion
