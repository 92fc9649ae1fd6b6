#pragma once

#include <Eigen/Dense>
#include <vector>

#include "varmion/common.hpp"
#include "varmion/rng.hpp"

namespace varmion {

// Squared-exponential covariance C_ij = exp(-|p_i - p_j|^2 / (2 l^2)) plus a
// small diagonal jitter, returned as its lower Cholesky factor. Jitter starts
// at 1e-8 and grows tenfold per retry up to 1e-4 before giving up.
Eigen::MatrixXd build_covariance_factor(const Eigen::MatrixXd& points, double length_scale);

// Raw fields factor*z, one per index, z standard normal from Rng::stream(seed, index).
// Replaying any index in isolation reproduces the same field.
std::vector<Eigen::VectorXd> sample_fields(const Eigen::MatrixXd& factor, int count, std::uint64_t seed);
Eigen::VectorXd sample_field_at(const Eigen::MatrixXd& factor, std::uint64_t seed, std::uint64_t index);

enum class RescaleMode { per_sample, global_quantile };
RescaleMode rescale_mode_from_string(const std::string& s);
std::string rescale_mode_name(RescaleMode mode);

// Affine map sending the field's own (min, max) onto (target_min, target_max).
// Constant fields map to the interval midpoint.
Eigen::VectorXd rescale_field(const Eigen::VectorXd& field, double target_min, double target_max);

// Sample-independent variant: maps the standard-normal 0.1%/99.9% quantile
// span [-3.0902, 3.0902] onto the target interval and clamps. Keeps the map
// identical across samples at the cost of not filling the interval exactly.
Eigen::VectorXd rescale_field_quantile(const Eigen::VectorXd& field, double target_min, double target_max);

Eigen::VectorXd rescale_with_mode(const Eigen::VectorXd& field, double target_min, double target_max,
                                  RescaleMode mode);

}  // namespace varmion
