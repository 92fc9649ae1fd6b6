#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "varmion/common.hpp"

namespace varmion {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Dense row-major 64-bit tensor. All network values and container arrays use
// this one representation.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)), data(count(shape), 0.0) {}
    Tensor(std::vector<std::int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != numel())
            throw MismatchError("tensor: value count does not match shape");
    }

    static std::int64_t count(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (auto e : s) n *= e;
        return n;
    }

    std::int64_t numel() const { return count(shape); }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }
    std::int64_t dim(std::int64_t i) const { return shape[static_cast<std::size_t>(i)]; }

    // Row-major contiguous, so reshape is a relabeling.
    void set_shape(std::vector<std::int64_t> s) {
        if (count(s) != numel())
            throw MismatchError("tensor reshape: element count mismatch " + shape_str(shape) + " -> " + shape_str(s));
        shape = std::move(s);
    }

    bool finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::int64_t> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static std::string shape_str(const std::vector<std::int64_t>& s) {
        std::string out = "(";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + ")";
    }
};

// 2D map helpers. rows*cols must equal numel.
inline MatMap mat_view(Tensor& t, std::int64_t rows, std::int64_t cols) {
    if (rows * cols != t.numel()) throw MismatchError("mat_view: bad dimensions for " + Tensor::shape_str(t.shape));
    return MatMap(t.data.data(), rows, cols);
}
inline ConstMatMap mat_view(const Tensor& t, std::int64_t rows, std::int64_t cols) {
    if (rows * cols != t.numel()) throw MismatchError("mat_view: bad dimensions for " + Tensor::shape_str(t.shape));
    return ConstMatMap(t.data.data(), rows, cols);
}
inline VecMap vec_view(Tensor& t) { return VecMap(t.data.data(), t.numel()); }
inline ConstVecMap vec_view(const Tensor& t) { return ConstVecMap(t.data.data(), t.numel()); }

}  // namespace varmion
