#pragma once

#include <memory>
#include <string>
#include <vector>

#include "varmion/rng.hpp"
#include "varmion/tensor.hpp"

namespace varmion {

enum class LayerKind { dense, linear_nobias, trconv2d, batchnorm, relu, tanhshrink, reshape, rbf };

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

// One block of the network chains. Construction helpers keep the call sites
// close to the architecture listings.
struct LayerSpec {
    LayerKind kind;
    int width = 0;                             // dense, linear_nobias
    int filters = 0, kernel = 0, stride = 0;   // trconv2d
    std::vector<std::int64_t> target_shape;    // reshape, per sample
    int basis = 0;                             // rbf

    static LayerSpec dense(int k);
    static LayerSpec linear_nobias(int k);
    static LayerSpec trconv2d(int filters, int kernel, int stride);
    static LayerSpec batchnorm();
    static LayerSpec relu();
    static LayerSpec tanhshrink();
    static LayerSpec reshape(std::vector<std::int64_t> shape);
    static LayerSpec rbf(int m);
};

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
};

// A layer owns its parameters and a forward cache. Tensors carry the batch as
// the leading extent; per-sample shapes are everything after it.
class Layer {
  public:
    explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, bool train) = 0;
    // Consumes the cache of the matching forward; accumulates into parameter
    // grads and returns the gradient with respect to the input.
    virtual Tensor backward(const Tensor& dy) = 0;
    virtual std::vector<Parameter*> parameters() { return {}; }
    virtual std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const = 0;

    const LayerSpec& spec() const { return spec_; }

  protected:
    LayerSpec spec_;
};

// Layer chain with one input and one output. in_shape is per sample.
class Sequential {
  public:
    Sequential() = default;
    Sequential(std::string name, const std::vector<LayerSpec>& specs, std::vector<std::int64_t> in_shape, Rng& rng);

    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& dy);

    std::vector<Parameter*> parameters();
    const std::vector<std::int64_t>& in_shape() const { return in_shape_; }
    const std::vector<std::int64_t>& out_shape() const { return out_shape_; }
    const std::string& name() const { return name_; }
    std::size_t layer_count() const { return layers_.size(); }
    const std::vector<LayerSpec>& specs() const { return specs_; }

  private:
    std::string name_;
    std::vector<LayerSpec> specs_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<std::int64_t> in_shape_, out_shape_;
};

std::unique_ptr<Layer> make_layer(const std::string& name, const LayerSpec& spec,
                                  const std::vector<std::int64_t>& in_shape, Rng& rng);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moments are exposed by
// parameter name for checkpointing.
class Adam {
  public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg);

    void zero_grad();
    void step();

    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }
    const std::vector<Parameter*>& params() const { return params_; }
    Tensor& moment1(const std::string& param_name);
    Tensor& moment2(const std::string& param_name);
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

  private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

struct SpectralNormResult {
    double value = 0.0;
    bool converged = false;
    int iterations = 0;
};

// Largest singular value by power iteration on A^T A with a deterministic
// start vector.
SpectralNormResult spectral_norm(const Eigen::MatrixXd& A, double tol = 1e-8, int max_iter = 10000);

}  // namespace varmion
