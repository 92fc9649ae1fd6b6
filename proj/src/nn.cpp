#include "varmion/nn.hpp"

#include <cmath>

namespace varmion {

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::dense: return "dense";
        case LayerKind::linear_nobias: return "linear_nobias";
        case LayerKind::trconv2d: return "trconv2d";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::relu: return "relu";
        case LayerKind::tanhshrink: return "tanhshrink";
        case LayerKind::reshape: return "reshape";
        case LayerKind::rbf: return "rbf";
    }
    throw MismatchError("unknown layer kind");
}

LayerKind layer_kind_from_string(const std::string& s) {
    for (LayerKind k : {LayerKind::dense, LayerKind::linear_nobias, LayerKind::trconv2d, LayerKind::batchnorm,
                        LayerKind::relu, LayerKind::tanhshrink, LayerKind::reshape, LayerKind::rbf})
        if (layer_kind_name(k) == s) return k;
    throw ConfigError("unknown layer kind '" + s + "'");
}

LayerSpec LayerSpec::dense(int k) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.width = k;
    return s;
}
LayerSpec LayerSpec::linear_nobias(int k) {
    LayerSpec s;
    s.kind = LayerKind::linear_nobias;
    s.width = k;
    return s;
}
LayerSpec LayerSpec::trconv2d(int filters, int kernel, int stride) {
    LayerSpec s;
    s.kind = LayerKind::trconv2d;
    s.filters = filters;
    s.kernel = kernel;
    s.stride = stride;
    return s;
}
LayerSpec LayerSpec::batchnorm() {
    LayerSpec s;
    s.kind = LayerKind::batchnorm;
    return s;
}
LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
}
LayerSpec LayerSpec::tanhshrink() {
    LayerSpec s;
    s.kind = LayerKind::tanhshrink;
    return s;
}
LayerSpec LayerSpec::reshape(std::vector<std::int64_t> shape) {
    LayerSpec s;
    s.kind = LayerKind::reshape;
    s.target_shape = std::move(shape);
    return s;
}
LayerSpec LayerSpec::rbf(int m) {
    LayerSpec s;
    s.kind = LayerKind::rbf;
    s.basis = m;
    return s;
}

namespace {

std::int64_t flat_count(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::vector<std::int64_t> with_batch(std::int64_t b, const std::vector<std::int64_t>& per_sample) {
    std::vector<std::int64_t> s{b};
    s.insert(s.end(), per_sample.begin(), per_sample.end());
    return s;
}

std::vector<std::int64_t> drop_batch(const Tensor& t) {
    if (t.rank() < 1) throw MismatchError("tensor without batch extent");
    return std::vector<std::int64_t>(t.shape.begin() + 1, t.shape.end());
}

void glorot_fill(Tensor& w, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w.data) v = rng.uniform(-limit, limit);
}

class DenseLayer : public Layer {
  public:
    DenseLayer(const std::string& name, LayerSpec spec, const std::vector<std::int64_t>& in_shape, Rng& rng,
               bool bias)
        : Layer(std::move(spec)), bias_(bias) {
        if (in_shape.size() != 1)
            throw MismatchError(layer_kind_name(spec_.kind) + " " + name + ": wants a vector input, got " +
                                Tensor::shape_str(in_shape));
        in_ = in_shape[0];
        out_ = spec_.width;
        if (out_ <= 0) throw ConfigError(name + ": width must be positive");
        W_.name = name + "/W";
        W_.value = Tensor({out_, in_});
        W_.grad = Tensor({out_, in_});
        glorot_fill(W_.value, in_, out_, rng);
        if (bias_) {
            b_.name = name + "/b";
            b_.value = Tensor({out_});
            b_.grad = Tensor({out_});
        }
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.rank() != 2 || x.dim(1) != in_)
            throw MismatchError(W_.name + ": input " + Tensor::shape_str(x.shape) + " incompatible with (" +
                                std::to_string(out_) + "," + std::to_string(in_) + ")");
        x_ = x;
        has_cache_ = true;
        const std::int64_t B = x.dim(0);
        Tensor y({B, out_});
        auto X = mat_view(x_, B, in_);
        auto W = mat_view(W_.value, out_, in_);
        auto Y = mat_view(y, B, out_);
        Y.noalias() = X * W.transpose();
        if (bias_) {
            auto bv = vec_view(b_.value);
            Y.rowwise() += bv.transpose();
        }
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        if (!has_cache_) throw MismatchError(W_.name + ": backward before forward");
        has_cache_ = false;
        const std::int64_t B = x_.dim(0);
        if (dy.rank() != 2 || dy.dim(0) != B || dy.dim(1) != out_)
            throw MismatchError(W_.name + ": gradient shape " + Tensor::shape_str(dy.shape));
        auto dY = mat_view(dy, B, out_);
        auto X = mat_view(x_, B, in_);
        mat_view(W_.grad, out_, in_).noalias() += dY.transpose() * X;
        if (bias_) vec_view(b_.grad) += dY.colwise().sum().transpose();
        Tensor dx({B, in_});
        mat_view(dx, B, in_).noalias() = dY * mat_view(W_.value, out_, in_);
        return dx;
    }

    std::vector<Parameter*> parameters() override {
        if (bias_) return {&W_, &b_};
        return {&W_};
    }

    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>&) const override { return {out_}; }

  private:
    bool bias_;
    std::int64_t in_ = 0, out_ = 0;
    Parameter W_, b_;
    Tensor x_;
    bool has_cache_ = false;
};

// Transpose convolution, channels-last, no padding: out = (in-1)*stride + kernel.
// Weight layout (Cin, k, k, Cout); forward is one GEMM against the flattened
// weight followed by a scatter-add over precomputed spatial offsets.
class TrConvLayer : public Layer {
  public:
    TrConvLayer(const std::string& name, LayerSpec spec, const std::vector<std::int64_t>& in_shape, Rng& rng)
        : Layer(std::move(spec)) {
        if (in_shape.size() != 3)
            throw MismatchError("trconv2d " + name + ": wants (H,W,C) input, got " + Tensor::shape_str(in_shape));
        H_ = in_shape[0];
        W_in_ = in_shape[1];
        Cin_ = in_shape[2];
        Cout_ = spec_.filters;
        k_ = spec_.kernel;
        s_ = spec_.stride;
        if (Cout_ <= 0 || k_ <= 0 || s_ <= 0) throw ConfigError(name + ": filters/kernel/stride must be positive");
        Ho_ = (H_ - 1) * s_ + k_;
        Wo_ = (W_in_ - 1) * s_ + k_;
        weight_.name = name + "/W";
        weight_.value = Tensor({Cin_, k_, k_, Cout_});
        weight_.grad = Tensor({Cin_, k_, k_, Cout_});
        glorot_fill(weight_.value, Cin_ * k_ * k_, Cout_ * k_ * k_, rng);
        bias_.name = name + "/b";
        bias_.value = Tensor({Cout_});
        bias_.grad = Tensor({Cout_});

        // spatial offset of each (input position, kernel tap) in the output
        offsets_.resize(static_cast<std::size_t>(H_ * W_in_ * k_ * k_));
        std::size_t at = 0;
        for (std::int64_t h = 0; h < H_; ++h)
            for (std::int64_t w = 0; w < W_in_; ++w)
                for (std::int64_t kh = 0; kh < k_; ++kh)
                    for (std::int64_t kw = 0; kw < k_; ++kw)
                        offsets_[at++] = (h * s_ + kh) * Wo_ + (w * s_ + kw);
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.rank() != 4 || x.dim(1) != H_ || x.dim(2) != W_in_ || x.dim(3) != Cin_)
            throw MismatchError(weight_.name + ": input " + Tensor::shape_str(x.shape) + " wants (B," +
                                std::to_string(H_) + "," + std::to_string(W_in_) + "," + std::to_string(Cin_) + ")");
        x_ = x;
        has_cache_ = true;
        const std::int64_t B = x.dim(0);
        const std::int64_t rows = B * H_ * W_in_, taps = k_ * k_ * Cout_;
        Tensor p({rows, taps});
        mat_view(p, rows, taps).noalias() = mat_view(x_, rows, Cin_) * mat_view(weight_.value, Cin_, taps);

        Tensor y({B, Ho_, Wo_, Cout_});
        const double* bias = bias_.value.data.data();
        for (std::int64_t b = 0; b < B; ++b) {
            double* yb = y.data.data() + b * Ho_ * Wo_ * Cout_;
            for (std::int64_t sp = 0; sp < Ho_ * Wo_; ++sp)
                for (std::int64_t c = 0; c < Cout_; ++c) yb[sp * Cout_ + c] = bias[c];
            const double* pb = p.data.data() + b * H_ * W_in_ * taps;
            const std::int64_t* off = offsets_.data();
            for (std::int64_t r = 0; r < H_ * W_in_; ++r) {
                const double* pr = pb + r * taps;
                for (std::int64_t t = 0; t < k_ * k_; ++t) {
                    double* dst = yb + off[r * k_ * k_ + t] * Cout_;
                    const double* src = pr + t * Cout_;
                    for (std::int64_t c = 0; c < Cout_; ++c) dst[c] += src[c];
                }
            }
        }
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        if (!has_cache_) throw MismatchError(weight_.name + ": backward before forward");
        has_cache_ = false;
        const std::int64_t B = x_.dim(0);
        if (dy.rank() != 4 || dy.dim(0) != B || dy.dim(1) != Ho_ || dy.dim(2) != Wo_ || dy.dim(3) != Cout_)
            throw MismatchError(weight_.name + ": gradient shape " + Tensor::shape_str(dy.shape));
        const std::int64_t rows = B * H_ * W_in_, taps = k_ * k_ * Cout_;

        Tensor dp({rows, taps});
        for (std::int64_t b = 0; b < B; ++b) {
            const double* gb = dy.data.data() + b * Ho_ * Wo_ * Cout_;
            double* dpb = dp.data.data() + b * H_ * W_in_ * taps;
            for (std::int64_t r = 0; r < H_ * W_in_; ++r) {
                double* dpr = dpb + r * taps;
                for (std::int64_t t = 0; t < k_ * k_; ++t) {
                    const double* src = gb + offsets_[static_cast<std::size_t>(r * k_ * k_ + t)] * Cout_;
                    double* dst = dpr + t * Cout_;
                    for (std::int64_t c = 0; c < Cout_; ++c) dst[c] = src[c];
                }
            }
            for (std::int64_t sp = 0; sp < Ho_ * Wo_; ++sp)
                for (std::int64_t c = 0; c < Cout_; ++c)
                    bias_.grad.data[static_cast<std::size_t>(c)] += gb[sp * Cout_ + c];
        }

        mat_view(weight_.grad, Cin_, taps).noalias() +=
            mat_view(x_, rows, Cin_).transpose() * mat_view(dp, rows, taps);
        Tensor dx({B, H_, W_in_, Cin_});
        mat_view(dx, rows, Cin_).noalias() = mat_view(dp, rows, taps) * mat_view(weight_.value, Cin_, taps).transpose();
        return dx;
    }

    std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }

    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>&) const override { return {Ho_, Wo_, Cout_}; }

  private:
    std::int64_t H_ = 0, W_in_ = 0, Cin_ = 0, Cout_ = 0, k_ = 0, s_ = 0, Ho_ = 0, Wo_ = 0;
    Parameter weight_, bias_;
    Tensor x_;
    bool has_cache_ = false;
    std::vector<std::int64_t> offsets_;
};

// Channels-last batch normalization over all leading extents. Biased variance
// is used both for normalization and for the running statistics.
class BatchNormLayer : public Layer {
  public:
    static constexpr double kEps = 1e-12;
    static constexpr double kMomentum = 0.1;

    BatchNormLayer(const std::string& name, LayerSpec spec, const std::vector<std::int64_t>& in_shape, Rng&)
        : Layer(std::move(spec)) {
        if (in_shape.empty()) throw MismatchError("batchnorm " + name + ": scalar input");
        C_ = in_shape.back();
        gamma_.name = name + "/gamma";
        gamma_.value = Tensor::full({C_}, 1.0);
        gamma_.grad = Tensor({C_});
        beta_.name = name + "/beta";
        beta_.value = Tensor({C_});
        beta_.grad = Tensor({C_});
        running_mean_.name = name + "/running_mean";
        running_mean_.value = Tensor({C_});
        running_mean_.grad = Tensor({C_});
        running_mean_.trainable = false;
        running_var_.name = name + "/running_var";
        running_var_.value = Tensor::full({C_}, 1.0);
        running_var_.grad = Tensor({C_});
        running_var_.trainable = false;
    }

    Tensor forward(const Tensor& x, bool train) override {
        if (x.rank() < 2 || x.shape.back() != C_)
            throw MismatchError(gamma_.name + ": input " + Tensor::shape_str(x.shape) + " wants trailing extent " +
                                std::to_string(C_));
        const std::int64_t rows = x.numel() / C_;
        rows_ = rows;
        train_ = train;
        auto X = ConstMatMap(x.data.data(), rows, C_);

        Eigen::VectorXd mean(C_), var(C_);
        if (train) {
            mean = X.colwise().mean().transpose();
            var = ((X.rowwise() - mean.transpose()).array().square().colwise().sum() / double(rows))
                      .transpose()
                      .matrix();
            auto rm = vec_view(running_mean_.value);
            auto rv = vec_view(running_var_.value);
            rm = (1.0 - kMomentum) * rm + kMomentum * mean;
            rv = (1.0 - kMomentum) * rv + kMomentum * var;
        } else {
            mean = vec_view(running_mean_.value);
            var = vec_view(running_var_.value);
        }
        inv_std_ = (var.array() + kEps).rsqrt().matrix();

        Tensor y(x.shape);
        xhat_ = Tensor(x.shape);
        auto Xh = MatMap(xhat_.data.data(), rows, C_);
        Xh = (X.rowwise() - mean.transpose()).array().rowwise() * inv_std_.transpose().array();
        auto Y = MatMap(y.data.data(), rows, C_);
        auto g = vec_view(gamma_.value);
        auto b = vec_view(beta_.value);
        Y = (Xh.array().rowwise() * g.transpose().array()).rowwise() + b.transpose().array();
        has_cache_ = true;
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        if (!has_cache_) throw MismatchError(gamma_.name + ": backward before forward");
        has_cache_ = false;
        if (dy.shape != xhat_.shape)
            throw MismatchError(gamma_.name + ": gradient shape " + Tensor::shape_str(dy.shape));
        const std::int64_t rows = rows_;
        auto dY = ConstMatMap(dy.data.data(), rows, C_);
        auto Xh = ConstMatMap(xhat_.data.data(), rows, C_);
        auto g = vec_view(gamma_.value);

        vec_view(gamma_.grad) += (dY.array() * Xh.array()).colwise().sum().matrix().transpose();
        vec_view(beta_.grad) += dY.colwise().sum().transpose();

        Tensor dx(dy.shape);
        auto dX = MatMap(dx.data.data(), rows, C_);
        if (!train_) {
            dX = dY.array().rowwise() * (g.array() * inv_std_.array()).transpose();
            return dx;
        }
        // dxhat = dy * gamma; dx = inv_std/N * (N*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
        Eigen::MatrixXd dXh = dY.array().rowwise() * g.transpose().array();
        Eigen::RowVectorXd sum_dxh = dXh.colwise().sum();
        Eigen::RowVectorXd sum_dxh_xh = (dXh.array() * Xh.array()).colwise().sum();
        const double N = static_cast<double>(rows);
        Eigen::MatrixXd inner = N * dXh;
        inner.rowwise() -= sum_dxh;
        inner -= (Xh.array().rowwise() * sum_dxh_xh.array()).matrix();
        dX = inner.array().rowwise() * (inv_std_.transpose().array() / N);
        return dx;
    }

    std::vector<Parameter*> parameters() override { return {&gamma_, &beta_, &running_mean_, &running_var_}; }

    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override { return in; }

  private:
    std::int64_t C_ = 0, rows_ = 0;
    bool train_ = true;
    Parameter gamma_, beta_, running_mean_, running_var_;
    Tensor xhat_;
    Eigen::VectorXd inv_std_;
    bool has_cache_ = false;
};

class ReluLayer : public Layer {
  public:
    ReluLayer(const std::string& name, LayerSpec spec) : Layer(std::move(spec)), name_(name) {}

    Tensor forward(const Tensor& x, bool) override {
        mask_.assign(x.data.size(), 0);
        Tensor y(x.shape);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            // subgradient at 0 is 0: only strictly positive entries pass
            if (x.data[i] > 0.0) {
                y.data[i] = x.data[i];
                mask_[i] = 1;
            }
        }
        has_cache_ = true;
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        if (!has_cache_) throw MismatchError("relu " + name_ + ": backward before forward");
        has_cache_ = false;
        if (dy.data.size() != mask_.size()) throw MismatchError("relu " + name_ + ": gradient shape");
        Tensor dx(dy.shape);
        for (std::size_t i = 0; i < dy.data.size(); ++i) dx.data[i] = mask_[i] ? dy.data[i] : 0.0;
        return dx;
    }

    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override { return in; }

  private:
    std::string name_;
    std::vector<unsigned char> mask_;
    bool has_cache_ = false;
};

class TanhShrinkLayer : public Layer {
  public:
    TanhShrinkLayer(const std::string& name, LayerSpec spec) : Layer(std::move(spec)), name_(name) {}

    Tensor forward(const Tensor& x, bool) override {
        th_.resize(x.data.size());
        Tensor y(x.shape);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            th_[i] = std::tanh(x.data[i]);
            y.data[i] = x.data[i] - th_[i];
        }
        has_cache_ = true;
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        if (!has_cache_) throw MismatchError("tanhshrink " + name_ + ": backward before forward");
        has_cache_ = false;
        if (dy.data.size() != th_.size()) throw MismatchError("tanhshrink " + name_ + ": gradient shape");
        Tensor dx(dy.shape);
        for (std::size_t i = 0; i < dy.data.size(); ++i) dx.data[i] = dy.data[i] * th_[i] * th_[i];
        return dx;
    }

    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>& in) const override { return in; }

  private:
    std::string name_;
    std::vector<double> th_;
    bool has_cache_ = false;
};

class ReshapeLayer : public Layer {
  public:
    ReshapeLayer(const std::string& name, LayerSpec spec, const std::vector<std::int64_t>& in_shape)
        : Layer(std::move(spec)), name_(name), in_shape_(in_shape) {
        if (flat_count(in_shape) != flat_count(spec_.target_shape))
            throw MismatchError("reshape " + name + ": " + Tensor::shape_str(in_shape) + " -> " +
                                Tensor::shape_str(spec_.target_shape) + " changes the element count");
    }

    Tensor forward(const Tensor& x, bool) override {
        Tensor y = x;
        y.set_shape(with_batch(x.dim(0), spec_.target_shape));
        has_cache_ = true;
        return y;
    }

    Tensor backward(const Tensor& dy) override {
        if (!has_cache_) throw MismatchError("reshape " + name_ + ": backward before forward");
        has_cache_ = false;
        Tensor dx = dy;
        dx.set_shape(with_batch(dy.dim(0), in_shape_));
        return dx;
    }

    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>&) const override {
        return spec_.target_shape;
    }

  private:
    std::string name_;
    std::vector<std::int64_t> in_shape_;
    bool has_cache_ = false;
};

// y_i = exp(-|x - c_i|^2 / sigma_i^2)
class RbfLayer : public Layer {
  public:
    RbfLayer(const std::string& name, LayerSpec spec, const std::vector<std::int64_t>& in_shape, Rng& rng)
        : Layer(std::move(spec)) {
        if (in_shape.size() != 1)
            throw MismatchError("rbf " + name + ": wants a vector input, got " + Tensor::shape_str(in_shape));
        D_ = in_shape[0];
        m_ = spec_.basis;
        if (m_ <= 0) throw ConfigError(name + ": basis count must be positive");
        centers_.name = name + "/centers";
        centers_.value = Tensor({m_, D_});
        centers_.grad = Tensor({m_, D_});
        for (double& v : centers_.value.data) v = rng.uniform();
        widths_.name = name + "/widths";
        widths_.value = Tensor::full({m_}, 0.2);
        widths_.grad = Tensor({m_});
    }

    Tensor forward(const Tensor& x, bool) override {
        if (x.rank() != 2 || x.dim(1) != D_)
            throw MismatchError(centers_.name + ": input " + Tensor::shape_str(x.shape) + " wants (B," +
                                std::to_string(D_) + ")");
        x_ = x;
        const std::int64_t B = x.dim(0);
        y_ = Tensor({B, m_});
        auto X = mat_view(x_, B, D_);
        auto C = mat_view(centers_.value, m_, D_);
        auto Y = mat_view(y_, B, m_);
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t i = 0; i < m_; ++i) {
                const double s = widths_.value.data[static_cast<std::size_t>(i)];
                Y(b, i) = std::exp(-(X.row(b) - C.row(i)).squaredNorm() / (s * s));
            }
        has_cache_ = true;
        return y_;
    }

    Tensor backward(const Tensor& dy) override {
        if (!has_cache_) throw MismatchError(centers_.name + ": backward before forward");
        has_cache_ = false;
        const std::int64_t B = x_.dim(0);
        if (dy.rank() != 2 || dy.dim(0) != B || dy.dim(1) != m_)
            throw MismatchError(centers_.name + ": gradient shape " + Tensor::shape_str(dy.shape));
        Tensor dx({B, D_});
        auto X = mat_view(x_, B, D_);
        auto C = mat_view(centers_.value, m_, D_);
        auto Y = mat_view(y_, B, m_);
        auto dY = mat_view(dy, B, m_);
        auto dX = mat_view(dx, B, D_);
        auto dC = mat_view(centers_.grad, m_, D_);
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t i = 0; i < m_; ++i) {
                const double s = widths_.value.data[static_cast<std::size_t>(i)];
                const double common = dY(b, i) * Y(b, i) * 2.0 / (s * s);
                const auto diff = (X.row(b) - C.row(i)).eval();
                dX.row(b) -= common * diff;
                dC.row(i) += common * diff;
                widths_.grad.data[static_cast<std::size_t>(i)] += common * diff.squaredNorm() / s;
            }
        return dx;
    }

    std::vector<Parameter*> parameters() override { return {&centers_, &widths_}; }

    std::vector<std::int64_t> out_shape(const std::vector<std::int64_t>&) const override { return {m_}; }

  private:
    std::int64_t D_ = 0, m_ = 0;
    Parameter centers_, widths_;
    Tensor x_, y_;
    bool has_cache_ = false;
};

}  // namespace

std::unique_ptr<Layer> make_layer(const std::string& name, const LayerSpec& spec,
                                  const std::vector<std::int64_t>& in_shape, Rng& rng) {
    switch (spec.kind) {
        case LayerKind::dense: return std::make_unique<DenseLayer>(name, spec, in_shape, rng, true);
        case LayerKind::linear_nobias: return std::make_unique<DenseLayer>(name, spec, in_shape, rng, false);
        case LayerKind::trconv2d: return std::make_unique<TrConvLayer>(name, spec, in_shape, rng);
        case LayerKind::batchnorm: return std::make_unique<BatchNormLayer>(name, spec, in_shape, rng);
        case LayerKind::relu: return std::make_unique<ReluLayer>(name, spec);
        case LayerKind::tanhshrink: return std::make_unique<TanhShrinkLayer>(name, spec);
        case LayerKind::reshape: return std::make_unique<ReshapeLayer>(name, spec, in_shape);
        case LayerKind::rbf: return std::make_unique<RbfLayer>(name, spec, in_shape, rng);
    }
    throw MismatchError("unknown layer kind");
}

Sequential::Sequential(std::string name, const std::vector<LayerSpec>& specs, std::vector<std::int64_t> in_shape,
                       Rng& rng)
    : name_(std::move(name)), specs_(specs), in_shape_(std::move(in_shape)) {
    std::vector<std::int64_t> cur = in_shape_;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const std::string lname = name_ + "/" + std::to_string(i) + "_" + layer_kind_name(specs[i].kind);
        layers_.push_back(make_layer(lname, specs[i], cur, rng));
        cur = layers_.back()->out_shape(cur);
    }
    out_shape_ = cur;
}

Tensor Sequential::forward(const Tensor& x, bool train) {
    if (drop_batch(x) != in_shape_)
        throw MismatchError(name_ + ": input " + Tensor::shape_str(x.shape) + " wants per-sample " +
                            Tensor::shape_str(in_shape_));
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
}

Tensor Sequential::backward(const Tensor& dy) {
    Tensor cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
}

std::vector<Parameter*> Sequential::parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_)
        for (Parameter* p : l->parameters()) out.push_back(p);
    return out;
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : cfg_(cfg) {
    for (Parameter* p : params)
        if (p->trainable) params_.push_back(p);
    for (Parameter* p : params_) {
        m_.emplace_back(p->value.shape);
        v_.emplace_back(p->value.shape);
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter& p = *params_[k];
        auto& m = m_[k].data;
        auto& v = v_[k].data;
        for (std::size_t i = 0; i < p.value.data.size(); ++i) {
            const double g = p.grad.data[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

Tensor& Adam::moment1(const std::string& param_name) {
    for (std::size_t k = 0; k < params_.size(); ++k)
        if (params_[k]->name == param_name) return m_[k];
    throw MismatchError("adam: unknown parameter '" + param_name + "'");
}

Tensor& Adam::moment2(const std::string& param_name) {
    for (std::size_t k = 0; k < params_.size(); ++k)
        if (params_[k]->name == param_name) return v_[k];
    throw MismatchError("adam: unknown parameter '" + param_name + "'");
}

SpectralNormResult spectral_norm(const Eigen::MatrixXd& A, double tol, int max_iter) {
    SpectralNormResult res;
    if (A.size() == 0) {
        res.converged = true;
        return res;
    }
    if (A.cols() > A.rows()) return spectral_norm(Eigen::MatrixXd(A.transpose()), tol, max_iter);
    const Eigen::Index n = A.cols();
    Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    double prev = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        Eigen::VectorXd w = A * v;
        Eigen::VectorXd z = A.transpose() * w;
        const double zn = z.norm();
        res.iterations = it;
        if (zn == 0.0) {
            res.value = 0.0;
            res.converged = true;
            return res;
        }
        v = z / zn;
        const double sigma = (A * v).norm();
        res.value = sigma;
        if (std::abs(sigma - prev) <= tol * std::max(1.0, sigma)) {
            res.converged = true;
            return res;
        }
        prev = sigma;
    }
    return res;
}

}  // namespace varmion
