#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tbnet/activations.hpp"
#include "tbnet/half.hpp"
#include "tbnet/ops.hpp"
#include "tbnet/tensor.hpp"

namespace tbnet {

/// Forward-pass mode. fp16 emulates the deployment's hybrid precision:
/// layer outputs are rounded to binary16 while all accumulation stays in
/// the Scalar type.
struct RunMode {
  bool train = false;
  bool fp16 = false;
};

template <typename Scalar>
struct ParamRef {
  std::string name;
  Tensor4<Scalar>* value;
  Tensor4<Scalar>* grad;
};

template <typename Scalar>
struct BufferRef {
  std::string name;
  Tensor4<Scalar>* value;
};

template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor4<Scalar> forward(const Tensor4<Scalar>& x,
                                  const RunMode& mode) = 0;
  virtual Tensor4<Scalar> backward(const Tensor4<Scalar>& grad_out) = 0;
  virtual void collect(const std::string& prefix,
                       std::vector<ParamRef<Scalar>>& params,
                       std::vector<BufferRef<Scalar>>& buffers) {
    (void)prefix;
    (void)params;
    (void)buffers;
  }
  virtual void init_params(std::mt19937_64& rng) { (void)rng; }
};

namespace detail {

template <typename Scalar>
void maybe_round_half(Tensor4<Scalar>& t, const RunMode& mode) {
  if (mode.fp16) round_tensor_to_half(t);
}

/// Fan-in scaled uniform init: U(-sqrt(1/fan_in), sqrt(1/fan_in)).
template <typename Scalar>
void uniform_init(Tensor4<Scalar>& t, Eigen::Index fan_in,
                  std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < t.numel(); ++i) {
    t.data[i] = static_cast<Scalar>(dist(rng));
  }
}

template <typename Scalar>
Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                         Eigen::RowMajor>>
as_matrix(Tensor4<Scalar>& t, Eigen::Index rows, Eigen::Index cols) {
  return {t.data.data(), rows, cols};
}

template <typename Scalar>
Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                               Eigen::RowMajor>>
as_matrix(const Tensor4<Scalar>& t, Eigen::Index rows, Eigen::Index cols) {
  return {t.data.data(), rows, cols};
}

}  // namespace detail

template <typename Scalar>
class Conv2dLayer final : public Layer<Scalar> {
 public:
  Conv2dLayer(int in_c, int out_c, int kernel, int stride, int groups,
              int pad, bool bias)
      : in_c_(in_c), out_c_(out_c), has_bias_(bias),
        weight_(out_c, in_c / groups, kernel, kernel),
        weight_grad_(out_c, in_c / groups, kernel, kernel),
        bias_(1, out_c, 1, 1), bias_grad_(1, out_c, 1, 1) {
    params_.stride_h = params_.stride_w = stride;
    params_.pad_h = params_.pad_w = pad;
    params_.groups = groups;
    params_.validate();
    if (in_c % groups != 0 || out_c % groups != 0) {
      throw std::invalid_argument("Conv2dLayer: groups must divide channels");
    }
  }

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x,
                          const RunMode& mode) override {
    input_ = x;
    std::optional<VecX<Scalar>> b;
    if (has_bias_) {
      b = Eigen::Map<const VecX<Scalar>>(bias_.data.data(), out_c_);
    }
    Tensor4<Scalar> y = conv2d(x, weight_, b, params_);
    detail::maybe_round_half(y, mode);
    return y;
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& grad_out) override {
    Tensor4<Scalar> gx, gw;
    VecX<Scalar> gb;
    conv2d_backward(input_, weight_, params_, grad_out, &gx, &gw,
                    has_bias_ ? &gb : nullptr);
    weight_grad_.data += gw.data;
    if (has_bias_) {
      bias_grad_.data += Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(
          gb.data(), out_c_);
    }
    return gx;
  }

  void collect(const std::string& prefix,
               std::vector<ParamRef<Scalar>>& params,
               std::vector<BufferRef<Scalar>>& buffers) override {
    (void)buffers;
    params.push_back({prefix + ".w", &weight_, &weight_grad_});
    if (has_bias_) params.push_back({prefix + ".b", &bias_, &bias_grad_});
  }

  void init_params(std::mt19937_64& rng) override {
    detail::uniform_init(weight_, weight_.c() * weight_.h() * weight_.w(),
                         rng);
    bias_.data.setZero();
  }

  const ConvParams& conv_params() const { return params_; }
  Tensor4<Scalar>& weight() { return weight_; }

 private:
  int in_c_, out_c_;
  bool has_bias_;
  ConvParams params_;
  Tensor4<Scalar> weight_, weight_grad_;
  Tensor4<Scalar> bias_, bias_grad_;
  Tensor4<Scalar> input_;
};

template <typename Scalar>
class BatchNormLayer final : public Layer<Scalar> {
 public:
  explicit BatchNormLayer(int channels, Scalar eps = Scalar(1e-5),
                          Scalar ema = Scalar(0.9))
      : c_(channels), eps_(eps), ema_(ema),
        gamma_(1, channels, 1, 1), gamma_grad_(1, channels, 1, 1),
        beta_(1, channels, 1, 1), beta_grad_(1, channels, 1, 1),
        running_mean_(1, channels, 1, 1), running_var_(1, channels, 1, 1) {
    gamma_.data.setOnes();
    running_var_.data.setOnes();
  }

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x,
                          const RunMode& mode) override {
    if (x.c() != c_) {
      throw std::invalid_argument("BatchNormLayer: expected " +
                                  std::to_string(c_) + " channels, got " +
                                  x.shape_str());
    }
    input_ = x;
    train_mode_ = mode.train;
    const Eigen::Index m = x.n() * x.h() * x.w();
    mean_.setZero(c_);
    var_.setZero(c_);
    if (mode.train) {
      for (Eigen::Index n = 0; n < x.n(); ++n) {
        for (Eigen::Index c = 0; c < c_; ++c) {
          mean_[c] += x.plane(n, c).sum();
        }
      }
      mean_ /= static_cast<Scalar>(m);
      for (Eigen::Index n = 0; n < x.n(); ++n) {
        for (Eigen::Index c = 0; c < c_; ++c) {
          var_[c] += (x.plane(n, c).array() - mean_[c]).square().sum();
        }
      }
      var_ /= static_cast<Scalar>(m);  // biased, matches running stats
      for (Eigen::Index c = 0; c < c_; ++c) {
        running_mean_.data[c] =
            ema_ * running_mean_.data[c] + (Scalar(1) - ema_) * mean_[c];
        running_var_.data[c] =
            ema_ * running_var_.data[c] + (Scalar(1) - ema_) * var_[c];
      }
    } else {
      for (Eigen::Index c = 0; c < c_; ++c) {
        mean_[c] = running_mean_.data[c];
        var_[c] = running_var_.data[c];
      }
    }
    inv_std_.resize(c_);
    for (Eigen::Index c = 0; c < c_; ++c) {
      inv_std_[c] = Scalar(1) / std::sqrt(var_[c] + eps_);
    }
    xhat_ = x;
    Tensor4<Scalar> y = x;
    for (Eigen::Index n = 0; n < x.n(); ++n) {
      for (Eigen::Index c = 0; c < c_; ++c) {
        xhat_.plane(n, c) =
            ((x.plane(n, c).array() - mean_[c]) * inv_std_[c]).matrix();
        y.plane(n, c) =
            (xhat_.plane(n, c).array() * gamma_.data[c] + beta_.data[c])
                .matrix();
      }
    }
    detail::maybe_round_half(y, mode);
    return y;
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& g) override {
    const Eigen::Index m = input_.n() * input_.h() * input_.w();
    Tensor4<Scalar> gx(input_.n(), input_.c(), input_.h(), input_.w());
    for (Eigen::Index c = 0; c < c_; ++c) {
      Scalar sum_g = 0, sum_gx = 0;
      for (Eigen::Index n = 0; n < input_.n(); ++n) {
        sum_g += g.plane(n, c).sum();
        sum_gx += (g.plane(n, c).array() * xhat_.plane(n, c).array()).sum();
      }
      gamma_grad_.data[c] += sum_gx;
      beta_grad_.data[c] += sum_g;
      const Scalar gamma = gamma_.data[c];
      if (train_mode_) {
        const Scalar inv_m = Scalar(1) / static_cast<Scalar>(m);
        for (Eigen::Index n = 0; n < input_.n(); ++n) {
          gx.plane(n, c) =
              (gamma * inv_std_[c] *
               (g.plane(n, c).array() - sum_g * inv_m -
                xhat_.plane(n, c).array() * sum_gx * inv_m))
                  .matrix();
        }
      } else {
        for (Eigen::Index n = 0; n < input_.n(); ++n) {
          gx.plane(n, c) = (g.plane(n, c).array() * gamma * inv_std_[c]).matrix();
        }
      }
    }
    return gx;
  }

  void collect(const std::string& prefix,
               std::vector<ParamRef<Scalar>>& params,
               std::vector<BufferRef<Scalar>>& buffers) override {
    params.push_back({prefix + ".gamma", &gamma_, &gamma_grad_});
    params.push_back({prefix + ".beta", &beta_, &beta_grad_});
    buffers.push_back({prefix + ".running_mean", &running_mean_});
    buffers.push_back({prefix + ".running_var", &running_var_});
  }

 private:
  int c_;
  Scalar eps_, ema_;
  Tensor4<Scalar> gamma_, gamma_grad_, beta_, beta_grad_;
  Tensor4<Scalar> running_mean_, running_var_;
  Tensor4<Scalar> input_, xhat_;
  VecX<Scalar> mean_, var_, inv_std_;
  bool train_mode_ = false;
};

template <typename Scalar>
class ActivationLayer final : public Layer<Scalar> {
 public:
  explicit ActivationLayer(Activation act) : act_(act) {}

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x,
                          const RunMode& mode) override {
    input_ = x;
    Tensor4<Scalar> y = x;
    for (Eigen::Index i = 0; i < y.numel(); ++i) {
      y.data[i] = apply_activation(act_, y.data[i]);
    }
    detail::maybe_round_half(y, mode);
    return y;
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& g) override {
    Tensor4<Scalar> gx = g;
    for (Eigen::Index i = 0; i < gx.numel(); ++i) {
      gx.data[i] *= activation_grad(act_, input_.data[i]);
    }
    return gx;
  }

 private:
  Activation act_;
  Tensor4<Scalar> input_;
};

template <typename Scalar>
class GlobalAvgPoolLayer final : public Layer<Scalar> {
 public:
  Tensor4<Scalar> forward(const Tensor4<Scalar>& x,
                          const RunMode& mode) override {
    input_ = x;
    Tensor4<Scalar> y = global_avg_pool(x);
    detail::maybe_round_half(y, mode);
    return y;
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& g) override {
    return global_avg_pool_backward(input_, g);
  }

 private:
  Tensor4<Scalar> input_;
};

template <typename Scalar>
class DenseLayer final : public Layer<Scalar> {
 public:
  DenseLayer(int in_f, int out_f)
      : in_f_(in_f), out_f_(out_f),
        weight_(in_f, out_f, 1, 1), weight_grad_(in_f, out_f, 1, 1),
        bias_(1, out_f, 1, 1), bias_grad_(1, out_f, 1, 1) {}

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x,
                          const RunMode& mode) override {
    input_ = x;
    auto w = detail::as_matrix(weight_, in_f_, out_f_);
    MatX<Scalar> wm = w;
    VecX<Scalar> b = Eigen::Map<const VecX<Scalar>>(bias_.data.data(), out_f_);
    Tensor4<Scalar> y = dense(x, wm, b);
    detail::maybe_round_half(y, mode);
    return y;
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& g) override {
    MatX<Scalar> wm = detail::as_matrix(weight_, in_f_, out_f_);
    Tensor4<Scalar> gx;
    MatX<Scalar> gw(in_f_, out_f_);
    VecX<Scalar> gb(out_f_);
    dense_backward(input_, wm, g, &gx, &gw, &gb);
    detail::as_matrix(weight_grad_, in_f_, out_f_) += gw;
    bias_grad_.data += Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>(
        gb.data(), out_f_);
    return gx;
  }

  void collect(const std::string& prefix,
               std::vector<ParamRef<Scalar>>& params,
               std::vector<BufferRef<Scalar>>& buffers) override {
    (void)buffers;
    params.push_back({prefix + ".w", &weight_, &weight_grad_});
    params.push_back({prefix + ".b", &bias_, &bias_grad_});
  }

  void init_params(std::mt19937_64& rng) override {
    detail::uniform_init(weight_, in_f_, rng);
    bias_.data.setZero();
  }

 private:
  int in_f_, out_f_;
  Tensor4<Scalar> weight_, weight_grad_, bias_, bias_grad_;
  Tensor4<Scalar> input_;
};

/// Channel attention: squeeze (global average pool), excitation (two
/// fully connected layers, relu then sigmoid), and per-channel rescale.
/// The reduced width is max(1, round(C/r)).
template <typename Scalar>
class SELayer final : public Layer<Scalar> {
 public:
  SELayer(int channels, int reduction = 4)
      : c_(channels),
        red_(std::max(1, static_cast<int>(
                             std::lround(static_cast<double>(channels) /
                                         reduction)))),
        w1_(c_, red_, 1, 1), w1_grad_(c_, red_, 1, 1),
        b1_(1, red_, 1, 1), b1_grad_(1, red_, 1, 1),
        w2_(red_, c_, 1, 1), w2_grad_(red_, c_, 1, 1),
        b2_(1, c_, 1, 1), b2_grad_(1, c_, 1, 1) {
    if (channels < 1 || reduction < 1) {
      throw std::invalid_argument("SELayer: channels and reduction must be positive");
    }
  }

  int reduced_width() const { return red_; }

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x,
                          const RunMode& mode) override {
    if (x.c() != c_) {
      throw std::invalid_argument("SELayer: expected " + std::to_string(c_) +
                                  " channels, got " + x.shape_str());
    }
    input_ = x;
    const Eigen::Index n = x.n();
    Tensor4<Scalar> zt = global_avg_pool(x);
    z_ = detail::as_matrix(zt, n, c_);
    auto w1 = detail::as_matrix(w1_, c_, red_);
    auto w2 = detail::as_matrix(w2_, red_, c_);
    a1_.noalias() = z_ * w1;
    a1_.rowwise() +=
        Eigen::Map<const VecX<Scalar>>(b1_.data.data(), red_).transpose();
    h_ = a1_.unaryExpr([](Scalar v) { return relu(v); });
    a2_.noalias() = h_ * w2;
    a2_.rowwise() +=
        Eigen::Map<const VecX<Scalar>>(b2_.data.data(), c_).transpose();
    s_ = a2_.unaryExpr([](Scalar v) { return sigmoid(v); });

    Tensor4<Scalar> scale(n, c_, 1, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < c_; ++c) {
        scale.at(i, c, 0, 0) = s_(i, c);
      }
    }
    Tensor4<Scalar> y = mul(x, scale);
    detail::maybe_round_half(y, mode);
    return y;
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& g) override {
    const Eigen::Index n = input_.n();
    // ds_nc = sum_ij g * x; direct input path gx = g * s (broadcast)
    MatX<Scalar> ds(n, c_);
    Tensor4<Scalar> gx(input_.n(), input_.c(), input_.h(), input_.w());
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < c_; ++c) {
        ds(i, c) =
            (g.plane(i, c).array() * input_.plane(i, c).array()).sum();
        gx.plane(i, c) = (g.plane(i, c).array() * s_(i, c)).matrix();
      }
    }
    MatX<Scalar> da2 =
        ds.array() * s_.array() * (Scalar(1) - s_.array());
    auto w1 = detail::as_matrix(w1_, c_, red_);
    auto w2 = detail::as_matrix(w2_, red_, c_);
    detail::as_matrix(w2_grad_, red_, c_) += h_.transpose() * da2;
    b2_grad_.data += da2.colwise().sum().transpose().array();
    MatX<Scalar> dh = da2 * w2.transpose();
    MatX<Scalar> da1 =
        dh.array() * a1_.unaryExpr([](Scalar v) { return relu_grad(v); }).array();
    detail::as_matrix(w1_grad_, c_, red_) += z_.transpose() * da1;
    b1_grad_.data += da1.colwise().sum().transpose().array();
    MatX<Scalar> dz = da1 * w1.transpose();
    const Scalar inv = Scalar(1) / static_cast<Scalar>(input_.h() * input_.w());
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < c_; ++c) {
        gx.plane(i, c).array() += dz(i, c) * inv;
      }
    }
    return gx;
  }

  void collect(const std::string& prefix,
               std::vector<ParamRef<Scalar>>& params,
               std::vector<BufferRef<Scalar>>& buffers) override {
    (void)buffers;
    params.push_back({prefix + ".w1", &w1_, &w1_grad_});
    params.push_back({prefix + ".b1", &b1_, &b1_grad_});
    params.push_back({prefix + ".w2", &w2_, &w2_grad_});
    params.push_back({prefix + ".b2", &b2_, &b2_grad_});
  }

  void init_params(std::mt19937_64& rng) override {
    detail::uniform_init(w1_, c_, rng);
    b1_.data.setZero();
    detail::uniform_init(w2_, red_, rng);
    b2_.data.setZero();
  }

  Tensor4<Scalar>& w1() { return w1_; }
  Tensor4<Scalar>& w2() { return w2_; }
  Tensor4<Scalar>& b1() { return b1_; }
  Tensor4<Scalar>& b2() { return b2_; }

 private:
  int c_, red_;
  Tensor4<Scalar> w1_, w1_grad_, b1_, b1_grad_;
  Tensor4<Scalar> w2_, w2_grad_, b2_, b2_grad_;
  Tensor4<Scalar> input_;
  MatX<Scalar> z_, a1_, h_, a2_, s_;
};

}  // namespace tbnet
