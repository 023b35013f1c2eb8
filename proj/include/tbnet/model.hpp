#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tbnet/layers.hpp"

namespace tbnet {

/// One inverted-residual unit: 1x1 expand, depthwise, optional channel
/// attention, 1x1 project. The residual connection is present iff
/// stride == 1 and in_channels == out_channels.
struct BottleneckSpec {
  int in_channels = 0;
  int out_channels = 0;
  int expansion = 0;
  int kernel = 3;
  int stride = 1;
  bool use_se = false;
  int se_reduction = 4;
  Activation activation = Activation::relu;

  bool has_residual() const {
    return stride == 1 && in_channels == out_channels;
  }
};

struct ModelSpec {
  std::string preset = "custom";
  int in_channels = 1;
  int stem_width = 16;
  int stem_stride = 2;
  std::vector<BottleneckSpec> blocks;
  int head_conv_width = 0;
  int head_hidden = 0;  // 0 disables the hidden dense layer
  int num_classes = 2;
  /// Replaces swish with its piecewise-linear variant in every block
  /// that requests swish.
  bool hard_swish = false;

  void validate() const {
    if (in_channels != 1 && in_channels != 3) {
      throw std::invalid_argument("ModelSpec: in_channels must be 1 or 3");
    }
    if (stem_width < 1 || head_conv_width < 1 || num_classes < 2) {
      throw std::invalid_argument("ModelSpec: invalid widths");
    }
    int prev = stem_width;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      if (b.in_channels != prev || b.out_channels < 1 || b.expansion < 1 ||
          b.kernel < 1 || b.kernel % 2 == 0 || b.stride < 1) {
        throw std::invalid_argument("ModelSpec: inconsistent block " +
                                    std::to_string(i));
      }
      prev = b.out_channels;
    }
  }
};

namespace detail {

template <typename Scalar>
Activation resolve_act(Activation a, bool hard) {
  return (hard && a == Activation::swish) ? Activation::hard_swish : a;
}

}  // namespace detail

template <typename Scalar>
class BottleneckLayer final : public Layer<Scalar> {
 public:
  BottleneckLayer(const BottleneckSpec& spec, bool hard_swish) : spec_(spec) {
    const Activation act =
        detail::resolve_act<Scalar>(spec.activation, hard_swish);
    if (spec.expansion != spec.in_channels) {
      expand_ = std::make_unique<Conv2dLayer<Scalar>>(
          spec.in_channels, spec.expansion, 1, 1, 1, 0, false);
      expand_bn_ = std::make_unique<BatchNormLayer<Scalar>>(spec.expansion);
      expand_act_ = std::make_unique<ActivationLayer<Scalar>>(act);
    }
    dw_ = std::make_unique<Conv2dLayer<Scalar>>(
        spec.expansion, spec.expansion, spec.kernel, spec.stride,
        spec.expansion, spec.kernel / 2, false);
    dw_bn_ = std::make_unique<BatchNormLayer<Scalar>>(spec.expansion);
    dw_act_ = std::make_unique<ActivationLayer<Scalar>>(act);
    if (spec.use_se) {
      se_ = std::make_unique<SELayer<Scalar>>(spec.expansion,
                                              spec.se_reduction);
    }
    project_ = std::make_unique<Conv2dLayer<Scalar>>(
        spec.expansion, spec.out_channels, 1, 1, 1, 0, false);
    project_bn_ = std::make_unique<BatchNormLayer<Scalar>>(spec.out_channels);
  }

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x,
                          const RunMode& mode) override {
    if (spec_.has_residual()) input_ = x;
    Tensor4<Scalar> y = x;
    if (expand_) {
      y = expand_->forward(y, mode);
      y = expand_bn_->forward(y, mode);
      y = expand_act_->forward(y, mode);
    }
    y = dw_->forward(y, mode);
    y = dw_bn_->forward(y, mode);
    y = dw_act_->forward(y, mode);
    if (se_) y = se_->forward(y, mode);
    y = project_->forward(y, mode);
    y = project_bn_->forward(y, mode);
    if (spec_.has_residual()) {
      y = add(y, input_);
      detail::maybe_round_half(y, mode);
    }
    return y;
  }

  Tensor4<Scalar> backward(const Tensor4<Scalar>& grad_out) override {
    Tensor4<Scalar> g = project_bn_->backward(grad_out);
    g = project_->backward(g);
    if (se_) g = se_->backward(g);
    g = dw_act_->backward(g);
    g = dw_bn_->backward(g);
    g = dw_->backward(g);
    if (expand_) {
      g = expand_act_->backward(g);
      g = expand_bn_->backward(g);
      g = expand_->backward(g);
    }
    if (spec_.has_residual()) g = add(g, grad_out);
    return g;
  }

  void collect(const std::string& prefix,
               std::vector<ParamRef<Scalar>>& params,
               std::vector<BufferRef<Scalar>>& buffers) override {
    if (expand_) {
      expand_->collect(prefix + ".expand", params, buffers);
      expand_bn_->collect(prefix + ".expand_bn", params, buffers);
    }
    dw_->collect(prefix + ".dw", params, buffers);
    dw_bn_->collect(prefix + ".dw_bn", params, buffers);
    if (se_) se_->collect(prefix + ".se", params, buffers);
    project_->collect(prefix + ".project", params, buffers);
    project_bn_->collect(prefix + ".project_bn", params, buffers);
  }

  void init_params(std::mt19937_64& rng) override {
    if (expand_) expand_->init_params(rng);
    dw_->init_params(rng);
    if (se_) se_->init_params(rng);
    project_->init_params(rng);
  }

 private:
  BottleneckSpec spec_;
  std::unique_ptr<Conv2dLayer<Scalar>> expand_, dw_, project_;
  std::unique_ptr<BatchNormLayer<Scalar>> expand_bn_, dw_bn_, project_bn_;
  std::unique_ptr<ActivationLayer<Scalar>> expand_act_, dw_act_;
  std::unique_ptr<SELayer<Scalar>> se_;
  Tensor4<Scalar> input_;
};

template <typename Scalar>
class Model {
 public:
  ModelSpec spec;
  DType precision = DType::f32;

  Tensor4<Scalar> forward(const Tensor4<Scalar>& x, const RunMode& mode) {
    if (x.c() != spec.in_channels) {
      throw std::invalid_argument(
          "Model: expected " + std::to_string(spec.in_channels) +
          " input channels, got " + x.shape_str());
    }
    Tensor4<Scalar> y = x;
    for (auto& layer : layers_) {
      y = layer->forward(y, mode);
    }
    return y;
  }

  /// Convenience wrapper: inference mode, precision chosen by the
  /// model's storage tag.
  Tensor4<Scalar> infer(const Tensor4<Scalar>& x) {
    RunMode mode;
    mode.fp16 = precision == DType::f16;
    return forward(x, mode);
  }

  void backward(const Tensor4<Scalar>& grad_logits) {
    Tensor4<Scalar> g = grad_logits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      g = (*it)->backward(g);
    }
  }

  std::vector<ParamRef<Scalar>> params() {
    std::vector<ParamRef<Scalar>> p;
    std::vector<BufferRef<Scalar>> b;
    collect(p, b);
    return p;
  }

  std::vector<BufferRef<Scalar>> buffers() {
    std::vector<ParamRef<Scalar>> p;
    std::vector<BufferRef<Scalar>> b;
    collect(p, b);
    return b;
  }

  void collect(std::vector<ParamRef<Scalar>>& p,
               std::vector<BufferRef<Scalar>>& b) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i]->collect(names_[i], p, b);
    }
  }

  void zero_grad() {
    for (auto& pr : params()) {
      pr.grad->data.setZero();
    }
  }

  std::size_t param_count() {
    std::size_t total = 0;
    for (auto& pr : params()) {
      total += static_cast<std::size_t>(pr.value->numel());
    }
    return total;
  }

  void add_layer(std::string name, std::unique_ptr<Layer<Scalar>> layer) {
    names_.push_back(std::move(name));
    layers_.push_back(std::move(layer));
  }

  void init_params(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& layer : layers_) {
      layer->init_params(rng);
    }
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

/// Instantiates the layer stack of a spec and initializes parameters
/// from the seed: fan-in scaled uniform weights, zero biases, unit norm
/// scale. Identical (spec, seed) pairs yield bitwise-identical models.
template <typename Scalar>
Model<Scalar> build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model<Scalar> m;
  m.spec = spec;
  const Activation stem_act =
      detail::resolve_act<Scalar>(Activation::swish, spec.hard_swish);
  m.add_layer("stem", std::make_unique<Conv2dLayer<Scalar>>(
                          spec.in_channels, spec.stem_width, 3,
                          spec.stem_stride, 1, 1, false));
  m.add_layer("stem_bn",
              std::make_unique<BatchNormLayer<Scalar>>(spec.stem_width));
  m.add_layer("stem_act", std::make_unique<ActivationLayer<Scalar>>(stem_act));
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    m.add_layer("block" + std::to_string(i),
                std::make_unique<BottleneckLayer<Scalar>>(spec.blocks[i],
                                                          spec.hard_swish));
  }
  const int last = spec.blocks.empty() ? spec.stem_width
                                       : spec.blocks.back().out_channels;
  m.add_layer("head_conv", std::make_unique<Conv2dLayer<Scalar>>(
                               last, spec.head_conv_width, 1, 1, 1, 0, false));
  m.add_layer("head_bn",
              std::make_unique<BatchNormLayer<Scalar>>(spec.head_conv_width));
  m.add_layer("head_act", std::make_unique<ActivationLayer<Scalar>>(stem_act));
  m.add_layer("gap", std::make_unique<GlobalAvgPoolLayer<Scalar>>());
  int feat = spec.head_conv_width;
  if (spec.head_hidden > 0) {
    m.add_layer("head_hidden",
                std::make_unique<DenseLayer<Scalar>>(feat, spec.head_hidden));
    m.add_layer("head_hidden_act",
                std::make_unique<ActivationLayer<Scalar>>(stem_act));
    feat = spec.head_hidden;
  }
  m.add_layer("classifier",
              std::make_unique<DenseLayer<Scalar>>(feat, spec.num_classes));
  m.init_params(seed);
  return m;
}

/// Desk-scale preset: three bottleneck blocks, well under 100k
/// parameters, used by the gradient and training suites.
inline ModelSpec tiny_spec(int in_channels = 1, int num_classes = 2) {
  ModelSpec s;
  s.preset = "tiny";
  s.in_channels = in_channels;
  s.stem_width = 8;
  s.num_classes = num_classes;
  s.blocks = {
      {8, 12, 16, 3, 2, true, 4, Activation::relu},
      {12, 12, 24, 3, 1, true, 4, Activation::swish},
      {12, 16, 24, 3, 2, false, 4, Activation::swish},
  };
  s.head_conv_width = 32;
  s.head_hidden = 0;
  return s;
}

/// MobileNetV3-Large stage table with a binary head.
inline ModelSpec large_spec(int in_channels = 1, int num_classes = 2) {
  ModelSpec s;
  s.preset = "large";
  s.in_channels = in_channels;
  s.stem_width = 16;
  s.num_classes = num_classes;
  const auto RE = Activation::relu;
  const auto SW = Activation::swish;
  s.blocks = {
      {16, 16, 16, 3, 1, false, 4, RE},
      {16, 24, 64, 3, 2, false, 4, RE},
      {24, 24, 72, 3, 1, false, 4, RE},
      {24, 40, 72, 5, 2, true, 4, RE},
      {40, 40, 120, 5, 1, true, 4, RE},
      {40, 40, 120, 5, 1, true, 4, RE},
      {40, 80, 240, 3, 2, false, 4, SW},
      {80, 80, 200, 3, 1, false, 4, SW},
      {80, 80, 184, 3, 1, false, 4, SW},
      {80, 80, 184, 3, 1, false, 4, SW},
      {80, 112, 480, 3, 1, true, 4, SW},
      {112, 112, 672, 3, 1, true, 4, SW},
      {112, 160, 672, 5, 2, true, 4, SW},
      {160, 160, 960, 5, 1, true, 4, SW},
      {160, 160, 960, 5, 1, true, 4, SW},
  };
  s.head_conv_width = 960;
  s.head_hidden = 1280;
  return s;
}

inline ModelSpec spec_preset(const std::string& name, int in_channels = 1,
                             int num_classes = 2) {
  if (name == "tiny") return tiny_spec(in_channels, num_classes);
  if (name == "large") return large_spec(in_channels, num_classes);
  throw std::invalid_argument("unknown preset: " + name);
}

}  // namespace tbnet
