#pragma once

#include <cmath>
#include <random>
#include <string>

#include "tbnet/half.hpp"
#include "tbnet/loss.hpp"
#include "tbnet/model.hpp"

namespace tbnet {

/// Rounds every parameter tensor to the nearest binary16 value
/// (round-to-nearest-even) and tags the model as half storage.
/// Norm running statistics stay single precision. Idempotent.
/// A parameter overflowing the half range is reported by name rather
/// than silently saturated.
template <typename Scalar>
void quantize_model(Model<Scalar>& model) {
  for (auto& p : model.params()) {
    for (Eigen::Index i = 0; i < p.value->numel(); ++i) {
      const Scalar rounded = round_to_half(p.value->data[i]);
      if (std::isinf(static_cast<double>(rounded)) &&
          std::isfinite(static_cast<double>(p.value->data[i]))) {
        throw std::invalid_argument("quantize_model: parameter " + p.name +
                                    " overflows the half range");
      }
      p.value->data[i] = rounded;
    }
    p.value->dtype = DType::f16;
  }
  model.precision = DType::f16;
}

/// Hybrid-precision forward pass: half-stored weights and activations,
/// single-precision accumulation. The model must be quantized.
template <typename Scalar>
Tensor4<Scalar> infer_mixed(Model<Scalar>& model, const Tensor4<Scalar>& x) {
  if (model.precision != DType::f16) {
    throw std::invalid_argument("infer_mixed: model is not quantized");
  }
  Tensor4<Scalar> input = x;
  round_tensor_to_half(input);
  RunMode mode;
  mode.fp16 = true;
  Tensor4<Scalar> logits = model.forward(input, mode);
  for (Eigen::Index i = 0; i < logits.numel(); ++i) {
    if (!std::isfinite(static_cast<double>(logits.data[i]))) {
      throw std::runtime_error("infer_mixed: non-finite logit at index " +
                               std::to_string(i));
    }
  }
  return logits;
}

struct DivergenceReport {
  double max_abs_logit_diff = 0;
  double mean_abs_diff = 0;
  double argmax_agreement = 0;  // in [0, 1]
  int sample_count = 0;
};

std::string divergence_to_json(const DivergenceReport& r);
DivergenceReport divergence_from_json(const std::string& text);

/// Compares half and single inference of the same weights on n random
/// unit-range inputs. Deterministic per seed.
template <typename Scalar>
DivergenceReport divergence(Model<Scalar>& single, Model<Scalar>& half,
                            int n, std::uint64_t seed, int image_size = 64) {
  if (n < 1) throw std::invalid_argument("divergence: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  DivergenceReport rep;
  rep.sample_count = n;
  double sum_abs = 0;
  std::int64_t elems = 0;
  int agree = 0;
  for (int k = 0; k < n; ++k) {
    Tensor4<Scalar> x(1, single.spec.in_channels, image_size, image_size);
    for (Eigen::Index i = 0; i < x.numel(); ++i) {
      x.data[i] = static_cast<Scalar>(dist(rng));
    }
    const auto a = logits_matrix(single.forward(x, RunMode{}));
    const auto b = logits_matrix(half.precision == DType::f16
                                     ? infer_mixed(half, x)
                                     : half.forward(x, RunMode{}));
    Eigen::Index ai, bi, tmp;
    a.row(0).maxCoeff(&tmp, &ai);
    b.row(0).maxCoeff(&tmp, &bi);
    if (ai == bi) ++agree;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double d = std::abs(static_cast<double>(a(0, j) - b(0, j)));
      rep.max_abs_logit_diff = std::max(rep.max_abs_logit_diff, d);
      sum_abs += d;
      ++elems;
    }
  }
  rep.mean_abs_diff = sum_abs / static_cast<double>(elems);
  rep.argmax_agreement = static_cast<double>(agree) / n;
  return rep;
}

}  // namespace tbnet
