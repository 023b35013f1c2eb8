#pragma once

#include <cmath>

#include "tbnet/tensor.hpp"

namespace tbnet {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

/// f(x) = x * sigmoid(x)
template <typename Scalar>
Scalar swish(Scalar x) {
  return x * sigmoid(x);
}

template <typename Scalar>
Scalar relu(Scalar x) {
  return x > Scalar(0) ? x : Scalar(0);
}

/// Piecewise-linear approximation x * relu6(x + 3) / 6, offered as an
/// opt-in variant of swish.
template <typename Scalar>
Scalar hard_swish(Scalar x) {
  if (x <= Scalar(-3)) return Scalar(0);
  if (x >= Scalar(3)) return x;
  return x * (x + Scalar(3)) / Scalar(6);
}

template <typename Scalar>
Scalar sigmoid_grad(Scalar x) {
  const Scalar s = sigmoid(x);
  return s * (Scalar(1) - s);
}

template <typename Scalar>
Scalar swish_grad(Scalar x) {
  const Scalar s = sigmoid(x);
  return s + x * s * (Scalar(1) - s);
}

template <typename Scalar>
Scalar relu_grad(Scalar x) {
  return x > Scalar(0) ? Scalar(1) : Scalar(0);
}

template <typename Scalar>
Scalar hard_swish_grad(Scalar x) {
  if (x <= Scalar(-3)) return Scalar(0);
  if (x >= Scalar(3)) return Scalar(1);
  return (Scalar(2) * x + Scalar(3)) / Scalar(6);
}

enum class Activation { relu, swish, hard_swish, identity };

template <typename Scalar>
Scalar apply_activation(Activation a, Scalar x) {
  switch (a) {
    case Activation::relu: return relu(x);
    case Activation::swish: return swish(x);
    case Activation::hard_swish: return hard_swish(x);
    case Activation::identity: return x;
  }
  return x;
}

template <typename Scalar>
Scalar activation_grad(Activation a, Scalar x) {
  switch (a) {
    case Activation::relu: return relu_grad(x);
    case Activation::swish: return swish_grad(x);
    case Activation::hard_swish: return hard_swish_grad(x);
    case Activation::identity: return Scalar(1);
  }
  return Scalar(1);
}

}  // namespace tbnet
