#pragma once

#include <cmath>
#include <stdexcept>

#include "tbnet/ops.hpp"

namespace tbnet {

/// Row-wise softmax with max subtraction. Input rows are logits.
template <typename Scalar>
MatX<Scalar> softmax(const MatX<Scalar>& logits) {
  MatX<Scalar> p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar mx = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

template <typename Scalar>
struct LossValue {
  Scalar loss = 0;                 // mean over the batch
  MatX<Scalar> grad_logits;        // (p - y) / N
  MatX<Scalar> probabilities;
};

/// Mean negative log-likelihood of one-hot labels under the softmax
/// distribution, computed through log-sum-exp.
template <typename Scalar>
LossValue<Scalar> softmax_cross_entropy(const MatX<Scalar>& logits,
                                        const MatX<Scalar>& labels) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols() ||
      logits.rows() < 1) {
    throw std::invalid_argument("softmax_cross_entropy: shape mismatch");
  }
  for (Eigen::Index i = 0; i < labels.rows(); ++i) {
    int ones = 0;
    for (Eigen::Index j = 0; j < labels.cols(); ++j) {
      const Scalar v = labels(i, j);
      if (v == Scalar(1)) {
        ++ones;
      } else if (v != Scalar(0)) {
        throw std::invalid_argument(
            "softmax_cross_entropy: labels must be one-hot");
      }
    }
    if (ones != 1) {
      throw std::invalid_argument(
          "softmax_cross_entropy: labels must be one-hot");
    }
  }
  const Scalar n = static_cast<Scalar>(logits.rows());
  LossValue<Scalar> out;
  out.probabilities = softmax(logits);
  out.grad_logits = (out.probabilities - labels) / n;
  Scalar loss = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar mx = logits.row(i).maxCoeff();
    const Scalar lse =
        mx + std::log((logits.row(i).array() - mx).exp().sum());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (labels(i, j) == Scalar(1)) {
        loss += lse - logits(i, j);
      }
    }
  }
  out.loss = loss / n;
  return out;
}

/// Views a (N, C, 1, 1) logits tensor as an N x C matrix.
template <typename Scalar>
MatX<Scalar> logits_matrix(const Tensor4<Scalar>& t) {
  return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic,
                                        Eigen::Dynamic, Eigen::RowMajor>>(
      t.data.data(), t.n(), t.c());
}

template <typename Scalar>
Tensor4<Scalar> grad_to_tensor(const MatX<Scalar>& g) {
  Tensor4<Scalar> t(g.rows(), g.cols(), 1, 1);
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                           Eigen::RowMajor>>(t.data.data(), g.rows(),
                                             g.cols()) = g;
  return t;
}

}  // namespace tbnet
