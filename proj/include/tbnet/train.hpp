#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tbnet/data.hpp"
#include "tbnet/errors.hpp"
#include "tbnet/fp16.hpp"
#include "tbnet/loss.hpp"
#include "tbnet/metrics.hpp"
#include "tbnet/model.hpp"
#include "tbnet/optimizer.hpp"

namespace tbnet {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 0;
  bool augment = true;
  int image_size = kCropSize;
  int checkpoint_cadence = 0;  // epochs between checkpoints, 0 = off
  std::function<void(const Model<float>&, int)> checkpoint_hook;

  void validate() const {
    if (epochs < 0 || batch_size < 1 || image_size < 1) {
      throw std::invalid_argument("TrainConfig: invalid values");
    }
  }
};

struct EpochStats {
  int epoch = 0;
  double loss = 0;
  double accuracy = 0;
  double lr = 0;
};

/// One pass of momentum SGD per batch, learning rate scheduled per
/// epoch. Deterministic for a fixed (seed, config, data) triple in
/// single-threaded mode. Rejects a training split that lacks one of the
/// two classes.
template <typename Scalar>
std::vector<EpochStats> train(Model<Scalar>& model, const DatasetIndex& data,
                              const TrainConfig& config,
                              OptimizerState<Scalar>& opt) {
  config.validate();
  if (data.count(Split::train, 0) == 0 || data.count(Split::train, 1) == 0) {
    throw DataError("train: training split must contain both classes");
  }
  std::vector<EpochStats> history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    opt.epoch = epoch;
    auto batches = make_batches(data, Split::train, config.batch_size,
                                config.augment, config.seed, epoch,
                                config.image_size);
    double loss_sum = 0;
    std::int64_t correct = 0, seen = 0;
    for (auto& batch : batches) {
      model.zero_grad();
      RunMode mode;
      mode.train = true;
      Tensor4<Scalar> x = batch.x.template cast<Scalar>();
      auto logits = model.forward(x, mode);
      MatX<Scalar> lm = logits_matrix(logits);
      MatX<Scalar> labels = batch.labels.template cast<Scalar>();
      auto loss = softmax_cross_entropy(lm, labels);
      model.backward(grad_to_tensor(loss.grad_logits));
      auto params = model.params();
      momentum_step(params, opt);

      const auto b = lm.rows();
      loss_sum += static_cast<double>(loss.loss) * static_cast<double>(b);
      for (Eigen::Index i = 0; i < b; ++i) {
        Eigen::Index pred, tmp;
        lm.row(i).maxCoeff(&tmp, &pred);
        if (static_cast<int>(pred) == batch.truths[i]) ++correct;
      }
      seen += b;
    }
    EpochStats s;
    s.epoch = epoch;
    s.loss = loss_sum / static_cast<double>(seen);
    s.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    s.lr = static_cast<double>(opt.lr_at_epoch(epoch));
    history.push_back(s);
    if (config.checkpoint_cadence > 0 &&
        (epoch + 1) % config.checkpoint_cadence == 0 &&
        config.checkpoint_hook) {
      if constexpr (std::is_same_v<Scalar, float>) {
        config.checkpoint_hook(model, epoch);
      }
    }
  }
  return history;
}

struct EvalOutcome {
  std::vector<int> predictions;
  std::vector<int> truths;
  std::vector<double> scores;  // positive-class probabilities
  double accuracy = 0;
};

/// Deterministic inference over one split: center-crop geometry, no
/// augmentation, argmax predictions (threshold 0.5 in the binary case).
template <typename Scalar>
EvalOutcome evaluate(Model<Scalar>& model, const DatasetIndex& data,
                     Split split, int batch_size = 32,
                     int image_size = kCropSize) {
  EvalOutcome out;
  auto batches =
      make_batches(data, split, batch_size, false, data.seed, 0, image_size);
  std::int64_t correct = 0, seen = 0;
  for (auto& batch : batches) {
    Tensor4<Scalar> x = batch.x.template cast<Scalar>();
    auto logits = model.precision == DType::f16 ? infer_mixed(model, x)
                                                : model.forward(x, RunMode{});
    MatX<Scalar> lm = logits_matrix(logits);
    MatX<Scalar> probs = softmax(lm);
    for (Eigen::Index i = 0; i < lm.rows(); ++i) {
      Eigen::Index pred, tmp;
      lm.row(i).maxCoeff(&tmp, &pred);
      out.predictions.push_back(static_cast<int>(pred));
      out.truths.push_back(batch.truths[i]);
      out.scores.push_back(static_cast<double>(probs(i, 1)));
      if (static_cast<int>(pred) == batch.truths[i]) ++correct;
      ++seen;
    }
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  return out;
}

}  // namespace tbnet
