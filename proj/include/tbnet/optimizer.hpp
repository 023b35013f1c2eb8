#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "tbnet/layers.hpp"

namespace tbnet {

/// Momentum SGD with the learning rate folded into the velocity:
///   v_t = beta * v_{t-1} + eta * grad
///   theta_t = theta_{t-1} - v_t
/// eta follows a step decay, multiplied by decay_factor every
/// decay_period epochs (compounding).
template <typename Scalar>
struct OptimizerState {
  Scalar momentum = Scalar(0.9);
  Scalar base_lr = Scalar(0.001);
  Scalar decay_factor = Scalar(0.9);
  int decay_period = 10;
  int epoch = 0;
  std::map<std::string, Tensor4<Scalar>> velocity;

  Scalar lr_at_epoch(int e) const {
    if (e < 0) throw std::invalid_argument("lr_at_epoch: epoch must be >= 0");
    return base_lr *
           static_cast<Scalar>(std::pow(static_cast<double>(decay_factor),
                                        e / decay_period));
  }

  Scalar current_lr() const { return lr_at_epoch(epoch); }
};

/// Applies one update to every parameter using the scheduled learning
/// rate of the state's current epoch. Velocity buffers are created lazily
/// at zero and always match their parameter's shape.
template <typename Scalar>
void momentum_step(std::vector<ParamRef<Scalar>>& params,
                   OptimizerState<Scalar>& state) {
  const Scalar lr = state.current_lr();
  for (auto& p : params) {
    auto it = state.velocity.find(p.name);
    if (it == state.velocity.end()) {
      it = state.velocity
               .emplace(p.name, Tensor4<Scalar>(p.value->shape[0],
                                                p.value->shape[1],
                                                p.value->shape[2],
                                                p.value->shape[3]))
               .first;
    }
    Tensor4<Scalar>& v = it->second;
    if (!v.same_shape(*p.value) || !p.grad->same_shape(*p.value)) {
      throw std::invalid_argument("momentum_step: shape mismatch for " +
                                  p.name);
    }
    v.data = state.momentum * v.data + lr * p.grad->data;
    p.value->data -= v.data;
  }
}

}  // namespace tbnet
