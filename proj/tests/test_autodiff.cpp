#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tbnet/loss.hpp"
#include "tbnet/model.hpp"
#include "tbnet/optimizer.hpp"
#include "tbnet/train.hpp"

using tbnet::RunMode;
using tbnet::Tensor;

namespace {

using MatD = tbnet::MatX<double>;

MatD one_hot_rows(std::initializer_list<int> labels, int classes = 2) {
  MatD m = MatD::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  Eigen::Index i = 0;
  for (int l : labels) m(i++, l) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("cross entropy of uniform logits is ln 2") {
  MatD logits(1, 2);
  logits << 0.0, 0.0;
  auto l = tbnet::softmax_cross_entropy(logits, one_hot_rows({0}));
  CHECK(l.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(l.grad_logits(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(l.grad_logits(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("cross entropy saturates correctly") {
  MatD logits(1, 2);
  logits << 100.0, 0.0;
  auto right = tbnet::softmax_cross_entropy(logits, one_hot_rows({0}));
  CHECK(right.loss <= 1e-10);
  auto wrong = tbnet::softmax_cross_entropy(logits, one_hot_rows({1}));
  CHECK(wrong.loss == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("cross entropy rejects labels that are not one-hot") {
  MatD logits(2, 2);
  logits.setZero();
  MatD labels = MatD::Zero(2, 2);
  labels(0, 0) = 1.0;  // second row all-zero
  CHECK_THROWS_AS(tbnet::softmax_cross_entropy(logits, labels),
                  std::invalid_argument);
  labels(1, 0) = 0.3;
  CHECK_THROWS_AS(tbnet::softmax_cross_entropy(logits, labels),
                  std::invalid_argument);
  labels(1, 0) = 1.0;
  labels(1, 1) = 1.0;  // two ones
  CHECK_THROWS_AS(tbnet::softmax_cross_entropy(logits, labels),
                  std::invalid_argument);
  MatD short_labels = MatD::Zero(1, 2);
  CHECK_THROWS_AS(tbnet::softmax_cross_entropy(logits, short_labels),
                  std::invalid_argument);
}

TEST_CASE("cross entropy gradient rows sum to zero and match differences") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  MatD logits(5, 4);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits(i) = dist(rng);
  MatD labels = MatD::Zero(5, 4);
  for (int i = 0; i < 5; ++i) labels(i, i % 4) = 1.0;
  auto l = tbnet::softmax_cross_entropy(logits, labels);
  for (int i = 0; i < 5; ++i) {
    CHECK(std::abs(l.grad_logits.row(i).sum()) <= 1e-12);
  }
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    MatD lp = logits, lm = logits;
    lp(i) += h;
    lm(i) -= h;
    const double fd = (tbnet::softmax_cross_entropy(lp, labels).loss -
                       tbnet::softmax_cross_entropy(lm, labels).loss) /
                      (2 * h);
    CHECK(std::abs(fd - l.grad_logits(i)) <= 1e-6);
  }
}

TEST_CASE("momentum trace on a constant unit gradient") {
  // eta = 0.0005, beta = 0.9, theta_0 = 1:
  //   v1 = 0.0005        theta_1 = 0.9995
  //   v2 = 0.00095       theta_2 = 0.99855
  tbnet::OptimizerState<double> opt;
  opt.base_lr = 0.0005;
  tbnet::Tensor4<double> theta(1, 1, 1, 1), grad(1, 1, 1, 1);
  theta.data[0] = 1.0;
  grad.data[0] = 1.0;
  std::vector<tbnet::ParamRef<double>> params{{"p", &theta, &grad}};

  tbnet::momentum_step(params, opt);
  CHECK(theta.data[0] == doctest::Approx(0.9995).epsilon(1e-12));
  tbnet::momentum_step(params, opt);
  CHECK(theta.data[0] == doctest::Approx(0.99855).epsilon(1e-12));
}

TEST_CASE("zero momentum reduces to plain gradient descent") {
  tbnet::OptimizerState<double> opt;
  opt.momentum = 0.0;
  opt.base_lr = 0.01;
  tbnet::Tensor4<double> theta(1, 2, 1, 1), grad(1, 2, 1, 1);
  theta.data[0] = 1.0;
  theta.data[1] = -2.0;
  grad.data[0] = 3.0;
  grad.data[1] = -1.0;
  std::vector<tbnet::ParamRef<double>> params{{"p", &theta, &grad}};
  for (int step = 1; step <= 4; ++step) {
    tbnet::momentum_step(params, opt);
    CHECK(theta.data[0] == doctest::Approx(1.0 - 0.01 * 3.0 * step));
    CHECK(theta.data[1] == doctest::Approx(-2.0 + 0.01 * step));
  }
}

TEST_CASE("momentum_step rejects mismatched gradient shapes") {
  tbnet::OptimizerState<double> opt;
  tbnet::Tensor4<double> theta(1, 2, 1, 1), grad(1, 3, 1, 1);
  std::vector<tbnet::ParamRef<double>> params{{"p", &theta, &grad}};
  CHECK_THROWS_AS(tbnet::momentum_step(params, opt), std::invalid_argument);
}

TEST_CASE("learning rate schedule steps every ten epochs, compounding") {
  tbnet::OptimizerState<double> opt;
  CHECK(opt.lr_at_epoch(0) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(opt.lr_at_epoch(9) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(opt.lr_at_epoch(10) == doctest::Approx(0.0009).epsilon(1e-12));
  CHECK(opt.lr_at_epoch(19) == doctest::Approx(0.0009).epsilon(1e-12));
  CHECK(opt.lr_at_epoch(20) == doctest::Approx(0.00081).epsilon(1e-12));
  CHECK(opt.lr_at_epoch(25) == doctest::Approx(0.00081).epsilon(1e-12));
  CHECK(opt.lr_at_epoch(30) == doctest::Approx(0.000729).epsilon(1e-12));
  CHECK_THROWS_AS(opt.lr_at_epoch(-1), std::invalid_argument);
  opt.epoch = 25;
  CHECK(opt.current_lr() == doctest::Approx(0.00081).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central differences per layer") {
  auto model = tbnet::build_model<double>(tbnet::tiny_spec(), 1);
  std::mt19937_64 rng(23);
  tbnet::Tensor4<double> x(2, 1, 16, 16);
  oracle::fill_random(x, rng, 0.0, 1.0);
  MatD labels = one_hot_rows({0, 1});
  RunMode train;
  train.train = true;

  auto loss_at = [&]() {
    auto y = model.forward(x, train);
    return tbnet::softmax_cross_entropy(tbnet::logits_matrix(y), labels).loss;
  };

  model.zero_grad();
  auto y = model.forward(x, train);
  auto l = tbnet::softmax_cross_entropy(tbnet::logits_matrix(y), labels);
  model.backward(tbnet::grad_to_tensor(l.grad_logits));

  auto params = model.params();
  std::vector<tbnet::Tensor4<double>> grads;
  for (auto& p : params) grads.push_back(*p.grad);

  const double h = 1e-5;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    const Eigen::Index n = p.value->numel();
    // probe a handful of entries spread across the tensor
    for (int probe = 0; probe < 4; ++probe) {
      const Eigen::Index idx = (n * probe) / 4 + probe % std::max<Eigen::Index>(n, 1);
      const Eigen::Index i = std::min(idx, n - 1);
      const double saved = p.value->data[i];
      p.value->data[i] = saved + h;
      const double fp = loss_at();
      p.value->data[i] = saved - h;
      const double fm = loss_at();
      p.value->data[i] = saved;
      const double fd = (fp - fm) / (2 * h);
      const double analytic = grads[pi].data[i];
      const double scale = std::max({1.0, std::abs(fd), std::abs(analytic)});
      INFO(p.name, " entry ", i);
      CHECK(std::abs(fd - analytic) / scale <= 1e-4);
    }
  }
}

TEST_CASE("one epoch of train equals the manual composition") {
  auto ds = tbnet::synth_blob_dataset(8, 32, 3);
  tbnet::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.seed = 3;
  cfg.image_size = 32;

  auto trained = tbnet::build_model<float>(tbnet::tiny_spec(), 5);
  tbnet::OptimizerState<float> opt;
  auto history = tbnet::train(trained, ds, cfg, opt);
  REQUIRE(history.size() == 1);
  CHECK(history[0].lr == doctest::Approx(0.001));

  auto manual = tbnet::build_model<float>(tbnet::tiny_spec(), 5);
  tbnet::OptimizerState<float> opt2;
  opt2.epoch = 0;
  auto batches = tbnet::make_batches(ds, tbnet::Split::train, 4, true, 3, 0, 32);
  RunMode mode;
  mode.train = true;
  for (auto& batch : batches) {
    manual.zero_grad();
    auto logits = manual.forward(batch.x, mode);
    auto loss = tbnet::softmax_cross_entropy(
        tbnet::logits_matrix(logits), tbnet::MatX<float>(batch.labels));
    manual.backward(tbnet::grad_to_tensor(loss.grad_logits));
    auto params = manual.params();
    tbnet::momentum_step(params, opt2);
  }

  auto pa = trained.params();
  auto pb = manual.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK((pa[i].value->data == pb[i].value->data).all());
  }
}

TEST_CASE("training zero epochs is a no-op") {
  auto ds = tbnet::synth_blob_dataset(4, 32, 1);
  auto model = tbnet::build_model<float>(tbnet::tiny_spec(), 7);
  auto reference = tbnet::build_model<float>(tbnet::tiny_spec(), 7);
  tbnet::TrainConfig cfg;
  cfg.epochs = 0;
  cfg.image_size = 32;
  tbnet::OptimizerState<float> opt;
  auto history = tbnet::train(model, ds, cfg, opt);
  CHECK(history.empty());
  auto pa = model.params();
  auto pb = reference.params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK((pa[i].value->data == pb[i].value->data).all());
  }
}

TEST_CASE("training rejects a single-class split") {
  auto ds = tbnet::synth_blob_dataset(4, 32, 1);
  for (auto& s : ds.samples) s.label = 0;
  auto model = tbnet::build_model<float>(tbnet::tiny_spec(), 7);
  tbnet::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.image_size = 32;
  tbnet::OptimizerState<float> opt;
  CHECK_THROWS_AS(tbnet::train(model, ds, cfg, opt), tbnet::DataError);
}
