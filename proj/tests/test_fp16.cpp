#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "tbnet/fp16.hpp"
#include "tbnet/model.hpp"

using tbnet::DType;
using tbnet::RunMode;
using tbnet::Tensor;

namespace {

/// All parameters zeroed except the classifier bias: the network output
/// is exactly that bias regardless of input, which makes the hybrid
/// rounding chain traceable by hand.
tbnet::Model<float> bias_only_model(float bias0, float bias1) {
  auto m = tbnet::build_model<float>(tbnet::tiny_spec(), 0);
  for (auto& p : m.params()) p.value->data.setZero();
  for (auto& p : m.params()) {
    if (p.name == "classifier.b") {
      p.value->data[0] = bias0;
      p.value->data[1] = bias1;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("quantize is idempotent and tags the model") {
  auto m = tbnet::build_model<float>(tbnet::tiny_spec(), 3);
  tbnet::quantize_model(m);
  CHECK(m.precision == DType::f16);
  std::vector<tbnet::Tensor4<float>> snapshot;
  for (auto& p : m.params()) {
    CHECK(p.value->dtype == DType::f16);
    snapshot.push_back(*p.value);
  }
  tbnet::quantize_model(m);
  auto params = m.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK((params[i].value->data == snapshot[i].data).all());
  }
  // every stored value is a binary16 fixed point of the rounding
  for (auto& p : params) {
    for (Eigen::Index i = 0; i < p.value->numel(); ++i) {
      CHECK(tbnet::round_to_half(p.value->data[i]) == p.value->data[i]);
    }
  }
}

TEST_CASE("powers of two quantize exactly") {
  auto m = bias_only_model(0.0f, 0.0f);
  for (auto& p : m.params()) {
    for (Eigen::Index i = 0; i < p.value->numel(); ++i) {
      p.value->data[i] = std::ldexp(1.0f, static_cast<int>(i % 9) - 4);
    }
  }
  std::vector<tbnet::Tensor4<float>> before;
  for (auto& p : m.params()) before.push_back(*p.value);
  tbnet::quantize_model(m);
  auto params = m.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK((params[i].value->data == before[i].data).all());
  }
}

TEST_CASE("parameters past the half range are rejected by name") {
  auto m = bias_only_model(1e6f, 0.0f);
  try {
    tbnet::quantize_model(m);
    FAIL("expected overflow rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("classifier.b") != std::string::npos);
  }
}

TEST_CASE("infer_mixed requires a quantized model") {
  auto m = tbnet::build_model<float>(tbnet::tiny_spec(), 1);
  Tensor x(1, 1, 32, 32);
  CHECK_THROWS_AS(tbnet::infer_mixed(m, x), std::invalid_argument);
}

TEST_CASE("bias-only hand trace through the hybrid chain") {
  auto m = bias_only_model(0.1f, -0.3f);
  tbnet::quantize_model(m);
  Tensor x(1, 1, 32, 32);  // zeros
  Tensor logits = tbnet::infer_mixed(m, x);
  CHECK(logits.data[0] == 0.0999755859375f);
  CHECK(logits.data[1] == tbnet::round_to_half(-0.3f));

  // scaling the bias by powers of two scales the output exactly
  for (int k = 1; k <= 5; ++k) {
    auto scaled = bias_only_model(0.1f * std::ldexp(1.0f, k), 0.0f);
    tbnet::quantize_model(scaled);
    Tensor y = tbnet::infer_mixed(scaled, x);
    CHECK(y.data[0] == std::ldexp(1.0f, k) * 0.0999755859375f);
  }
}

TEST_CASE("non-finite logits abort mixed inference") {
  auto m = bias_only_model(0.5f, 0.0f);
  tbnet::quantize_model(m);
  for (auto& p : m.params()) {
    if (p.name == "classifier.b") {
      p.value->data[0] = std::numeric_limits<float>::infinity();
    }
  }
  Tensor x(1, 1, 32, 32);
  CHECK_THROWS_AS(tbnet::infer_mixed(m, x), std::runtime_error);
}

TEST_CASE("divergence of a model against itself is zero") {
  auto a = tbnet::build_model<float>(tbnet::tiny_spec(), 5);
  auto b = tbnet::build_model<float>(tbnet::tiny_spec(), 5);
  auto rep = tbnet::divergence(a, b, 8, 42, 32);
  CHECK(rep.max_abs_logit_diff == 0.0);
  CHECK(rep.mean_abs_diff == 0.0);
  CHECK(rep.argmax_agreement == 1.0);
  CHECK(rep.sample_count == 8);
}

TEST_CASE("half divergence is small and deterministic per seed") {
  auto single = tbnet::build_model<float>(tbnet::tiny_spec(), 5);
  auto half = tbnet::build_model<float>(tbnet::tiny_spec(), 5);
  tbnet::quantize_model(half);
  auto rep = tbnet::divergence(single, half, 16, 7, 32);
  CHECK(rep.max_abs_logit_diff > 0.0);
  CHECK(rep.max_abs_logit_diff < 0.1);
  CHECK(rep.mean_abs_diff <= rep.max_abs_logit_diff);
  CHECK(rep.argmax_agreement >= 0.0);
  CHECK(rep.argmax_agreement <= 1.0);
  CHECK(rep.sample_count == 16);

  auto rep2 = tbnet::divergence(single, half, 16, 7, 32);
  CHECK(rep2.max_abs_logit_diff == rep.max_abs_logit_diff);
  CHECK(rep2.mean_abs_diff == rep.mean_abs_diff);
  CHECK(rep2.argmax_agreement == rep.argmax_agreement);

  CHECK_THROWS_AS(tbnet::divergence(single, half, 0, 7, 32),
                  std::invalid_argument);
}

TEST_CASE("divergence report json round trip") {
  tbnet::DivergenceReport rep;
  rep.max_abs_logit_diff = 0.0123;
  rep.mean_abs_diff = 0.0017;
  rep.argmax_agreement = 0.9921875;
  rep.sample_count = 128;
  const std::string text = tbnet::divergence_to_json(rep);
  auto back = tbnet::divergence_from_json(text);
  CHECK(back.max_abs_logit_diff == rep.max_abs_logit_diff);
  CHECK(back.mean_abs_diff == rep.mean_abs_diff);
  CHECK(back.argmax_agreement == rep.argmax_agreement);
  CHECK(back.sample_count == rep.sample_count);
}
