#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "tbnet/activations.hpp"
#include "tbnet/layers.hpp"
#include "tbnet/loss.hpp"
#include "tbnet/model.hpp"

using tbnet::Activation;
using tbnet::RunMode;
using tbnet::Tensor;

TEST_CASE("sigmoid values") {
  CHECK(tbnet::sigmoid(0.0) == 0.5);
  CHECK(tbnet::sigmoid(1.0) == doctest::Approx(0.7310585786).epsilon(1e-9));
  for (double x : {-5.0, -0.3, 0.7, 4.2}) {
    CHECK(tbnet::sigmoid(x) + tbnet::sigmoid(-x) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("swish values and definition identity") {
  CHECK(tbnet::swish(0.0) == 0.0);
  CHECK(tbnet::swish(1.0) == doctest::Approx(0.7310585786).epsilon(1e-9));
  CHECK(tbnet::swish(-1.0) == doctest::Approx(-0.2689414214).epsilon(1e-9));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> dist(-10, 10);
  for (int i = 0; i < 100; ++i) {
    const double x = dist(rng);
    CHECK(tbnet::swish(x) == x * tbnet::sigmoid(x));
  }
}

TEST_CASE("relu values") {
  CHECK(tbnet::relu(0.0) == 0.0);
  CHECK(tbnet::relu(3.5) == 3.5);
  CHECK(tbnet::relu(-2.0) == 0.0);
}

TEST_CASE("batch_norm train mode normalizes batch statistics") {
  std::mt19937_64 rng(4);
  Tensor x(2, 3, 4, 4);
  oracle::fill_random(x, rng, -2.0, 3.0);
  tbnet::BatchNormLayer<float> bn(3);
  RunMode mode;
  mode.train = true;
  Tensor y = bn.forward(x, mode);
  const float m = 2 * 4 * 4;
  for (int c = 0; c < 3; ++c) {
    float sum = 0, sq = 0;
    for (int n = 0; n < 2; ++n) {
      sum += y.plane(n, c).sum();
      sq += y.plane(n, c).array().square().sum();
    }
    const float mean = sum / m;
    const float var = sq / m - mean * mean;
    CHECK(std::abs(mean) <= 1e-5f);
    CHECK(std::abs(var - 1.0f) <= 1e-3f);
  }
}

TEST_CASE("batch_norm infer mode centers by running stats") {
  tbnet::BatchNormLayer<float> bn(1);
  std::vector<tbnet::ParamRef<float>> params;
  std::vector<tbnet::BufferRef<float>> buffers;
  bn.collect("bn", params, buffers);
  for (auto& b : buffers) {
    if (b.name == "bn.running_mean") b.value->data[0] = 7.0f;
  }
  Tensor x = Tensor::full(1, 1, 3, 3, 7.0f);
  Tensor y = bn.forward(x, RunMode{});
  CHECK(y.data.abs().maxCoeff() <= 1e-4f);

  Tensor bad(1, 2, 3, 3);
  CHECK_THROWS_AS(bn.forward(bad, RunMode{}), std::invalid_argument);
}

TEST_CASE("se_forward with zero weights halves the input") {
  std::mt19937_64 rng(6);
  Tensor x(2, 4, 3, 3);
  oracle::fill_random(x, rng);
  tbnet::SELayer<float> se(4, 4);  // params default to zero
  Tensor y = se.forward(x, RunMode{});
  CHECK((y.data - 0.5f * x.data).abs().maxCoeff() <= 1e-7f);
}

TEST_CASE("se_forward hand-chained example, r=1 identity weights") {
  // channel means (1, -1) -> z = (1, -1); relu -> (1, 0);
  // s = (sigmoid(1), sigmoid(0))
  Tensor x(1, 2, 2, 2);
  x.plane(0, 0).setConstant(1.0f);
  x.plane(0, 1).setConstant(-1.0f);
  tbnet::SELayer<float> se(2, 1);
  REQUIRE(se.reduced_width() == 2);
  se.w1().data.setZero();
  se.w1().at(0, 0, 0, 0) = 1.0f;  // identity 2x2
  se.w1().at(1, 1, 0, 0) = 1.0f;
  se.w2().data.setZero();
  se.w2().at(0, 0, 0, 0) = 1.0f;
  se.w2().at(1, 1, 0, 0) = 1.0f;
  Tensor y = se.forward(x, RunMode{});
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(0.7310585786f).epsilon(1e-6));
  CHECK(y.at(0, 1, 0, 0) == doctest::Approx(-0.5f).epsilon(1e-6));
}

TEST_CASE("se_forward output/input ratio is spatially constant") {
  std::mt19937_64 rng(8);
  tbnet::SELayer<float> se(3, 2);
  se.init_params(rng);
  for (int iter = 0; iter < 5; ++iter) {
    Tensor x(2, 3, 4, 4);
    oracle::fill_random(x, rng, 0.5, 2.0);  // bounded away from zero
    Tensor y = se.forward(x, RunMode{});
    for (int n = 0; n < 2; ++n) {
      for (int c = 0; c < 3; ++c) {
        const auto ratio = y.plane(n, c).array() / x.plane(n, c).array();
        CHECK((ratio - ratio(0, 0)).abs().maxCoeff() <= 1e-5f);
        CHECK(ratio(0, 0) > 0.0f);
        CHECK(ratio(0, 0) < 1.0f);
      }
    }
  }
}

TEST_CASE("se_forward matches the direct reference implementation") {
  std::mt19937_64 rng(10);
  for (int iter = 0; iter < 10; ++iter) {
    const int C = 2 + iter % 6;
    tbnet::SELayer<float> se(C, 4);
    se.init_params(rng);
    Tensor x(2, C, 5, 4);
    oracle::fill_random(x, rng);
    const int red = se.reduced_width();
    std::vector<float> w1(se.w1().data.data(), se.w1().data.data() + C * red);
    std::vector<float> b1(se.b1().data.data(), se.b1().data.data() + red);
    std::vector<float> w2(se.w2().data.data(), se.w2().data.data() + red * C);
    std::vector<float> b2(se.b2().data.data(), se.b2().data.data() + C);
    Tensor want = oracle::se_reference(x, w1, b1, w2, b2, red);
    Tensor got = se.forward(x, RunMode{});
    CHECK((got.data - want.data).abs().maxCoeff() <= 1e-6f);
  }
  Tensor bad(1, 5, 2, 2);
  tbnet::SELayer<float> se(4, 4);
  CHECK_THROWS_AS(se.forward(bad, RunMode{}), std::invalid_argument);
}

TEST_CASE("bottleneck residual passthrough with zero branch") {
  tbnet::BottleneckSpec spec{8, 8, 16, 3, 1, false, 4, Activation::relu};
  tbnet::BottleneckLayer<float> block(spec, false);
  // conv weights default to zero and norms are neutral in infer mode
  std::mt19937_64 rng(12);
  Tensor x(1, 8, 6, 6);
  oracle::fill_random(x, rng);
  Tensor y = block.forward(x, RunMode{});
  CHECK((y.data == x.data).all());
}

TEST_CASE("bottleneck stride-2 halves 224 to 112") {
  tbnet::BottleneckSpec spec{4, 6, 8, 3, 2, false, 4, Activation::swish};
  tbnet::BottleneckLayer<float> block(spec, false);
  std::mt19937_64 rng(14);
  block.init_params(rng);
  Tensor x(1, 4, 224, 224);
  oracle::fill_random(x, rng, 0.0, 1.0);
  Tensor y = block.forward(x, RunMode{});
  CHECK(y.shape == std::array<Eigen::Index, 4>{1, 6, 112, 112});
}

TEST_CASE("zero-weight SE halves a bottleneck's branch output") {
  // identical weights except use_se; SE params stay zero, so the gate is
  // a constant 0.5. In infer mode (neutral norm stats, zero shift) the
  // remaining project conv + norm path is linear, hence the gated output
  // is exactly half the plain one. No residual: in != out.
  tbnet::BottleneckSpec base{4, 6, 8, 3, 1, false, 4, Activation::relu};
  tbnet::BottleneckSpec with_se = base;
  with_se.use_se = true;
  tbnet::BottleneckLayer<float> plain(base, false);
  tbnet::BottleneckLayer<float> gated(with_se, false);
  std::mt19937_64 rng_a(20);
  plain.init_params(rng_a);
  std::vector<tbnet::ParamRef<float>> pa, pb;
  std::vector<tbnet::BufferRef<float>> ba, bb;
  plain.collect("b", pa, ba);
  gated.collect("b", pb, bb);
  for (auto& p : pb) {
    for (auto& q : pa) {
      if (q.name == p.name) p.value->data = q.value->data;
    }
  }
  std::mt19937_64 rng(22);
  Tensor x(1, 4, 5, 5);
  oracle::fill_random(x, rng);
  Tensor ya = plain.forward(x, RunMode{});
  Tensor yb = gated.forward(x, RunMode{});
  CHECK((yb.data - 0.5f * ya.data).abs().maxCoeff() <= 1e-6f);
}

TEST_CASE("build_model tiny shape contract and determinism") {
  auto spec = tbnet::tiny_spec();
  auto m1 = tbnet::build_model<float>(spec, 0);
  auto m2 = tbnet::build_model<float>(spec, 0);
  Tensor x(1, 1, 224, 224);
  Tensor y = m1.forward(x, RunMode{});
  CHECK(y.shape == std::array<Eigen::Index, 4>{1, 2, 1, 1});

  auto p1 = m1.params();
  auto p2 = m2.params();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i].name == p2[i].name);
    CHECK((p1[i].value->data == p2[i].value->data).all());
  }
  CHECK(m1.param_count() < 100000);
}

TEST_CASE("model forward is deterministic in infer mode") {
  auto m = tbnet::build_model<float>(tbnet::tiny_spec(), 3);
  std::mt19937_64 rng(30);
  Tensor x(2, 1, 64, 64);
  oracle::fill_random(x, rng, 0.0, 1.0);
  Tensor a = m.forward(x, RunMode{});
  Tensor b = m.forward(x, RunMode{});
  CHECK((a.data == b.data).all());
}

TEST_CASE("build_model rejects inconsistent specs naming the block") {
  auto spec = tbnet::tiny_spec();
  spec.blocks[1].in_channels = 99;
  try {
    tbnet::build_model<float>(spec, 0);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("block 1") != std::string::npos);
  }
}

namespace {

// Parameter total of the large stage table, written out row by row from
// the architecture description, independent of the builder.
std::size_t large_table_param_count() {
  auto se_params = [](int c) {
    const int red = std::max(1, static_cast<int>(std::lround(c / 4.0)));
    return static_cast<std::size_t>(c * red + red + red * c + c);
  };
  auto bneck = [&](int in, int exp, int out, int k, bool se) {
    std::size_t p = 0;
    if (exp != in) p += static_cast<std::size_t>(in) * exp + 2 * exp;
    p += static_cast<std::size_t>(exp) * k * k + 2 * exp;
    if (se) p += se_params(exp);
    p += static_cast<std::size_t>(exp) * out + 2 * out;
    return p;
  };
  std::size_t total = 1 * 16 * 3 * 3 + 2 * 16;  // stem, 1-channel input
  total += bneck(16, 16, 16, 3, false);
  total += bneck(16, 64, 24, 3, false);
  total += bneck(24, 72, 24, 3, false);
  total += bneck(24, 72, 40, 5, true);
  total += bneck(40, 120, 40, 5, true);
  total += bneck(40, 120, 40, 5, true);
  total += bneck(40, 240, 80, 3, false);
  total += bneck(80, 200, 80, 3, false);
  total += bneck(80, 184, 80, 3, false);
  total += bneck(80, 184, 80, 3, false);
  total += bneck(80, 480, 112, 3, true);
  total += bneck(112, 672, 112, 3, true);
  total += bneck(112, 672, 160, 5, true);
  total += bneck(160, 960, 160, 5, true);
  total += bneck(160, 960, 160, 5, true);
  total += 160 * 960 + 2 * 960;    // head conv + norm
  total += 960 * 1280 + 1280;      // hidden dense
  total += 1280 * 2 + 2;           // binary classifier
  return total;
}

}  // namespace

TEST_CASE("large preset parameter count matches the stage table") {
  auto m = tbnet::build_model<float>(tbnet::large_spec(), 0);
  const std::size_t got = m.param_count();
  const std::size_t want = large_table_param_count();
  CHECK(got == want);
  // published 1000-class total 5,483,032 with the classifier swapped to
  // 2 classes
  const double published = 5483032.0 - (1280.0 * 1000 + 1000) + (1280.0 * 2 + 2);
  CHECK(std::abs(static_cast<double>(got) - published) / published <= 0.02);
}

TEST_CASE("softmax examples and properties") {
  using Mat = tbnet::MatX<double>;
  Mat logits(1, 2);
  logits << 0.0, 0.0;
  Mat p = tbnet::softmax(logits);
  CHECK(p(0, 0) == doctest::Approx(0.5));

  logits << 1.0, 0.0;
  p = tbnet::softmax(logits);
  CHECK(p(0, 0) == doctest::Approx(0.7310585786).epsilon(1e-9));
  CHECK(p(0, 1) == doctest::Approx(0.2689414214).epsilon(1e-9));

  Mat shifted(1, 2);
  shifted << 1.0 + 123.5, 0.0 + 123.5;
  Mat q = tbnet::softmax(shifted);
  CHECK((p - q).cwiseAbs().maxCoeff() <= 1e-12);

  // stability at |logit| up to 1e4
  Mat big(2, 3);
  big << 1e4, -1e4, 0.0, -1e4, 1e4, 5.0;
  Mat r = tbnet::softmax(big);
  for (int i = 0; i < 2; ++i) {
    CHECK(r.row(i).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.row(i).minCoeff() >= 0.0);
  }
}
