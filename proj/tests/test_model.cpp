#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "alphapool/model.hpp"

using namespace alphapool;

namespace {

Tensor<float> random_images(const Shape& s, unsigned seed) {
  Tensor<float> t(s);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = d(rng);
  return t;
}

}  // namespace

TEST_CASE("pool kind and activation parsing") {
  CHECK(parse_pool_kind("max") == PoolKind::kMax);
  CHECK(parse_pool_kind("avg") == PoolKind::kAvg);
  CHECK(parse_pool_kind("lp") == PoolKind::kLp);
  CHECK(parse_pool_kind("alpha") == PoolKind::kAlpha);
  CHECK_THROWS_AS(parse_pool_kind("median"), std::invalid_argument);
  for (PoolKind k : {PoolKind::kMax, PoolKind::kAvg, PoolKind::kLp, PoolKind::kAlpha})
    CHECK(parse_pool_kind(pool_kind_name(k)) == k);

  CHECK(parse_activation("auto") == Activation::kAuto);
  CHECK(parse_activation("relu") == Activation::kRelu);
  CHECK(parse_activation("relu_plus") == Activation::kReluPlus);
  CHECK_THROWS_AS(parse_activation("tanh"), std::invalid_argument);
}

TEST_CASE("SimpleCNN wiring and shapes") {
  ModelConfig cfg;
  std::mt19937 rng(1);
  Model<float> m = build_simple_cnn<float>(cfg, rng);
  REQUIRE(m.layers.size() == 7);
  CHECK(std::string(m.layers[0]->kind()) == "conv2d");
  CHECK(m.layers[0]->name() == "conv1");
  CHECK(m.layers[1]->name() == "act1");
  CHECK(m.layers[2]->name() == "pool1");
  CHECK(m.layers[3]->name() == "conv2");
  CHECK(m.layers[4]->name() == "act2");
  CHECK(m.layers[5]->name() == "pool2");
  CHECK(m.layers[6]->name() == "fc");

  // 28x28 -> conv(pad 2, k 5) 28x28 -> pool 14x14 -> conv 14x14 -> pool 7x7
  CHECK(m.output_shape(Shape{4, 1, 28, 28}) == Shape{4, 10});
  Tensor<float> x = random_images(Shape{2, 1, 28, 28}, 2);
  Tensor<float> logits = m.forward(x);
  CHECK(logits.shape() == Shape{2, 10});

  // fc consumes 64 * 7 * 7 = 3136 features
  Shape before_fc{1, 1, 28, 28};
  for (std::size_t i = 0; i + 1 < m.layers.size(); ++i)
    before_fc = m.layers[i]->output_shape(before_fc);
  CHECK(before_fc == Shape{1, 64, 7, 7});
}

TEST_CASE("activation auto rule picks eps-floored relu only for alpha pooling") {
  std::mt19937 rng(1);
  for (PoolKind k : {PoolKind::kMax, PoolKind::kAvg, PoolKind::kLp, PoolKind::kAlpha}) {
    ModelConfig cfg;
    cfg.pool_kind = k;
    Model<float> m = build_simple_cnn<float>(cfg, rng);
    const std::string want = k == PoolKind::kAlpha ? "relu_plus" : "relu";
    CHECK(std::string(m.layers[1]->kind()) == want);
    CHECK(std::string(m.layers[4]->kind()) == want);
  }
  ModelConfig forced;
  forced.pool_kind = PoolKind::kAvg;
  forced.activation = Activation::kReluPlus;
  Model<float> m = build_simple_cnn<float>(forced, rng);
  CHECK(std::string(m.layers[1]->kind()) == "relu_plus");
  ModelConfig plain;
  plain.pool_kind = PoolKind::kAlpha;
  plain.activation = Activation::kRelu;
  Model<float> m2 = build_simple_cnn<float>(plain, rng);
  CHECK(std::string(m2.layers[1]->kind()) == "relu");
}

TEST_CASE("parameter names, order and optimizer flags") {
  ModelConfig cfg;
  std::mt19937 rng(3);
  Model<float> m = build_simple_cnn<float>(cfg, rng);
  auto ps = m.params();
  REQUIRE(ps.size() == 8);
  const char* names[] = {"conv1.weight", "conv1.bias", "pool1.alpha", "conv2.weight",
                         "conv2.bias",   "pool2.alpha", "fc.weight",   "fc.bias"};
  for (std::size_t i = 0; i < 8; ++i) CHECK(ps[i].name == names[i]);

  for (const auto& p : ps) {
    const bool is_alpha = p.name.find(".alpha") != std::string::npos;
    CHECK(p.apply_weight_decay == !is_alpha);
    CHECK(p.clamped == is_alpha);
  }
  CHECK(ps[0].size == 32 * 1 * 5 * 5);
  CHECK(ps[3].size == 64 * 32 * 5 * 5);
  CHECK(ps[6].size == 10 * 3136);

  ModelConfig frozen;
  frozen.train_alpha = false;
  Model<float> mf = build_simple_cnn<float>(frozen, rng);
  CHECK(mf.params().size() == 6);

  ModelConfig lp;
  lp.pool_kind = PoolKind::kLp;
  Model<float> ml = build_simple_cnn<float>(lp, rng);
  auto lp_ps = ml.params();
  REQUIRE(lp_ps.size() == 8);
  CHECK(lp_ps[2].name == "pool1.rho");
  CHECK(lp_ps[5].name == "pool2.rho");
}

TEST_CASE("alpha_pools and lp_pools accessors") {
  std::mt19937 rng(4);
  ModelConfig cfg;
  Model<float> m = build_simple_cnn<float>(cfg, rng);
  auto pools = m.alpha_pools();
  REQUIRE(pools.size() == 2);
  CHECK(pools[0]->name() == "pool1");
  CHECK(pools[1]->name() == "pool2");
  CHECK(pools[0]->alpha() == -3.0f);
  CHECK(m.lp_pools().empty());

  ModelConfig lp;
  lp.pool_kind = PoolKind::kLp;
  Model<float> ml = build_simple_cnn<float>(lp, rng);
  CHECK(ml.lp_pools().size() == 2);
  CHECK(ml.alpha_pools().empty());
}

TEST_CASE("alpha_init is honored") {
  std::mt19937 rng(5);
  ModelConfig cfg;
  cfg.alpha_init = 2.5;
  Model<float> m = build_simple_cnn<float>(cfg, rng);
  for (auto* p : m.alpha_pools()) CHECK(p->alpha() == 2.5f);
}

TEST_CASE("initialization is deterministic in the seed") {
  ModelConfig cfg;
  std::mt19937 r1(42), r2(42), r3(43);
  Model<float> a = build_simple_cnn<float>(cfg, r1);
  Model<float> b = build_simple_cnn<float>(cfg, r2);
  Model<float> c = build_simple_cnn<float>(cfg, r3);
  auto pa = a.params(), pb = b.params(), pc = c.params();
  bool identical = true, differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::int64_t j = 0; j < pa[i].size; ++j) {
      if (pa[i].value[j] != pb[i].value[j]) identical = false;
      if (pa[i].value[j] != pc[i].value[j]) differs = true;
    }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("kaiming_fill spread scales with fan-in") {
  std::mt19937 rng(9);
  Tensor<double> w(Shape{4000});
  kaiming_fill(w, 800, rng);
  double var = 0.0;
  for (std::int64_t i = 0; i < w.numel(); ++i) var += w[i] * w[i];
  var /= static_cast<double>(w.numel());
  CHECK(var == doctest::Approx(2.0 / 800.0).epsilon(0.1));
  CHECK(std::abs(w[0] - w[1]) > 0.0);
}

TEST_CASE("biases start at zero") {
  std::mt19937 rng(10);
  ModelConfig cfg;
  Model<float> m = build_simple_cnn<float>(cfg, rng);
  for (const auto& p : m.params())
    if (p.name.find(".bias") != std::string::npos)
      for (std::int64_t i = 0; i < p.size; ++i) CHECK(p.value[i] == 0.0f);
}

TEST_CASE("one SGD-style step on a tiny batch reduces the loss") {
  ModelConfig cfg;
  cfg.in_h = 12;
  cfg.in_w = 12;
  cfg.conv1_filters = 4;
  cfg.conv2_filters = 6;
  std::mt19937 rng(77);
  Model<float> m = build_simple_cnn<float>(cfg, rng);
  Tensor<float> x = random_images(Shape{8, 1, 12, 12}, 78);
  std::vector<int> labels = {0, 1, 2, 3, 4, 5, 6, 7};

  LossResult<float> before = softmax_cross_entropy(m.forward(x), labels);
  for (int step = 0; step < 5; ++step) {
    LossResult<float> r = softmax_cross_entropy(m.forward(x), labels);
    m.backward(r.grad);
    for (auto& p : m.params())
      for (std::int64_t i = 0; i < p.size; ++i) p.value[i] -= 0.05f * p.grad[i];
  }
  LossResult<float> after = softmax_cross_entropy(m.forward(x), labels);
  CHECK(after.loss < before.loss);
}

TEST_CASE("forward output is finite for in-range image input") {
  std::mt19937 rng(90);
  for (PoolKind k : {PoolKind::kMax, PoolKind::kAvg, PoolKind::kLp, PoolKind::kAlpha}) {
    ModelConfig cfg;
    cfg.pool_kind = k;
    cfg.in_h = 16;
    cfg.in_w = 16;
    cfg.conv1_filters = 3;
    cfg.conv2_filters = 4;
    Model<float> m = build_simple_cnn<float>(cfg, rng);
    Tensor<float> x = random_images(Shape{2, 1, 16, 16}, 91);
    Tensor<float> y = m.forward(x);
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(std::isfinite(y[i]));
  }
}
