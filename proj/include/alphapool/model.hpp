#pragma once

#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "alphapool/alpha_pooling.hpp"
#include "alphapool/baseline_pooling.hpp"
#include "alphapool/layers.hpp"

namespace alphapool {

enum class PoolKind { kMax, kAvg, kLp, kAlpha };

inline PoolKind parse_pool_kind(const std::string& s) {
  if (s == "max") return PoolKind::kMax;
  if (s == "avg") return PoolKind::kAvg;
  if (s == "lp") return PoolKind::kLp;
  if (s == "alpha") return PoolKind::kAlpha;
  throw std::invalid_argument("unknown pool type '" + s + "' (expected max, avg, lp or alpha)");
}

inline std::string pool_kind_name(PoolKind k) {
  switch (k) {
    case PoolKind::kMax: return "max";
    case PoolKind::kAvg: return "avg";
    case PoolKind::kLp: return "lp";
    case PoolKind::kAlpha: return "alpha";
  }
  return "?";
}

enum class Activation { kAuto, kRelu, kReluPlus };

inline Activation parse_activation(const std::string& s) {
  if (s == "auto") return Activation::kAuto;
  if (s == "relu") return Activation::kRelu;
  if (s == "relu_plus") return Activation::kReluPlus;
  throw std::invalid_argument("unknown activation '" + s +
                              "' (expected auto, relu or relu_plus)");
}

struct ModelConfig {
  int in_channels = 1;
  int in_h = 28;
  int in_w = 28;
  int num_classes = 10;
  int conv1_filters = 32;
  int conv2_filters = 64;
  int kernel = 5;
  int pad = 2;
  PoolGeometry pool_geometry{2, 2, 2, 2};
  PoolKind pool_kind = PoolKind::kAlpha;
  double alpha_init = -3.0;
  bool train_alpha = true;
  Activation activation = Activation::kAuto;
};

template <typename T>
struct Model {
  std::vector<std::unique_ptr<Layer<T>>> layers;

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> cur = x;
    for (auto& l : layers) cur = l->forward(cur);
    return cur;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> cur = grad_out;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
  }

  Shape output_shape(const Shape& in) const {
    Shape cur = in;
    for (const auto& l : layers) cur = l->output_shape(cur);
    return cur;
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (auto& l : layers)
      for (auto& p : l->params()) out.push_back(p);
    return out;
  }

  std::vector<AlphaPool2d<T>*> alpha_pools() {
    std::vector<AlphaPool2d<T>*> out;
    for (auto& l : layers)
      if (auto* p = dynamic_cast<AlphaPool2d<T>*>(l.get())) out.push_back(p);
    return out;
  }

  std::vector<LpPool2d<T>*> lp_pools() {
    std::vector<LpPool2d<T>*> out;
    for (auto& l : layers)
      if (auto* p = dynamic_cast<LpPool2d<T>*>(l.get())) out.push_back(p);
    return out;
  }
};

// He initialization: W ~ N(0, sqrt(2 / fan_in)), biases zero.  Draws happen
// in double so float and double models share an init stream.
template <typename T>
void kaiming_fill(Tensor<T>& w, std::int64_t fan_in, std::mt19937& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  T* p = w.data();
  for (std::int64_t i = 0; i < w.numel(); ++i) p[i] = static_cast<T>(dist(rng));
}

template <typename T>
std::unique_ptr<Layer<T>> make_pool(const ModelConfig& cfg, const std::string& name) {
  std::unique_ptr<Layer<T>> pool;
  switch (cfg.pool_kind) {
    case PoolKind::kMax:
      pool = std::make_unique<MaxPool2d<T>>(cfg.pool_geometry);
      break;
    case PoolKind::kAvg:
      pool = std::make_unique<AvgPool2d<T>>(cfg.pool_geometry);
      break;
    case PoolKind::kLp:
      pool = std::make_unique<LpPool2d<T>>(cfg.pool_geometry);
      break;
    case PoolKind::kAlpha:
      pool = std::make_unique<AlphaPool2d<T>>(cfg.pool_geometry,
                                              static_cast<T>(cfg.alpha_init),
                                              cfg.train_alpha);
      break;
  }
  pool->set_name(name);
  return pool;
}

// conv - act - pool - conv - act - pool - dense classifier.  Alpha pooling
// needs strictly positive inputs, so "auto" picks the eps-floored activation
// exactly when the pool is alpha.
template <typename T>
Model<T> build_simple_cnn(const ModelConfig& cfg, std::mt19937& init_rng) {
  const bool relu_plus =
      cfg.activation == Activation::kAuto ? cfg.pool_kind == PoolKind::kAlpha
                                          : cfg.activation == Activation::kReluPlus;

  auto make_act = [&](const std::string& name) -> std::unique_ptr<Layer<T>> {
    std::unique_ptr<Layer<T>> act;
    if (relu_plus)
      act = std::make_unique<ReluPlus<T>>();
    else
      act = std::make_unique<Relu<T>>();
    act->set_name(name);
    return act;
  };

  Model<T> m;

  auto conv1 = std::make_unique<Conv2d<T>>(cfg.in_channels, cfg.conv1_filters, cfg.kernel, 1,
                                           cfg.pad);
  conv1->set_name("conv1");
  conv1->set_compute_input_grad(false);
  kaiming_fill(conv1->weight(),
               static_cast<std::int64_t>(cfg.in_channels) * cfg.kernel * cfg.kernel, init_rng);

  auto conv2 = std::make_unique<Conv2d<T>>(cfg.conv1_filters, cfg.conv2_filters, cfg.kernel, 1,
                                           cfg.pad);
  conv2->set_name("conv2");
  kaiming_fill(conv2->weight(),
               static_cast<std::int64_t>(cfg.conv1_filters) * cfg.kernel * cfg.kernel,
               init_rng);

  m.layers.push_back(std::move(conv1));
  m.layers.push_back(make_act("act1"));
  m.layers.push_back(make_pool<T>(cfg, "pool1"));
  m.layers.push_back(std::move(conv2));
  m.layers.push_back(make_act("act2"));
  m.layers.push_back(make_pool<T>(cfg, "pool2"));

  const Shape probe{1, cfg.in_channels, cfg.in_h, cfg.in_w};
  Shape before_fc = probe;
  for (const auto& l : m.layers) before_fc = l->output_shape(before_fc);
  std::int64_t features = 1;
  for (std::size_t i = 1; i < before_fc.rank(); ++i) features *= before_fc[i];

  auto fc = std::make_unique<Dense<T>>(features, cfg.num_classes);
  fc->set_name("fc");
  kaiming_fill(fc->weight(), features, init_rng);
  m.layers.push_back(std::move(fc));

  return m;
}

}  // namespace alphapool
