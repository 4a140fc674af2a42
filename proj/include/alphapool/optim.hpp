#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "alphapool/layer.hpp"

namespace alphapool {

// Base learning rate with step multipliers: lr(e) is the base times the
// product of multipliers whose milestone epoch is <= e (epochs are 1-based).
struct LrSchedule {
  double base = 0.001;
  std::vector<std::pair<int, double>> milestones;

  // "5:0.1,10:0.1" -> multiply by 0.1 from epoch 5, again from epoch 10
  static LrSchedule parse(double base, const std::string& spec) {
    LrSchedule s;
    s.base = base;
    if (!(base > 0.0))
      throw std::invalid_argument("lr schedule: base learning rate must be positive");
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const auto colon = item.find(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("lr schedule: expected epoch:multiplier, got '" + item +
                                    "'");
      int epoch;
      double mult;
      try {
        std::size_t used;
        epoch = std::stoi(item.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument("");
        mult = std::stod(item.substr(colon + 1), &used);
        if (used != item.size() - colon - 1) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw std::invalid_argument("lr schedule: cannot parse '" + item + "'");
      }
      s.milestones.emplace_back(epoch, mult);
    }
    s.validate();
    return s;
  }

  void validate() const {
    int prev = 0;
    for (const auto& [epoch, mult] : milestones) {
      if (epoch <= prev)
        throw std::invalid_argument(
            "lr schedule: milestone epochs must be positive and strictly increasing");
      if (!(mult > 0.0))
        throw std::invalid_argument("lr schedule: multipliers must be positive");
      prev = epoch;
    }
  }

  double at(int epoch) const {
    double lr = base;
    for (const auto& [e, mult] : milestones)
      if (e <= epoch) lr *= mult;
    return lr;
  }

  std::string str() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < milestones.size(); ++i) {
      if (i) os << ",";
      os << milestones[i].first << ":" << milestones[i].second;
    }
    return os.str();
  }
};

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

// SGD with classical momentum:
//   v <- mu * v - lr * (g + wd * theta);  theta <- theta + v
// Weight decay is skipped for params flagged out of it (pooling shape
// parameters), and clamped params are clipped after every update.
template <typename T>
class Sgd {
 public:
  explicit Sgd(SgdOptions opts) : opts_(opts) {}

  const SgdOptions& options() const { return opts_; }

  void step(const std::vector<ParamRef<T>>& params, double lr) {
    if (velocity_.empty()) {
      for (const auto& p : params) {
        velocity_names_.push_back(p.name);
        velocity_.emplace_back(static_cast<std::size_t>(p.size), T(0));
      }
    }
    if (velocity_.size() != params.size())
      throw std::logic_error("sgd: parameter list changed between steps");

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      const ParamRef<T>& p = params[pi];
      if (p.name != velocity_names_[pi] ||
          static_cast<std::int64_t>(velocity_[pi].size()) != p.size)
        throw std::logic_error("sgd: parameter '" + p.name +
                               "' does not match optimizer state");
      T* v = velocity_[pi].data();
      const T mu = static_cast<T>(opts_.momentum);
      const T eta = static_cast<T>(lr);
      const T wd = static_cast<T>(opts_.weight_decay);
      for (std::int64_t i = 0; i < p.size; ++i) {
        T g = p.grad[i];
        if (!std::isfinite(static_cast<double>(g)))
          throw std::runtime_error("sgd: non-finite gradient in parameter '" + p.name + "'");
        if (p.apply_weight_decay) g += wd * p.value[i];
        v[i] = mu * v[i] - eta * g;
        p.value[i] += v[i];
        if (p.clamped) p.value[i] = std::clamp(p.value[i], p.clamp_lo, p.clamp_hi);
      }
    }
  }

  std::vector<std::pair<std::string, std::vector<T>>> state() const {
    std::vector<std::pair<std::string, std::vector<T>>> out;
    for (std::size_t i = 0; i < velocity_.size(); ++i)
      out.emplace_back(velocity_names_[i], velocity_[i]);
    return out;
  }

  void load_state(const std::vector<std::pair<std::string, std::vector<T>>>& state) {
    velocity_names_.clear();
    velocity_.clear();
    for (const auto& [name, v] : state) {
      velocity_names_.push_back(name);
      velocity_.push_back(v);
    }
  }

 private:
  SgdOptions opts_;
  std::vector<std::string> velocity_names_;
  std::vector<std::vector<T>> velocity_;
};

}  // namespace alphapool
