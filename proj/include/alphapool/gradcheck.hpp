#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "alphapool/layer.hpp"
#include "alphapool/tensor.hpp"

namespace alphapool {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

struct GradCheckEntry {
  std::string what;  // "input" or a parameter name
  double max_rel_err = 0.0;
  std::int64_t worst_index = -1;
  std::int64_t checked = 0;
  std::int64_t skipped = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_err() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
  }

  bool pass(double tol) const { return max_rel_err() <= tol; }

  std::string str() const {
    std::ostringstream os;
    for (const auto& e : entries) {
      os << "  " << e.what << ": max_rel_err=" << e.max_rel_err << " (checked " << e.checked;
      if (e.skipped) os << ", skipped " << e.skipped;
      os << ")\n";
    }
    return os.str();
  }
};

// Coordinates where the layer is non-differentiable (kinks, ties) are
// excluded from the finite-difference sweep by this predicate.
using SkipFn = std::function<bool(const Tensor<double>&, std::int64_t)>;

// Checks a layer's analytic gradients against central finite differences of
// its forward pass, in double precision.  The scalar objective is a fixed
// pseudo-random projection of the output: L(x) = sum_k R_k * forward(x)_k.
inline GradCheckReport check_layer(Layer<double>& layer, const Tensor<double>& input,
                                   double h = 1e-6, SkipFn skip_input = nullptr) {
  Tensor<double> probe = layer.forward(input);
  Tensor<double> r(probe.shape());
  {
    std::uint64_t s = 0x9e3779b97f4a7c15ull;
    double* pr = r.data();
    for (std::int64_t i = 0; i < r.numel(); ++i) {
      // splitmix64, mapped to [-1, 1); fixed so runs are reproducible
      s += 0x9e3779b97f4a7c15ull;
      std::uint64_t z = s;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      z = z ^ (z >> 31);
      pr[i] = static_cast<double>(z >> 11) * (2.0 / 9007199254740992.0) - 1.0;
    }
  }

  auto objective = [&](const Tensor<double>& x) {
    Tensor<double> y = layer.forward(x);
    double s = 0.0;
    const double* py = y.data();
    const double* pr = r.data();
    for (std::int64_t i = 0; i < y.numel(); ++i) {
      if (!std::isfinite(py[i]))
        throw std::runtime_error("gradcheck: non-finite forward output");
      s += pr[i] * py[i];
    }
    return s;
  };

  // analytic pass; copy out the parameter grads before FD reruns forward
  layer.forward(input);
  Tensor<double> gx = layer.backward(r);
  auto params = layer.params();
  std::vector<std::vector<double>> param_grads;
  for (const auto& p : params)
    param_grads.emplace_back(p.grad, p.grad + p.size);

  GradCheckReport report;

  GradCheckEntry in_entry;
  in_entry.what = "input";
  Tensor<double> x = input;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    if (skip_input && skip_input(input, i)) {
      ++in_entry.skipped;
      continue;
    }
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = objective(x);
    x[i] = orig - h;
    const double fm = objective(x);
    x[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double e = rel_err(fd, gx[i]);
    ++in_entry.checked;
    if (e > in_entry.max_rel_err) {
      in_entry.max_rel_err = e;
      in_entry.worst_index = i;
    }
  }
  report.entries.push_back(in_entry);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    GradCheckEntry pe;
    pe.what = params[pi].name;
    double* value = params[pi].value;
    for (std::int64_t i = 0; i < params[pi].size; ++i) {
      const double orig = value[i];
      value[i] = orig + h;
      const double fp = objective(x);
      value[i] = orig - h;
      const double fm = objective(x);
      value[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double e = rel_err(fd, param_grads[pi][static_cast<std::size_t>(i)]);
      ++pe.checked;
      if (e > pe.max_rel_err) {
        pe.max_rel_err = e;
        pe.worst_index = i;
      }
    }
    report.entries.push_back(pe);
  }

  // leave the layer's cache consistent with the unperturbed input
  layer.forward(input);
  return report;
}

}  // namespace alphapool
