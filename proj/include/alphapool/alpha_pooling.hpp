#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "alphapool/layer.hpp"
#include "alphapool/pool_common.hpp"
#include "alphapool/tensor.hpp"

namespace alphapool {

// Scalar transfer function of alpha-integration.  Positive domain only.
inline double f_alpha(double z, double alpha) {
  if (!(z > 0.0))
    throw std::invalid_argument("f_alpha: requires z > 0, got " + std::to_string(z));
  if (!std::isfinite(alpha))
    throw std::invalid_argument("f_alpha: alpha must be finite");
  if (alpha == 1.0) return std::log(z);
  return std::pow(z, (1.0 - alpha) / 2.0);
}

inline double f_alpha_inv(double u, double alpha) {
  if (!std::isfinite(alpha))
    throw std::invalid_argument("f_alpha_inv: alpha must be finite");
  if (alpha == 1.0) return std::exp(u);
  if (!(u > 0.0))
    throw std::invalid_argument("f_alpha_inv: requires u > 0 for alpha != 1, got " +
                                std::to_string(u));
  return std::pow(u, 2.0 / (1.0 - alpha));
}

// Alpha-integration of a positive multiset: f_alpha^{-1}(mean_i f_alpha(x_i)).
// Evaluated through a max-shifted log-sum-exp in the exponent q = (1-alpha)/2,
// which stays stable for large |alpha| where the naive power mean over- or
// underflows.  Values are sorted first so the result is bitwise independent
// of argument order.
inline double alpha_integrate(std::vector<double> values, double alpha) {
  if (values.empty())
    throw std::invalid_argument("alpha_integrate: empty input");
  if (!std::isfinite(alpha))
    throw std::invalid_argument("alpha_integrate: alpha must be finite");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!(values[i] > 0.0))
      throw std::invalid_argument("alpha_integrate: requires positive inputs, got " +
                                  std::to_string(values[i]) + " at position " +
                                  std::to_string(i));
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());

  if (alpha == -1.0) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / n;
  }

  const double q = (1.0 - alpha) / 2.0;
  if (std::abs(q) < 1e-6) {
    double sum = 0.0;
    for (double v : values) sum += std::log(v);
    return std::exp(sum / n);
  }

  std::vector<double> t(values.size());
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i) {
    t[i] = q * std::log(values[i]);
    m = std::max(m, t[i]);
  }
  double s = 0.0;
  for (double ti : t) s += std::exp(ti - m);
  const double lse = m + std::log(s) - std::log(n);
  return std::exp(lse / q);
}

// Trainable alpha with its gradient slot.  Clamp bounds keep the exponent
// in a numerically sane range; the optimizer applies them after each step.
template <typename T>
struct AlphaParam {
  T value = T(-1);
  T grad = T(0);
  bool trainable = true;

  static constexpr T kClampLo = T(-30);
  static constexpr T kClampHi = T(30);
};

// 2D alpha-integration pooling over non-overlapping (or strided) windows.
// Three evaluation branches share one contract:
//   alpha == -1      exact arithmetic mean (bitwise identical to avg-pool),
//   |q| < 1e-6       geometric mean, treated as a flat zone in alpha so the
//                    analytic d/dalpha is 0 there,
//   otherwise        stable log-sum-exp power mean.
template <typename T>
class AlphaPool2d : public Layer<T> {
 public:
  explicit AlphaPool2d(PoolGeometry geometry, T alpha_init = T(-1), bool trainable = true)
      : geometry_(geometry) {
    geometry_.validate();
    alpha_.value = alpha_init;
    alpha_.trainable = trainable;
    this->set_name("alpha_pool");
  }

  const char* kind() const override { return "alpha_pool"; }

  AlphaParam<T>& alpha_param() { return alpha_; }
  T alpha() const { return alpha_.value; }
  void set_alpha(T a) { alpha_.value = a; }

  Shape output_shape(const Shape& in) const override {
    auto [oh, ow] = pooled_dims(in, geometry_, label());
    return Shape{in[0], in[1], oh, ow};
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    auto [oh, ow] = pooled_dims(x.shape(), geometry_, label());
    const std::int64_t n = x.shape()[0], c = x.shape()[1], w = x.shape()[3];
    const int kh = geometry_.window_h, kw = geometry_.window_w;
    const int k = geometry_.window_size();
    const std::int64_t n_windows = n * c * oh * ow;

    input_ = x;
    Tensor<T> y(Shape{n, c, oh, ow});

    const double q = (1.0 - static_cast<double>(alpha_.value)) / 2.0;
    branch_ = alpha_.value == T(-1) ? Branch::kMean
              : std::abs(q) < 1e-6  ? Branch::kGeometric
                                    : Branch::kGeneral;
    q_ = static_cast<T>(q);

    if (branch_ == Branch::kGeneral) {
      weights_.assign(static_cast<std::size_t>(n_windows) * k, T(0));
      lny_.assign(static_cast<std::size_t>(n_windows), T(0));
      swl_.assign(static_cast<std::size_t>(n_windows), T(0));
    } else if (branch_ == Branch::kGeometric) {
      lny_.assign(static_cast<std::size_t>(n_windows), T(0));
    } else {
      check_positive(x);
    }

    std::vector<T> logs(static_cast<std::size_t>(k));
    const T* px = x.data();
    T* py = y.data();
    const T log_k = std::log(static_cast<T>(k));

    std::int64_t widx = 0;
    for (std::int64_t img = 0; img < n * c; ++img) {
      const T* plane = px + img * x.shape()[2] * w;
      for (std::int64_t i = 0; i < oh; ++i) {
        for (std::int64_t j = 0; j < ow; ++j, ++widx) {
          const T* top_left = plane + (i * geometry_.stride_h) * w + j * geometry_.stride_w;
          switch (branch_) {
            case Branch::kMean:
              py[widx] = detail::window_mean(top_left, kh, kw, w);
              break;
            case Branch::kGeometric: {
              T sum = 0;
              for (int a = 0; a < kh; ++a) {
                const T* row = top_left + a * static_cast<std::int64_t>(w);
                for (int b = 0; b < kw; ++b) {
                  if (!(row[b] > T(0))) report_non_positive(x, widx, a, b, oh, ow);
                  sum += std::log(row[b]);
                }
              }
              lny_[widx] = sum / static_cast<T>(k);
              py[widx] = std::exp(lny_[widx]);
              break;
            }
            case Branch::kGeneral: {
              T m = -std::numeric_limits<T>::infinity();
              int e = 0;
              for (int a = 0; a < kh; ++a) {
                const T* row = top_left + a * static_cast<std::int64_t>(w);
                for (int b = 0; b < kw; ++b, ++e) {
                  if (!(row[b] > T(0))) report_non_positive(x, widx, a, b, oh, ow);
                  logs[e] = std::log(row[b]);
                  m = std::max(m, q_ * logs[e]);
                }
              }
              T s = 0;
              T* wts = weights_.data() + static_cast<std::size_t>(widx) * k;
              for (e = 0; e < k; ++e) {
                wts[e] = std::exp(q_ * logs[e] - m);
                s += wts[e];
              }
              T swl = 0;
              for (e = 0; e < k; ++e) {
                wts[e] /= s;
                swl += wts[e] * logs[e];
              }
              swl_[widx] = swl;
              lny_[widx] = (m + std::log(s) - log_k) / q_;
              py[widx] = std::exp(lny_[widx]);
              break;
            }
          }
        }
      }
    }
    output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    if (input_.empty())
      throw std::logic_error(label() + ": backward called before forward");
    if (!(grad_out.shape() == output_.shape()))
      throw std::invalid_argument(label() + ": grad shape " + grad_out.shape().str() +
                                  " does not match output " + output_.shape().str());

    const Shape& xs = input_.shape();
    const std::int64_t w = xs[3], oh = output_.shape()[2], ow = output_.shape()[3];
    const int kh = geometry_.window_h, kw = geometry_.window_w;
    const int k = geometry_.window_size();

    Tensor<T> gx(xs);
    const T* px = input_.data();
    const T* py = output_.data();
    const T* pg = grad_out.data();
    T* pgx = gx.data();
    double ga = 0.0;

    std::int64_t widx = 0;
    for (std::int64_t img = 0; img < xs[0] * xs[1]; ++img) {
      const std::int64_t plane_off = img * xs[2] * w;
      for (std::int64_t i = 0; i < oh; ++i) {
        for (std::int64_t j = 0; j < ow; ++j, ++widx) {
          const std::int64_t tl = plane_off + (i * geometry_.stride_h) * w +
                                  j * geometry_.stride_w;
          const T g = pg[widx];
          const T y = py[widx];
          switch (branch_) {
            case Branch::kMean: {
              detail::window_mean_backward(g, pgx + tl, kh, kw, w);
              if (alpha_.trainable) {
                // q = 1 here: dy/dalpha = -(y/2) (sum_i w_i ln x_i - ln y)
                const T sum = y * static_cast<T>(k);
                T swl = 0;
                for (int a = 0; a < kh; ++a) {
                  const T* row = px + tl + a * w;
                  for (int b = 0; b < kw; ++b) swl += (row[b] / sum) * std::log(row[b]);
                }
                ga += static_cast<double>(g) *
                      (-static_cast<double>(y) / 2.0) *
                      static_cast<double>(swl - std::log(y));
              }
              break;
            }
            case Branch::kGeometric:
              // flat zone: dy/dalpha treated as 0, dy/dx_i = y / (k x_i)
              for (int a = 0; a < kh; ++a) {
                const T* row = px + tl + a * w;
                T* grow = pgx + tl + a * w;
                for (int b = 0; b < kw; ++b)
                  grow[b] += g * y / (static_cast<T>(k) * row[b]);
              }
              break;
            case Branch::kGeneral: {
              const T* wts = weights_.data() + static_cast<std::size_t>(widx) * k;
              int e = 0;
              for (int a = 0; a < kh; ++a) {
                const T* row = px + tl + a * w;
                T* grow = pgx + tl + a * w;
                for (int b = 0; b < kw; ++b, ++e)
                  grow[b] += g * wts[e] * y / row[b];
              }
              if (alpha_.trainable)
                ga += static_cast<double>(g) *
                      (-static_cast<double>(y) / (2.0 * static_cast<double>(q_))) *
                      static_cast<double>(swl_[widx] - lny_[widx]);
              break;
            }
          }
        }
      }
    }
    if (alpha_.trainable) alpha_.grad = static_cast<T>(ga);
    return gx;
  }

  std::vector<ParamRef<T>> params() override {
    if (!alpha_.trainable) return {};
    ParamRef<T> p;
    p.name = this->name() + ".alpha";
    p.value = &alpha_.value;
    p.grad = &alpha_.grad;
    p.size = 1;
    p.apply_weight_decay = false;
    p.clamped = true;
    p.clamp_lo = AlphaParam<T>::kClampLo;
    p.clamp_hi = AlphaParam<T>::kClampHi;
    return {p};
  }

 private:
  enum class Branch { kMean, kGeometric, kGeneral };

  std::string label() const { return std::string("alpha_pool '") + this->name() + "'"; }

  void check_positive(const Tensor<T>& x) const {
    const T* p = x.data();
    for (std::int64_t i = 0; i < x.numel(); ++i)
      if (!(p[i] > T(0))) {
        auto idx = x.shape().unflatten(i);
        throw std::invalid_argument(label() + ": non-positive input " +
                                    std::to_string(static_cast<double>(p[i])) + " at (n=" +
                                    std::to_string(idx[0]) + ", c=" + std::to_string(idx[1]) +
                                    ", h=" + std::to_string(idx[2]) + ", w=" +
                                    std::to_string(idx[3]) + ")");
      }
  }

  [[noreturn]] void report_non_positive(const Tensor<T>& x, std::int64_t widx, int a, int b,
                                        std::int64_t oh, std::int64_t ow) const {
    const std::int64_t ij = widx % (oh * ow);
    const std::int64_t img = widx / (oh * ow);
    const std::int64_t h_pos = (ij / ow) * geometry_.stride_h + a;
    const std::int64_t w_pos = (ij % ow) * geometry_.stride_w + b;
    const std::int64_t n_pos = img / x.shape()[1];
    const std::int64_t c_pos = img % x.shape()[1];
    const T v = x.at({n_pos, c_pos, h_pos, w_pos});
    throw std::invalid_argument(label() + ": non-positive input " +
                                std::to_string(static_cast<double>(v)) + " at (n=" +
                                std::to_string(n_pos) + ", c=" + std::to_string(c_pos) +
                                ", h=" + std::to_string(h_pos) + ", w=" +
                                std::to_string(w_pos) + ")");
  }

  PoolGeometry geometry_;
  AlphaParam<T> alpha_;
  Branch branch_ = Branch::kGeneral;
  T q_ = T(1);

  Tensor<T> input_;
  Tensor<T> output_;
  std::vector<T> weights_;
  std::vector<T> lny_;
  std::vector<T> swl_;
};

// max(eps, x): keeps activations strictly positive so they stay inside the
// pooling domain.  The kink at eps uses subgradient 0, matching max-pool's
// tie convention of preferring the constant side.
template <typename T>
class ReluPlus : public Layer<T> {
 public:
  static constexpr T kEps = T(1e-8);

  ReluPlus() { this->set_name("relu_plus"); }

  const char* kind() const override { return "relu_plus"; }

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    Tensor<T> y(x.shape());
    const T* px = x.data();
    T* py = y.data();
    for (std::int64_t i = 0; i < x.numel(); ++i) py[i] = px[i] > kEps ? px[i] : kEps;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    if (input_.empty())
      throw std::logic_error("relu_plus: backward called before forward");
    if (!(grad_out.shape() == input_.shape()))
      throw std::invalid_argument("relu_plus: grad shape " + grad_out.shape().str() +
                                  " does not match input " + input_.shape().str());
    Tensor<T> gx(input_.shape());
    const T* px = input_.data();
    const T* pg = grad_out.data();
    T* pgx = gx.data();
    for (std::int64_t i = 0; i < gx.numel(); ++i) pgx[i] = px[i] > kEps ? pg[i] : T(0);
    return gx;
  }

 private:
  Tensor<T> input_;
};

}  // namespace alphapool
