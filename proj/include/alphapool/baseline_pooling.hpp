#pragma once

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

template <typename T>
class MaxPool2d : public Layer<T> {
 public:
  explicit MaxPool2d(PoolGeometry geometry) : geometry_(geometry) {
    geometry_.validate();
    this->set_name("max_pool");
  }

  const char* kind() const override { return "max_pool"; }

  Shape output_shape(const Shape& in) const override {
    auto [oh, ow] = pooled_dims(in, geometry_, "max_pool");
    return Shape{in[0], in[1], oh, ow};
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    auto [oh, ow] = pooled_dims(x.shape(), geometry_, "max_pool");
    const std::int64_t w = x.shape()[3];
    input_shape_ = x.shape();
    Tensor<T> y(Shape{x.shape()[0], x.shape()[1], oh, ow});
    argmax_.assign(static_cast<std::size_t>(y.numel()), 0);

    const T* px = x.data();
    T* py = y.data();
    std::int64_t widx = 0;
    for (std::int64_t img = 0; img < x.shape()[0] * x.shape()[1]; ++img) {
      const std::int64_t plane_off = img * x.shape()[2] * w;
      for (std::int64_t i = 0; i < oh; ++i) {
        for (std::int64_t j = 0; j < ow; ++j, ++widx) {
          const std::int64_t tl = plane_off + (i * geometry_.stride_h) * w +
                                  j * geometry_.stride_w;
          // scan in flat index order with strict >, so ties keep the lowest index
          T best = -std::numeric_limits<T>::infinity();
          std::int64_t best_at = tl;
          for (int a = 0; a < geometry_.window_h; ++a) {
            const std::int64_t row = tl + a * w;
            for (int b = 0; b < geometry_.window_w; ++b) {
              if (px[row + b] > best) {
                best = px[row + b];
                best_at = row + b;
              }
            }
          }
          py[widx] = best;
          argmax_[static_cast<std::size_t>(widx)] = best_at;
        }
      }
    }
    output_shape_cache_ = y.shape();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    if (argmax_.empty())
      throw std::logic_error("max_pool: backward called before forward");
    if (!(grad_out.shape() == output_shape_cache_))
      throw std::invalid_argument("max_pool: grad shape " + grad_out.shape().str() +
                                  " does not match output " + output_shape_cache_.str());
    Tensor<T> gx(input_shape_);
    T* pgx = gx.data();
    const T* pg = grad_out.data();
    for (std::int64_t widx = 0; widx < grad_out.numel(); ++widx)
      pgx[argmax_[static_cast<std::size_t>(widx)]] += pg[widx];
    return gx;
  }

 private:
  PoolGeometry geometry_;
  Shape input_shape_;
  Shape output_shape_cache_;
  std::vector<std::int64_t> argmax_;
};

template <typename T>
class AvgPool2d : public Layer<T> {
 public:
  explicit AvgPool2d(PoolGeometry geometry) : geometry_(geometry) {
    geometry_.validate();
    this->set_name("avg_pool");
  }

  const char* kind() const override { return "avg_pool"; }

  Shape output_shape(const Shape& in) const override {
    auto [oh, ow] = pooled_dims(in, geometry_, "avg_pool");
    return Shape{in[0], in[1], oh, ow};
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    auto [oh, ow] = pooled_dims(x.shape(), geometry_, "avg_pool");
    const std::int64_t w = x.shape()[3];
    input_shape_ = x.shape();
    Tensor<T> y(Shape{x.shape()[0], x.shape()[1], oh, ow});

    const T* px = x.data();
    T* py = y.data();
    std::int64_t widx = 0;
    for (std::int64_t img = 0; img < x.shape()[0] * x.shape()[1]; ++img) {
      const std::int64_t plane_off = img * x.shape()[2] * w;
      for (std::int64_t i = 0; i < oh; ++i)
        for (std::int64_t j = 0; j < ow; ++j, ++widx)
          py[widx] = detail::window_mean(
              px + plane_off + (i * geometry_.stride_h) * w + j * geometry_.stride_w,
              geometry_.window_h, geometry_.window_w, w);
    }
    output_shape_cache_ = y.shape();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    if (input_shape_.rank() == 0)
      throw std::logic_error("avg_pool: backward called before forward");
    if (!(grad_out.shape() == output_shape_cache_))
      throw std::invalid_argument("avg_pool: grad shape " + grad_out.shape().str() +
                                  " does not match output " + output_shape_cache_.str());
    const std::int64_t w = input_shape_[3];
    const std::int64_t oh = output_shape_cache_[2], ow = output_shape_cache_[3];
    Tensor<T> gx(input_shape_);
    T* pgx = gx.data();
    const T* pg = grad_out.data();
    std::int64_t widx = 0;
    for (std::int64_t img = 0; img < input_shape_[0] * input_shape_[1]; ++img) {
      const std::int64_t plane_off = img * input_shape_[2] * w;
      for (std::int64_t i = 0; i < oh; ++i)
        for (std::int64_t j = 0; j < ow; ++j, ++widx)
          detail::window_mean_backward(
              pg[widx],
              pgx + plane_off + (i * geometry_.stride_h) * w + j * geometry_.stride_w,
              geometry_.window_h, geometry_.window_w, w);
    }
    return gx;
  }

 private:
  PoolGeometry geometry_;
  Shape input_shape_;
  Shape output_shape_cache_;
};

inline double softplus(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Scalar Lp mean, the per-window quantity computed by LpPool2d.
inline double lp_integrate(const std::vector<double>& values, double p) {
  if (values.empty()) throw std::invalid_argument("lp_integrate: empty input");
  if (!(p >= 1.0)) throw std::invalid_argument("lp_integrate: requires p >= 1");
  double s = 0.0;
  for (double v : values) s += std::pow(std::abs(v), p);
  s /= static_cast<double>(values.size());
  return std::pow(s, 1.0 / p);
}

// Lp pooling with trainable order p = 1 + softplus(rho), which keeps p > 1
// without constrained optimization.  rho defaults to ln(e - 1) so training
// starts from p = 2.
template <typename T>
struct LpParam {
  T rho = T(0.5413248546129181);  // ln(e - 1)
  T grad = T(0);
  bool trainable = true;

  T p() const { return T(1) + static_cast<T>(softplus(static_cast<double>(rho))); }
};

template <typename T>
class LpPool2d : public Layer<T> {
 public:
  explicit LpPool2d(PoolGeometry geometry, bool trainable = true) : geometry_(geometry) {
    geometry_.validate();
    rho_.trainable = trainable;
    this->set_name("lp_pool");
  }

  const char* kind() const override { return "lp_pool"; }

  LpParam<T>& rho_param() { return rho_; }
  T p() const { return rho_.p(); }

  Shape output_shape(const Shape& in) const override {
    auto [oh, ow] = pooled_dims(in, geometry_, "lp_pool");
    return Shape{in[0], in[1], oh, ow};
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    auto [oh, ow] = pooled_dims(x.shape(), geometry_, "lp_pool");
    const std::int64_t w = x.shape()[3];
    const int kh = geometry_.window_h, kw = geometry_.window_w;
    const int k = geometry_.window_size();
    const std::int64_t n_windows = x.shape()[0] * x.shape()[1] * oh * ow;

    input_ = x;
    p_cache_ = p();
    Tensor<T> y(Shape{x.shape()[0], x.shape()[1], oh, ow});
    weights_.assign(static_cast<std::size_t>(n_windows) * k, T(0));
    swl_.assign(static_cast<std::size_t>(n_windows), T(0));
    lny_.assign(static_cast<std::size_t>(n_windows), T(0));

    std::vector<T> logs(static_cast<std::size_t>(k));
    const T* px = x.data();
    T* py = y.data();
    const T log_k = std::log(static_cast<T>(k));

    std::int64_t widx = 0;
    for (std::int64_t img = 0; img < x.shape()[0] * x.shape()[1]; ++img) {
      const std::int64_t plane_off = img * x.shape()[2] * w;
      for (std::int64_t i = 0; i < oh; ++i) {
        for (std::int64_t j = 0; j < ow; ++j, ++widx) {
          const std::int64_t tl = plane_off + (i * geometry_.stride_h) * w +
                                  j * geometry_.stride_w;
          // log-sum-exp over p*ln|x| for the nonzero entries; zeros add nothing
          T m = -std::numeric_limits<T>::infinity();
          int e = 0;
          for (int a = 0; a < kh; ++a) {
            const T* row = px + tl + a * w;
            for (int b = 0; b < kw; ++b, ++e) {
              if (row[b] == T(0)) {
                logs[e] = std::numeric_limits<T>::quiet_NaN();
                continue;
              }
              logs[e] = std::log(std::abs(row[b]));
              m = std::max(m, p_cache_ * logs[e]);
            }
          }
          T* wts = weights_.data() + static_cast<std::size_t>(widx) * k;
          if (!std::isfinite(static_cast<double>(m))) {  // all-zero window
            py[widx] = T(0);
            lny_[widx] = T(0);
            swl_[widx] = T(0);
            continue;
          }
          T s = 0;
          for (e = 0; e < k; ++e) {
            if (std::isnan(static_cast<double>(logs[e]))) {
              wts[e] = T(0);
              continue;
            }
            wts[e] = std::exp(p_cache_ * logs[e] - m);
            s += wts[e];
          }
          T swl = 0;
          for (e = 0; e < k; ++e) {
            wts[e] /= s;
            if (!std::isnan(static_cast<double>(logs[e]))) swl += wts[e] * logs[e];
          }
          swl_[widx] = swl;
          lny_[widx] = (m + std::log(s) - log_k) / p_cache_;
          py[widx] = std::exp(lny_[widx]);
        }
      }
    }
    output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    if (input_.empty())
      throw std::logic_error("lp_pool: backward called before forward");
    if (!(grad_out.shape() == output_.shape()))
      throw std::invalid_argument("lp_pool: grad shape " + grad_out.shape().str() +
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
    double gp = 0.0;

    std::int64_t widx = 0;
    for (std::int64_t img = 0; img < xs[0] * xs[1]; ++img) {
      const std::int64_t plane_off = img * xs[2] * w;
      for (std::int64_t i = 0; i < oh; ++i) {
        for (std::int64_t j = 0; j < ow; ++j, ++widx) {
          const T y = py[widx];
          if (y == T(0)) continue;
          const std::int64_t tl = plane_off + (i * geometry_.stride_h) * w +
                                  j * geometry_.stride_w;
          const T g = pg[widx];
          const T* wts = weights_.data() + static_cast<std::size_t>(widx) * k;
          int e = 0;
          for (int a = 0; a < kh; ++a) {
            const T* row = px + tl + a * w;
            T* grow = pgx + tl + a * w;
            for (int b = 0; b < kw; ++b, ++e)
              if (row[b] != T(0)) grow[b] += g * wts[e] * y / row[b];
          }
          if (rho_.trainable)
            gp += static_cast<double>(g) * static_cast<double>(y) /
                  static_cast<double>(p_cache_) *
                  static_cast<double>(swl_[widx] - lny_[widx]);
        }
      }
    }
    if (rho_.trainable)
      rho_.grad = static_cast<T>(gp * sigmoid(static_cast<double>(rho_.rho)));
    return gx;
  }

  std::vector<ParamRef<T>> params() override {
    if (!rho_.trainable) return {};
    ParamRef<T> p;
    p.name = this->name() + ".rho";
    p.value = &rho_.rho;
    p.grad = &rho_.grad;
    p.size = 1;
    p.apply_weight_decay = false;
    return {p};
  }

 private:
  PoolGeometry geometry_;
  LpParam<T> rho_;
  T p_cache_ = T(2);

  Tensor<T> input_;
  Tensor<T> output_;
  std::vector<T> weights_;
  std::vector<T> swl_;
  std::vector<T> lny_;
};

}  // namespace alphapool
