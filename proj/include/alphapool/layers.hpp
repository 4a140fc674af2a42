#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "alphapool/layer.hpp"
#include "alphapool/tensor.hpp"

namespace alphapool {
namespace detail {

// Column matrices for a whole batch are laid out as one
// (C*K*K) x (B*OH*OW) matrix so the convolution collapses into a single
// GEMM; row_stride is B*OH*OW and each image writes its own column block.
template <typename T>
void im2col(const T* im, int channels, int height, int width, int kernel, int pad,
            int stride, T* col, std::int64_t row_stride) {
  const int oh = (height + 2 * pad - kernel) / stride + 1;
  const int ow = (width + 2 * pad - kernel) / stride + 1;
  const int channels_col = channels * kernel * kernel;
  for (int c = 0; c < channels_col; ++c) {
    const int w_off = c % kernel;
    const int h_off = (c / kernel) % kernel;
    const int c_im = c / kernel / kernel;
    T* crow = col + c * row_stride;
    for (int h = 0; h < oh; ++h) {
      const int h_pad = h * stride - pad + h_off;
      for (int w = 0; w < ow; ++w) {
        const int w_pad = w * stride - pad + w_off;
        crow[static_cast<std::int64_t>(h) * ow + w] =
            (h_pad >= 0 && h_pad < height && w_pad >= 0 && w_pad < width)
                ? im[(static_cast<std::int64_t>(c_im) * height + h_pad) * width + w_pad]
                : T(0);
      }
    }
  }
}

template <typename T>
void col2im_acc(const T* col, int channels, int height, int width, int kernel, int pad,
                int stride, T* im, std::int64_t row_stride) {
  const int oh = (height + 2 * pad - kernel) / stride + 1;
  const int ow = (width + 2 * pad - kernel) / stride + 1;
  const int channels_col = channels * kernel * kernel;
  for (int c = 0; c < channels_col; ++c) {
    const int w_off = c % kernel;
    const int h_off = (c / kernel) % kernel;
    const int c_im = c / kernel / kernel;
    const T* crow = col + c * row_stride;
    for (int h = 0; h < oh; ++h) {
      const int h_pad = h * stride - pad + h_off;
      if (h_pad < 0 || h_pad >= height) continue;
      for (int w = 0; w < ow; ++w) {
        const int w_pad = w * stride - pad + w_off;
        if (w_pad < 0 || w_pad >= width) continue;
        im[(static_cast<std::int64_t>(c_im) * height + h_pad) * width + w_pad] +=
            crow[static_cast<std::int64_t>(h) * ow + w];
      }
    }
  }
}

}  // namespace detail

template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int pad = 0)
      : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel),
        stride_(stride), pad_(pad),
        weight_(Shape{out_channels, in_channels, kernel, kernel}),
        bias_(Shape{out_channels}),
        grad_weight_(Shape{out_channels, in_channels, kernel, kernel}),
        grad_bias_(Shape{out_channels}) {
    if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 || pad < 0)
      throw std::invalid_argument("conv2d: invalid hyperparameters");
    this->set_name("conv2d");
  }

  const char* kind() const override { return "conv2d"; }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  void set_compute_input_grad(bool v) { compute_input_grad_ = v; }

  Shape output_shape(const Shape& in) const override {
    check_input(in);
    auto [oh, ow] = out_dims(in);
    return Shape{in[0], out_channels_, oh, ow};
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    check_input(x.shape());
    auto [oh, ow] = out_dims(x.shape());
    const std::int64_t n = x.shape()[0];
    const std::int64_t h = x.shape()[2], w = x.shape()[3];
    const std::int64_t col_rows = static_cast<std::int64_t>(in_channels_) * kernel_ * kernel_;
    const std::int64_t img_cols = oh * ow;
    const std::int64_t total_cols = n * img_cols;

    input_shape_ = x.shape();
    cols_.resize(static_cast<std::size_t>(col_rows * total_cols));
    buf_.resize(static_cast<std::size_t>(out_channels_ * total_cols));
    Tensor<T> y(Shape{n, out_channels_, oh, ow});

    for (std::int64_t b = 0; b < n; ++b)
      detail::im2col(x.data() + b * in_channels_ * h * w, in_channels_, static_cast<int>(h),
                     static_cast<int>(w), kernel_, pad_, stride_,
                     cols_.data() + b * img_cols, total_cols);
    detail::gemm(false, false, out_channels_, total_cols, col_rows, T(1), weight_.data(),
                 col_rows, cols_.data(), total_cols, T(0), buf_.data(), total_cols);
    T* py = y.data();
    for (std::int64_t b = 0; b < n; ++b)
      for (int o = 0; o < out_channels_; ++o) {
        const T* src = buf_.data() + o * total_cols + b * img_cols;
        T* dst = py + (b * out_channels_ + o) * img_cols;
        const T bo = bias_[o];
        for (std::int64_t s = 0; s < img_cols; ++s) dst[s] = src[s] + bo;
      }
    output_shape_cache_ = y.shape();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    if (input_shape_.rank() != 4)
      throw std::logic_error("conv2d: backward called before forward");
    if (!(grad_out.shape() == output_shape_cache_))
      throw std::invalid_argument("conv2d: grad shape " + grad_out.shape().str() +
                                  " does not match output " + output_shape_cache_.str());

    const std::int64_t n = input_shape_[0];
    const std::int64_t h = input_shape_[2], w = input_shape_[3];
    const std::int64_t oh = output_shape_cache_[2], ow = output_shape_cache_[3];
    const std::int64_t col_rows = static_cast<std::int64_t>(in_channels_) * kernel_ * kernel_;
    const std::int64_t img_cols = oh * ow;
    const std::int64_t total_cols = n * img_cols;

    // gather grads into the same (O) x (B*OH*OW) layout as the column matrix
    for (std::int64_t b = 0; b < n; ++b)
      for (int o = 0; o < out_channels_; ++o)
        std::copy_n(grad_out.data() + (b * out_channels_ + o) * img_cols, img_cols,
                    buf_.data() + o * total_cols + b * img_cols);

    detail::gemm(false, true, out_channels_, col_rows, total_cols, T(1), buf_.data(),
                 total_cols, cols_.data(), total_cols, T(0), grad_weight_.data(), col_rows);
    for (int o = 0; o < out_channels_; ++o) {
      T s = 0;
      const T* row = buf_.data() + o * total_cols;
      for (std::int64_t i = 0; i < total_cols; ++i) s += row[i];
      grad_bias_[o] = s;
    }

    Tensor<T> gx(input_shape_);
    if (compute_input_grad_) {
      gcol_.resize(static_cast<std::size_t>(col_rows * total_cols));
      detail::gemm(true, false, col_rows, total_cols, out_channels_, T(1), weight_.data(),
                   col_rows, buf_.data(), total_cols, T(0), gcol_.data(), total_cols);
      for (std::int64_t b = 0; b < n; ++b)
        detail::col2im_acc(gcol_.data() + b * img_cols, in_channels_, static_cast<int>(h),
                           static_cast<int>(w), kernel_, pad_, stride_,
                           gx.data() + b * in_channels_ * h * w, total_cols);
    }
    return gx;
  }

  std::vector<ParamRef<T>> params() override {
    ParamRef<T> w{this->name() + ".weight", weight_.data(), grad_weight_.data(),
                  weight_.numel(), true, false, 0, 0};
    ParamRef<T> b{this->name() + ".bias", bias_.data(), grad_bias_.data(), bias_.numel(),
                  true, false, 0, 0};
    return {w, b};
  }

 private:
  void check_input(const Shape& in) const {
    if (in.rank() != 4)
      throw std::invalid_argument("conv2d: expected (N, C, H, W) input, got " + in.str());
    if (in[1] != in_channels_)
      throw std::invalid_argument("conv2d '" + this->name() + "': expected " +
                                  std::to_string(in_channels_) + " input channels, got " +
                                  in.str());
    const std::int64_t he = in[2] + 2 * pad_ - kernel_;
    const std::int64_t we = in[3] + 2 * pad_ - kernel_;
    if (he < 0 || we < 0 || he % stride_ != 0 || we % stride_ != 0)
      throw std::invalid_argument("conv2d: input " + in.str() + " incompatible with kernel " +
                                  std::to_string(kernel_) + " stride " +
                                  std::to_string(stride_) + " pad " + std::to_string(pad_));
  }

  std::pair<std::int64_t, std::int64_t> out_dims(const Shape& in) const {
    return {(in[2] + 2 * pad_ - kernel_) / stride_ + 1,
            (in[3] + 2 * pad_ - kernel_) / stride_ + 1};
  }

  int in_channels_, out_channels_, kernel_, stride_, pad_;
  bool compute_input_grad_ = true;
  Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
  Shape input_shape_;
  Shape output_shape_cache_;
  std::vector<T> cols_, buf_, gcol_;
};

template <typename T>
class Dense : public Layer<T> {
 public:
  Dense(std::int64_t in_features, std::int64_t out_features)
      : in_(in_features), out_(out_features),
        weight_(Shape{out_features, in_features}), bias_(Shape{out_features}),
        grad_weight_(Shape{out_features, in_features}), grad_bias_(Shape{out_features}) {
    if (in_features < 1 || out_features < 1)
      throw std::invalid_argument("dense: feature counts must be positive");
    this->set_name("dense");
  }

  const char* kind() const override { return "dense"; }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

  Shape output_shape(const Shape& in) const override {
    check_features(in);
    return Shape{in[0], out_};
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    check_features(x.shape());
    const std::int64_t b = x.shape()[0];
    input_ = x;
    Tensor<T> y(Shape{b, out_});
    detail::gemm(false, true, b, out_, in_, T(1), x.data(), in_, weight_.data(), in_, T(0),
                 y.data(), out_);
    T* py = y.data();
    for (std::int64_t r = 0; r < b; ++r)
      for (std::int64_t o = 0; o < out_; ++o) py[r * out_ + o] += bias_[o];
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    if (input_.empty())
      throw std::logic_error("dense: backward called before forward");
    const std::int64_t b = input_.shape()[0];
    if (!(grad_out.shape() == Shape{b, out_}))
      throw std::invalid_argument("dense: grad shape " + grad_out.shape().str() +
                                  " does not match output (" + std::to_string(b) + ", " +
                                  std::to_string(out_) + ")");
    detail::gemm(true, false, out_, in_, b, T(1), grad_out.data(), out_, input_.data(), in_,
                 T(0), grad_weight_.data(), in_);
    for (std::int64_t o = 0; o < out_; ++o) {
      T s = 0;
      for (std::int64_t r = 0; r < b; ++r) s += grad_out.data()[r * out_ + o];
      grad_bias_[o] = s;
    }
    Tensor<T> gx_flat(Shape{b, in_});
    detail::gemm(false, false, b, in_, out_, T(1), grad_out.data(), out_, weight_.data(),
                 in_, T(0), gx_flat.data(), in_);
    return gx_flat.reshaped(input_.shape());
  }

  std::vector<ParamRef<T>> params() override {
    ParamRef<T> w{this->name() + ".weight", weight_.data(), grad_weight_.data(),
                  weight_.numel(), true, false, 0, 0};
    ParamRef<T> b{this->name() + ".bias", bias_.data(), grad_bias_.data(), bias_.numel(),
                  true, false, 0, 0};
    return {w, b};
  }

 private:
  void check_features(const Shape& in) const {
    if (in.rank() < 2)
      throw std::invalid_argument("dense: expected batched input, got " + in.str());
    std::int64_t features = 1;
    for (std::size_t i = 1; i < in.rank(); ++i) features *= in[i];
    if (features != in_)
      throw std::invalid_argument("dense '" + this->name() + "': expected " +
                                  std::to_string(in_) + " features, got " + in.str());
  }

  std::int64_t in_, out_;
  Tensor<T> weight_, bias_, grad_weight_, grad_bias_;
  Tensor<T> input_;
};

template <typename T>
class Relu : public Layer<T> {
 public:
  Relu() { this->set_name("relu"); }

  const char* kind() const override { return "relu"; }

  Shape output_shape(const Shape& in) const override { return in; }

  Tensor<T> forward(const Tensor<T>& x) override {
    input_ = x;
    Tensor<T> y(x.shape());
    const T* px = x.data();
    T* py = y.data();
    for (std::int64_t i = 0; i < x.numel(); ++i) py[i] = px[i] > T(0) ? px[i] : T(0);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    if (input_.empty()) throw std::logic_error("relu: backward called before forward");
    if (!(grad_out.shape() == input_.shape()))
      throw std::invalid_argument("relu: grad shape " + grad_out.shape().str() +
                                  " does not match input " + input_.shape().str());
    Tensor<T> gx(input_.shape());
    const T* px = input_.data();
    const T* pg = grad_out.data();
    T* pgx = gx.data();
    for (std::int64_t i = 0; i < gx.numel(); ++i) pgx[i] = px[i] > T(0) ? pg[i] : T(0);
    return gx;
  }

 private:
  Tensor<T> input_;
};

template <typename T>
struct LossResult {
  T loss;
  Tensor<T> grad;  // d(mean loss)/d(logits)
};

// Max-shifted softmax cross-entropy, averaged over the batch.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.shape().rank() != 2)
    throw std::invalid_argument("softmax_cross_entropy: expected (B, C) logits, got " +
                                logits.shape().str());
  const std::int64_t b = logits.shape()[0], c = logits.shape()[1];
  if (static_cast<std::int64_t>(labels.size()) != b)
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                " labels for batch of " + std::to_string(b));

  LossResult<T> out{T(0), Tensor<T>(logits.shape())};
  const T* pl = logits.data();
  T* pg = out.grad.data();
  double loss_acc = 0.0;
  for (std::int64_t r = 0; r < b; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= c)
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                  " out of range for " + std::to_string(c) +
                                  " classes at row " + std::to_string(r));
    const T* row = pl + r * c;
    T m = row[0];
    for (std::int64_t i = 1; i < c; ++i) m = std::max(m, row[i]);
    T z = 0;
    for (std::int64_t i = 0; i < c; ++i) z += std::exp(row[i] - m);
    const T logz = std::log(z);
    loss_acc += static_cast<double>(logz - (row[y] - m));
    for (std::int64_t i = 0; i < c; ++i) {
      const T p = std::exp(row[i] - m) / z;
      pg[r * c + i] = (p - (i == y ? T(1) : T(0))) / static_cast<T>(b);
    }
  }
  out.loss = static_cast<T>(loss_acc / static_cast<double>(b));
  return out;
}

}  // namespace alphapool
