#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace alphapool {

// Dense row-major shape. Extents are validated on construction; a tensor
// with zero elements is not representable on purpose.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims)
      : dims_(dims) { validate(); }
  explicit Shape(std::vector<std::int64_t> dims)
      : dims_(std::move(dims)) { validate(); }

  std::size_t rank() const { return dims_.size(); }
  std::int64_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::int64_t>& dims() const { return dims_; }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : dims_) n *= d;
    return n;
  }

  bool operator==(const Shape& other) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) os << ", ";
      os << dims_[i];
    }
    os << ")";
    return os.str();
  }

  std::int64_t flatten(const std::vector<std::int64_t>& idx) const {
    if (idx.size() != dims_.size())
      throw std::invalid_argument("flatten: index rank " + std::to_string(idx.size()) +
                                  " does not match shape " + str());
    std::int64_t flat = 0;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= dims_[i])
        throw std::out_of_range("flatten: index " + std::to_string(idx[i]) +
                                " out of range for axis " + std::to_string(i) +
                                " of shape " + str());
      flat = flat * dims_[i] + idx[i];
    }
    return flat;
  }

  std::vector<std::int64_t> unflatten(std::int64_t flat) const {
    if (flat < 0 || flat >= numel())
      throw std::out_of_range("unflatten: flat index " + std::to_string(flat) +
                              " out of range for shape " + str());
    std::vector<std::int64_t> idx(dims_.size());
    for (std::size_t i = dims_.size(); i-- > 0;) {
      idx[i] = flat % dims_[i];
      flat /= dims_[i];
    }
    return idx;
  }

 private:
  void validate() const {
    if (dims_.empty())
      throw std::invalid_argument("shape must have at least one axis");
    for (auto d : dims_)
      if (d < 1)
        throw std::invalid_argument("shape extent must be positive, got " + str());
  }

  std::vector<std::int64_t> dims_;
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill_value = T(0))
      : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_.numel()), fill_value) {}

  const Shape& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(std::initializer_list<std::int64_t> idx) {
    return data_[static_cast<std::size_t>(shape_.flatten(std::vector<std::int64_t>(idx)))];
  }
  const T& at(std::initializer_list<std::int64_t> idx) const {
    return data_[static_cast<std::size_t>(shape_.flatten(std::vector<std::int64_t>(idx)))];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor<T> reshaped(Shape new_shape) const {
    if (new_shape.numel() != numel())
      throw std::invalid_argument("reshape from " + shape_.str() + " to " +
                                  new_shape.str() + " changes element count");
    Tensor<T> out = *this;
    out.shape_ = std::move(new_shape);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T, typename F>
Tensor<T> map2(const Tensor<T>& a, const Tensor<T>& b, F f) {
  if (!(a.shape() == b.shape()))
    throw std::invalid_argument("map2: shape mismatch " + a.shape().str() + " vs " +
                                b.shape().str());
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = f(pa[i], pb[i]);
  return out;
}

namespace detail {
// Row-major C = alpha * op(A) * op(B) + beta * C, backed by CBLAS.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          float alpha, const float* a, std::int64_t lda, const float* b, std::int64_t ldb,
          float beta, float* c, std::int64_t ldc);
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          double alpha, const double* a, std::int64_t lda, const double* b, std::int64_t ldb,
          double beta, double* c, std::int64_t ldc);
}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape().rank() != 2 || b.shape().rank() != 2)
    throw std::invalid_argument("matmul: expected rank-2 tensors, got " + a.shape().str() +
                                " and " + b.shape().str());
  if (a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: inner dimensions disagree, " + a.shape().str() +
                                " vs " + b.shape().str());
  const std::int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> c(Shape{m, n});
  detail::gemm(false, false, m, n, k, T(1), a.data(), k, b.data(), n, T(0), c.data(), n);
  return c;
}

template <typename T>
void assert_all_finite(const Tensor<T>& t, const std::string& context) {
  const T* p = t.data();
  for (std::int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(static_cast<double>(p[i])))
      throw std::runtime_error(context + ": non-finite value at flat index " +
                               std::to_string(i));
}

}  // namespace alphapool
