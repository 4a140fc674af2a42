#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "alphapool/tensor.hpp"

namespace alphapool {

struct PoolGeometry {
  int window_h = 2;
  int window_w = 2;
  int stride_h = 2;
  int stride_w = 2;

  void validate() const {
    if (window_h < 1 || window_w < 1 || stride_h < 1 || stride_w < 1)
      throw std::invalid_argument("pool geometry must be positive: window " +
                                  std::to_string(window_h) + "x" + std::to_string(window_w) +
                                  " stride " + std::to_string(stride_h) + "x" +
                                  std::to_string(stride_w));
  }

  int window_size() const { return window_h * window_w; }
};

// Output spatial extents for a pooled (N, C, H, W) input.  The input must
// tile exactly under the stride; silent truncation hides config mistakes.
inline std::pair<std::int64_t, std::int64_t> pooled_dims(const Shape& in,
                                                         const PoolGeometry& g,
                                                         const std::string& who) {
  g.validate();
  if (in.rank() != 4)
    throw std::invalid_argument(who + ": expected (N, C, H, W) input, got " + in.str());
  const std::int64_t h = in[2], w = in[3];
  if (h < g.window_h || w < g.window_w ||
      (h - g.window_h) % g.stride_h != 0 || (w - g.window_w) % g.stride_w != 0)
    throw std::invalid_argument(who + ": input " + in.str() + " does not tile under window " +
                                std::to_string(g.window_h) + "x" + std::to_string(g.window_w) +
                                " stride " + std::to_string(g.stride_h) + "x" +
                                std::to_string(g.stride_w));
  return {(h - g.window_h) / g.stride_h + 1, (w - g.window_w) / g.stride_w + 1};
}

namespace detail {

// Shared by avg-pool and the arithmetic-mean branch of alpha-pool so the two
// produce bitwise-identical results: same accumulation order, same division.
template <typename T>
inline T window_mean(const T* top_left, int kh, int kw, std::int64_t row_stride) {
  T sum = 0;
  for (int i = 0; i < kh; ++i) {
    const T* row = top_left + i * row_stride;
    for (int j = 0; j < kw; ++j) sum += row[j];
  }
  return sum / static_cast<T>(kh * kw);
}

template <typename T>
inline void window_mean_backward(T grad_out, T* top_left, int kh, int kw,
                                 std::int64_t row_stride) {
  const T share = grad_out / static_cast<T>(kh * kw);
  for (int i = 0; i < kh; ++i) {
    T* row = top_left + i * row_stride;
    for (int j = 0; j < kw; ++j) row[j] += share;
  }
}

}  // namespace detail
}  // namespace alphapool
