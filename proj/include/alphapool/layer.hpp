#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "alphapool/tensor.hpp"

namespace alphapool {

// Non-owning view of one learnable parameter block.  The optimizer walks
// these; layers keep ownership of the storage.
template <typename T>
struct ParamRef {
  std::string name;
  T* value = nullptr;
  T* grad = nullptr;
  std::int64_t size = 0;
  bool apply_weight_decay = true;
  bool clamped = false;
  T clamp_lo = 0;
  T clamp_hi = 0;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual const char* kind() const = 0;
  const std::string& name() const { return name_; }
  void set_name(std::string n) { name_ = std::move(n); }

  // forward caches whatever backward needs; backward consumes the gradient
  // w.r.t. the forward output and returns the gradient w.r.t. its input,
  // writing parameter gradients as a side effect.
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual Shape output_shape(const Shape& in) const = 0;
  virtual std::vector<ParamRef<T>> params() { return {}; }

 protected:
  std::string name_;
};

}  // namespace alphapool
