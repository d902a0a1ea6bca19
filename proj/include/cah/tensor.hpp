#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cah {

/// Raised when operand extents disagree with what an operation requires.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major n-D array with an optional gradient buffer.
///
/// A BasicTensor is a shared handle: copies alias the same storage, which is
/// how parameters persist across tapes and how a tape refers to its nodes.
/// Use clone() for an independent copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T(0)) : impl_(std::make_shared<Impl>()) {
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  BasicTensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
  }

  static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data() { return impl_->data; }
  const std::vector<T>& values() const { return impl_->data; }

  T item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }
  T operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  BasicTensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  /// Gradient buffer, zero-allocated on first access. Gradients belong to the
  /// shared storage, so const handles may accumulate into them.
  std::span<T> mutable_grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
  }
  void zero_grad() const {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  }
  void clear_grad() const { impl_->grad.clear(); }

  /// Same values in fresh storage, detached from any tape.
  BasicTensor clone() const {
    BasicTensor t(impl_->shape, impl_->data);
    return t;
  }

  /// Reinterprets the extents; element count must match. Shares no storage.
  BasicTensor reshaped_copy(Shape shape) const { return BasicTensor(std::move(shape), impl_->data); }

  bool same_as(const BasicTensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

/// Converts between precisions (gradients are not carried over).
template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
  std::vector<To> v(t.data().begin(), t.data().end());
  return BasicTensor<To>(t.shape(), std::move(v));
}

}  // namespace cah
