#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ema/error.hpp"

namespace ema {

using Index = std::ptrdiff_t;

/// Ordered list of extents, every one >= 1. Rank 0 is a scalar.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<Index> dims) : dims_(std::move(dims)) { validate(); }

  Index rank() const { return static_cast<Index>(dims_.size()); }
  Index operator[](Index axis) const { return dims_[static_cast<std::size_t>(axis)]; }
  const std::vector<Index>& dims() const { return dims_; }

  Index numel() const {
    Index n = 1;
    for (Index d : dims_) n *= d;
    return n;
  }

  /// Row-major strides in elements.
  std::vector<Index> strides() const {
    std::vector<Index> s(dims_.size(), 1);
    for (Index i = rank() - 2; i >= 0; --i) {
      s[static_cast<std::size_t>(i)] =
          s[static_cast<std::size_t>(i + 1)] * dims_[static_cast<std::size_t>(i + 1)];
    }
    return s;
  }

  Shape with(Index axis, Index extent) const {
    auto d = dims_;
    d[static_cast<std::size_t>(axis)] = extent;
    return Shape(std::move(d));
  }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + ")";
  }

 private:
  void validate() const {
    Index n = 1;
    for (Index d : dims_) {
      if (d < 1) throw ShapeError("extent must be >= 1, got " + std::to_string(d));
      if (n > std::numeric_limits<Index>::max() / d) throw ShapeError("element count overflows");
      n *= d;
    }
  }

  std::vector<Index> dims_;
};

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << s.str(); }

/// Dense row-major array. Values are held in an Eigen column vector so
/// kernels can Map sub-blocks as matrices without copying.
template <class Scalar>
class BasicTensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  BasicTensor() : data_(Storage::Zero(1)) {}
  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(Storage::Zero(shape_.numel())) {}
  BasicTensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
    }
  }
  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), std::span<const Scalar>(values.begin(), values.size())) {}
  BasicTensor(Shape shape, std::span<const Scalar> values) : shape_(std::move(shape)) {
    if (static_cast<Index>(values.size()) != shape_.numel()) {
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                       shape_.str());
    }
    data_ = Eigen::Map<const Storage>(values.data(), static_cast<Index>(values.size()));
  }

  static BasicTensor zeros(Shape s) { return BasicTensor(std::move(s)); }
  static BasicTensor constant(Shape s, Scalar v) {
    const Index n = s.numel();
    return BasicTensor(std::move(s), Storage::Constant(n, v));
  }
  static BasicTensor ones(Shape s) { return constant(std::move(s), Scalar(1)); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return shape_.rank(); }
  Index size() const { return data_.size(); }

  const Storage& array() const { return data_; }
  Storage& array() { return data_; }
  const Scalar* data() const { return data_.data(); }
  Scalar* data() { return data_.data(); }
  std::span<const Scalar> values() const { return {data_.data(), static_cast<std::size_t>(data_.size())}; }

  Scalar operator[](Index i) const { return data_[i]; }
  Scalar& operator[](Index i) { return data_[i]; }

  template <class... I>
  Scalar operator()(I... idx) const {
    return data_[offset({static_cast<Index>(idx)...})];
  }
  template <class... I>
  Scalar& operator()(I... idx) {
    return data_[offset({static_cast<Index>(idx)...})];
  }

  Index offset(std::initializer_list<Index> idx) const {
    Index off = 0;
    Index axis = 0;
    for (Index i : idx) {
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  bool all_finite() const { return data_.allFinite(); }

  /// Exact equality of shape and every value.
  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  Shape shape_;
  Storage data_;
};

using Tensor = BasicTensor<double>;

template <class Scalar>
Scalar max_abs_diff(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
  return (a.array() - b.array()).abs().maxCoeff();
}

}  // namespace ema
