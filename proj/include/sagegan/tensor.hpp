#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "sagegan/error.hpp"

namespace sagegan {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

/// Dense row-major tensor. Rank 0 is a scalar with one element.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    for (int d : shape_)
      if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_str(shape_));
    data_.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
      throw ShapeError("data size " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor scalar(T v) {
    Tensor t;
    t.shape_ = {};
    t.data_ = {v};
    return t;
  }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // (h, w) indexing for rank-2, (c, h, w) for rank-3.
  T& at(int h, int w) { return data_[static_cast<size_t>(h) * shape_[1] + w]; }
  const T& at(int h, int w) const { return data_[static_cast<size_t>(h) * shape_[1] + w]; }
  T& at(int c, int h, int w) {
    return data_[(static_cast<size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }
  const T& at(int c, int h, int w) const {
    return data_[(static_cast<size_t>(c) * shape_[1] + h) * shape_[2] + w];
  }

  /// Scalar value of a single-element tensor.
  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  T min() const { return *std::min_element(data_.begin(), data_.end()); }
  T max() const { return *std::max_element(data_.begin(), data_.end()); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out = Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    return out;
  }

private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
}

}  // namespace sagegan
