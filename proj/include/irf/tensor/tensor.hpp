#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "irf/core/error.hpp"

namespace irf {

/// Row-major shape of rank 0..4.
class Shape {
 public:
  static constexpr int kMaxRank = 4;

  Shape() = default;
  Shape(std::initializer_list<int> dims) {
    expects(dims.size() <= kMaxRank, "Shape: rank above 4");
    for (int d : dims) push(d);
  }
  template <class It>
  Shape(It first, It last) {
    for (; first != last; ++first) push(static_cast<int>(*first));
  }

  int rank() const { return rank_; }
  int operator[](int i) const { return dims_[static_cast<std::size_t>(i)]; }
  std::size_t numel() const {
    std::size_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= static_cast<std::size_t>(dims_[i]);
    return n;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (dims_[i] != o.dims_[i]) return false;
    return true;
  }

  std::string str() const {
    std::ostringstream os;
    os << '(';
    for (int i = 0; i < rank_; ++i) os << (i ? "," : "") << dims_[i];
    os << ')';
    return os.str();
  }

 private:
  void push(int d) {
    expects(rank_ < kMaxRank, "Shape: rank above 4");
    expects(d >= 0, "Shape: negative dimension");
    dims_[static_cast<std::size_t>(rank_++)] = d;
  }

  std::array<int, kMaxRank> dims_{};
  int rank_ = 0;
};

/// Dense row-major array of reals.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<T> data)
      : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel())
      throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }
  static Tensor vector(std::initializer_list<T> v) {
    return Tensor(Shape{static_cast<int>(v.size())}, std::vector<T>(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T item() const {
    expects(data_.size() == 1, "Tensor::item on non-scalar " + shape_.str());
    return data_[0];
  }

  Tensor reshaped(Shape s) const {
    if (s.numel() != data_.size())
      throw ShapeError("reshape " + shape_.str() + " -> " + s.str());
    return Tensor(s, data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

}  // namespace irf
