#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "irf/tensor/tape.hpp"

namespace irf {

/// Ordered collection of uniquely named tensors.
template <class T>
class ParamSet {
 public:
  void add(std::string name, Tensor<T> value) {
    if (find(name) >= 0)
      throw ContractViolation("ParamSet: duplicate name '" + name + "'");
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
  }

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_[i]; }

  const Tensor<T>& operator[](std::size_t i) const { return values_[i]; }
  const Tensor<T>& operator[](std::string_view name) const {
    return values_[index_of(name)];
  }

  /// Replaces a tensor's values; the shape must not change.
  void set(std::size_t i, Tensor<T> value) {
    if (!(value.shape() == values_[i].shape()))
      throw ShapeError("ParamSet: '" + names_[i] + "' has shape " +
                       values_[i].shape().str() + ", got " +
                       value.shape().str());
    values_[i] = std::move(value);
  }
  void set(std::string_view name, Tensor<T> value) {
    set(index_of(name), std::move(value));
  }

  /// Mutable access to values; shapes stay fixed.
  std::span<T> data(std::size_t i) { return values_[i].data(); }

  int find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return static_cast<int>(i);
    return -1;
  }
  std::size_t index_of(std::string_view name) const {
    const int i = find(name);
    if (i < 0)
      throw ContractViolation("ParamSet: no parameter '" + std::string(name) +
                              "'");
    return static_cast<std::size_t>(i);
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& v : values_)
      if (!v.all_finite()) return false;
    return true;
  }

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const {
    ParamSet out;
    for (std::size_t i = 0; i < size(); ++i)
      out.add(names_[i], Tensor<T>(values_[i].shape()));
    return out;
  }

  /// FNV-1a over names and raw value bytes.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const void* p, std::size_t n) {
      const auto* b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 1099511628211ULL;
      }
    };
    for (std::size_t i = 0; i < size(); ++i) {
      feed(names_[i].data(), names_[i].size());
      feed(values_[i].data().data(), values_[i].size() * sizeof(T));
    }
    return h;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    return a.names_ == b.names_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
};

/// Records every tensor of `params` as a leaf on `tape`.
template <class T>
std::vector<Var<T>> bind(Tape<T>& tape, const ParamSet<T>& params) {
  std::vector<Var<T>> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    out.push_back(tape.leaf(params[i]));
  return out;
}

/// Copies the values of `vars` into a ParamSet named like `like`.
template <class T>
ParamSet<T> values_of(const std::vector<Var<T>>& vars, const ParamSet<T>& like) {
  ParamSet<T> out;
  for (std::size_t i = 0; i < vars.size(); ++i)
    out.add(like.name(i), vars[i].value());
  return out;
}

/// Constant (untaped) Vars for a ParamSet.
template <class T>
std::vector<Var<T>> constants_of(const ParamSet<T>& params) {
  std::vector<Var<T>> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    out.push_back(Var<T>(params[i]));
  return out;
}

}  // namespace irf
