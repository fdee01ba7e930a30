#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "irf/core/error.hpp"
#include "irf/tensor/tensor.hpp"

namespace irf {

template <class T>
class Tape;

/// Handle to a tensor value, optionally recorded on a tape.
///
/// A Var without a tape is a constant: gradients never flow into it. A Var
/// on a tape refers to node `id()`; it is invalidated when the tape is
/// cleared.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value)
      : value_(std::make_shared<const Tensor<T>>(std::move(value))) {}

  bool defined() const { return value_ != nullptr; }
  const Tensor<T>& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  std::size_t size() const { return value_->size(); }
  T item() const { return value_->item(); }

  bool on_tape() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }
  std::uint64_t generation() const { return generation_; }

 private:
  friend class Tape<T>;
  Var(std::shared_ptr<const Tensor<T>> v, Tape<T>* tape, int id,
      std::uint64_t gen)
      : value_(std::move(v)), tape_(tape), id_(id), generation_(gen) {}

  std::shared_ptr<const Tensor<T>> value_;
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
  std::uint64_t generation_ = 0;
};

/// Returns a constant copy of `v` that no gradient can flow through.
template <class T>
Var<T> detach(const Var<T>& v) {
  return Var<T>(v.value());
}

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  MulScalar,
  Relu,
  Sigmoid,
  Tanh,
  Atan,
  Exp,
  Reciprocal,
  LogSoftmax,
  Sum,
  Slice,
  Embed,
  IndexSelect,
  Scatter,
  Concat,
  Reshape,
  MatMul,
  Conv2d,
  Conv2dInputGrad,
  Conv2dKernelGrad,
  BroadcastChannels,
  ChannelSum,
};

template <class T>
struct Node {
  Op op = Op::Leaf;
  std::vector<Var<T>> inputs;
  std::shared_ptr<const Tensor<T>> value;
  std::vector<int> ints;  // op-specific integer attributes
  T scalar = T(0);        // op-specific real attribute
};

/// Append-only record of operations for reverse-mode differentiation.
///
/// Gradients computed with `create_graph` are themselves recorded, so the
/// tape supports gradients of gradients. Node inputs always reference
/// earlier nodes.
template <class T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records a differentiable leaf holding `value`.
  Var<T> leaf(Tensor<T> value) {
    Node<T> n;
    n.op = Op::Leaf;
    n.value = std::make_shared<const Tensor<T>>(std::move(value));
    return push(std::move(n));
  }

  Var<T> record(Op op, std::vector<Var<T>> inputs, Tensor<T> value,
                std::vector<int> ints = {}, T scalar = T(0)) {
    Node<T> n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.value = std::make_shared<const Tensor<T>>(std::move(value));
    n.ints = std::move(ints);
    n.scalar = scalar;
    return push(std::move(n));
  }

  const Node<T>& node(int id) const {
    return nodes_[static_cast<std::size_t>(id)];
  }
  Var<T> var(int id) {
    return Var<T>(nodes_[static_cast<std::size_t>(id)].value, this, id,
                  generation_);
  }

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }
  std::uint64_t generation() const { return generation_; }

  /// Drops every node. Vars that referenced this tape become invalid.
  void clear() {
    nodes_.clear();
    ++generation_;
  }

  void check(const Var<T>& v) const {
    if (v.tape() == this && v.generation() != generation_)
      throw ContractViolation("Var refers to a cleared tape");
  }

 private:
  Var<T> push(Node<T> n) {
    auto value = n.value;
    nodes_.push_back(std::move(n));
    return Var<T>(std::move(value), this,
                  static_cast<int>(nodes_.size() - 1), generation_);
  }

  std::deque<Node<T>> nodes_;
  std::uint64_t generation_ = 1;
  bool recording_ = true;
};

/// Scoped switch of a tape's recording flag.
template <class T>
class RecordingGuard {
 public:
  RecordingGuard(Tape<T>& tape, bool on) : tape_(tape), prev_(tape.recording()) {
    tape_.set_recording(on);
  }
  ~RecordingGuard() { tape_.set_recording(prev_); }
  RecordingGuard(const RecordingGuard&) = delete;
  RecordingGuard& operator=(const RecordingGuard&) = delete;

 private:
  Tape<T>& tape_;
  bool prev_;
};

}  // namespace irf
