#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "irf/tensor/ops.hpp"

namespace irf {

namespace detail {

template <class T>
Var<T> ones_like(const Var<T>& x) {
  return Var<T>(Tensor<T>(x.shape(), T(1)));
}

template <class T>
Shape shape_from_ints(const std::vector<int>& ints, std::size_t at) {
  const int rank = ints[at];
  return Shape(ints.begin() + static_cast<std::ptrdiff_t>(at) + 1,
               ints.begin() + static_cast<std::ptrdiff_t>(at) + 1 + rank);
}

template <class T>
Var<T> match(const Var<T>& g, const Var<T>& like) {
  return reshape(g, like.shape());
}

// Gradient contributions of one node. `need[i]` marks inputs whose gradient
// is wanted; every rule is written with recorded ops so that it is itself
// differentiable when the tape is recording.
template <class T>
std::vector<Var<T>> backprop(const Node<T>& n, const Var<T>& out,
                             const Var<T>& g, const std::vector<char>& need) {
  const auto& in = n.inputs;
  std::vector<Var<T>> d(in.size());
  auto want = [&](std::size_t i) { return need[i] != 0; };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add:
      if (want(0)) d[0] = g;
      if (want(1)) d[1] = g;
      break;
    case Op::Sub:
      if (want(0)) d[0] = g;
      if (want(1)) d[1] = scale(g, T(-1));
      break;
    case Op::Mul:
      if (want(0)) d[0] = mul(g, in[1]);
      if (want(1)) d[1] = mul(g, in[0]);
      break;
    case Op::Scale:
      d[0] = scale(g, n.scalar);
      break;
    case Op::MulScalar:
      if (want(0)) d[0] = mul_scalar(g, in[1]);
      if (want(1)) d[1] = reshape(sum(mul(g, in[0])), in[1].shape());
      break;
    case Op::Relu: {
      Tensor<T> mask = map(in[0].value(),
                           [](T v) { return v > T(0) ? T(1) : T(0); });
      d[0] = mul(g, Var<T>(std::move(mask)));
      break;
    }
    case Op::Sigmoid:
      d[0] = mul(g, sub(out, mul(out, out)));
      break;
    case Op::Tanh:
      d[0] = mul(g, sub(ones_like(out), mul(out, out)));
      break;
    case Op::Atan:
      d[0] = mul(g, reciprocal(add(ones_like(in[0]), mul(in[0], in[0]))));
      break;
    case Op::Exp:
      d[0] = mul(g, out);
      break;
    case Op::Reciprocal:
      d[0] = mul(g, scale(mul(out, out), T(-1)));
      break;
    case Op::LogSoftmax:
      d[0] = sub(g, mul_scalar(exp(out), sum(g)));
      break;
    case Op::Sum:
      d[0] = mul_scalar(ones_like(in[0]), g);
      break;
    case Op::Slice:
      d[0] = match(embed(g, n.ints[0], static_cast<int>(in[0].size())), in[0]);
      break;
    case Op::Embed:
      d[0] = match(slice(g, n.ints[0], static_cast<int>(in[0].size())), in[0]);
      break;
    case Op::IndexSelect:
      d[0] = scatter(g, n.ints, in[0].shape());
      break;
    case Op::Scatter: {
      const std::size_t k = in[0].size();
      std::vector<int> idx(n.ints.begin(),
                           n.ints.begin() + static_cast<std::ptrdiff_t>(k));
      d[0] = match(index_select(g, idx), in[0]);
      break;
    }
    case Op::Concat: {
      int off = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        const int len = static_cast<int>(in[i].size());
        if (want(i)) d[i] = match(slice(g, off, len), in[i]);
        off += len;
      }
      break;
    }
    case Op::Reshape:
      d[0] = reshape(g, in[0].shape());
      break;
    case Op::MatMul: {
      const bool ta = n.ints[0] != 0, tb = n.ints[1] != 0;
      const auto& a = in[0];
      const auto& b = in[1];
      if (want(0))
        d[0] = match(ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb), a);
      if (want(1))
        d[1] = match(tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false), b);
      break;
    }
    case Op::Conv2d:
      if (want(0)) d[0] = conv2d_input_grad(g, in[1]);
      if (want(1)) d[1] = conv2d_kernel_grad(in[0], g);
      break;
    case Op::Conv2dInputGrad:
      if (want(0)) d[0] = conv2d(g, in[1]);
      if (want(1)) d[1] = conv2d_kernel_grad(g, in[0]);
      break;
    case Op::Conv2dKernelGrad:
      if (want(0)) d[0] = conv2d_input_grad(in[1], g);
      if (want(1)) d[1] = conv2d(in[0], g);
      break;
    case Op::BroadcastChannels:
      d[0] = channel_sum(g);
      break;
    case Op::ChannelSum:
      d[0] = broadcast_channels(g, in[0].shape()[1], in[0].shape()[2]);
      break;
  }
  return d;
}

}  // namespace detail

/// Gradients of the single-element `y` with respect to each Var in `wrt`.
///
/// With `create_graph` the returned gradients are recorded on the tape and
/// can be differentiated again. Inputs with no path to `y` get zeros.
template <class T>
std::vector<Var<T>> grad(const Var<T>& y, std::span<const Var<T>> wrt,
                         bool create_graph = false) {
  if (!y.defined() || !y.on_tape())
    throw ContractViolation("grad: output is not recorded on a tape");
  if (y.size() != 1)
    throw ContractViolation("grad: output must have one element, got " +
                            y.shape().str());
  Tape<T>& tape = *y.tape();
  tape.check(y);
  const int root = y.id();

  int lo = root + 1;
  std::vector<char> relevant(static_cast<std::size_t>(root) + 1, 0);
  for (const auto& w : wrt) {
    if (!w.defined() || w.tape() != &tape)
      throw ContractViolation("grad: parameter is not on the output's tape");
    tape.check(w);
    if (w.id() <= root) {
      relevant[static_cast<std::size_t>(w.id())] = 1;
      lo = std::min(lo, w.id());
    }
  }
  for (int i = lo; i <= root; ++i) {
    if (relevant[static_cast<std::size_t>(i)]) continue;
    for (const auto& v : tape.node(i).inputs)
      if (v.on_tape() && v.id() >= lo &&
          relevant[static_cast<std::size_t>(v.id())]) {
        relevant[static_cast<std::size_t>(i)] = 1;
        break;
      }
  }

  std::vector<Var<T>> adj(static_cast<std::size_t>(root) + 1);
  if (lo <= root && relevant[static_cast<std::size_t>(root)]) {
    RecordingGuard<T> guard(tape, create_graph);
    adj[static_cast<std::size_t>(root)] =
        Var<T>(Tensor<T>(y.shape(), T(1)));
    for (int i = root; i >= lo; --i) {
      const auto ui = static_cast<std::size_t>(i);
      if (!relevant[ui] || !adj[ui].defined()) continue;
      const Node<T>& node = tape.node(i);
      if (node.op == Op::Leaf) continue;
      std::vector<char> need(node.inputs.size(), 0);
      bool any = false;
      for (std::size_t j = 0; j < node.inputs.size(); ++j) {
        const auto& v = node.inputs[j];
        need[j] = v.on_tape() && v.id() >= lo &&
                  relevant[static_cast<std::size_t>(v.id())];
        any = any || need[j];
      }
      if (!any) continue;
      auto contrib = detail::backprop(node, tape.var(i), adj[ui], need);
      for (std::size_t j = 0; j < node.inputs.size(); ++j) {
        if (!need[j] || !contrib[j].defined()) continue;
        auto& slot = adj[static_cast<std::size_t>(node.inputs[j].id())];
        slot = slot.defined() ? add(slot, contrib[j]) : contrib[j];
      }
    }
  }

  std::vector<Var<T>> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    const Var<T>* a =
        w.id() <= root ? &adj[static_cast<std::size_t>(w.id())] : nullptr;
    if (a && a->defined())
      out.push_back(*a);
    else
      out.push_back(Var<T>(Tensor<T>(w.shape())));
  }
  return out;
}

template <class T>
std::vector<Var<T>> grad(const Var<T>& y, const std::vector<Var<T>>& wrt,
                         bool create_graph = false) {
  return grad(y, std::span<const Var<T>>(wrt), create_graph);
}

}  // namespace irf
