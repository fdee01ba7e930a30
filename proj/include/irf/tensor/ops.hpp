#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "irf/tensor/tape.hpp"

namespace irf {

namespace detail {

template <class T>
Var<T> finish(Op op, std::vector<Var<T>> inputs, Tensor<T> value,
              std::vector<int> ints = {}, T scalar = T(0)) {
  Tape<T>* tape = nullptr;
  for (const auto& v : inputs) {
    if (!v.on_tape()) continue;
    v.tape()->check(v);
    if (tape && tape != v.tape())
      throw ContractViolation("operands live on different tapes");
    tape = v.tape();
  }
  if (!tape || !tape->recording()) return Var<T>(std::move(value));
  return tape->record(op, std::move(inputs), std::move(value), std::move(ints),
                      scalar);
}

inline void same_shape(const char* op, const Shape& a, const Shape& b) {
  if (!(a == b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " +
                     b.str());
}

template <class T, class F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <class T, class F>
Tensor<T> zip(const char* name, const Tensor<T>& a, const Tensor<T>& b, F f) {
  same_shape(name, a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

// Rank-1 operands act as column vectors.
inline std::pair<int, int> as_matrix(const Shape& s) {
  if (s.rank() == 1) return {s[0], 1};
  if (s.rank() == 2) return {s[0], s[1]};
  throw ShapeError("matmul: operand must be rank 1 or 2, got " + s.str());
}

// Row-major transpose of an r x c block.
template <class T>
std::vector<T> transposed(const T* src, int r, int c) {
  std::vector<T> out(static_cast<std::size_t>(r) * static_cast<std::size_t>(c));
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(j) * r + i] = src[static_cast<std::size_t>(i) * c + j];
  return out;
}

// Dot product with eight independent partial sums so the loop vectorizes
// without reassociation flags; the summation order is fixed.
template <class T>
T dot(const T* a, const T* b, int n) {
  T acc[8] = {};
  int p = 0;
  for (; p + 8 <= n; p += 8)
    for (int j = 0; j < 8; ++j) acc[j] += a[p + j] * b[p + j];
  T tail = 0;
  for (; p < n; ++p) tail += a[p] * b[p];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) +
         ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <class T>
Tensor<T> matmul_kernel(const Tensor<T>& a, const Tensor<T>& b, bool ta,
                        bool tb) {
  const auto [ar, ac] = as_matrix(a.shape());
  const auto [br, bc] = as_matrix(b.shape());
  const int m = ta ? ac : ar;
  const int k = ta ? ar : ac;
  const int kb = tb ? bc : br;
  const int n = tb ? br : bc;
  if (k != kb)
    throw ShapeError("matmul: inner dimensions differ " + a.shape().str() +
                     (ta ? "^T" : "") + " x " + b.shape().str() +
                     (tb ? "^T" : ""));
  const bool vec_out = n == 1 && b.shape().rank() == 1 && !tb;
  Tensor<T> out(vec_out ? Shape{m} : Shape{m, n});
  const T* A = a.data().data();
  const T* B = b.data().data();
  T* C = out.data().data();
  const auto row = [](const T* base, int i, int width) {
    return base + static_cast<std::size_t>(i) * static_cast<std::size_t>(width);
  };

  if (n == 1) {
    // Matrix-vector; B is a contiguous k-vector whichever way it is flagged.
    if (!ta) {
      for (int i = 0; i < m; ++i) C[i] = dot(row(A, i, ac), B, k);
    } else {
      for (int p = 0; p < k; ++p) {
        const T bp = B[p];
        const T* arow = row(A, p, ac);
        for (int i = 0; i < m; ++i) C[i] += arow[i] * bp;
      }
    }
    return out;
  }
  if (!ta && tb && k > 8) {
    // Rows of A against rows of B.
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) C[static_cast<std::size_t>(i) * n + j] = dot(row(A, i, ac), row(B, j, bc), k);
    return out;
  }
  // General case as C[i,:] += A[i,p] * B[p,:] over contiguous rows.
  std::vector<T> bt;
  const T* Bn = B;
  if (tb) {
    bt = transposed(B, br, bc);
    Bn = bt.data();
  }
  if (!ta) {
    for (int i = 0; i < m; ++i) {
      T* crow = C + static_cast<std::size_t>(i) * n;
      const T* arow = row(A, i, ac);
      for (int p = 0; p < k; ++p) {
        const T av = arow[p];
        const T* brow = row(Bn, p, n);
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else {
    for (int p = 0; p < k; ++p) {
      const T* arow = row(A, p, ac);
      const T* brow = row(Bn, p, n);
      for (int i = 0; i < m; ++i) {
        const T av = arow[i];
        T* crow = C + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  return out;
}

inline void require_rank(const char* op, const Shape& s, int r) {
  if (s.rank() != r)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) +
                     ", got " + s.str());
}

// y[f,i,j] = sum_{c,u,v} x[c,i+u,j+v] k[f,c,u,v]
template <class T>
Tensor<T> conv2d_kernel(const Tensor<T>& x, const Tensor<T>& k) {
  require_rank("conv2d input", x.shape(), 3);
  require_rank("conv2d kernel", k.shape(), 4);
  const int C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const int F = k.shape()[0], kh = k.shape()[2], kw = k.shape()[3];
  if (k.shape()[1] != C || kh > H || kw > W)
    throw ShapeError("conv2d: input " + x.shape().str() + " kernel " +
                     k.shape().str());
  const int Ho = H - kh + 1, Wo = W - kw + 1;
  Tensor<T> y(Shape{F, Ho, Wo});
  const T* X = x.data().data();
  const T* K = k.data().data();
  T* Y = y.data().data();
  for (int f = 0; f < F; ++f) {
    T* yf = Y + static_cast<std::size_t>(f) * Ho * Wo;
    for (int c = 0; c < C; ++c) {
      const T* xc = X + static_cast<std::size_t>(c) * H * W;
      const T* kfc = K + (static_cast<std::size_t>(f) * C + c) * kh * kw;
      for (int u = 0; u < kh; ++u)
        for (int v = 0; v < kw; ++v) {
          const T kv = kfc[u * kw + v];
          if (kv == T(0)) continue;
          for (int i = 0; i < Ho; ++i) {
            const T* xrow = xc + static_cast<std::size_t>(i + u) * W + v;
            T* yrow = yf + static_cast<std::size_t>(i) * Wo;
            for (int j = 0; j < Wo; ++j) yrow[j] += kv * xrow[j];
          }
        }
    }
  }
  return y;
}

// dx[c,i,j] = sum_{f,u,v} g[f,i-u,j-v] k[f,c,u,v]
template <class T>
Tensor<T> conv2d_input_grad_kernel(const Tensor<T>& g, const Tensor<T>& k) {
  require_rank("conv2d_input_grad g", g.shape(), 3);
  require_rank("conv2d_input_grad kernel", k.shape(), 4);
  const int F = g.shape()[0], Ho = g.shape()[1], Wo = g.shape()[2];
  if (k.shape()[0] != F)
    throw ShapeError("conv2d_input_grad: g " + g.shape().str() + " kernel " +
                     k.shape().str());
  const int C = k.shape()[1], kh = k.shape()[2], kw = k.shape()[3];
  const int H = Ho + kh - 1, W = Wo + kw - 1;
  Tensor<T> dx(Shape{C, H, W});
  const T* G = g.data().data();
  const T* K = k.data().data();
  T* D = dx.data().data();
  for (int f = 0; f < F; ++f) {
    const T* gf = G + static_cast<std::size_t>(f) * Ho * Wo;
    for (int c = 0; c < C; ++c) {
      T* dc = D + static_cast<std::size_t>(c) * H * W;
      const T* kfc = K + (static_cast<std::size_t>(f) * C + c) * kh * kw;
      for (int u = 0; u < kh; ++u)
        for (int v = 0; v < kw; ++v) {
          const T kv = kfc[u * kw + v];
          if (kv == T(0)) continue;
          for (int i = 0; i < Ho; ++i) {
            const T* grow = gf + static_cast<std::size_t>(i) * Wo;
            T* drow = dc + static_cast<std::size_t>(i + u) * W + v;
            for (int j = 0; j < Wo; ++j) drow[j] += kv * grow[j];
          }
        }
    }
  }
  return dx;
}

// dk[f,c,u,v] = sum_{i,j} x[c,i+u,j+v] g[f,i,j]
template <class T>
Tensor<T> conv2d_kernel_grad_kernel(const Tensor<T>& x, const Tensor<T>& g) {
  require_rank("conv2d_kernel_grad x", x.shape(), 3);
  require_rank("conv2d_kernel_grad g", g.shape(), 3);
  const int C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  const int F = g.shape()[0], Ho = g.shape()[1], Wo = g.shape()[2];
  const int kh = H - Ho + 1, kw = W - Wo + 1;
  if (kh < 1 || kw < 1)
    throw ShapeError("conv2d_kernel_grad: x " + x.shape().str() + " g " +
                     g.shape().str());
  Tensor<T> dk(Shape{F, C, kh, kw});
  const T* X = x.data().data();
  const T* G = g.data().data();
  T* D = dk.data().data();
  for (int c = 0; c < C; ++c) {
    const T* xc = X + static_cast<std::size_t>(c) * H * W;
    for (int u = 0; u < kh; ++u)
      for (int v = 0; v < kw; ++v)
        for (int i = 0; i < Ho; ++i) {
          const T* xrow = xc + static_cast<std::size_t>(i + u) * W + v;
          for (int j = 0; j < Wo; ++j) {
            const T xv = xrow[j];
            if (xv == T(0)) continue;
            for (int f = 0; f < F; ++f)
              D[((static_cast<std::size_t>(f) * C + c) * kh + u) * kw + v] +=
                  xv * G[(static_cast<std::size_t>(f) * Ho + i) * Wo + j];
          }
        }
  }
  return dk;
}

}  // namespace detail

/// Records a constant tensor as a non-differentiable Var.
template <class T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t));
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return detail::finish(Op::Add, {a, b},
                        detail::zip("add", a.value(), b.value(),
                                    [](T x, T y) { return x + y; }));
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return detail::finish(Op::Sub, {a, b},
                        detail::zip("sub", a.value(), b.value(),
                                    [](T x, T y) { return x - y; }));
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return detail::finish(Op::Mul, {a, b},
                        detail::zip("mul", a.value(), b.value(),
                                    [](T x, T y) { return x * y; }));
}

/// Multiplies by a fixed real constant.
template <class T>
Var<T> scale(const Var<T>& x, T c) {
  return detail::finish(
      Op::Scale, {x}, detail::map(x.value(), [c](T v) { return v * c; }), {}, c);
}

/// Multiplies every element of `x` by the single-element Var `s`.
template <class T>
Var<T> mul_scalar(const Var<T>& x, const Var<T>& s) {
  if (s.size() != 1)
    throw ShapeError("mul_scalar: scale must have one element, got " +
                     s.shape().str());
  const T c = s.value()[0];
  return detail::finish(Op::MulScalar, {x, s},
                        detail::map(x.value(), [c](T v) { return v * c; }));
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return detail::finish(
      Op::Relu, {x},
      detail::map(x.value(), [](T v) { return v > T(0) ? v : T(0); }));
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return detail::finish(Op::Sigmoid, {x}, detail::map(x.value(), [](T v) {
                          return v >= 0 ? T(1) / (T(1) + std::exp(-v))
                                        : std::exp(v) / (T(1) + std::exp(v));
                        }));
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  return detail::finish(Op::Tanh, {x}, detail::map(x.value(), [](T v) {
                          return std::tanh(v);
                        }));
}

template <class T>
Var<T> arctan(const Var<T>& x) {
  return detail::finish(Op::Atan, {x}, detail::map(x.value(), [](T v) {
                          return std::atan(v);
                        }));
}

template <class T>
Var<T> exp(const Var<T>& x) {
  return detail::finish(Op::Exp, {x}, detail::map(x.value(), [](T v) {
                          return std::exp(v);
                        }));
}

template <class T>
Var<T> reciprocal(const Var<T>& x) {
  return detail::finish(Op::Reciprocal, {x}, detail::map(x.value(), [](T v) {
                          return T(1) / v;
                        }));
}

/// Log-probabilities of a softmax over all elements, floored at -80.
template <class T>
Var<T> log_softmax(const Var<T>& x) {
  const auto& v = x.value();
  if (v.size() == 0) throw ShapeError("log_softmax: empty input");
  const T mx = *std::max_element(v.storage().begin(), v.storage().end());
  T acc = 0;
  for (T e : v.storage()) acc += std::exp(e - mx);
  const T lse = mx + std::log(acc);
  return detail::finish(Op::LogSoftmax, {x}, detail::map(v, [lse](T e) {
                          return std::max(e - lse, T(-80));
                        }));
}

template <class T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (T e : x.value().storage()) acc += e;
  return detail::finish(Op::Sum, {x}, Tensor<T>::scalar(acc));
}

template <class T>
Var<T> mean(const Var<T>& x) {
  if (x.size() == 0) throw ShapeError("mean: empty input");
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

/// Contiguous flat slice [offset, offset+len) as a rank-1 tensor.
template <class T>
Var<T> slice(const Var<T>& x, int offset, int len) {
  if (offset < 0 || len < 0 ||
      static_cast<std::size_t>(offset + len) > x.size())
    throw ShapeError("slice: [" + std::to_string(offset) + "," +
                     std::to_string(offset + len) + ") out of " +
                     x.shape().str());
  const auto& s = x.value().storage();
  std::vector<T> out(s.begin() + offset, s.begin() + offset + len);
  return detail::finish(Op::Slice, {x}, Tensor<T>(Shape{len}, std::move(out)),
                        {offset, len});
}

/// Places `x` at `offset` inside a zero vector of length `total`.
template <class T>
Var<T> embed(const Var<T>& x, int offset, int total) {
  const int n = static_cast<int>(x.size());
  if (offset < 0 || offset + n > total)
    throw ShapeError("embed: " + x.shape().str() + " at " +
                     std::to_string(offset) + " into " + std::to_string(total));
  Tensor<T> out(Shape{total});
  std::copy(x.value().storage().begin(), x.value().storage().end(),
            out.storage().begin() + offset);
  return detail::finish(Op::Embed, {x}, std::move(out), {offset, total});
}

/// Gathers flat elements of `x` at `indices` into a rank-1 tensor.
template <class T>
Var<T> index_select(const Var<T>& x, const std::vector<int>& indices) {
  Tensor<T> out(Shape{static_cast<int>(indices.size())});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int j = indices[i];
    if (j < 0 || static_cast<std::size_t>(j) >= x.size())
      throw ShapeError("index_select: index " + std::to_string(j) +
                       " out of " + x.shape().str());
    out[i] = x.value()[static_cast<std::size_t>(j)];
  }
  return detail::finish(Op::IndexSelect, {x}, std::move(out), indices);
}

/// Adjoint of index_select: accumulates `x` into zeros of `shape`.
template <class T>
Var<T> scatter(const Var<T>& x, const std::vector<int>& indices, Shape shape) {
  if (x.size() != indices.size())
    throw ShapeError("scatter: " + x.shape().str() + " vs " +
                     std::to_string(indices.size()) + " indices");
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int j = indices[i];
    if (j < 0 || static_cast<std::size_t>(j) >= out.size())
      throw ShapeError("scatter: index out of " + shape.str());
    out[static_cast<std::size_t>(j)] += x.value()[i];
  }
  std::vector<int> ints = indices;
  ints.push_back(shape.rank());
  for (int d = 0; d < shape.rank(); ++d) ints.push_back(shape[d]);
  return detail::finish(Op::Scatter, {x}, std::move(out), std::move(ints));
}

/// Flat concatenation into a rank-1 tensor.
template <class T>
Var<T> concat(const std::vector<Var<T>>& xs) {
  std::size_t total = 0;
  for (const auto& x : xs) total += x.size();
  Tensor<T> out(Shape{static_cast<int>(total)});
  std::size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x.value().storage().begin(), x.value().storage().end(),
              out.storage().begin() + static_cast<std::ptrdiff_t>(off));
    off += x.size();
  }
  return detail::finish(Op::Concat, xs, std::move(out));
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (x.shape() == shape) return x;
  std::vector<int> ints{shape.rank()};
  for (int d = 0; d < shape.rank(); ++d) ints.push_back(shape[d]);
  return detail::finish(Op::Reshape, {x}, x.value().reshaped(shape),
                        std::move(ints));
}

/// op(a) * op(b) where op transposes when the flag is set. Rank-1 operands
/// are column vectors; the result is rank-1 when b is an untransposed vector.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_a = false,
              bool transpose_b = false) {
  return detail::finish(
      Op::MatMul, {a, b},
      detail::matmul_kernel(a.value(), b.value(), transpose_a, transpose_b),
      {transpose_a ? 1 : 0, transpose_b ? 1 : 0});
}

/// Valid cross-correlation, stride 1. Pad the input beforehand for "same".
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel) {
  return detail::finish(Op::Conv2d, {x, kernel},
                        detail::conv2d_kernel(x.value(), kernel.value()));
}

template <class T>
Var<T> conv2d_input_grad(const Var<T>& g, const Var<T>& kernel) {
  return detail::finish(
      Op::Conv2dInputGrad, {g, kernel},
      detail::conv2d_input_grad_kernel(g.value(), kernel.value()));
}

template <class T>
Var<T> conv2d_kernel_grad(const Var<T>& x, const Var<T>& g) {
  return detail::finish(Op::Conv2dKernelGrad, {x, g},
                        detail::conv2d_kernel_grad_kernel(x.value(), g.value()));
}

/// Repeats a per-channel vector b[F] over an (F, h, w) grid.
template <class T>
Var<T> broadcast_channels(const Var<T>& b, int h, int w) {
  detail::require_rank("broadcast_channels", b.shape(), 1);
  const int F = b.shape()[0];
  Tensor<T> out(Shape{F, h, w});
  for (int f = 0; f < F; ++f)
    std::fill_n(out.storage().begin() + static_cast<std::ptrdiff_t>(f) * h * w,
                h * w, b.value()[static_cast<std::size_t>(f)]);
  return detail::finish(Op::BroadcastChannels, {b}, std::move(out), {h, w});
}

template <class T>
Var<T> channel_sum(const Var<T>& x) {
  detail::require_rank("channel_sum", x.shape(), 3);
  const int F = x.shape()[0];
  const std::size_t hw = static_cast<std::size_t>(x.shape()[1]) * x.shape()[2];
  Tensor<T> out(Shape{F});
  for (int f = 0; f < F; ++f) {
    T acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += x.value()[f * hw + i];
    out[static_cast<std::size_t>(f)] = acc;
  }
  return detail::finish(Op::ChannelSum, {x}, std::move(out));
}

/// Entropy of the distribution whose log-probabilities are `log_probs`.
template <class T>
Var<T> entropy_from_log_probs(const Var<T>& log_probs) {
  return scale(sum(mul(exp(log_probs), log_probs)), T(-1));
}

}  // namespace irf
