#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "irf/tensor/tensor.hpp"

namespace irf {

/// Central finite differences of a scalar function of several tensors.
///
/// Uses forward evaluations only, so it is independent of the tape.
template <class T, class F>
std::vector<Tensor<T>> finite_difference(F&& f, std::vector<Tensor<T>> inputs,
                                         T step = T(1e-5)) {
  std::vector<Tensor<T>> out;
  out.reserve(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<T> g(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const T saved = inputs[k][i];
      inputs[k][i] = saved + step;
      const T up = f(static_cast<const std::vector<Tensor<T>>&>(inputs));
      inputs[k][i] = saved - step;
      const T down = f(static_cast<const std::vector<Tensor<T>>&>(inputs));
      inputs[k][i] = saved;
      g[i] = (up - down) / (T(2) * step);
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
template <class T>
double max_relative_error(const std::vector<Tensor<T>>& analytic,
                          const std::vector<Tensor<T>>& numeric) {
  double worst = 0;
  for (std::size_t k = 0; k < analytic.size(); ++k)
    for (std::size_t i = 0; i < analytic[k].size(); ++i) {
      const double a = analytic[k][i];
      const double n = numeric[k][i];
      const double e = std::abs(a - n) / std::max(1.0, std::abs(n));
      if (!std::isfinite(e)) return INFINITY;
      worst = std::max(worst, e);
    }
  return worst;
}

}  // namespace irf
