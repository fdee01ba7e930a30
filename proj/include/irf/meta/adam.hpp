#pragma once

#include <cmath>

#include "irf/tensor/param_set.hpp"

namespace irf::meta {

template <class T>
struct AdamState {
  ParamSet<T> m;
  ParamSet<T> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState like(const ParamSet<T>& p) {
    AdamState s;
    s.m = p.zeros_like();
    s.v = p.zeros_like();
    return s;
  }
};

/// Bias-corrected Adam step in place. Non-finite gradient entries leave their
/// parameter and moments untouched for this step; their count is returned.
template <class T>
long adam_update(ParamSet<T>& params, const ParamSet<T>& grads, AdamState<T>& st,
                 double lr) {
  expects(params.size() == grads.size() && params.size() == st.m.size(),
          "adam_update: parameter count mismatch");
  ++st.step;
  const double c1 = 1 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1 - std::pow(st.beta2, static_cast<double>(st.step));
  long skipped = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(grads[i].shape() == params[i].shape()))
      throw ShapeError("adam_update: gradient shape " + grads[i].shape().str() +
                       " for '" + params.name(i) + "' " + params[i].shape().str());
    auto p = params.data(i);
    auto m = st.m.data(i);
    auto v = st.v.data(i);
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      if (!std::isfinite(gj)) {
        ++skipped;
        continue;
      }
      const double mj = st.beta1 * static_cast<double>(m[j]) + (1 - st.beta1) * gj;
      const double vj = st.beta2 * static_cast<double>(v[j]) + (1 - st.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      p[j] = static_cast<T>(static_cast<double>(p[j]) -
                            lr * (mj / c1) / (std::sqrt(vj / c2) + st.eps));
    }
  }
  return skipped;
}

}  // namespace irf::meta
