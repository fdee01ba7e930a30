#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "irf/agent/inner_loop.hpp"
#include "irf/meta/adam.hpp"

namespace irf::meta {

enum class Objective : std::uint8_t { Lifetime, Episodic };

inline std::string_view to_string(Objective o) {
  return o == Objective::Lifetime ? "lifetime" : "episodic";
}

inline Objective parse_objective(std::string_view s) {
  if (s == "lifetime") return Objective::Lifetime;
  if (s == "episodic") return Objective::Episodic;
  throw ConfigError("unknown objective '" + std::string(s) + "'");
}

struct MetaConfig {
  int outer_unroll = 5;
  double gamma = 0.99;
  double eta_lr = 1e-3;
  double value_lr = 1e-3;
  int batch_lifetimes = 8;
  long meta_updates = 20000;
  Objective objective = Objective::Lifetime;
  bool use_baseline = false;
  double max_abort_fraction = 0.1;
  int threads = 1;

  void validate() const {
    if (outer_unroll < 1) throw ConfigError("outer_unroll must be >= 1");
    if (!(gamma > 0 && gamma <= 1)) throw ConfigError("gamma must lie in (0, 1]");
    if (!(eta_lr >= 0) || !(value_lr >= 0))
      throw ConfigError("learning rates must be non-negative");
    if (batch_lifetimes < 1) throw ConfigError("batch_lifetimes must be >= 1");
    if (meta_updates < 0) throw ConfigError("meta_updates must be >= 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

/// n-step extrinsic returns to the end of the window, bootstrapped from the
/// lifetime value unless the lifetime ended. Episode boundaries do not cut
/// the return.
inline std::vector<double> lifetime_td_target(const std::vector<double>& rewards,
                                              double gamma, double bootstrap,
                                              const std::vector<bool>& lifetime_dones) {
  expects(!rewards.empty(), "lifetime_td_target: need at least one reward");
  expects(rewards.size() == lifetime_dones.size(),
          "lifetime_td_target: size mismatch");
  std::vector<double> g(rewards.size());
  double next = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    g[i] = rewards[i] + (lifetime_dones[i] ? 0.0 : gamma * next);
    next = g[i];
  }
  return g;
}

/// Discounted returns reset at episode ends, truncated at the window end.
inline std::vector<double> episodic_returns(const std::vector<double>& rewards,
                                            const std::vector<bool>& dones,
                                            double gamma) {
  expects(rewards.size() == dones.size(), "episodic_returns: size mismatch");
  std::vector<double> g(rewards.size());
  double next = 0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    g[i] = rewards[i] + (dones[i] ? 0.0 : gamma * next);
    next = g[i];
  }
  return g;
}

/// N consecutive inner windows with the parameter chain that produced them.
template <class T>
struct OuterWindow {
  std::vector<agent::TrajectoryWindow<T>> windows;
  std::vector<std::vector<Var<T>>> thetas;  // theta_0 .. theta_K
  std::vector<Var<T>> values;                // V(tau_t), t = 0 .. steps()

  std::size_t steps() const {
    std::size_t n = 0;
    for (const auto& w : windows) n += w.size();
    return n;
  }

  template <class F>
  void for_each_step(F&& f) const {
    for (const auto& w : windows)
      for (const auto& s : w.steps) f(s);
  }

  std::vector<double> extrinsic_rewards() const {
    std::vector<double> r;
    for_each_step([&](const auto& s) { r.push_back(s.extrinsic_reward()); });
    return r;
  }
  std::vector<bool> episode_dones() const {
    std::vector<bool> d;
    for_each_step([&](const auto& s) { d.push_back(s.done()); });
    return d;
  }
  std::vector<bool> lifetime_dones() const {
    std::vector<bool> d;
    for_each_step([&](const auto& s) { d.push_back(s.lifetime_done); });
    return d;
  }
  double value(std::size_t t) const { return static_cast<double>(values.at(t).item()); }
};

namespace detail {

template <class T>
Var<T> weighted_log_prob_loss(const OuterWindow<T>& ow,
                              const std::vector<double>& coef) {
  expects(coef.size() == ow.steps(), "meta loss: coefficients not aligned");
  expects(!coef.empty(), "meta loss: empty outer window");
  Var<T> total;
  std::size_t t = 0;
  ow.for_each_step([&](const auto& s) {
    const auto term = scale(s.log_prob, static_cast<T>(coef[t++]));
    total = total.defined() ? add(total, term) : term;
  });
  return scale(sum(total), static_cast<T>(-1.0 / static_cast<double>(coef.size())));
}

template <class T>
std::vector<double> subtract_baseline(const OuterWindow<T>& ow, std::vector<double> g,
                                      bool use_baseline) {
  if (!use_baseline) return g;
  expects(ow.values.size() >= g.size(), "meta loss: baseline needs value predictions");
  for (std::size_t t = 0; t < g.size(); ++t) g[t] -= ow.value(t);
  return g;
}

}  // namespace detail

/// -(1/T) sum_t detach(G_t - b_t) log pi_{theta_t}(a_t|s_t); its gradient
/// with respect to eta flows only through the parameter chain.
template <class T>
Var<T> meta_loss(const OuterWindow<T>& ow, const std::vector<double>& targets,
                 bool use_baseline = false) {
  return detail::weighted_log_prob_loss(
      ow, detail::subtract_baseline(ow, targets, use_baseline));
}

/// Ablation: the coefficient is the extrinsic episodic return instead.
template <class T>
Var<T> episodic_meta_loss(const OuterWindow<T>& ow, double gamma_bar,
                          bool use_baseline = false) {
  const auto g = episodic_returns(ow.extrinsic_rewards(), ow.episode_dones(), gamma_bar);
  return detail::weighted_log_prob_loss(ow, detail::subtract_baseline(ow, g, use_baseline));
}

/// Mean squared error between value predictions and detached targets over the
/// first targets.size() predictions.
template <class T>
Var<T> value_loss(const std::vector<Var<T>>& predictions, const std::vector<double>& targets) {
  expects(!targets.empty(), "value_loss: no targets");
  expects(predictions.size() >= targets.size(), "value_loss: fewer predictions than targets");
  Var<T> total;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto err =
        sub(predictions[t], Var<T>(Tensor<T>::vector({static_cast<T>(targets[t])})));
    const auto sq = mul(err, err);
    total = total.defined() ? add(total, sq) : sq;
  }
  return scale(sum(total), static_cast<T>(1.0 / static_cast<double>(targets.size())));
}

/// One Adam step on value_loss for a single stream. `phi_vars` are the tape
/// leaves the predictions were computed from.
template <class T>
long update_value(ParamSet<T>& phi, std::span<const Var<T>> phi_vars,
                  const std::vector<Var<T>>& predictions, const std::vector<double>& targets,
                  AdamState<T>& state, double lr) {
  const auto g = grad(value_loss(predictions, targets), phi_vars);
  return adam_update(phi, values_of(g, phi), state, lr);
}

}  // namespace irf::meta
