#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "irf/agent/lifetime.hpp"
#include "irf/env/shortest_path.hpp"

namespace irf::baselines {

enum class Method : std::uint8_t { ExtrinsicEp, ExtrinsicLife, Count, Heuristic };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::ExtrinsicEp: return "extrinsic_ep";
    case Method::ExtrinsicLife: return "extrinsic_life";
    case Method::Count: return "count";
    case Method::Heuristic: return "heuristic";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (auto m : {Method::ExtrinsicEp, Method::ExtrinsicLife, Method::Count, Method::Heuristic})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown baseline method '" + std::string(s) + "'");
}

// Count-based exploration bonus.

struct VisitCounts {
  std::unordered_map<std::uint64_t, long> counts;

  long count(std::uint64_t key) const {
    const auto it = counts.find(key);
    return it == counts.end() ? 0 : it->second;
  }
  void reset() { counts.clear(); }
};

/// beta / sqrt(n) with n the visit count including this visit, so the first
/// visit earns beta and every repeat earns strictly less.
inline double count_bonus(VisitCounts& c, std::uint64_t key, double beta) {
  expects(beta > 0, "count_bonus: beta must be positive");
  const long n = ++c.counts[key];
  return beta / std::sqrt(static_cast<double>(n));
}

/// Inner-loop reward r_ext + bonus(state after the step).
template <class T>
auto count_rewards(VisitCounts& counts, double beta) {
  return [&counts, beta](agent::TrajectoryWindow<T>& w, agent::LifetimeStream<T>&) {
    for (auto& t : w.steps) {
      const double r = t.extrinsic_reward() + count_bonus(counts, t.state_key, beta);
      t.intrinsic_reward = Var<T>(Tensor<T>::vector({static_cast<T>(r)}));
    }
  };
}

// Extrinsic-reward agents.

inline agent::InnerConfig extrinsic_ep_config(agent::InnerConfig base = {}) {
  base.reset_at_dones = true;
  return base;
}

inline agent::InnerConfig extrinsic_life_config(agent::InnerConfig base = {},
                                                double gamma = 0.99) {
  base.reset_at_dones = false;
  base.gamma_bar = gamma;
  return base;
}

// Hand-designed Random ABC heuristic: A in the first episode, C in the
// second, the better of the two afterwards.

struct HeuristicState {
  int episode_index = 0;
  std::optional<double> reward_a;
  std::optional<double> reward_c;

  env::Object target() const {
    if (episode_index == 0) return env::Object::A;
    if (episode_index == 1) return env::Object::C;
    const double a = reward_a.value_or(-INFINITY);
    const double c = reward_c.value_or(-INFINITY);
    return c > a ? env::Object::C : env::Object::A;
  }
};

/// Shortest-path move toward the heuristic's target, routing around the other
/// objects when possible.
inline env::Action heuristic_policy(const env::TaskSpec& task, const env::EnvState& st,
                                    const HeuristicState& hs) {
  if (task.domain != env::Domain::RandomABC)
    throw ConfigError("the heuristic baseline is defined for random_abc only");
  const auto target_obj = hs.target();
  const auto target = st.object_cells[static_cast<std::size_t>(target_obj)];
  expects(target.has_value(), "heuristic_policy: target object missing");
  env::Layout avoid = *task.layout;
  for (std::size_t o = 0; o < st.object_cells.size(); ++o)
    if (o != static_cast<std::size_t>(target_obj) && st.object_cells[o])
      avoid.wall[static_cast<std::size_t>(st.object_cells[o]->row * avoid.width +
                                          st.object_cells[o]->col)] = 1;
  if (auto a = env::step_toward(avoid, st.agent_cell, env::distances_to(avoid, *target)))
    return *a;
  const auto& l = *task.layout;
  if (auto a = env::step_toward(l, st.agent_cell, env::distances_to(l, *target))) return *a;
  return env::Action::Up;
}

/// One lifetime of the heuristic on a fresh environment.
inline agent::LifetimeRecord run_heuristic_lifetime(const env::TaskSpec& task,
                                                    CounterRng rng, long visit_limit = 0) {
  env::Environment e(task, rng.split(1));
  HeuristicState hs;
  agent::LifetimeRecord rec;
  rec.height = task.layout->height;
  rec.width = task.layout->width;
  rec.visits.assign(static_cast<std::size_t>(rec.height * rec.width), 0);
  auto visit = [&](env::Cell c) {
    ++rec.visits[static_cast<std::size_t>(c.row * rec.width + c.col)];
  };
  double ep = 0;
  while (true) {
    const auto target = hs.target();
    if (rec.steps < visit_limit && rec.steps == 0) visit(e.state().agent_cell);
    const auto r = e.step(heuristic_policy(task, e.state(), hs));
    if (rec.steps < visit_limit) visit(e.state().agent_cell);
    ++rec.steps;
    ep += r.extrinsic_reward;
    if (r.episode_done) {
      if (e.state().agent_cell == e.state().object_cells[static_cast<std::size_t>(target)]) {
        if (target == env::Object::A) hs.reward_a = r.extrinsic_reward;
        if (target == env::Object::C) hs.reward_c = r.extrinsic_reward;
      }
      rec.episode_returns.push_back(ep);
      rec.episode_objects.push_back(agent::collected_object(task, e.state(), true));
      rec.lifetime_return += ep;
      ep = 0;
      if (r.lifetime_done) break;
      e.next_episode();
      hs.episode_index = e.state().episode_index;
    }
  }
  return rec;
}

struct AbcIntervals {
  double a_lo = -1.0, a_hi = 1.0;
  double c_lo = 0.0, c_hi = 0.5;
};

struct MonteCarloValue {
  double mean = 0;
  double se = 0;
};

/// E[r_A] + E[r_C] + (episodes - 2) E[max(r_A, r_C)] by Monte Carlo over
/// independent uniform rewards.
inline MonteCarloValue heuristic_expected_lifetime_return(const AbcIntervals& iv,
                                                          int episodes, long samples,
                                                          CounterRng rng) {
  expects(episodes >= 2, "heuristic oracle: needs at least two episodes");
  expects(samples >= 2, "heuristic oracle: needs at least two samples");
  double s = 0, s2 = 0;
  for (long i = 0; i < samples; ++i) {
    const double a = iv.a_lo + (iv.a_hi - iv.a_lo) * rng.uniform();
    const double c = iv.c_lo + (iv.c_hi - iv.c_lo) * rng.uniform();
    const double v = a + c + (episodes - 2) * std::max(a, c);
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(samples);
  const double mean = s / n;
  const double var = std::max(0.0, s2 / n - mean * mean) * n / (n - 1);
  return {mean, std::sqrt(var / n)};
}

}  // namespace irf::baselines
