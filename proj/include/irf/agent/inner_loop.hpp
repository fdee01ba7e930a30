#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "irf/core/error.hpp"
#include "irf/core/rng.hpp"
#include "irf/env/gridworld.hpp"
#include "irf/nn/networks.hpp"
#include "irf/tensor/autodiff.hpp"
#include "irf/tensor/param_set.hpp"

namespace irf::agent {

struct InnerConfig {
  double alpha = 0.1;
  double gamma_bar = 0.9;
  double entropy_coef = 0.01;
  int unroll_length = 4;
  bool reset_at_dones = true;  // false: returns run across episode ends

  void validate() const {
    if (!(alpha >= 0)) throw ConfigError("inner alpha must be non-negative");
    if (!(gamma_bar > 0 && gamma_bar <= 1))
      throw ConfigError("gamma_bar must lie in (0, 1]");
    if (unroll_length < 1) throw ConfigError("unroll_length must be >= 1");
  }
};

template <class T>
struct Transition {
  env::Observation observation;  // s_t
  int action_index = 0;          // in the agent's own action space
  nn::StepFeatures features;     // s_{t+1}, environment action, r_{t+1}, d_{t+1}
  Var<T> log_prob;               // undefined for value-based agents
  Var<T> entropy;
  Var<T> intrinsic_reward;
  bool lifetime_done = false;
  env::Cell cell;  // agent cell after the step
  std::uint64_t state_key = 0;
  int episode_index = 0;
  int collected_object = -1;  // object whose reward ended the episode

  double extrinsic_reward() const { return features.extrinsic_reward; }
  bool done() const { return features.done; }
};

template <class T>
struct TrajectoryWindow {
  std::vector<Transition<T>> steps;

  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
  const Transition<T>& operator[](std::size_t i) const { return steps[i]; }
};

/// One agent lifetime: the environment, the action stream and the running
/// history state of the reward and value networks.
template <class T>
struct LifetimeStream {
  env::Environment env;
  env::ActionMode mode = env::ActionMode::Standard;
  CounterRng action_rng;

  nn::StepFeatures initial_features;  // (s_0, no action, 0, 0)
  nn::RecurrentState<T> reward_state;
  bool reward_primed = false;
  // Value network state before consuming `last_features`.
  nn::RecurrentState<T> value_state;
  nn::StepFeatures last_features;

  double episode_return = 0;
  double lifetime_return = 0;
  std::vector<double> episode_returns;

  LifetimeStream(env::TaskSpec task, env::ActionMode m, CounterRng rng, int hidden)
      : env(std::move(task), rng.split(1)),
        mode(m),
        action_rng(rng.split(2)),
        reward_state(nn::RecurrentState<T>::zeros(hidden)),
        value_state(nn::RecurrentState<T>::zeros(hidden)) {
    initial_features.observation = env.observation();
    last_features = initial_features;
  }

  bool finished() const { return env.state().lifetime_done; }

  /// Drops tape references so the stream survives a tape reset.
  void detach_states() {
    reward_state = reward_state.detached();
    value_state = value_state.detached();
  }
};

/// Untaped copies of `vars`.
template <class T>
std::vector<Var<T>> detached(const std::vector<Var<T>>& vars) {
  std::vector<Var<T>> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(detach(v));
  return out;
}

/// Samples from softmax(policy_forward(theta, s)) without recording; the
/// differentiable log-probabilities come from score_window afterwards.
template <class T>
auto policy_sampler(std::vector<Var<T>> theta) {
  return [theta = detached(theta)](const env::Observation& obs, CounterRng& rng) {
    return nn::sample_action(nn::policy_forward<T>(theta, obs), rng).action;
  };
}

/// Recomputes log pi(a_t|s_t) and the policy entropy for every step in one
/// batched, recorded pass.
template <class T>
void score_window(std::span<const Var<T>> theta, TrajectoryWindow<T>& w) {
  if (w.empty()) return;
  std::vector<const env::Observation*> obs;
  obs.reserve(w.size());
  for (const auto& s : w.steps) obs.push_back(&s.observation);
  const auto lps = nn::policy_log_probs<T>(theta, obs);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.steps[i].log_prob = index_select(lps[i], {w.steps[i].action_index});
    w.steps[i].entropy = entropy_from_log_probs(lps[i]);
  }
}

template <class T>
std::vector<const nn::StepFeatures*> feature_pointers(const TrajectoryWindow<T>& w) {
  std::vector<const nn::StepFeatures*> f;
  f.reserve(w.size());
  for (const auto& s : w.steps) f.push_back(&s.features);
  return f;
}

/// Intrinsic rewards from the reward network; the recurrent state lives in the
/// stream and carries across episodes. The first call of a lifetime also
/// feeds the initial history element.
template <class T>
auto eta_rewards(nn::RewardInput input, std::span<const Var<T>> eta) {
  return [input, eta](TrajectoryWindow<T>& w, LifetimeStream<T>& s) {
    auto f = feature_pointers(w);
    const bool prime = !s.reward_primed;
    if (prime) f.insert(f.begin(), &s.initial_features);
    auto seq = nn::intrinsic_rewards<T>(input, eta, f, s.reward_state);
    const std::size_t off = prime ? 1 : 0;
    for (std::size_t i = 0; i < w.size(); ++i)
      w.steps[i].intrinsic_reward = seq.values[i + off];
    s.reward_state = seq.states.back();
    s.reward_primed = true;
  };
}

/// Extrinsic reward used directly as the inner-loop reward.
template <class T>
auto extrinsic_rewards() {
  return [](TrajectoryWindow<T>& w, LifetimeStream<T>&) {
    for (auto& t : w.steps)
      t.intrinsic_reward =
          Var<T>(Tensor<T>::vector({static_cast<T>(t.features.extrinsic_reward)}));
  };
}

/// Hash of everything that distinguishes two grid states of a lifetime.
inline std::uint64_t state_key(const env::EnvState& st) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::int64_t v) {
    h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  };
  mix(st.agent_cell.row);
  mix(st.agent_cell.col);
  mix(st.has_key ? 1 : 0);
  for (const auto& c : st.object_cells) {
    mix(c ? c->row : -1);
    mix(c ? c->col : -1);
  }
  return h;
}

/// Index of the object the agent consumed on an episode-ending step, or -1.
inline int collected_object(const env::TaskSpec& task, const env::EnvState& st,
                            bool episode_done) {
  if (!episode_done || task.domain == env::Domain::EmptyRooms) return -1;
  for (int o = 0; o < env::kNumObjects; ++o) {
    if (static_cast<env::Object>(o) == env::Object::Key) continue;
    if (st.object_cells[static_cast<std::size_t>(o)] == st.agent_cell &&
        (task.domain != env::Domain::KeyBox || st.has_key))
      return o;
  }
  return -1;
}

/// Runs up to `length` steps, auto-resetting finished episodes, and stops
/// early when the lifetime ends. `act(obs, rng)` returns an action index;
/// `reward(window, stream)` then fills the per-step inner-loop rewards.
template <class T, class Actor, class RewardFn>
TrajectoryWindow<T> collect_window(LifetimeStream<T>& s, int length, Actor&& act,
                                   RewardFn&& reward) {
  if (s.finished())
    throw ContractViolation("collect_window called on a finished lifetime");
  expects(length >= 1, "collect_window: length must be >= 1");
  TrajectoryWindow<T> w;
  w.steps.reserve(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    if (s.env.state().episode_done) s.env.next_episode();
    Transition<T> tr;
    tr.observation = s.env.observation();
    tr.episode_index = s.env.state().episode_index;
    tr.action_index = act(tr.observation, s.action_rng);
    const env::Action a = env::to_env_action(tr.action_index, s.mode);
    auto out = s.env.step(a);
    tr.features = {std::move(out.observation), static_cast<int>(a),
                   out.extrinsic_reward, out.episode_done};
    tr.lifetime_done = out.lifetime_done;
    tr.cell = s.env.state().agent_cell;
    tr.state_key = state_key(s.env.state());
    tr.collected_object = collected_object(s.env.task(), s.env.state(), out.episode_done);

    s.episode_return += out.extrinsic_reward;
    s.lifetime_return += out.extrinsic_reward;
    if (out.episode_done) {
      s.episode_returns.push_back(s.episode_return);
      s.episode_return = 0;
    }
    w.steps.push_back(std::move(tr));
    if (out.lifetime_done) break;
  }
  reward(w, s);
  return w;
}

/// Discounted returns of per-step rewards, truncated at the end of the
/// sequence. With `reset_at_dones` accumulation restarts after each done.
template <class T>
std::vector<Var<T>> discounted_returns(const std::vector<Var<T>>& rewards,
                                       const std::vector<bool>& dones, double gamma,
                                       bool reset_at_dones = true) {
  expects(rewards.size() == dones.size(), "discounted_returns: size mismatch");
  std::vector<Var<T>> g(rewards.size());
  Var<T> next;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    if (!next.defined() || (reset_at_dones && dones[i]))
      g[i] = rewards[i];
    else
      g[i] = add(rewards[i], scale(next, static_cast<T>(gamma)));
    next = g[i];
  }
  return g;
}

/// Episodic intrinsic returns inside a window; no bootstrap at the edge.
template <class T>
std::vector<Var<T>> intrinsic_returns(const TrajectoryWindow<T>& w, double gamma_bar,
                                      bool reset_at_dones = true) {
  expects(!w.empty(), "intrinsic_returns: empty window");
  std::vector<Var<T>> r;
  std::vector<bool> d;
  for (const auto& s : w.steps) {
    r.push_back(s.intrinsic_reward);
    d.push_back(s.done());
  }
  return discounted_returns(r, d, gamma_bar, reset_at_dones);
}

/// -(1/L) sum_t [G_t log pi(a_t|s_t) + c H(pi(.|s_t))]
template <class T>
Var<T> policy_loss(const TrajectoryWindow<T>& w, const std::vector<Var<T>>& returns,
                   double entropy_coef, int unroll_length) {
  expects(returns.size() == w.size(), "policy_loss: returns not aligned");
  expects(unroll_length >= 1, "policy_loss: unroll_length must be >= 1");
  Var<T> total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto term = mul(returns[i], w[i].log_prob);
    if (entropy_coef != 0)
      term = add(term, scale(w[i].entropy, static_cast<T>(entropy_coef)));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(sum(total), static_cast<T>(-1.0 / unroll_length));
}

/// theta - alpha * grad(loss). With `create_graph` the result stays a
/// differentiable function of whatever the loss depended on.
template <class T>
std::vector<Var<T>> sgd_step_differentiable(const std::vector<Var<T>>& theta,
                                            const Var<T>& loss, double alpha,
                                            bool create_graph = true) {
  auto g = grad(loss, theta, create_graph);
  std::vector<Var<T>> out;
  out.reserve(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!g[i].value().all_finite())
      throw NumericError("non-finite policy gradient in parameter " +
                         std::to_string(i));
    if (create_graph)
      out.push_back(sub(theta[i], scale(g[i], static_cast<T>(alpha))));
    else
      out.push_back(Var<T>(sub(detach(theta[i]),
                               scale(detach(g[i]), static_cast<T>(alpha)))
                               .value()));
  }
  return out;
}

// Q-learning transfer agent.

struct QConfig {
  double alpha_q = 0.1;
  double gamma_bar = 0.9;
  double epsilon = 0.1;
};

/// Epsilon-greedy over Q(s, .); ties go to the lower index.
template <class T>
auto epsilon_greedy_actor(std::vector<Var<T>> q, double epsilon) {
  return [q = detached(q), epsilon](const env::Observation& obs, CounterRng& rng) {
    const auto values = nn::policy_forward<T>(q, obs).value();
    const int n = static_cast<int>(values.size());
    if (rng.uniform() < epsilon)
      return static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)])
        best = i;
    return best;
  };
}

/// TD(0) targets r + gamma_bar * (1 - done) * max_a' Q(s', a'). Rewards are
/// taken as plain values; nothing here is differentiated with respect to eta.
template <class T>
std::vector<double> q_learning_targets(const ParamSet<T>& q,
                                       const TrajectoryWindow<T>& w,
                                       double gamma_bar) {
  const auto qc = constants_of(q);
  std::vector<double> y;
  y.reserve(w.size());
  for (const auto& s : w.steps) {
    double target = static_cast<double>(s.intrinsic_reward.item());
    if (!s.done()) {
      const auto next = nn::policy_forward<T>(qc, s.features.observation).value();
      double best = static_cast<double>(next[0]);
      for (std::size_t i = 1; i < next.size(); ++i)
        best = std::max(best, static_cast<double>(next[i]));
      target += gamma_bar * best;
    }
    y.push_back(target);
  }
  return y;
}

/// One SGD step on the window mean of 0.5 (Q(s,a) - y)^2.
template <class T>
ParamSet<T> q_learning_step(const ParamSet<T>& q, const TrajectoryWindow<T>& w,
                            const QConfig& cfg) {
  expects(!w.empty(), "q_learning_step: empty window");
  if (cfg.alpha_q == 0) return q;
  const auto y = q_learning_targets(q, w, cfg.gamma_bar);
  Tape<T> tape;
  const auto qv = bind(tape, q);
  Var<T> total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto pred = index_select(nn::policy_forward<T>(qv, w[i].observation),
                                   {w[i].action_index});
    const auto err = sub(pred, Var<T>(Tensor<T>::vector({static_cast<T>(y[i])})));
    const auto term = mul(err, err);
    total = total.defined() ? add(total, term) : term;
  }
  const auto loss =
      scale(sum(total), static_cast<T>(0.5 / static_cast<double>(w.size())));
  return values_of(sgd_step_differentiable(qv, loss, cfg.alpha_q, false), q);
}

}  // namespace irf::agent
