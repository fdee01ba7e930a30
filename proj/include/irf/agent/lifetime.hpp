#pragma once

#include <vector>

#include "irf/agent/inner_loop.hpp"

namespace irf::agent {

/// What one lifetime did, per episode and in total. Intrinsic reward and
/// entropy are per-step means within each episode; entropy stays empty for
/// value-based agents.
struct LifetimeRecord {
  std::vector<double> episode_returns;
  std::vector<double> episode_intrinsic;
  std::vector<double> episode_entropy;
  std::vector<int> episode_objects;  // collected object or -1
  double lifetime_return = 0;
  long steps = 0;

  // Agent cell visits over the first `visit_limit` steps, start cell included
  // once any step is counted.
  int height = 0;
  int width = 0;
  std::vector<long> visits;
};

template <class T>
class RecordBuilder {
 public:
  RecordBuilder(const LifetimeStream<T>& s, long visit_limit)
      : limit_(visit_limit), start_(s.env.state().agent_cell) {
    const auto& l = *s.env.task().layout;
    rec_.height = l.height;
    rec_.width = l.width;
    rec_.visits.assign(static_cast<std::size_t>(l.height * l.width), 0);
  }

  void observe(const TrajectoryWindow<T>& w) {
    for (const auto& t : w.steps) {
      if (rec_.steps < limit_) {
        if (rec_.steps == 0) visit(start_);
        visit(t.cell);
      }
      ++rec_.steps;
      ++ep_steps_;
      if (t.intrinsic_reward.defined()) ep_intrinsic_ += static_cast<double>(t.intrinsic_reward.item());
      if (t.entropy.defined()) {
        ep_entropy_ += static_cast<double>(t.entropy.item());
        has_entropy_ = true;
      }
      if (t.done()) {
        rec_.episode_intrinsic.push_back(ep_intrinsic_ / static_cast<double>(ep_steps_));
        if (has_entropy_) rec_.episode_entropy.push_back(ep_entropy_ / static_cast<double>(ep_steps_));
        rec_.episode_objects.push_back(t.collected_object);
        ep_steps_ = 0;
        ep_intrinsic_ = ep_entropy_ = 0;
      }
    }
  }

  LifetimeRecord finish(const LifetimeStream<T>& s) {
    rec_.episode_returns = s.episode_returns;
    rec_.lifetime_return = s.lifetime_return;
    return std::move(rec_);
  }

 private:
  void visit(env::Cell c) { ++rec_.visits[static_cast<std::size_t>(c.row * rec_.width + c.col)]; }

  LifetimeRecord rec_;
  long limit_;
  env::Cell start_;
  long ep_steps_ = 0;
  double ep_intrinsic_ = 0;
  double ep_entropy_ = 0;
  bool has_entropy_ = false;
};

/// A whole lifetime of policy-gradient updates on whatever `reward` writes
/// into each window. Nothing is kept for differentiation.
template <class T, class RewardFn>
LifetimeRecord run_pg_lifetime(LifetimeStream<T>& s, ParamSet<T> theta,
                               const InnerConfig& inner, RewardFn&& reward,
                               long visit_limit = 0) {
  RecordBuilder<T> rec(s, visit_limit);
  while (!s.finished()) {
    Tape<T> tape;
    const auto th = bind(tape, theta);
    auto w = collect_window(s, inner.unroll_length, policy_sampler<T>(th), reward);
    score_window<T>(th, w);
    rec.observe(w);
    const auto g = intrinsic_returns(w, inner.gamma_bar, inner.reset_at_dones);
    const auto loss = policy_loss(w, g, inner.entropy_coef, inner.unroll_length);
    theta = values_of(sgd_step_differentiable(th, loss, inner.alpha, false), theta);
    s.detach_states();
  }
  return rec.finish(s);
}

/// A whole lifetime of epsilon-greedy Q-learning, one update per window.
template <class T, class RewardFn>
LifetimeRecord run_q_lifetime(LifetimeStream<T>& s, ParamSet<T> q, const QConfig& cfg,
                              int unroll_length, RewardFn&& reward, long visit_limit = 0) {
  RecordBuilder<T> rec(s, visit_limit);
  while (!s.finished()) {
    auto w = collect_window(s, unroll_length,
                            epsilon_greedy_actor<T>(constants_of(q), cfg.epsilon), reward);
    rec.observe(w);
    q = q_learning_step(q, w, cfg);
    s.detach_states();
  }
  return rec.finish(s);
}

}  // namespace irf::agent
