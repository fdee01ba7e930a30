#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "irf/meta/meta_loop.hpp"

namespace irf::meta {

/// Everything needed to run meta-training on one domain.
struct TrainSetup {
  env::Domain domain = env::Domain::FixedABC;
  env::EnvConfig env;
  env::ActionMode mode = env::ActionMode::Standard;
  nn::Arch arch;  // grid size and action count are filled from the domain
  nn::RewardInput reward_input = nn::RewardInput::Lstm;
  agent::InnerConfig inner;
  MetaConfig meta;

  void validate() const {
    inner.validate();
    meta.validate();
  }
};

/// Architecture with the grid of `setup`'s domain and its action count.
inline nn::Arch resolved_arch(const TrainSetup& setup) {
  CounterRng probe(0);
  return nn::arch_for(env::sample_task(setup.domain, probe, setup.env), setup.mode,
                      setup.arch);
}

template <class T>
struct OuterStep {
  OuterWindow<T> window;
  std::vector<double> targets;
  Var<T> objective;   // meta loss (lifetime or episodic)
  Var<T> value_loss;  // mean squared lifetime TD error
  std::vector<Var<T>> theta_next;
};

/// Runs up to N inner updates from theta0 and builds both outer losses.
/// `forced_actions`, when given, replaces sampling so the same trajectory can
/// be replayed under perturbed parameters.
template <class T>
OuterStep<T> unroll_outer_window(agent::LifetimeStream<T>& s,
                                 const std::vector<Var<T>>& theta0,
                                 std::span<const Var<T>> eta,
                                 std::span<const Var<T>> phi, const TrainSetup& setup,
                                 const std::vector<int>* forced_actions = nullptr) {
  const int n_outer = setup.meta.outer_unroll;
  const auto& inner = setup.inner;
  OuterStep<T> out;
  auto& ow = out.window;
  ow.thetas.reserve(static_cast<std::size_t>(n_outer) + 1);
  ow.thetas.push_back(theta0);

  std::size_t forced_at = 0;
  for (int k = 0; k < n_outer && !s.finished(); ++k) {
    const auto& theta = ow.thetas.back();
    std::function<int(const env::Observation&, CounterRng&)> actor;
    if (forced_actions)
      actor = [&](const env::Observation&, CounterRng&) {
        return forced_actions->at(forced_at++);
      };
    else
      actor = agent::policy_sampler<T>(theta);
    auto w = agent::collect_window(s, inner.unroll_length, actor,
                                   agent::eta_rewards<T>(setup.reward_input, eta));
    agent::score_window<T>(theta, w);
    const auto g = agent::intrinsic_returns(w, inner.gamma_bar, inner.reset_at_dones);
    const auto loss = agent::policy_loss(w, g, inner.entropy_coef, inner.unroll_length);
    // The last update of the window feeds nothing inside it, so it needs no graph.
    const bool need_graph = k + 1 < n_outer && !s.finished();
    auto next = agent::sgd_step_differentiable(theta, loss, inner.alpha, need_graph);
    ow.windows.push_back(std::move(w));
    ow.thetas.push_back(std::move(next));
  }

  // Lifetime values V(tau_t) for t = 0..n in one pass over the history.
  std::vector<const nn::StepFeatures*> hist{&s.last_features};
  ow.for_each_step([&](const auto& st) { hist.push_back(&st.features); });
  auto vseq = nn::recurrent_sequence<T>(phi, hist, s.value_state);
  ow.values = std::move(vseq.values);
  const std::size_t last = hist.size() - 1;
  s.value_state = last > 0 ? vseq.states[last - 1].detached() : s.value_state;
  s.last_features = *hist.back();
  s.detach_states();
  out.theta_next = ow.thetas.back();

  const std::size_t n = ow.steps();
  out.targets = lifetime_td_target(ow.extrinsic_rewards(), setup.meta.gamma,
                                   ow.value(n), ow.lifetime_dones());
  out.objective = setup.meta.objective == Objective::Lifetime
                      ? meta_loss(ow, out.targets, setup.meta.use_baseline)
                      : episodic_meta_loss(ow, inner.gamma_bar, setup.meta.use_baseline);
  out.value_loss = value_loss(ow.values, out.targets);
  return out;
}

struct UpdateStats {
  long update = 0;
  int aborted = 0;
  long steps = 0;
  double extrinsic_sum = 0;
  double intrinsic_sum = 0;
  double entropy_sum = 0;
  std::vector<double> episode_returns;   // episodes completed this update
  std::vector<double> lifetime_returns;  // lifetimes completed this update
  double meta_loss = 0;
  double value_loss = 0;
};

template <class T>
struct Worker {
  int id = 0;
  CounterRng rng;
  long lifetimes_started = 0;
  std::optional<agent::LifetimeStream<T>> stream;
  ParamSet<T> theta;
};

template <class T>
struct WorkerOutput {
  bool aborted = false;
  std::string reason;
  ParamSet<T> eta_grad;
  ParamSet<T> phi_grad;
  UpdateStats stats;
};

template <class T>
void start_lifetime(Worker<T>& w, const TrainSetup& setup) {
  auto task = env::sample_task(setup.domain, w.rng, setup.env);
  const auto arch = nn::arch_for(task, setup.mode, setup.arch);
  w.theta = nn::init_policy<T>(arch, w.rng);
  w.stream.emplace(std::move(task), setup.mode, w.rng.split(1000 + w.lifetimes_started),
                   arch.lstm_hidden);
  ++w.lifetimes_started;
}

/// One worker's share of a meta-update against the (eta, phi) snapshot.
template <class T>
WorkerOutput<T> run_worker(Worker<T>& w, const ParamSet<T>& eta, const ParamSet<T>& phi,
                           const TrainSetup& setup) {
  WorkerOutput<T> out;
  try {
    if (!w.stream || w.stream->finished()) start_lifetime(w, setup);
    auto& s = *w.stream;
    const std::size_t episodes_before = s.episode_returns.size();
    Tape<T> tape;
    const auto eta_v = bind(tape, eta);
    const auto phi_v = bind(tape, phi);
    const auto theta0 = bind(tape, w.theta);
    auto os = unroll_outer_window<T>(s, theta0, eta_v, phi_v, setup);

    auto to_set = [](const std::vector<Var<T>>& g, const ParamSet<T>& like) {
      auto p = values_of(g, like);
      if (!p.all_finite()) throw NumericError("non-finite meta-gradient");
      return p;
    };
    out.eta_grad = to_set(grad(os.objective, eta_v), eta);
    out.phi_grad = to_set(grad(os.value_loss, phi_v), phi);
    w.theta = values_of(os.theta_next, w.theta);
    if (!w.theta.all_finite()) throw NumericError("non-finite policy parameters");

    auto& st = out.stats;
    st.meta_loss = static_cast<double>(os.objective.item());
    st.value_loss = static_cast<double>(os.value_loss.item());
    os.window.for_each_step([&](const auto& t) {
      ++st.steps;
      st.extrinsic_sum += t.extrinsic_reward();
      st.intrinsic_sum += static_cast<double>(t.intrinsic_reward.item());
      st.entropy_sum += static_cast<double>(t.entropy.item());
    });
    st.episode_returns.assign(
        s.episode_returns.begin() + static_cast<std::ptrdiff_t>(episodes_before),
        s.episode_returns.end());
    if (s.finished()) st.lifetime_returns.push_back(s.lifetime_return);
  } catch (const NumericError& e) {
    out.aborted = true;
    out.reason = e.what();
    w.stream.reset();
  }
  return out;
}

/// Element-wise mean with values sorted before summation, so the result does
/// not depend on the order of the inputs.
template <class T>
ParamSet<T> aggregate_mean(const std::vector<const ParamSet<T>*>& parts) {
  expects(!parts.empty(), "aggregate_mean: nothing to average");
  ParamSet<T> out = parts.front()->zeros_like();
  std::vector<double> column(parts.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto dst = out.data(i);
    for (std::size_t j = 0; j < dst.size(); ++j) {
      for (std::size_t k = 0; k < parts.size(); ++k)
        column[k] = static_cast<double>((*parts[k])[i].data()[j]);
      std::sort(column.begin(), column.end());
      double acc = 0;
      for (double v : column) acc += v;
      dst[j] = static_cast<T>(acc / static_cast<double>(parts.size()));
    }
  }
  return out;
}

/// Synchronous meta-trainer: every worker computes a gradient against the same
/// snapshot, then eta and phi are updated once.
template <class T>
class Trainer {
 public:
  Trainer(TrainSetup setup, std::uint64_t seed) : setup_(std::move(setup)), seed_(seed) {
    setup_.validate();
    arch_ = resolved_arch(setup_);
    CounterRng root(seed);
    auto eta_rng = root.split(0xE7A);
    auto phi_rng = root.split(0xF1);
    eta_ = nn::init_reward<T>(arch_, setup_.reward_input, eta_rng);
    phi_ = nn::init_recurrent<T>(arch_, phi_rng);
    eta_adam_ = AdamState<T>::like(eta_);
    phi_adam_ = AdamState<T>::like(phi_);
    for (int k = 0; k < setup_.meta.batch_lifetimes; ++k) {
      Worker<T> w;
      w.id = k;
      w.rng = root.split(static_cast<std::uint64_t>(1000 + k));
      workers_.push_back(std::move(w));
    }
  }

  UpdateStats step() {
    const std::size_t n = workers_.size();
    std::vector<WorkerOutput<T>> outs(n);
    const int threads = std::min<int>(setup_.meta.threads, static_cast<int>(n));
    if (threads <= 1) {
      for (std::size_t k = 0; k < n; ++k) outs[k] = run_worker(workers_[k], eta_, phi_, setup_);
    } else {
      std::vector<std::jthread> pool;
      for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
          for (std::size_t k = static_cast<std::size_t>(t); k < n;
               k += static_cast<std::size_t>(threads))
            outs[k] = run_worker(workers_[k], eta_, phi_, setup_);
        });
    }

    UpdateStats st;
    st.update = ++updates_;
    std::vector<const ParamSet<T>*> eta_parts, phi_parts;
    std::string first_reason;
    for (auto& o : outs) {
      if (o.aborted) {
        ++st.aborted;
        if (first_reason.empty()) first_reason = o.reason;
        continue;
      }
      eta_parts.push_back(&o.eta_grad);
      phi_parts.push_back(&o.phi_grad);
      st.steps += o.stats.steps;
      st.extrinsic_sum += o.stats.extrinsic_sum;
      st.intrinsic_sum += o.stats.intrinsic_sum;
      st.entropy_sum += o.stats.entropy_sum;
      st.meta_loss += o.stats.meta_loss / static_cast<double>(n);
      st.value_loss += o.stats.value_loss / static_cast<double>(n);
      for (double r : o.stats.episode_returns) st.episode_returns.push_back(r);
      for (double r : o.stats.lifetime_returns) st.lifetime_returns.push_back(r);
    }
    if (static_cast<double>(st.aborted) >
        setup_.meta.max_abort_fraction * static_cast<double>(n))
      throw NumericError("meta-update " + std::to_string(st.update) + ": " +
                         std::to_string(st.aborted) + " of " + std::to_string(n) +
                         " workers aborted (" + first_reason + ")");
    if (!eta_parts.empty()) {
      adam_update(eta_, aggregate_mean(eta_parts), eta_adam_, setup_.meta.eta_lr);
      adam_update(phi_, aggregate_mean(phi_parts), phi_adam_, setup_.meta.value_lr);
    }
    return st;
  }

  const TrainSetup& setup() const { return setup_; }
  const nn::Arch& arch() const { return arch_; }
  std::uint64_t seed() const { return seed_; }
  long updates() const { return updates_; }
  const ParamSet<T>& eta() const { return eta_; }
  const ParamSet<T>& phi() const { return phi_; }
  std::vector<Worker<T>>& workers() { return workers_; }

 private:
  TrainSetup setup_;
  std::uint64_t seed_;
  nn::Arch arch_;
  ParamSet<T> eta_, phi_;
  AdamState<T> eta_adam_, phi_adam_;
  std::vector<Worker<T>> workers_;
  long updates_ = 0;
};

template <class T>
struct TrainResult {
  ParamSet<T> eta;
  ParamSet<T> phi;
  std::vector<UpdateStats> stats;
};

template <class T>
TrainResult<T> train(const TrainSetup& setup, std::uint64_t seed,
                     const std::function<void(const Trainer<T>&, const UpdateStats&)>&
                         on_update = {}) {
  Trainer<T> trainer(setup, seed);
  TrainResult<T> out;
  out.stats.reserve(static_cast<std::size_t>(setup.meta.meta_updates));
  for (long u = 0; u < setup.meta.meta_updates; ++u) {
    out.stats.push_back(trainer.step());
    if (on_update) on_update(trainer, out.stats.back());
  }
  out.eta = trainer.eta();
  out.phi = trainer.phi();
  return out;
}

}  // namespace irf::meta
