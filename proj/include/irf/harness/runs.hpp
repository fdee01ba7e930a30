#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "irf/agent/lifetime.hpp"
#include "irf/baselines/baselines.hpp"
#include "irf/harness/checkpoint.hpp"
#include "irf/harness/config.hpp"
#include "irf/harness/metrics.hpp"
#include "irf/meta/trainer.hpp"

namespace irf::harness {

namespace fs = std::filesystem;

/// Mean with sorted summation, so the result ignores input order.
inline double sorted_mean(std::vector<double> v) {
  expects(!v.empty(), "sorted_mean: nothing to average");
  std::sort(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline std::string seed_tag(std::uint64_t seed) { return "seed" + std::to_string(seed); }

// ---------------------------------------------------------------------------
// Training

struct TrainRun {
  Checkpoint final;
  std::vector<MetricsRow> rows;
  fs::path metrics_path;
  std::vector<fs::path> checkpoints;
};

/// Mean over a logging interval of meta-updates.
class IntervalStats {
 public:
  void add(const meta::UpdateStats& s) {
    for (double r : s.episode_returns) episode_.push_back(r);
    for (double r : s.lifetime_returns) lifetime_.push_back(r);
    steps_ += s.steps;
    intrinsic_ += s.intrinsic_sum;
    entropy_ += s.entropy_sum;
  }

  MetricsRow row(long index, std::uint64_t seed, double wall_ms) const {
    MetricsRow r;
    r.phase = Phase::Train;
    r.index = index;
    r.seed = seed;
    if (!episode_.empty()) r.mean_episode_return = sorted_mean(episode_);
    if (!lifetime_.empty()) r.mean_lifetime_return = sorted_mean(lifetime_);
    if (steps_ > 0) {
      r.mean_intrinsic_reward = intrinsic_ / static_cast<double>(steps_);
      r.policy_entropy = entropy_ / static_cast<double>(steps_);
    }
    r.wall_ms = wall_ms;
    return r;
  }

 private:
  std::vector<double> episode_;
  std::vector<double> lifetime_;
  long steps_ = 0;
  double intrinsic_ = 0;
  double entropy_ = 0;
};

template <class T>
Checkpoint checkpoint_of(const ExperimentConfig& cfg, std::uint64_t seed,
                         const meta::Trainer<T>& tr) {
  return {to_text(cfg), seed, static_cast<std::uint64_t>(tr.updates()), to_double(tr.eta()),
          to_double(tr.phi())};
}

/// Meta-trains one seed. Writes `metrics_<seed>.csv`, a checkpoint every
/// `checkpoint_interval` updates and `final_<seed>.irf`.
template <class T>
TrainRun run_training(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& out_dir,
                      const std::function<void(const MetricsRow&)>& on_row = {}) {
  cfg.validate();
  TrainRun run;
  run.metrics_path = out_dir / ("metrics_" + seed_tag(seed) + ".csv");
  MetricsWriter writer(run.metrics_path);
  meta::Trainer<T> tr(cfg.train, seed);
  const auto t0 = std::chrono::steady_clock::now();
  IntervalStats interval;
  const long total = cfg.train.meta.meta_updates;
  for (long u = 1; u <= total; ++u) {
    interval.add(tr.step());
    if (u % cfg.log_interval == 0) {
      const double ms =
          cfg.record_wall_clock
              ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count()
              : 0.0;
      auto row = interval.row(u, seed, ms);
      writer.write(row);
      if (on_row) on_row(row);
      run.rows.push_back(row);
      interval = {};
    }
    if (u % cfg.checkpoint_interval == 0 && u != total) {
      const auto p = out_dir / ("checkpoint_" + seed_tag(seed) + "_u" + std::to_string(u) + ".irf");
      save_checkpoint(checkpoint_of(cfg, seed, tr), p);
      run.checkpoints.push_back(p);
    }
  }
  run.final = checkpoint_of(cfg, seed, tr);
  const auto p = out_dir / ("final_" + seed_tag(seed) + ".irf");
  save_checkpoint(run.final, p);
  run.checkpoints.push_back(p);
  return run;
}

// ---------------------------------------------------------------------------
// Evaluation and baselines

struct EvalRun {
  std::vector<agent::LifetimeRecord> lifetimes;
  std::vector<MetricsRow> rows;

  double mean_lifetime_return() const {
    std::vector<double> v;
    for (const auto& l : lifetimes) v.push_back(l.lifetime_return);
    return sorted_mean(v);
  }
  /// Mean over lifetimes of the average return over episodes [first, last).
  double mean_episode_return(std::size_t first, std::size_t last) const {
    std::vector<double> v;
    for (const auto& l : lifetimes)
      for (std::size_t e = first; e < std::min(last, l.episode_returns.size()); ++e)
        v.push_back(l.episode_returns[e]);
    return v.empty() ? 0.0 : sorted_mean(v);
  }
  /// Fraction of episodes that ended on a box (object A or B) with the key.
  double box_opening_rate() const {
    long opened = 0, total = 0;
    for (const auto& l : lifetimes)
      for (int o : l.episode_objects) {
        ++total;
        if (o == static_cast<int>(env::Object::A) || o == static_cast<int>(env::Object::B))
          ++opened;
      }
    return total ? static_cast<double>(opened) / static_cast<double>(total) : 0.0;
  }
};

/// One eval row per episode index, each field averaged over the lifetimes
/// that reached that episode.
inline std::vector<MetricsRow> eval_rows(const std::vector<agent::LifetimeRecord>& lifetimes,
                                         std::uint64_t seed) {
  std::size_t episodes = 0;
  std::vector<double> life;
  for (const auto& l : lifetimes) {
    episodes = std::max(episodes, l.episode_returns.size());
    life.push_back(l.lifetime_return);
  }
  const double mean_life = life.empty() ? 0.0 : sorted_mean(life);
  std::vector<MetricsRow> rows;
  for (std::size_t e = 0; e < episodes; ++e) {
    std::vector<double> ret, intr, ent;
    for (const auto& l : lifetimes) {
      if (e < l.episode_returns.size()) ret.push_back(l.episode_returns[e]);
      if (e < l.episode_intrinsic.size()) intr.push_back(l.episode_intrinsic[e]);
      if (e < l.episode_entropy.size()) ent.push_back(l.episode_entropy[e]);
    }
    MetricsRow r;
    r.phase = Phase::Eval;
    r.index = static_cast<long>(e);
    r.seed = seed;
    if (!ret.empty()) r.mean_episode_return = sorted_mean(ret);
    r.mean_lifetime_return = mean_life;
    if (!intr.empty()) r.mean_intrinsic_reward = sorted_mean(intr);
    if (!ent.empty()) r.policy_entropy = sorted_mean(ent);
    rows.push_back(r);
  }
  return rows;
}

/// Task, stream and fresh agent parameters of evaluation lifetime `k`.
template <class T>
struct EvalLifetime {
  env::TaskSpec task;
  nn::Arch arch;
  ParamSet<T> theta;
  CounterRng rng;

  EvalLifetime(const ExperimentConfig& cfg, std::uint64_t seed, int k)
      : rng(CounterRng(seed).split(0x5EED0000ULL + static_cast<std::uint64_t>(k))) {
    task = env::sample_task(cfg.train.domain, rng, cfg.train.env);
    arch = nn::arch_for(task, cfg.train.mode, cfg.train.arch);
    theta = nn::init_policy<T>(arch, rng);
  }

  agent::LifetimeStream<T> stream(const ExperimentConfig& cfg) const {
    return {task, cfg.train.mode, rng.split(1), arch.lstm_hidden};
  }
};

template <class T, class RewardFn>
agent::LifetimeRecord run_agent_lifetime(const ExperimentConfig& cfg, const EvalLifetime<T>& l,
                                         const agent::InnerConfig& inner, RewardFn&& reward,
                                         long visit_limit) {
  auto s = l.stream(cfg);
  if (cfg.agent == AgentAlgo::Q)
    return agent::run_q_lifetime(s, l.theta, cfg.q, inner.unroll_length, reward, visit_limit);
  return agent::run_pg_lifetime(s, l.theta, inner, reward, visit_limit);
}

/// Trains `lifetimes` fresh agents on the frozen learned reward in `ckpt`.
/// Throws ShapeError when the checkpoint does not fit the configured domain.
template <class T>
EvalRun run_evaluation(const ExperimentConfig& cfg, const Checkpoint& ckpt, std::uint64_t seed,
                       int lifetimes) {
  cfg.validate();
  expects(lifetimes >= 1, "run_evaluation: need at least one lifetime");
  validate_checkpoint(ckpt, meta::resolved_arch(cfg.train), cfg.train.reward_input);
  const auto eta = from_double<T>(ckpt.eta);
  const auto eta_vars = constants_of(eta);
  const auto before = ckpt.eta.fingerprint();
  EvalRun run;
  for (int k = 0; k < lifetimes; ++k) {
    EvalLifetime<T> l(cfg, seed, k);
    run.lifetimes.push_back(run_agent_lifetime(
        cfg, l, cfg.train.inner,
        agent::eta_rewards<T>(cfg.train.reward_input, std::span<const Var<T>>(eta_vars)),
        k == 0 ? cfg.heatmap_steps : 0));
  }
  if (ckpt.eta.fingerprint() != before)
    throw ContractViolation("evaluation modified the learned reward");
  run.rows = eval_rows(run.lifetimes, seed);
  return run;
}

/// Hand-designed comparison agents under the evaluation protocol.
template <class T>
EvalRun run_baseline(const ExperimentConfig& cfg, baselines::Method method, std::uint64_t seed,
                     int lifetimes) {
  cfg.validate();
  expects(lifetimes >= 1, "run_baseline: need at least one lifetime");
  if (method == baselines::Method::Heuristic && cfg.train.domain != env::Domain::RandomABC)
    throw ConfigError("the heuristic baseline is defined only for random_abc");
  EvalRun run;
  for (int k = 0; k < lifetimes; ++k) {
    EvalLifetime<T> l(cfg, seed, k);
    const long visits = k == 0 ? cfg.heatmap_steps : 0;
    switch (method) {
      case baselines::Method::ExtrinsicEp:
        run.lifetimes.push_back(run_agent_lifetime(cfg, l, baselines::extrinsic_ep_config(cfg.train.inner),
                                                   agent::extrinsic_rewards<T>(), visits));
        break;
      case baselines::Method::ExtrinsicLife:
        run.lifetimes.push_back(run_agent_lifetime(cfg, l,
                                                   baselines::extrinsic_life_config(cfg.train.inner),
                                                   agent::extrinsic_rewards<T>(), visits));
        break;
      case baselines::Method::Count: {
        baselines::VisitCounts counts;
        run.lifetimes.push_back(run_agent_lifetime(cfg, l, baselines::extrinsic_ep_config(cfg.train.inner),
                                                   baselines::count_rewards<T>(counts, cfg.count_beta),
                                                   visits));
        break;
      }
      case baselines::Method::Heuristic:
        run.lifetimes.push_back(baselines::run_heuristic_lifetime(l.task, l.rng.split(1), visits));
        break;
    }
  }
  run.rows = eval_rows(run.lifetimes, seed);
  return run;
}

/// Writes the rows of an evaluation or baseline run plus the first
/// lifetime's visit heatmap. Returns the metrics path.
inline fs::path write_eval_outputs(const EvalRun& run, const fs::path& out_dir,
                                   const std::string& stem) {
  const auto path = out_dir / (stem + ".csv");
  MetricsWriter w(path);
  for (const auto& r : run.rows) w.write(r);
  if (!run.lifetimes.empty()) {
    const auto& l = run.lifetimes.front();
    emit_heatmap(l.visits, l.height, l.width, out_dir / (stem + "_heatmap.csv"));
  }
  return path;
}

}  // namespace irf::harness
