// Acceptance suite: one PASS/FAIL line per criterion. Soft thresholds print
// WARN without failing the run.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>

#include "irf/harness/gradcheck_suite.hpp"
#include "irf/harness/runs.hpp"
#include "support/env_checks.hpp"
#include "support/estimator_checks.hpp"
#include "support/meta_checks.hpp"

using namespace irf;
using namespace irf::harness;

namespace {

struct Scale {
  long fixed_updates = 4000;
  int fixed_seeds = 5;
  int fixed_eval_agents = 10;
  long random_updates = 4000;
  int random_batch = 8;
  int random_eval_lifetimes = 30;
  std::uint64_t random_seed = 1;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

int failures = 0;

void verdict(int id, bool ok, const std::string& what) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void warn(int id, const std::string& what) {
  std::printf("WARN criterion %d: %s\n", id, what.c_str());
  std::fflush(stdout);
}

void note(const std::string& what) {
  std::printf("     %s\n", what.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("irf_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 1 ------------------------------------------------------------------------

void meta_gradient_correctness() {
  Clock clock;
  const auto toy = checks::make_meta_toy(checks::meta_toy_setup(), 1);
  const auto r = checks::meta_gradient_fd(toy, 1e-4, 1e-5);
  const double t = clock.seconds();
  note(r.detail());
  verdict(1, r.ok && t < 60,
          fmt("meta-gradient vs central differences, max rel err %.3e (< 1e-4), %.1f s (< 60 s)",
              r.error(), t));
}

// 2 ------------------------------------------------------------------------

void first_order_gradchecks() {
  Clock clock;
  CounterRng rng(42);
  double prim = 0;
  std::string worst = "none";
  for (const auto& c : primitive_cases()) {
    std::vector<Tensor<double>> xs;
    for (const auto& s : c.shapes) xs.push_back(random_tensor(s, rng, -1, 1, c.min_abs));
    const double e = first_order_error(make_probe(c.f, xs, rng), xs, {});
    if (e > prim) {
      prim = e;
      worst = c.name;
    }
  }
  const double policy = policy_loss_gradcheck({});
  const double value = value_loss_gradcheck({});
  const double lstm = lstm_bptt_gradcheck({});
  const double t = clock.seconds();
  note(fmt("primitives %.3e, policy loss %.3e, value loss %.3e, lstm bptt 6 steps %.3e", prim,
           policy, value, lstm) + " (worst primitive: " + worst + ")");
  const bool ok = prim < 1e-6 && policy < 1e-6 && value < 1e-5 && lstm < 1e-5 && t < 30;
  verdict(2, ok,
          fmt("first-order gradchecks, primitives %.2e (< 1e-6), recurrent %.2e (< 1e-5), %.1f s "
              "(< 30 s)",
              prim, std::max({policy, value, lstm}), t));
}

// 3 ------------------------------------------------------------------------

void environment_oracles() {
  Clock clock;
  bool ok = true;
  auto check = [&](const checks::CheckResult& r, const std::string& what) {
    if (!r.ok) {
      ok = false;
      note(what + ": " + r.detail);
    }
  };
  check(checks::abc_transition_table(5), "5x5 transition table");
  for (auto d : {env::Domain::EmptyRooms, env::Domain::FixedABC, env::Domain::RandomABC,
                 env::Domain::NonstationaryABC, env::Domain::KeyBox}) {
    checks::RolloutStats st;
    check(checks::random_rollouts(d, 1000, 100 + static_cast<int>(d), &st),
          std::string(env::to_string(d)));
    note(std::string(env::to_string(d)) + ": " + std::to_string(st.episodes) + " episodes in " +
         std::to_string(st.lifetimes) + " lifetimes, longest " +
         std::to_string(st.max_episode_len) + " steps");
  }
  CounterRng rng(3);
  const auto task = env::sample_task(env::Domain::NonstationaryABC, rng);
  for (int e : {0, 249, 250, 499, 500, 749, 750, 999}) {
    const bool swapped = (e >= 250 && e < 500) || e >= 750;
    const auto r = env::effective_rewards(task, e);
    if (r.at(env::Object::A) != (swapped ? -1.0 : 1.0)) {
      ok = false;
      note("swap boundary wrong at episode " + std::to_string(e));
    }
  }
  const double t = clock.seconds();
  verdict(3, ok && t < 10,
          fmt("environment oracles: transition table, 10^3 rollouts per domain, swaps at "
              "250/500/750, %.1f s (< 10 s)",
              t));
}

// 4 ------------------------------------------------------------------------

void estimator_unbiasedness() {
  const auto pg = checks::bandit_policy_gradient(100000, 11);
  const auto mb = checks::bandit_meta_baseline(100000, 12);
  note(pg.detail);
  note(mb.detail);
  verdict(4, pg.ok && mb.ok,
          std::string("bandit, 10^5 windows: inner policy gradient within 3 SE ") +
              (pg.ok ? "yes" : "no") + ", meta-gradient with/without baseline within 3 SE " +
              (mb.ok ? "yes" : "no"));
}

// 5 ------------------------------------------------------------------------

void fixed_abc_reproduction(const Scale& sc) {
  Clock clock;
  auto cfg = preset_config(env::Domain::FixedABC);
  cfg.train.meta.batch_lifetimes = 8;
  cfg.train.meta.meta_updates = sc.fixed_updates;
  cfg.log_interval = 500;
  cfg.checkpoint_interval = sc.fixed_updates;
  int passing = 0;
  for (int s = 1; s <= sc.fixed_seeds; ++s) {
    const auto dir = scratch("fixed_seed" + std::to_string(s));
    const auto run = run_training<float>(cfg, static_cast<std::uint64_t>(s), dir);
    const auto eval = run_evaluation<float>(cfg, run.final, 1000 + static_cast<std::uint64_t>(s),
                                            sc.fixed_eval_agents);
    // Episodes 10 through 50, counted from one.
    const double m = eval.mean_episode_return(9, 50);
    if (m >= 0.9) ++passing;
    note(fmt("seed %.0f: mean episode return over episodes 10-50 = %.4f (%.0f s so far)", s, m,
             clock.seconds()));
  }
  verdict(5, passing >= 4 || (sc.fixed_seeds < 5 && passing == sc.fixed_seeds),
          fmt("fixed_abc, batch 8, %.0f meta-updates, 10 fresh agents: %.0f of %.0f seeds reach "
              ">= 0.9 (need 4 of 5), %.0f min",
              static_cast<double>(sc.fixed_updates), passing, sc.fixed_seeds,
              clock.seconds() / 60));
  if (clock.seconds() > 3600) warn(5, "runtime above the one-hour target");
}

// 6 and 9 ------------------------------------------------------------------

/// Uniformly random actions over a whole lifetime, on evaluation lifetime k's task.
double random_policy_return(const ExperimentConfig& cfg, std::uint64_t seed, int k) {
  EvalLifetime<float> l(cfg, seed, k);
  auto s = l.stream(cfg);
  const int n = env::action_count(cfg.train.mode);
  while (!s.finished())
    agent::collect_window(
        s, cfg.train.inner.unroll_length,
        [n](const env::Observation&, CounterRng& rng) {
          return static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        },
        agent::extrinsic_rewards<float>());
  return s.lifetime_return;
}

void random_abc_and_transfer(const Scale& sc, bool want6, bool want9) {
  Clock clock;
  auto cfg = preset_config(env::Domain::RandomABC);
  cfg.train.meta.batch_lifetimes = sc.random_batch;
  cfg.train.meta.meta_updates = sc.random_updates;
  cfg.log_interval = 500;
  cfg.checkpoint_interval = sc.random_updates;
  const auto run = run_training<float>(cfg, sc.random_seed, scratch("random_abc"));
  for (const auto& r : run.rows)
    if (r.mean_lifetime_return)
      note(fmt("training update %.0f: mean lifetime return %.3f", static_cast<double>(r.index),
               *r.mean_lifetime_return));
  const std::uint64_t eval_seed = 777;
  const int K = sc.random_eval_lifetimes;
  const auto learned = run_evaluation<float>(cfg, run.final, eval_seed, K);
  const double ours = learned.mean_lifetime_return();

  if (want6) {
    const auto ep = run_baseline<float>(cfg, baselines::Method::ExtrinsicEp, eval_seed, K);
    CounterRng orng(99);
    const auto oracle =
        baselines::heuristic_expected_lifetime_return({}, 50, 1000000, orng);
    const double frac = ours / oracle.mean;
    verdict(6, ours > ep.mean_lifetime_return(),
            fmt("random_abc: learned reward lifetime return %.3f > Extrinsic-EP %.3f "
                "(%.0f meta-updates, %.0f lifetimes)",
                ours, ep.mean_lifetime_return(), static_cast<double>(sc.random_updates), K));
    const std::string share =
        fmt("learned reward reaches %.1f%% of the heuristic oracle %.3f (soft target 70%%)",
            100 * frac, oracle.mean);
    if (frac >= 0.7)
      note(share);
    else
      warn(6, share);
  }

  if (want9) {
    auto permuted = cfg;
    permuted.train.mode = env::ActionMode::Permuted;
    const auto moved = run_evaluation<float>(permuted, run.final, eval_seed, K);
    double random_sum = 0;
    for (int k = 0; k < K; ++k) random_sum += random_policy_return(permuted, eval_seed, k);
    const double random_mean = random_sum / K;
    const double theirs = moved.mean_lifetime_return();
    verdict(9, std::isfinite(theirs) && theirs > random_mean,
            fmt("permuted actions: lifetime return %.3f > random policy %.3f (standard %.3f)",
                theirs, random_mean, ours));
    const double rel = std::abs(theirs - ours) / std::max(std::abs(ours), 1e-9);
    const std::string gap = fmt("permuted vs standard relative gap %.1f%% (soft target 20%%)",
                                100 * rel);
    if (rel <= 0.2)
      note(gap);
    else
      warn(9, gap);
  }
  note(fmt("random_abc criteria took %.1f min", clock.seconds() / 60));
}

// 7 ------------------------------------------------------------------------

void baseline_sanity() {
  bool decreasing = true;
  baselines::VisitCounts counts;
  double prev = INFINITY;
  for (int i = 0; i < 10000; ++i) {
    const double b = baselines::count_bonus(counts, 42, 0.1);
    if (!(b < prev && b > 0)) decreasing = false;
    prev = b;
  }
  // Heuristic over 200 lifetimes against the Monte-Carlo oracle's 99% band.
  auto cfg = preset_config(env::Domain::RandomABC);
  const auto run = run_baseline<double>(cfg, baselines::Method::Heuristic, 2024, 200);
  std::vector<double> life;
  for (const auto& l : run.lifetimes) life.push_back(l.lifetime_return);
  double mean = 0, sq = 0;
  for (double v : life) mean += v;
  mean /= static_cast<double>(life.size());
  for (double v : life) sq += (v - mean) * (v - mean);
  const double se_runs = std::sqrt(sq / static_cast<double>(life.size() - 1) /
                                   static_cast<double>(life.size()));
  CounterRng orng(5);
  const auto oracle = baselines::heuristic_expected_lifetime_return({}, 50, 1000000, orng);
  const double half = 2.576 * std::sqrt(se_runs * se_runs + oracle.se * oracle.se);
  const bool inside = std::abs(mean - oracle.mean) <= half;
  verdict(7, decreasing && inside,
          std::string("count bonus strictly decreasing over 10^4 visits: ") +
              (decreasing ? "yes" : "no") +
              fmt("; heuristic lifetime return %.3f over 200 lifetimes vs oracle %.3f, 99%% "
                  "band +-%.3f",
                  mean, oracle.mean, half));
}

// 8 ------------------------------------------------------------------------

void determinism() {
  auto cfg = preset_config(env::Domain::FixedABC);
  cfg.train.meta.batch_lifetimes = 4;
  cfg.train.meta.threads = 1;
  cfg.train.meta.meta_updates = 40;
  cfg.log_interval = 10;
  cfg.checkpoint_interval = 20;
  const auto a = run_training<float>(cfg, 8, scratch("det_a"));
  const auto b = run_training<float>(cfg, 8, scratch("det_b"));
  bool same = read_file(a.metrics_path) == read_file(b.metrics_path);
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i)
    same = same && read_file(a.checkpoints[i]) == read_file(b.checkpoints[i]);
  const auto ea = run_evaluation<float>(cfg, a.final, 3, 3);
  const auto eb = run_evaluation<float>(cfg, b.final, 3, 3);
  same = same && ea.rows == eb.rows;
  verdict(8, same && a.checkpoints.size() == b.checkpoints.size(),
          "identical seeds, single worker: metrics, checkpoints and evaluation rows bit-identical");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  Scale sc;
  std::set<int> only;
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--fixed-updates", sc.fixed_updates, "fixed_abc meta-updates per seed");
  app.add_option("--fixed-seeds", sc.fixed_seeds, "fixed_abc training seeds");
  app.add_option("--random-updates", sc.random_updates, "random_abc meta-updates");
  app.add_option("--random-batch", sc.random_batch, "random_abc lifetimes per meta-update");
  app.add_option("--random-lifetimes", sc.random_eval_lifetimes, "random_abc evaluation lifetimes");
  CLI11_PARSE(app, argc, argv);

  auto want = [&](int c) { return only.empty() || only.contains(c); };
  Clock clock;
  try {
    if (want(1)) meta_gradient_correctness();
    if (want(2)) first_order_gradchecks();
    if (want(3)) environment_oracles();
    if (want(4)) estimator_unbiasedness();
    if (want(7)) baseline_sanity();
    if (want(8)) determinism();
    if (want(5)) fixed_abc_reproduction(sc);
    if (want(6) || want(9)) random_abc_and_transfer(sc, want(6), want(9));
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed, %.1f min total\n", failures, clock.seconds() / 60);
  return failures == 0 ? 0 : 1;
}
