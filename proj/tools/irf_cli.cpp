#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "irf/harness/gradcheck_suite.hpp"
#include "irf/harness/runs.hpp"

using namespace irf;
using namespace irf::harness;

namespace {

ConfigPairs pairs_from_file(const std::string& path) {
  if (path.empty()) return {};
  return parse_config_text(read_file(path));
}

std::optional<env::Domain> domain_arg(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return env::parse_domain(s);
}

void print_row(const MetricsRow& r) {
  std::printf("%s %ld", r.phase == Phase::Train ? "update" : "episode", r.index);
  if (r.mean_episode_return) std::printf("  episode_return %.4f", *r.mean_episode_return);
  if (r.mean_lifetime_return) std::printf("  lifetime_return %.3f", *r.mean_lifetime_return);
  if (r.mean_intrinsic_reward) std::printf("  intrinsic %.4f", *r.mean_intrinsic_reward);
  if (r.policy_entropy) std::printf("  entropy %.3f", *r.policy_entropy);
  std::printf("\n");
  std::fflush(stdout);
}

template <class F>
auto with_precision(Precision p, F&& f) {
  if (p == Precision::Float64) return f(double{});
  return f(float{});
}

int cmd_train(const std::string& domain, const std::string& config, const std::string& out,
              std::optional<std::uint64_t> seed, std::optional<long> updates, bool quiet) {
  auto pairs = pairs_from_file(config);
  auto cfg = build_config(pairs, domain_arg(domain));
  if (seed) cfg.seeds = {*seed};
  if (updates) cfg.train.meta.meta_updates = *updates;
  cfg.validate();
  const fs::path dir = out.empty() ? fs::path(cfg.output_dir) : fs::path(out);
  for (auto s : cfg.seeds) {
    const auto run = with_precision(cfg.precision, [&](auto t) {
      return run_training<decltype(t)>(cfg, s, dir, quiet ? std::function<void(const MetricsRow&)>{}
                                                          : print_row);
    });
    std::printf("seed %llu: %zu metrics rows -> %s, final checkpoint -> %s\n",
                static_cast<unsigned long long>(s), run.rows.size(), run.metrics_path.c_str(),
                run.checkpoints.back().c_str());
  }
  return 0;
}

// Evaluation keeps the checkpoint's architecture. When the domain is the one
// trained on, every other setting carries over as well.
ExperimentConfig eval_config(const Checkpoint& ckpt, const std::string& domain,
                             const std::string& config) {
  const auto trained = parse_config_text(ckpt.config_text);
  const auto trained_cfg = build_config(trained);
  const auto d = domain.empty() ? trained_cfg.train.domain : env::parse_domain(domain);
  ConfigPairs pairs;
  for (const auto& kv : trained) {
    const bool arch = kv.first.starts_with("arch.") || kv.first == "reward_input";
    if (arch || d == trained_cfg.train.domain) pairs.push_back(kv);
  }
  for (auto& kv : pairs_from_file(config)) pairs.push_back(std::move(kv));
  return build_config(pairs, d);
}

void report(const EvalRun& run, const fs::path& path, bool key_box) {
  for (const auto& r : run.rows) print_row(r);
  std::printf("mean lifetime return %.4f over %zu lifetimes\n", run.mean_lifetime_return(),
              run.lifetimes.size());
  if (key_box) std::printf("box-opening rate %.4f\n", run.box_opening_rate());
  std::printf("metrics -> %s\n", path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned intrinsic rewards for gridworld agents"};
  app.require_subcommand(1);

  std::string domain, config, out, checkpoint, agent_name, actions, method, scale = "tiny";
  std::optional<std::uint64_t> seed;
  std::optional<long> updates;
  std::optional<int> lifetimes, episodes;
  std::optional<double> alpha;
  double corrupt = 1.0;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "meta-learn an intrinsic reward");
  train->add_option("--domain", domain, "empty_rooms|fixed_abc|random_abc|nonstationary_abc|key_box");
  train->add_option("--config", config, "key = value configuration file");
  train->add_option("--out", out, "output directory (default $IRF_OUTPUT_DIR or runs)");
  train->add_option("--seed", seed, "single seed overriding the configured list");
  train->add_option("--updates", updates, "meta-updates");
  train->add_flag("--quiet", quiet, "no per-interval progress lines");

  auto* eval = app.add_subcommand("eval", "train fresh agents on a frozen learned reward");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--domain", domain, "evaluation domain (default: the trained one)");
  eval->add_option("--config", config, "extra configuration overrides");
  eval->add_option("--lifetimes", lifetimes, "number of agent lifetimes");
  eval->add_option("--agent", agent_name, "pg|q");
  eval->add_option("--actions", actions, "standard|permuted|extended");
  eval->add_option("--alpha", alpha, "agent step size");
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_option("--out", out, "output directory");

  auto* base = app.add_subcommand("baseline", "hand-designed comparison agents");
  base->add_option("--method", method, "extrinsic_ep|extrinsic_life|count|heuristic")->required();
  base->add_option("--domain", domain, "domain")->required();
  base->add_option("--config", config, "configuration file");
  base->add_option("--lifetimes", lifetimes, "number of agent lifetimes");
  base->add_option("--episodes", episodes, "episodes per lifetime");
  base->add_option("--agent", agent_name, "pg|q");
  base->add_option("--seed", seed, "seed");
  base->add_option("--out", out, "output directory");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("--scale", scale, "tiny|small");
  grad->add_option("--corrupt-analytic", corrupt, "test hook: scale every analytic gradient");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(domain, config, out, seed, updates, quiet);

    if (*eval) {
      const auto ckpt = load_checkpoint(checkpoint);
      auto cfg = eval_config(ckpt, domain, config);
      if (!agent_name.empty()) cfg.agent = parse_agent(agent_name);
      if (!actions.empty()) cfg.train.mode = env::parse_action_mode(actions);
      if (alpha) cfg.train.inner.alpha = *alpha;
      cfg.validate();
      const auto s = seed.value_or(ckpt.seed);
      const int k = lifetimes.value_or(cfg.eval_lifetimes);
      const auto run = with_precision(cfg.precision, [&](auto t) {
        return run_evaluation<decltype(t)>(cfg, ckpt, s, k);
      });
      const fs::path dir = out.empty() ? fs::path(cfg.output_dir) : fs::path(out);
      const auto path = write_eval_outputs(run, dir, "eval_" + seed_tag(s));
      report(run, path, cfg.train.domain == env::Domain::KeyBox);
      return 0;
    }

    if (*base) {
      auto pairs = pairs_from_file(config);
      auto cfg = build_config(pairs, env::parse_domain(domain));
      if (episodes) cfg.train.env.episodes_per_lifetime = *episodes;
      if (!agent_name.empty()) cfg.agent = parse_agent(agent_name);
      cfg.validate();
      const auto m = baselines::parse_method(method);
      const auto s = seed.value_or(cfg.seeds.front());
      const int k = lifetimes.value_or(cfg.eval_lifetimes);
      const auto run = with_precision(cfg.precision, [&](auto t) {
        return run_baseline<decltype(t)>(cfg, m, s, k);
      });
      const fs::path dir = out.empty() ? fs::path(cfg.output_dir) : fs::path(out);
      const auto path =
          write_eval_outputs(run, dir, "baseline_" + std::string(baselines::to_string(m)) + "_" + seed_tag(s));
      report(run, path, cfg.train.domain == env::Domain::KeyBox);
      return 0;
    }

    if (*grad) {
      GradcheckScale sc;
      if (scale == "tiny")
        sc = GradcheckScale::Tiny;
      else if (scale == "small")
        sc = GradcheckScale::Small;
      else
        throw ConfigError("unknown gradcheck scale '" + scale + "'");
      bool ok = true;
      for (const auto& l : run_gradcheck_suite(sc, {.analytic_scale = corrupt})) {
        std::printf("%-4s %-48s max rel err %.3e (threshold %.0e) %s\n", l.ok() ? "ok" : "FAIL",
                    l.name.c_str(), l.error, l.threshold, l.detail.c_str());
        ok = ok && l.ok();
      }
      std::printf("%s\n", ok ? "all gradient checks passed" : "gradient check failed");
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
