#pragma once

#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "irf/agent/inner_loop.hpp"
#include "irf/meta/trainer.hpp"

namespace irf::harness {

enum class AgentAlgo : std::uint8_t { Pg, Q };
enum class Precision : std::uint8_t { Float32, Float64 };

inline std::string_view to_string(AgentAlgo a) {
  return a == AgentAlgo::Pg ? "actor_critic_pg" : "q_learning";
}
inline AgentAlgo parse_agent(std::string_view s) {
  if (s == "actor_critic_pg" || s == "pg") return AgentAlgo::Pg;
  if (s == "q_learning" || s == "q") return AgentAlgo::Q;
  throw ConfigError("unknown agent '" + std::string(s) + "'");
}
inline std::string_view to_string(Precision p) {
  return p == Precision::Float32 ? "float32" : "float64";
}
inline Precision parse_precision(std::string_view s) {
  if (s == "float32") return Precision::Float32;
  if (s == "float64") return Precision::Float64;
  throw ConfigError("unknown precision '" + std::string(s) + "'");
}
inline std::string_view to_string(nn::RewardInput r) {
  return r == nn::RewardInput::Lstm ? "lstm" : "feedforward";
}
inline nn::RewardInput parse_reward_input(std::string_view s) {
  if (s == "lstm") return nn::RewardInput::Lstm;
  if (s == "feedforward") return nn::RewardInput::FeedForward;
  throw ConfigError("unknown reward_input '" + std::string(s) + "'");
}
inline std::string_view to_string(env::PresetVariant v) {
  return v == env::PresetVariant::Primary ? "primary" : "alternate";
}
inline env::PresetVariant parse_variant(std::string_view s) {
  if (s == "primary") return env::PresetVariant::Primary;
  if (s == "alternate") return env::PresetVariant::Alternate;
  throw ConfigError("unknown preset variant '" + std::string(s) + "'");
}

/// Directory used when no --out is given: $IRF_OUTPUT_DIR, else "runs".
inline std::string default_output_dir() {
  const char* v = std::getenv("IRF_OUTPUT_DIR");
  return v && *v ? std::string(v) : std::string("runs");
}

struct ExperimentConfig {
  meta::TrainSetup train;
  AgentAlgo agent = AgentAlgo::Pg;
  agent::QConfig q;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = default_output_dir();
  Precision precision = Precision::Float32;
  long log_interval = 50;
  long checkpoint_interval = 1000;
  bool record_wall_clock = false;
  int eval_lifetimes = 30;
  long heatmap_steps = 3000;
  double count_beta = 0.1;

  void validate() const {
    train.validate();
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (log_interval < 1) throw ConfigError("run.log_interval must be >= 1");
    if (checkpoint_interval < 1) throw ConfigError("run.checkpoint_interval must be >= 1");
    if (eval_lifetimes < 1) throw ConfigError("run.eval_lifetimes must be >= 1");
    if (!(count_beta > 0)) throw ConfigError("baseline.count_beta must be positive");
    if (!(q.epsilon >= 0 && q.epsilon <= 1)) throw ConfigError("q.epsilon must lie in [0, 1]");
  }
};

/// Every per-domain value of the hyperparameter table, desk-scale outer loop.
inline ExperimentConfig preset_config(env::Domain d,
                                      env::PresetVariant v = env::PresetVariant::Primary) {
  const auto p = env::preset(d, v);
  ExperimentConfig c;
  c.train.domain = d;
  c.train.env.variant = v;
  c.train.inner.unroll_length = p.unroll_length;
  c.train.inner.entropy_coef = p.entropy_coef;
  return c;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  const auto* end = v.data() + v.size();
  const auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end || v.empty())
    throw ConfigError("invalid value '" + v + "' for key '" + key + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid boolean '" + v + "' for key '" + key + "'");
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::uint64_t>(key, trim(item)));
  if (out.empty()) throw ConfigError("key '" + key + "' needs at least one seed");
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key,
                                  const std::string& value)>;

inline const std::map<std::string, Setter, std::less<>>& setters() {
  using C = ExperimentConfig;
  using S = const std::string&;
  auto integer = [](auto member) {
    return [member](C& c, S k, S v) { member(c) = parse_number<int>(k, v); };
  };
  auto real = [](auto member) {
    return [member](C& c, S k, S v) { member(c) = parse_number<double>(k, v); };
  };
  static const std::map<std::string, Setter, std::less<>> table{
      {"domain", [](C&, S, S) {}},  // consumed before the preset is built
      {"env.variant", [](C&, S, S) {}},
      {"seeds", [](C& c, S k, S v) { c.seeds = parse_seeds(k, v); }},
      {"output_dir", [](C& c, S, S v) { c.output_dir = v; }},
      {"precision", [](C& c, S, S v) { c.precision = parse_precision(v); }},
      {"agent", [](C& c, S, S v) { c.agent = parse_agent(v); }},
      {"action_mode", [](C& c, S, S v) { c.train.mode = env::parse_action_mode(v); }},
      {"reward_input", [](C& c, S, S v) { c.train.reward_input = parse_reward_input(v); }},
      {"objective", [](C& c, S, S v) { c.train.meta.objective = meta::parse_objective(v); }},
      {"env.room_size", integer([](C& c) -> int& { return c.train.env.room_size; })},
      {"env.episodes",
       [](C& c, S k, S v) { c.train.env.episodes_per_lifetime = parse_number<int>(k, v); }},
      {"env.time_limit",
       [](C& c, S k, S v) { c.train.env.time_limit = parse_number<int>(k, v); }},
      {"env.key_reward",
       [](C& c, S k, S v) { c.train.env.key_reward = parse_number<double>(k, v); }},
      {"inner.alpha", real([](C& c) -> double& { return c.train.inner.alpha; })},
      {"inner.gamma_bar", real([](C& c) -> double& { return c.train.inner.gamma_bar; })},
      {"inner.entropy_coef", real([](C& c) -> double& { return c.train.inner.entropy_coef; })},
      {"inner.unroll_length", integer([](C& c) -> int& { return c.train.inner.unroll_length; })},
      {"meta.outer_unroll", integer([](C& c) -> int& { return c.train.meta.outer_unroll; })},
      {"meta.gamma", real([](C& c) -> double& { return c.train.meta.gamma; })},
      {"meta.eta_lr", real([](C& c) -> double& { return c.train.meta.eta_lr; })},
      {"meta.value_lr", real([](C& c) -> double& { return c.train.meta.value_lr; })},
      {"meta.batch_lifetimes",
       integer([](C& c) -> int& { return c.train.meta.batch_lifetimes; })},
      {"meta.meta_updates",
       [](C& c, S k, S v) { c.train.meta.meta_updates = parse_number<long>(k, v); }},
      {"meta.objective",
       [](C& c, S, S v) { c.train.meta.objective = meta::parse_objective(v); }},
      {"meta.use_baseline",
       [](C& c, S k, S v) { c.train.meta.use_baseline = parse_bool(k, v); }},
      {"meta.max_abort_fraction",
       real([](C& c) -> double& { return c.train.meta.max_abort_fraction; })},
      {"meta.threads", integer([](C& c) -> int& { return c.train.meta.threads; })},
      {"meta.reward_input",
       [](C& c, S, S v) { c.train.reward_input = parse_reward_input(v); }},
      {"arch.conv_filters", integer([](C& c) -> int& { return c.train.arch.conv_filters; })},
      {"arch.fc_hidden", integer([](C& c) -> int& { return c.train.arch.fc_hidden; })},
      {"arch.lstm_hidden", integer([](C& c) -> int& { return c.train.arch.lstm_hidden; })},
      {"q.alpha", real([](C& c) -> double& { return c.q.alpha_q; })},
      {"q.gamma_bar", real([](C& c) -> double& { return c.q.gamma_bar; })},
      {"q.epsilon", real([](C& c) -> double& { return c.q.epsilon; })},
      {"run.log_interval",
       [](C& c, S k, S v) { c.log_interval = parse_number<long>(k, v); }},
      {"run.checkpoint_interval",
       [](C& c, S k, S v) { c.checkpoint_interval = parse_number<long>(k, v); }},
      {"run.record_wall_clock",
       [](C& c, S k, S v) { c.record_wall_clock = parse_bool(k, v); }},
      {"run.eval_lifetimes", integer([](C& c) -> int& { return c.eval_lifetimes; })},
      {"run.heatmap_steps",
       [](C& c, S k, S v) { c.heatmap_steps = parse_number<long>(k, v); }},
      {"baseline.count_beta", real([](C& c) -> double& { return c.count_beta; })},
  };
  return table;
}

}  // namespace detail

using ConfigPairs = std::vector<std::pair<std::string, std::string>>;

/// Flat `key = value` lines; `[section]` prefixes later keys with
/// "section."; '#' starts a comment. Unknown keys are rejected by name.
inline ConfigPairs parse_config_text(std::string_view text) {
  ConfigPairs out;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    const std::string full = section.empty() ? key : section + "." + key;
    if (!detail::setters().contains(full))
      throw ConfigError("unknown config key '" + full + "' (line " + std::to_string(line_no) +
                        ")");
    out.emplace_back(full, value);
  }
  return out;
}

/// Preset for the domain named in the text (or `domain_override`), then every
/// key applied in order.
inline ExperimentConfig build_config(const ConfigPairs& pairs,
                                     std::optional<env::Domain> domain_override = {}) {
  env::Domain d = env::Domain::FixedABC;
  env::PresetVariant v = env::PresetVariant::Primary;
  for (const auto& [k, val] : pairs) {
    if (k == "domain") d = env::parse_domain(val);
    if (k == "env.variant") v = parse_variant(val);
  }
  if (domain_override) d = *domain_override;
  auto cfg = preset_config(d, v);
  for (const auto& [k, val] : pairs) detail::setters().find(k)->second(cfg, k, val);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config_text(std::string_view text,
                                         std::optional<env::Domain> domain_override = {}) {
  return build_config(parse_config_text(text), domain_override);
}

/// Canonical text form; parsing it back yields the same configuration.
inline std::string to_text(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  const auto& t = c.train;
  os << "domain = " << env::to_string(t.domain) << "\n";
  os << "seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) os << (i ? "," : "") << c.seeds[i];
  os << "\n";
  os << "precision = " << to_string(c.precision) << "\n";
  os << "agent = " << to_string(c.agent) << "\n";
  os << "action_mode = " << env::to_string(t.mode) << "\n";
  os << "reward_input = " << to_string(t.reward_input) << "\n";
  os << "objective = " << meta::to_string(t.meta.objective) << "\n";
  os << "\n[env]\n";
  os << "variant = " << to_string(t.env.variant) << "\n";
  if (t.env.room_size) os << "room_size = " << t.env.room_size << "\n";
  if (t.env.episodes_per_lifetime) os << "episodes = " << *t.env.episodes_per_lifetime << "\n";
  if (t.env.time_limit) os << "time_limit = " << *t.env.time_limit << "\n";
  if (t.env.key_reward) os << "key_reward = " << *t.env.key_reward << "\n";
  os << "\n[inner]\n";
  os << "alpha = " << t.inner.alpha << "\n";
  os << "gamma_bar = " << t.inner.gamma_bar << "\n";
  os << "entropy_coef = " << t.inner.entropy_coef << "\n";
  os << "unroll_length = " << t.inner.unroll_length << "\n";
  os << "\n[meta]\n";
  os << "outer_unroll = " << t.meta.outer_unroll << "\n";
  os << "gamma = " << t.meta.gamma << "\n";
  os << "eta_lr = " << t.meta.eta_lr << "\n";
  os << "value_lr = " << t.meta.value_lr << "\n";
  os << "batch_lifetimes = " << t.meta.batch_lifetimes << "\n";
  os << "meta_updates = " << t.meta.meta_updates << "\n";
  os << "use_baseline = " << (t.meta.use_baseline ? "true" : "false") << "\n";
  os << "max_abort_fraction = " << t.meta.max_abort_fraction << "\n";
  os << "threads = " << t.meta.threads << "\n";
  os << "\n[arch]\n";
  os << "conv_filters = " << t.arch.conv_filters << "\n";
  os << "fc_hidden = " << t.arch.fc_hidden << "\n";
  os << "lstm_hidden = " << t.arch.lstm_hidden << "\n";
  os << "\n[q]\n";
  os << "alpha = " << c.q.alpha_q << "\n";
  os << "gamma_bar = " << c.q.gamma_bar << "\n";
  os << "epsilon = " << c.q.epsilon << "\n";
  os << "\n[run]\n";
  os << "log_interval = " << c.log_interval << "\n";
  os << "checkpoint_interval = " << c.checkpoint_interval << "\n";
  os << "record_wall_clock = " << (c.record_wall_clock ? "true" : "false") << "\n";
  os << "eval_lifetimes = " << c.eval_lifetimes << "\n";
  os << "heatmap_steps = " << c.heatmap_steps << "\n";
  os << "\n[baseline]\n";
  os << "count_beta = " << c.count_beta << "\n";
  return os.str();
}

}  // namespace irf::harness
