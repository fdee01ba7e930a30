#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "irf/harness/gradcheck_suite.hpp"
#include "irf/harness/runs.hpp"

using namespace irf;
using namespace irf::harness;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("irf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small enough to meta-train a few updates in well under a second.
ExperimentConfig small_config(const std::string& domain = "fixed_abc") {
  return load_config_text("domain = " + domain + R"(
[env]
room_size = 3
episodes = 3
time_limit = 5
[arch]
conv_filters = 2
fc_hidden = 4
lstm_hidden = 4
[meta]
outer_unroll = 2
batch_lifetimes = 2
meta_updates = 6
[run]
log_interval = 2
checkpoint_interval = 4
eval_lifetimes = 3
heatmap_steps = 7
)");
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, PresetsCarryDomainHyperparameters) {
  const auto fixed = preset_config(env::Domain::FixedABC);
  EXPECT_EQ(fixed.train.inner.unroll_length, 4);
  EXPECT_DOUBLE_EQ(fixed.train.inner.entropy_coef, 0.01);
  const auto rooms = preset_config(env::Domain::EmptyRooms);
  EXPECT_EQ(rooms.train.inner.unroll_length, 8);
  const auto ns = preset_config(env::Domain::NonstationaryABC);
  EXPECT_DOUBLE_EQ(ns.train.inner.entropy_coef, 0.05);
  const auto alt = preset_config(env::Domain::KeyBox, env::PresetVariant::Alternate);
  EXPECT_EQ(alt.train.inner.unroll_length, 16);
  EXPECT_DOUBLE_EQ(fixed.train.meta.eta_lr, 1e-3);
  EXPECT_DOUBLE_EQ(fixed.train.inner.gamma_bar, 0.9);
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    load_config_text("[meta]\nbogus_rate = 3\n");
    FAIL() << "accepted an unknown key";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("meta.bogus_rate"), std::string::npos) << e.what();
  }
}

TEST(Config, MalformedValuesRejected) {
  EXPECT_THROW(load_config_text("[inner]\nalpha = fast\n"), ConfigError);
  EXPECT_THROW(load_config_text("[inner]\nunroll_length = 0\n"), ConfigError);
  EXPECT_THROW(load_config_text("domain = maze\n"), ConfigError);
  EXPECT_THROW(load_config_text("[inner\nalpha = 1\n"), ConfigError);
  EXPECT_THROW(load_config_text("alpha\n"), ConfigError);
}

TEST(Config, SectionsAndCommentsApply) {
  const auto c = load_config_text(R"(
domain = random_abc   # trailing comment
agent = q_learning
action_mode = permuted
[inner]
alpha = 0.25
[meta]
use_baseline = false
)");
  EXPECT_EQ(c.train.domain, env::Domain::RandomABC);
  EXPECT_EQ(c.agent, AgentAlgo::Q);
  EXPECT_EQ(c.train.mode, env::ActionMode::Permuted);
  EXPECT_DOUBLE_EQ(c.train.inner.alpha, 0.25);
  EXPECT_FALSE(c.train.meta.use_baseline);
}

TEST(Config, TextRoundTrip) {
  auto c = small_config("key_box");
  c.seeds = {3, 9};
  c.train.inner.alpha = 0.123456789012345;
  const auto text = to_text(c);
  const auto back = load_config_text(text);
  EXPECT_EQ(to_text(back), text);
  EXPECT_EQ(back.seeds, c.seeds);
  EXPECT_EQ(back.train.arch, c.train.arch);
  EXPECT_EQ(back.train.inner.alpha, c.train.inner.alpha);
}

TEST(Config, DomainOverrideWins) {
  const auto c = load_config_text("domain = fixed_abc\n", env::Domain::EmptyRooms);
  EXPECT_EQ(c.train.domain, env::Domain::EmptyRooms);
  EXPECT_EQ(c.train.inner.unroll_length, 8);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

Checkpoint sample_checkpoint() {
  const auto cfg = small_config();
  const auto arch = meta::resolved_arch(cfg.train);
  CounterRng rng(5);
  return {to_text(cfg), 5, 17, nn::init_reward<double>(arch, cfg.train.reward_input, rng),
          nn::init_recurrent<double>(arch, rng)};
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = scratch("ckpt");
  const auto c = sample_checkpoint();
  save_checkpoint(c, dir / "a.irf");
  const auto loaded = load_checkpoint(dir / "a.irf");
  EXPECT_EQ(loaded, c);
  save_checkpoint(loaded, dir / "b.irf");
  EXPECT_EQ(read_file(dir / "a.irf"), read_file(dir / "b.irf"));
  EXPECT_EQ(read_file(dir / "a.irf").substr(0, 5), "IRFV1");
}

TEST(Checkpoint, ExtremeValuesRoundTripExactly) {
  auto c = sample_checkpoint();
  auto t = c.eta[0];
  t[0] = -0.0;
  t[1] = std::numeric_limits<double>::denorm_min();
  t[2] = std::nextafter(1.0, 2.0);
  c.eta.set(0, t);
  const auto back = deserialize(serialize(c));
  EXPECT_TRUE(std::signbit(back.eta[0][0]));
  EXPECT_EQ(back.eta[0][1], c.eta[0][1]);
  EXPECT_EQ(back.eta[0][2], c.eta[0][2]);
}

TEST(Checkpoint, CorruptBytesRejected) {
  const auto bytes = serialize(sample_checkpoint());
  EXPECT_THROW(deserialize("IRFV2" + bytes.substr(5)), ConfigError);
  EXPECT_THROW(deserialize(bytes.substr(0, bytes.size() - 3)), ConfigError);
  EXPECT_THROW(deserialize(bytes + "x"), ConfigError);
  auto bad_version = bytes;
  bad_version[5] = 7;
  EXPECT_THROW(deserialize(bad_version), ConfigError);
  // Every truncation point fails cleanly.
  for (std::size_t n = 0; n < bytes.size(); n += 97) EXPECT_THROW(deserialize(bytes.substr(0, n)), ConfigError);
}

TEST(Checkpoint, ShapesValidatedAgainstArchitecture) {
  const auto c = sample_checkpoint();
  const auto cfg = small_config();
  EXPECT_NO_THROW(validate_checkpoint(c, meta::resolved_arch(cfg.train), cfg.train.reward_input));
  auto wider = cfg;
  wider.train.arch.lstm_hidden = 5;
  EXPECT_THROW(validate_checkpoint(c, meta::resolved_arch(wider.train), cfg.train.reward_input),
               ShapeError);
  auto bigger_room = cfg;
  bigger_room.train.env.room_size = 5;
  EXPECT_THROW(
      validate_checkpoint(c, meta::resolved_arch(bigger_room.train), cfg.train.reward_input),
      ShapeError);
  EXPECT_THROW(validate_checkpoint(c, meta::resolved_arch(cfg.train), nn::RewardInput::FeedForward),
               ShapeError);
}

TEST(Checkpoint, RewardShapesIgnoreActionMode) {
  const auto c = sample_checkpoint();
  auto cfg = small_config();
  for (auto m : {env::ActionMode::Permuted, env::ActionMode::Extended}) {
    cfg.train.mode = m;
    EXPECT_NO_THROW(validate_checkpoint(c, meta::resolved_arch(cfg.train), cfg.train.reward_input));
  }
}

// ---------------------------------------------------------------------------
// Metrics and heatmaps

TEST(Metrics, FormatParseRoundTrip) {
  MetricsRow a{Phase::Train, 50, -1, 7, 0.25, 12.5, -0.001, 1.38, 0};
  MetricsRow b{Phase::Eval, 3, -1, 7, std::nullopt, 1.0 / 3.0, std::nullopt, std::nullopt, 12.75};
  const std::string text = std::string(kMetricsHeader) + "\n" + format_row(a) + "\n" + format_row(b) + "\n";
  const auto rows = parse_metrics(text);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], a);
  EXPECT_EQ(rows[1], b);
}

TEST(Metrics, NonFiniteNeverWritten) {
  MetricsRow r;
  r.mean_episode_return = std::nan("");
  EXPECT_THROW(format_row(r), NumericError);
  r.mean_episode_return = 1.0;
  r.wall_ms = INFINITY;
  EXPECT_THROW(format_row(r), NumericError);

  const auto dir = scratch("metrics");
  {
    MetricsWriter w(dir / "m.csv");
    w.write(MetricsRow{});
    r.wall_ms = 0;
    r.policy_entropy = -INFINITY;
    EXPECT_THROW(w.write(r), NumericError);
    EXPECT_EQ(w.rows(), 1);
  }
  EXPECT_EQ(parse_metrics(read_file(dir / "m.csv")).size(), 1u);
}

TEST(Metrics, StrictSchema) {
  const std::string h(kMetricsHeader);
  EXPECT_THROW(parse_metrics("phase,index\n"), ConfigError);
  EXPECT_THROW(parse_metrics(h + "\ntrain,1,-1,1,0,0,0,0\n"), ConfigError);
  EXPECT_THROW(parse_metrics(h + "\ntest,1,-1,1,0,0,0,0,0\n"), ConfigError);
  EXPECT_THROW(parse_metrics(h + "\ntrain,1,-1,1,nan,0,0,0,0\n"), ConfigError);
  EXPECT_THROW(parse_metrics(h + "\ntrain,1.5,-1,1,0,0,0,0,0\n"), ConfigError);
  EXPECT_THROW(parse_metrics(h + "\ntrain,1,-1,1,0,0,0,0,\n"), ConfigError);
  EXPECT_EQ(parse_metrics(h + "\ntrain,1,-1,1,,,,,0\n").size(), 1u);
}

namespace {

std::vector<std::vector<long>> read_grid(const fs::path& p) {
  std::vector<std::vector<long>> g;
  std::istringstream in(read_file(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<long> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stol(cell));
    g.push_back(row);
  }
  return g;
}

long grid_sum(const std::vector<long>& v) { return std::accumulate(v.begin(), v.end(), 0L); }

agent::LifetimeRecord heatmap_lifetime(long limit, std::uint64_t seed) {
  CounterRng rng(seed);
  auto task = env::sample_task(env::Domain::FixedABC, rng, {.episodes_per_lifetime = 4});
  const auto arch = nn::arch_for(task, env::ActionMode::Standard, {.conv_filters = 2, .fc_hidden = 4, .lstm_hidden = 4});
  agent::LifetimeStream<double> s(task, env::ActionMode::Standard, rng.split(1), arch.lstm_hidden);
  return agent::run_pg_lifetime(s, nn::init_policy<double>(arch, rng), {},
                                agent::extrinsic_rewards<double>(), limit);
}

}  // namespace

TEST(Heatmap, NoStepsIsAllZero) {
  const auto rec = heatmap_lifetime(0, 1);
  EXPECT_EQ(grid_sum(rec.visits), 0);
  const auto dir = scratch("heat0");
  emit_heatmap(rec.visits, rec.height, rec.width, dir / "h.csv");
  const auto g = read_grid(dir / "h.csv");
  ASSERT_EQ(static_cast<int>(g.size()), rec.height);
  for (const auto& row : g) {
    ASSERT_EQ(static_cast<int>(row.size()), rec.width);
    for (long v : row) EXPECT_EQ(v, 0);
  }
}

TEST(Heatmap, OneStepMarksStartAndNext) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto rec = heatmap_lifetime(1, seed);
    EXPECT_EQ(grid_sum(rec.visits), 2);
    const auto nonzero = std::count_if(rec.visits.begin(), rec.visits.end(), [](long v) { return v > 0; });
    EXPECT_TRUE(nonzero == 1 || nonzero == 2);
    // One cell holding both visits means the move was blocked.
    if (nonzero == 1) {
      EXPECT_NE(std::find(rec.visits.begin(), rec.visits.end(), 2), rec.visits.end());
    }
  }
}

TEST(Heatmap, VisitsAreConserved) {
  for (long limit : {5L, 17L, 100000L}) {
    const auto rec = heatmap_lifetime(limit, 3);
    EXPECT_EQ(grid_sum(rec.visits), std::min(limit, rec.steps) + 1);
    const auto dir = scratch("heat");
    emit_heatmap(rec.visits, rec.height, rec.width, dir / "h.csv");
    long total = 0;
    for (const auto& row : read_grid(dir / "h.csv")) total += std::accumulate(row.begin(), row.end(), 0L);
    EXPECT_EQ(total, grid_sum(rec.visits));
  }
}

TEST(Heatmap, WallsNeverVisited) {
  const auto rec = heatmap_lifetime(100000, 4);
  CounterRng rng(4);
  const auto task = env::sample_task(env::Domain::FixedABC, rng, {.episodes_per_lifetime = 4});
  for (int r = 0; r < rec.height; ++r)
    for (int c = 0; c < rec.width; ++c)
      if (task.layout->is_wall({r, c})) {
        EXPECT_EQ(rec.visits[static_cast<std::size_t>(r * rec.width + c)], 0);
      }
}

TEST(Heatmap, MismatchedGridRejected) {
  EXPECT_THROW(emit_heatmap({1, 2, 3}, 2, 2, scratch("bad") / "h.csv"), ContractViolation);
}

// ---------------------------------------------------------------------------
// Runners

TEST(Training, WritesMetricsAndCheckpoints) {
  const auto dir = scratch("train");
  const auto cfg = small_config();
  const auto run = run_training<double>(cfg, 11, dir);
  const auto rows = parse_metrics(read_file(run.metrics_path));
  EXPECT_EQ(static_cast<long>(rows.size()), cfg.train.meta.meta_updates / cfg.log_interval);
  for (const auto& r : rows) {
    EXPECT_EQ(r.phase, Phase::Train);
    EXPECT_EQ(r.seed, 11u);
    EXPECT_EQ(r.wall_ms, 0.0);
    EXPECT_TRUE(r.policy_entropy.has_value());
  }
  ASSERT_EQ(run.checkpoints.size(), 2u);
  for (const auto& p : run.checkpoints) EXPECT_TRUE(fs::exists(p));
  const auto final = load_checkpoint(run.checkpoints.back());
  EXPECT_EQ(final, run.final);
  EXPECT_EQ(final.updates, 6u);
  EXPECT_EQ(load_checkpoint(run.checkpoints.front()).updates, 4u);
  EXPECT_EQ(to_text(load_config_text(final.config_text)), final.config_text);
}

TEST(Training, SameSeedIsBitIdentical) {
  const auto cfg = small_config();
  const auto a = run_training<float>(cfg, 2, scratch("det_a"));
  const auto b = run_training<float>(cfg, 2, scratch("det_b"));
  EXPECT_EQ(read_file(a.metrics_path), read_file(b.metrics_path));
  EXPECT_EQ(serialize(a.final), serialize(b.final));
  const auto c = run_training<float>(cfg, 3, scratch("det_c"));
  EXPECT_NE(serialize(a.final), serialize(c.final));
}

TEST(Evaluation, PerEpisodeRowsAndFrozenReward) {
  const auto cfg = small_config("random_abc");
  const auto trained = run_training<double>(cfg, 1, scratch("eval_train"));
  const auto before = serialize(trained.final);
  const auto run = run_evaluation<double>(cfg, trained.final, 4, cfg.eval_lifetimes);
  EXPECT_EQ(serialize(trained.final), before);
  ASSERT_EQ(run.lifetimes.size(), 3u);
  ASSERT_EQ(run.rows.size(), 3u);  // one row per episode
  for (std::size_t e = 0; e < run.rows.size(); ++e) {
    EXPECT_EQ(run.rows[e].phase, Phase::Eval);
    EXPECT_EQ(run.rows[e].index, static_cast<long>(e));
    EXPECT_EQ(run.rows[e].lifetime_id, -1);
    double sum = 0;
    for (const auto& l : run.lifetimes) sum += l.episode_returns[e];
    EXPECT_NEAR(*run.rows[e].mean_episode_return, sum / 3, 1e-12);
  }
  EXPECT_EQ(grid_sum(run.lifetimes[0].visits), 8);
  const auto dir = scratch("eval_out");
  const auto p = write_eval_outputs(run, dir, "eval");
  EXPECT_EQ(parse_metrics(read_file(p)).size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "eval_heatmap.csv"));
}

TEST(Evaluation, TransferAxesReuseTheRewardUnchanged) {
  auto cfg = small_config("random_abc");
  const auto trained = run_training<double>(cfg, 1, scratch("transfer"));
  for (auto m : {env::ActionMode::Permuted, env::ActionMode::Extended}) {
    cfg.train.mode = m;
    const auto run = run_evaluation<double>(cfg, trained.final, 1, 2);
    EXPECT_EQ(run.rows.size(), 3u);
  }
  cfg.train.mode = env::ActionMode::Standard;
  cfg.agent = AgentAlgo::Q;
  EXPECT_EQ(run_evaluation<double>(cfg, trained.final, 1, 2).rows.size(), 3u);
}

TEST(Evaluation, CheckpointDomainMismatchRejected) {
  const auto trained = run_training<double>(small_config(), 1, scratch("mismatch"));
  auto other = small_config("key_box");
  other.train.env.room_size = 0;
  EXPECT_THROW(run_evaluation<double>(other, trained.final, 1, 1), ShapeError);
}

TEST(Evaluation, ZeroStepSizeGivesFlatCurve) {
  auto cfg = small_config("fixed_abc");
  cfg.train.env.episodes_per_lifetime = 40;
  const auto trained = run_training<double>(cfg, 1, scratch("flat"));
  cfg.train.inner.alpha = 0;
  const auto run = run_evaluation<double>(cfg, trained.final, 2, 30);
  // The policy never changes, so early and late episodes share one distribution.
  const double early = run.mean_episode_return(0, 20);
  const double late = run.mean_episode_return(20, 40);
  const double se = 1.0 / std::sqrt(30.0 * 20.0);
  EXPECT_NEAR(early, late, 4 * se);
  // Same for every lifetime: identical parameters in each episode.
  for (const auto& l : run.lifetimes) EXPECT_EQ(l.episode_returns.size(), 40u);
}

TEST(Baselines, SameSchemaAsEvaluation) {
  const auto cfg = small_config("random_abc");
  for (auto m : {baselines::Method::ExtrinsicEp, baselines::Method::ExtrinsicLife,
                 baselines::Method::Count, baselines::Method::Heuristic}) {
    const auto run = run_baseline<double>(cfg, m, 1, 2);
    ASSERT_EQ(run.rows.size(), 3u) << baselines::to_string(m);
    for (const auto& r : run.rows) EXPECT_EQ(r.phase, Phase::Eval);
  }
}

TEST(Baselines, HeuristicOutsideRandomAbcRejected) {
  EXPECT_THROW(run_baseline<double>(small_config("fixed_abc"), baselines::Method::Heuristic, 1, 1),
               ConfigError);
}

TEST(Baselines, EmptyRoomsReturnsBounded) {
  auto cfg = preset_config(env::Domain::EmptyRooms);
  cfg.train.env.episodes_per_lifetime = 5;
  cfg.train.arch = {.conv_filters = 2, .fc_hidden = 4, .lstm_hidden = 4};
  const auto run = run_baseline<float>(cfg, baselines::Method::ExtrinsicEp, 1, 2);
  for (const auto& l : run.lifetimes)
    for (double r : l.episode_returns) {
      EXPECT_GE(r, 0.0);
      EXPECT_LE(r, 1.0);
    }
}

TEST(Baselines, KeyBoxBoxOpeningRateCounted) {
  agent::LifetimeRecord l;
  l.episode_objects = {-1, 0, 1, 2, -1};
  EvalRun run;
  run.lifetimes = {l};
  EXPECT_DOUBLE_EQ(run.box_opening_rate(), 0.4);
}

// ---------------------------------------------------------------------------
// Gradient checks

TEST(GradcheckSuite, TinyScalePasses) {
  const auto lines = run_gradcheck_suite(GradcheckScale::Tiny);
  EXPECT_GT(lines.size(), 30u);
  for (const auto& l : lines) EXPECT_TRUE(l.ok()) << l.name << " " << l.error << " " << l.detail;
}

TEST(GradcheckSuite, CorruptedGradientFails) {
  const auto lines = run_gradcheck_suite(GradcheckScale::Tiny, {.analytic_scale = 1.001});
  EXPECT_TRUE(std::any_of(lines.begin(), lines.end(), [](const auto& l) { return !l.ok(); }));
}
