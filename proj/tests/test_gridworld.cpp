#include <gtest/gtest.h>

#include <set>

#include "irf/env/gridworld.hpp"
#include "irf/env/shortest_path.hpp"
#include "support/env_checks.hpp"

using namespace irf;
using namespace irf::env;

namespace {

const std::vector<Domain> kAllDomains = {Domain::EmptyRooms, Domain::FixedABC,
                                         Domain::RandomABC,
                                         Domain::NonstationaryABC, Domain::KeyBox};

}  // namespace

TEST(SampleTask, FixedAbcRewards) {
  CounterRng rng(11);
  for (int i = 0; i < 5; ++i) {
    auto t = sample_task(Domain::FixedABC, rng);
    EXPECT_EQ(t.object_rewards.at(Object::A), 1.0);
    EXPECT_EQ(t.object_rewards.at(Object::B), -0.5);
    EXPECT_EQ(t.object_rewards.at(Object::C), 0.5);
    EXPECT_EQ(t.episode_time_limit, 10);
    EXPECT_EQ(t.episodes_per_lifetime, 200);
  }
}

TEST(SampleTask, NonstationarySchedule) {
  CounterRng rng(12);
  auto t = sample_task(Domain::NonstationaryABC, rng);
  EXPECT_EQ(t.swap_period, 250);
  EXPECT_EQ(t.episodes_per_lifetime, 1000);
  EXPECT_EQ(t.object_rewards.at(Object::A), 1.0);
  EXPECT_EQ(t.object_rewards.at(Object::B), -0.5);
  EXPECT_EQ(t.object_rewards.at(Object::C), -1.0);
}

TEST(SampleTask, RandomAbcRangesOverManyDraws) {
  CounterRng rng(13);
  double lo[3] = {1e9, 1e9, 1e9}, hi[3] = {-1e9, -1e9, -1e9};
  for (int i = 0; i < 10000; ++i) {
    auto t = sample_task(Domain::RandomABC, rng);
    int k = 0;
    for (auto o : {Object::A, Object::B, Object::C}) {
      lo[k] = std::min(lo[k], t.object_rewards.at(o));
      hi[k] = std::max(hi[k], t.object_rewards.at(o));
      ++k;
    }
  }
  EXPECT_GE(lo[0], -1.0); EXPECT_LE(hi[0], 1.0);
  EXPECT_GE(lo[1], -0.5); EXPECT_LE(hi[1], 0.0);
  EXPECT_GE(lo[2], 0.0);  EXPECT_LE(hi[2], 0.5);
  // The draws also cover their intervals.
  EXPECT_LT(lo[0], -0.99); EXPECT_GT(hi[0], 0.99);
  EXPECT_LT(lo[1], -0.49); EXPECT_GT(hi[1], -0.01);
  EXPECT_LT(lo[2], 0.01);  EXPECT_GT(hi[2], 0.49);
}

TEST(SampleTask, EmptyRoomsSingleGoalUniformOverFloor) {
  CounterRng rng(14);
  std::map<std::pair<int, int>, int> hits;
  auto probe = sample_task(Domain::EmptyRooms, rng);
  const auto floor = probe.layout->floor_cells();
  const int draws = 200 * static_cast<int>(floor.size());
  for (int i = 0; i < draws; ++i) {
    auto t = sample_task(Domain::EmptyRooms, rng);
    ASSERT_TRUE(t.goal_cell.has_value());
    ASSERT_FALSE(t.layout->is_wall(*t.goal_cell));
    ++hits[{t.goal_cell->row, t.goal_cell->col}];
  }
  EXPECT_EQ(hits.size(), floor.size());
  // Each count ~ Binomial(draws, 1/|floor|): mean 200, sd ~14.
  for (const auto& [cell, n] : hits) {
    EXPECT_GT(n, 200 - 5 * 15);
    EXPECT_LT(n, 200 + 5 * 15);
  }
}

TEST(SampleTask, KeyBoxVariants) {
  CounterRng rng(15);
  auto p = sample_task(Domain::KeyBox, rng);
  EXPECT_EQ(p.object_rewards.at(Object::Key), -0.1);
  EXPECT_EQ(p.episode_time_limit, 50);
  EXPECT_EQ(p.episodes_per_lifetime, 200);
  auto a = sample_task(Domain::KeyBox, rng, {.variant = PresetVariant::Alternate});
  EXPECT_EQ(a.object_rewards.at(Object::Key), 0.0);
  EXPECT_EQ(a.episode_time_limit, 100);
  EXPECT_EQ(a.episodes_per_lifetime, 5000);
}

TEST(Layout, EmptyRoomsGeometry) {
  auto l = make_layout(Domain::EmptyRooms, 5);
  EXPECT_EQ(l.height, 11);
  EXPECT_EQ(l.width, 11);
  EXPECT_TRUE(l.is_wall({5, 5}));
  EXPECT_TRUE(l.is_wall({5, 0}));
  EXPECT_FALSE(l.is_wall({5, 2}));  // doors at wall midpoints
  EXPECT_FALSE(l.is_wall({5, 8}));
  EXPECT_FALSE(l.is_wall({2, 5}));
  EXPECT_FALSE(l.is_wall({8, 5}));
  EXPECT_EQ(l.floor_cells().size(), 4u * 25u + 4u);
}

TEST(ResetEpisode, EmptyRoomsStartsAtTopLeftRoomCentre) {
  CounterRng rng(16);
  auto t = sample_task(Domain::EmptyRooms, rng);
  auto [s, obs] = reset_episode(t, std::nullopt, rng);
  EXPECT_EQ(s.agent_cell, (Cell{2, 2}));
  EXPECT_EQ(s.episode_index, 0);
  EXPECT_EQ(s.episode_step, 0);
}

TEST(ResetEpisode, KeyBoxResamplesWithoutCollision) {
  CounterRng rng(17);
  auto t = sample_task(Domain::KeyBox, rng);
  auto [s, obs] = reset_episode(t, std::nullopt, rng);
  std::set<std::vector<int>> layouts;
  for (int i = 0; i < 20; ++i) {
    std::set<Cell> used{s.agent_cell};
    std::vector<int> sig{s.agent_cell.row, s.agent_cell.col};
    for (auto& c : s.object_cells) {
      ASSERT_TRUE(c.has_value());
      used.insert(*c);
      sig.push_back(c->row);
      sig.push_back(c->col);
    }
    EXPECT_EQ(used.size(), 5u);
    layouts.insert(sig);
    s.episode_done = true;
    std::tie(s, obs) = reset_episode(t, s, rng);
  }
  EXPECT_GT(layouts.size(), 1u);
}

TEST(ResetEpisode, LiveEpisodeIsContractViolation) {
  CounterRng rng(18);
  auto t = sample_task(Domain::FixedABC, rng);
  auto [s, obs] = reset_episode(t, std::nullopt, rng);
  EXPECT_THROW(reset_episode(t, s, rng), ContractViolation);
}

TEST(ResetEpisode, NonstationarySwapAfterEpisode250) {
  CounterRng rng(19);
  auto t = sample_task(Domain::NonstationaryABC, rng);
  EnvState s;
  s.episode_index = 249;
  s.episode_done = true;
  auto [next, obs] = reset_episode(t, s, rng);
  EXPECT_EQ(next.episode_index, 250);
  auto r = effective_rewards(t, next.episode_index);
  EXPECT_EQ(r.at(Object::A), -1.0);
  EXPECT_EQ(r.at(Object::C), 1.0);
}

TEST(EffectiveRewards, Examples) {
  CounterRng rng(20);
  auto ns = sample_task(Domain::NonstationaryABC, rng);
  auto r0 = effective_rewards(ns, 0);
  EXPECT_EQ(r0.at(Object::A), 1.0);
  EXPECT_EQ(r0.at(Object::B), -0.5);
  EXPECT_EQ(r0.at(Object::C), -1.0);
  auto r250 = effective_rewards(ns, 250);
  EXPECT_EQ(r250.at(Object::A), -1.0);
  EXPECT_EQ(r250.at(Object::B), -0.5);
  EXPECT_EQ(r250.at(Object::C), 1.0);
  EXPECT_EQ(effective_rewards(ns, 500).at(Object::A), 1.0);
  EXPECT_EQ(effective_rewards(ns, 749).at(Object::A), 1.0);
  EXPECT_EQ(effective_rewards(ns, 750).at(Object::A), -1.0);
  auto fixed = sample_task(Domain::FixedABC, rng);
  EXPECT_EQ(effective_rewards(fixed, 173), fixed.object_rewards);
  EXPECT_THROW(effective_rewards(fixed, 200), ContractViolation);
}

TEST(Step, ReachingObjectEndsEpisodeWithItsReward) {
  CounterRng rng(21);
  auto t = sample_task(Domain::FixedABC, rng);
  auto [s, obs] = reset_episode(t, std::nullopt, rng);
  s.agent_cell = {0, 3};  // A sits at (0, 4)
  auto out = step(s, t, Action::Right);
  EXPECT_EQ(out.extrinsic_reward, 1.0);
  EXPECT_TRUE(out.episode_done);
  EXPECT_FALSE(out.lifetime_done);
  EXPECT_THROW(step(s, t, Action::Left), ContractViolation);
}

TEST(Step, WallBumpIsNoOp) {
  CounterRng rng(22);
  auto t = sample_task(Domain::FixedABC, rng);
  auto [s, obs] = reset_episode(t, std::nullopt, rng);
  auto out = step(s, t, Action::Up);
  EXPECT_EQ(s.agent_cell, (Cell{0, 0}));
  EXPECT_EQ(out.extrinsic_reward, 0.0);
  EXPECT_FALSE(out.episode_done);
}

TEST(Step, KeyBoxBoxesInertWithoutKey) {
  CounterRng rng(23);
  auto t = sample_task(Domain::KeyBox, rng);
  EnvState s;
  s.agent_cell = {0, 0};
  s.object_cells[static_cast<int>(Object::A)] = Cell{0, 1};
  s.object_cells[static_cast<int>(Object::B)] = Cell{3, 3};
  s.object_cells[static_cast<int>(Object::C)] = Cell{4, 4};
  s.object_cells[static_cast<int>(Object::Key)] = Cell{0, 2};
  auto out = step(s, t, Action::Right);
  EXPECT_EQ(out.extrinsic_reward, 0.0);
  EXPECT_FALSE(out.episode_done);
  out = step(s, t, Action::Right);  // picks up the key
  EXPECT_EQ(out.extrinsic_reward, -0.1);
  EXPECT_FALSE(out.episode_done);
  EXPECT_TRUE(s.has_key);
  EXPECT_FALSE(s.object_cells[static_cast<int>(Object::Key)].has_value());
  const auto plane = static_cast<std::size_t>(36);
  EXPECT_EQ(out.observation[kCarriedKeyPlane * plane], 1.0);
  out = step(s, t, Action::Left);  // opens A
  EXPECT_EQ(out.extrinsic_reward, t.object_rewards.at(Object::A));
  EXPECT_TRUE(out.episode_done);
}

TEST(Step, TimeLimitEndsEpisodeWithZeroReward) {
  CounterRng rng(24);
  auto t = sample_task(Domain::FixedABC, rng);
  auto [s, obs] = reset_episode(t, std::nullopt, rng);
  StepResult out;
  for (int i = 0; i < 10; ++i) out = step(s, t, Action::Up);
  EXPECT_TRUE(out.episode_done);
  EXPECT_EQ(out.extrinsic_reward, 0.0);
  EXPECT_EQ(s.episode_step, 10);
}

TEST(Step, LifetimeEndsWithFinalEpisode) {
  CounterRng rng(25);
  auto t = sample_task(Domain::FixedABC, rng, {.episodes_per_lifetime = 2});
  Environment env(t, rng.split(1));
  StepResult out;
  do out = env.step(Action::Right); while (!out.episode_done);
  EXPECT_FALSE(out.lifetime_done);
  env.next_episode();
  do out = env.step(Action::Right); while (!out.episode_done);
  EXPECT_TRUE(out.lifetime_done);
  EXPECT_THROW(env.next_episode(), ContractViolation);
}

TEST(Actions, Permutation) {
  EXPECT_EQ(permute(Action::Left), Action::Right);
  EXPECT_EQ(permute(Action::Up), Action::Down);
  for (int i = 0; i < kExtendedActions; ++i) {
    auto a = static_cast<Action>(i);
    EXPECT_EQ(permute(permute(a)), a);
    EXPECT_EQ(delta(permute(a)).drow, -delta(a).drow);
    EXPECT_EQ(delta(permute(a)).dcol, -delta(a).dcol);
  }
  EXPECT_EQ(to_env_action(2, ActionMode::Permuted), Action::Right);
  EXPECT_EQ(to_env_action(7, ActionMode::Extended), Action::DownRight);
  EXPECT_THROW(to_env_action(4, ActionMode::Standard), ContractViolation);
}

TEST(Actions, DiagonalsOnThreeByThreeRoom) {
  // Enumerate all transitions; expected values from independent clamping.
  Layout l;
  l.height = l.width = 3;
  l.wall.assign(9, 0);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (int a = 0; a < kExtendedActions; ++a) {
        const auto d = delta(static_cast<Action>(a));
        const Cell want{std::clamp(r + d.drow, 0, 2), std::clamp(c + d.dcol, 0, 2)};
        EXPECT_EQ(move(l, {r, c}, static_cast<Action>(a)), want)
            << r << "," << c << " a=" << a;
      }
  EXPECT_EQ(move(l, {0, 1}, Action::UpRight), (Cell{0, 2}));
}

TEST(ShortestPath, Basics) {
  auto l = make_layout(Domain::FixedABC, 5);
  EXPECT_EQ(shortest_path(l, {1, 1}, {1, 2}), 1);
  EXPECT_EQ(shortest_path(l, {1, 1}, {1, 1}), 0);
  EXPECT_EQ(shortest_path(l, {0, 0}, {4, 4}), 8);
  auto rooms = make_layout(Domain::EmptyRooms, 5);
  EXPECT_FALSE(shortest_path(rooms, {0, 0}, {5, 5}).has_value());  // wall
  Layout sealed = l;
  sealed.wall[1 * 5 + 0] = 1;
  sealed.wall[0 * 5 + 1] = 1;
  EXPECT_FALSE(shortest_path(sealed, {4, 4}, {0, 0}).has_value());
}

TEST(ShortestPath, EmptyRoomsMatchesValueIteration) {
  auto l = make_layout(Domain::EmptyRooms, 5);
  const Cell target{10, 10};
  // Bellman relaxation over all cells until a fixed point.
  const int n = l.height * l.width;
  std::vector<int> v(static_cast<std::size_t>(n), 1 << 20);
  v[static_cast<std::size_t>(target.row * l.width + target.col)] = 0;
  for (bool changed = true; changed;) {
    changed = false;
    for (int r = 0; r < l.height; ++r)
      for (int c = 0; c < l.width; ++c) {
        if (l.is_wall({r, c}) || Cell{r, c} == target) continue;
        int best = 1 << 20;
        const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          Cell nb{r + dr[k], c + dc[k]};
          if (l.blocked(nb)) nb = {r, c};
          best = std::min(best, 1 + v[static_cast<std::size_t>(nb.row * l.width + nb.col)]);
        }
        auto& cur = v[static_cast<std::size_t>(r * l.width + c)];
        if (best < cur) cur = best, changed = true;
      }
  }
  const int dp = v[2 * 11 + 2];
  EXPECT_EQ(shortest_path(l, {2, 2}, target), dp);
  EXPECT_EQ(dp, 16);
  const auto dist = distances_to(l, target);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    if (!l.wall[i]) {
      EXPECT_EQ(dist[i], v[i]);
    }
  }
}

TEST(Properties, ExhaustiveAbcTransitionTable) {
  auto r = checks::abc_transition_table();
  EXPECT_TRUE(r.ok) << r.detail;
}

TEST(Properties, RandomRolloutsRespectInvariants) {
  for (auto d : kAllDomains) {
    checks::RolloutStats st;
    auto r = checks::random_rollouts(d, 1000, 100 + static_cast<int>(d), &st);
    EXPECT_TRUE(r.ok) << to_string(d) << ": " << r.detail;
    EXPECT_GE(st.episodes, 1000);
    EXPECT_LE(st.max_episode_len, preset(d).time_limit);
  }
}

TEST(Properties, DeterministicGivenSeedAndActions) {
  for (auto d : kAllDomains) {
    auto run = [d] {
      CounterRng rng(77);
      auto t = sample_task(d, rng);
      Environment env(t, rng.split(3));
      CounterRng actions(5);
      std::vector<double> trace;
      for (int i = 0; i < 400; ++i) {
        auto out = env.step(static_cast<Action>(actions.below(4)));
        trace.push_back(out.extrinsic_reward);
        trace.push_back(out.episode_done);
        for (double v : out.observation.storage()) trace.push_back(v);
        if (out.lifetime_done) break;
        if (out.episode_done) env.next_episode();
      }
      return trace;
    };
    EXPECT_EQ(run(), run()) << to_string(d);
  }
}

TEST(Observation, PlanesAndInvisibleGoal) {
  CounterRng rng(31);
  auto t = sample_task(Domain::EmptyRooms, rng);
  auto [s, obs] = reset_episode(t, std::nullopt, rng);
  EXPECT_EQ(obs.shape(), (Shape{kNumChannels, 11, 11}));
  double walls = 0;
  for (int i = 0; i < 121; ++i) walls += obs[kWallPlane * 121 + i];
  EXPECT_EQ(walls, 121 - 104);
  for (int ch = kObjectAPlane; ch < kNumChannels; ++ch)
    for (int i = 0; i < 121; ++i) EXPECT_EQ(obs[ch * 121 + i], 0.0);
}
