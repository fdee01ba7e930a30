#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "irf/core/error.hpp"
#include "irf/core/rng.hpp"
#include "irf/env/actions.hpp"
#include "irf/tensor/tensor.hpp"

namespace irf::env {

enum class Domain : std::uint8_t {
  EmptyRooms,
  FixedABC,
  RandomABC,
  NonstationaryABC,
  KeyBox,
};

enum class Object : std::uint8_t { A, B, C, Key };
inline constexpr int kNumObjects = 4;

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(Cell, Cell) = default;
  friend auto operator<=>(Cell, Cell) = default;
};

/// Observation planes, in channel order.
enum Channel : int {
  kAgentPlane,
  kWallPlane,
  kObjectAPlane,
  kObjectBPlane,
  kObjectCPlane,
  kKeyPlane,
  kCarriedKeyPlane,
  kNumChannels,
};

/// Static geometry. Cells outside the grid behave as walls.
struct Layout {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> wall;
  Cell agent_start;
  std::array<std::optional<Cell>, kNumObjects> fixed_objects;

  bool in_bounds(Cell c) const {
    return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width;
  }
  bool is_wall(Cell c) const {
    return wall[static_cast<std::size_t>(c.row * width + c.col)] != 0;
  }
  bool blocked(Cell c) const { return !in_bounds(c) || is_wall(c); }

  std::vector<Cell> floor_cells() const {
    std::vector<Cell> out;
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c)
        if (!is_wall({r, c})) out.push_back({r, c});
    return out;
  }
};

/// Per-domain values for episode clock, lifetime and inner learner.
struct DomainPreset {
  int time_limit = 0;
  int episodes_per_lifetime = 0;
  int unroll_length = 0;
  double entropy_coef = 0;
  double key_reward = 0;
  int room_size = 0;
};

/// KeyBox has two published parameterisations; Alternate selects the
/// longer-lifetime one.
enum class PresetVariant : std::uint8_t { Primary, Alternate };

inline DomainPreset preset(Domain d, PresetVariant v = PresetVariant::Primary) {
  switch (d) {
    case Domain::EmptyRooms: return {100, 200, 8, 0.01, 0.0, 5};
    case Domain::FixedABC: return {10, 200, 4, 0.01, 0.0, 5};
    case Domain::RandomABC: return {10, 50, 4, 0.01, 0.0, 5};
    case Domain::NonstationaryABC: return {10, 1000, 4, 0.05, 0.0, 5};
    case Domain::KeyBox:
      if (v == PresetVariant::Alternate) return {100, 5000, 16, 0.01, 0.0, 6};
      return {50, 200, 4, 0.01, -0.1, 6};
  }
  return {};
}

inline std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::EmptyRooms: return "empty_rooms";
    case Domain::FixedABC: return "fixed_abc";
    case Domain::RandomABC: return "random_abc";
    case Domain::NonstationaryABC: return "nonstationary_abc";
    case Domain::KeyBox: return "key_box";
  }
  return "?";
}

inline Domain parse_domain(std::string_view s) {
  for (auto d : {Domain::EmptyRooms, Domain::FixedABC, Domain::RandomABC,
                 Domain::NonstationaryABC, Domain::KeyBox})
    if (s == to_string(d)) return d;
  throw ConfigError("unknown domain '" + std::string(s) + "'");
}

/// Overrides applied on top of a domain preset.
struct EnvConfig {
  PresetVariant variant = PresetVariant::Primary;
  int room_size = 0;  // 0 keeps the preset
  std::optional<int> episodes_per_lifetime;
  std::optional<int> time_limit;
  std::optional<double> key_reward;
};

inline Layout make_layout(Domain d, int room_size) {
  expects(room_size >= 3, "room size must be at least 3");
  Layout l;
  if (d == Domain::EmptyRooms) {
    // Four rooms, one wall row/column between them, a door at the middle of
    // each shared wall segment.
    const int n = 2 * room_size + 1;
    const int mid = room_size;
    const int door_lo = room_size / 2;
    const int door_hi = room_size + 1 + room_size / 2;
    l.height = l.width = n;
    l.wall.assign(static_cast<std::size_t>(n * n), 0);
    for (int i = 0; i < n; ++i) {
      l.wall[static_cast<std::size_t>(mid * n + i)] = 1;
      l.wall[static_cast<std::size_t>(i * n + mid)] = 1;
    }
    for (int door : {door_lo, door_hi}) {
      l.wall[static_cast<std::size_t>(mid * n + door)] = 0;
      l.wall[static_cast<std::size_t>(door * n + mid)] = 0;
    }
    l.agent_start = {room_size / 2, room_size / 2};
    return l;
  }
  l.height = l.width = room_size;
  l.wall.assign(static_cast<std::size_t>(room_size * room_size), 0);
  if (d != Domain::KeyBox) {
    const int e = room_size - 1;
    l.agent_start = {0, 0};
    l.fixed_objects[static_cast<int>(Object::A)] = Cell{0, e};
    l.fixed_objects[static_cast<int>(Object::B)] = Cell{e, e};
    l.fixed_objects[static_cast<int>(Object::C)] = Cell{e, 0};
  }
  return l;
}

struct TaskSpec {
  Domain domain = Domain::FixedABC;
  std::map<Object, double> object_rewards;
  std::optional<Cell> goal_cell;
  std::optional<int> swap_period;
  int episode_time_limit = 1;
  int episodes_per_lifetime = 1;
  std::uint64_t layout_seed = 0;
  std::shared_ptr<const Layout> layout;
};

struct EnvState {
  Cell agent_cell;
  std::array<std::optional<Cell>, kNumObjects> object_cells;
  bool has_key = false;
  int episode_step = 0;
  int episode_index = 0;
  long lifetime_step = 0;
  bool episode_done = false;
  bool lifetime_done = false;
};

using Observation = Tensor<double>;

struct StepResult {
  Observation observation;
  double extrinsic_reward = 0;
  bool episode_done = false;
  bool lifetime_done = false;
};

inline TaskSpec sample_task(Domain d, CounterRng& rng,
                            const EnvConfig& cfg = {}) {
  const DomainPreset p = preset(d, cfg.variant);
  TaskSpec t;
  t.domain = d;
  t.episode_time_limit = cfg.time_limit.value_or(p.time_limit);
  t.episodes_per_lifetime =
      cfg.episodes_per_lifetime.value_or(p.episodes_per_lifetime);
  expects(t.episode_time_limit >= 1 && t.episodes_per_lifetime >= 1,
          "time limit and episodes per lifetime must be positive");
  t.layout = std::make_shared<const Layout>(
      make_layout(d, cfg.room_size > 0 ? cfg.room_size : p.room_size));
  t.layout_seed = rng();
  using enum Object;
  switch (d) {
    case Domain::EmptyRooms: {
      const auto cells = t.layout->floor_cells();
      t.goal_cell = cells[rng.below(cells.size())];
      break;
    }
    case Domain::FixedABC:
      t.object_rewards = {{A, 1.0}, {B, -0.5}, {C, 0.5}};
      break;
    case Domain::NonstationaryABC:
      t.object_rewards = {{A, 1.0}, {B, -0.5}, {C, -1.0}};
      t.swap_period = 250;
      break;
    case Domain::RandomABC:
    case Domain::KeyBox: {
      const double a = rng.uniform(-1.0, 1.0);
      const double b = rng.uniform(-0.5, 0.0);
      const double c = rng.uniform(0.0, 0.5);
      t.object_rewards = {{A, a}, {B, b}, {C, c}};
      if (d == Domain::KeyBox)
        t.object_rewards[Key] = cfg.key_reward.value_or(p.key_reward);
      break;
    }
  }
  return t;
}

/// Object rewards in force during `episode_index`.
inline std::map<Object, double> effective_rewards(const TaskSpec& task,
                                                  int episode_index) {
  expects(episode_index >= 0 && episode_index < task.episodes_per_lifetime,
          "episode index out of the lifetime");
  auto r = task.object_rewards;
  if (task.domain == Domain::NonstationaryABC && task.swap_period &&
      (episode_index / *task.swap_period) % 2 == 1)
    std::swap(r[Object::A], r[Object::C]);
  return r;
}

/// Cell reached from `from` by `a`; each axis is clipped separately, the
/// vertical component first.
inline Cell move(const Layout& layout, Cell from, Action a) {
  const CellDelta d = delta(a);
  Cell c = from;
  if (d.drow != 0) {
    const Cell next{c.row + d.drow, c.col};
    if (!layout.blocked(next)) c = next;
  }
  if (d.dcol != 0) {
    const Cell next{c.row, c.col + d.dcol};
    if (!layout.blocked(next)) c = next;
  }
  return c;
}

template <class T = double>
Tensor<T> observe(const TaskSpec& task, const EnvState& s) {
  const Layout& l = *task.layout;
  Tensor<T> obs(Shape{kNumChannels, l.height, l.width});
  auto put = [&](int ch, Cell c) {
    obs[static_cast<std::size_t>((ch * l.height + c.row) * l.width + c.col)] =
        T(1);
  };
  put(kAgentPlane, s.agent_cell);
  for (int r = 0; r < l.height; ++r)
    for (int c = 0; c < l.width; ++c)
      if (l.is_wall({r, c})) put(kWallPlane, {r, c});
  for (int o = 0; o < kNumObjects; ++o)
    if (s.object_cells[static_cast<std::size_t>(o)])
      put(kObjectAPlane + o, *s.object_cells[static_cast<std::size_t>(o)]);
  if (s.has_key) {
    const std::size_t plane = static_cast<std::size_t>(l.height * l.width);
    std::fill_n(obs.storage().begin() +
                    static_cast<std::ptrdiff_t>(kCarriedKeyPlane * plane),
                plane, T(1));
  }
  return obs;
}

/// Starts the lifetime (no prior state) or the episode after a finished one.
inline std::pair<EnvState, Observation> reset_episode(
    const TaskSpec& task, const std::optional<EnvState>& prior,
    CounterRng& rng) {
  EnvState s;
  if (prior) {
    if (!prior->episode_done)
      throw ContractViolation("reset_episode called on a live episode");
    if (prior->lifetime_done)
      throw ContractViolation("reset_episode called after the lifetime ended");
    s.episode_index = prior->episode_index + 1;
    s.lifetime_step = prior->lifetime_step;
  }
  const Layout& l = *task.layout;
  if (task.domain == Domain::KeyBox) {
    auto cells = l.floor_cells();
    // Partial Fisher-Yates: five distinct cells.
    for (std::size_t i = 0; i < 5; ++i) {
      const std::size_t j = i + rng.below(cells.size() - i);
      std::swap(cells[i], cells[j]);
    }
    s.agent_cell = cells[0];
    for (int o = 0; o < kNumObjects; ++o)
      s.object_cells[static_cast<std::size_t>(o)] =
          cells[static_cast<std::size_t>(o) + 1];
  } else {
    s.agent_cell = l.agent_start;
    s.object_cells = l.fixed_objects;
  }
  auto obs = observe(task, s);
  return {std::move(s), std::move(obs)};
}

/// Advances the episode by one action.
inline StepResult step(EnvState& s, const TaskSpec& task, Action a) {
  if (s.episode_done)
    throw ContractViolation("step called on a finished episode");
  const Layout& l = *task.layout;
  s.agent_cell = move(l, s.agent_cell, a);
  ++s.episode_step;
  ++s.lifetime_step;

  StepResult out;
  auto object_at = [&](Cell c) -> std::optional<Object> {
    for (int o = 0; o < kNumObjects; ++o)
      if (s.object_cells[static_cast<std::size_t>(o)] == c)
        return static_cast<Object>(o);
    return std::nullopt;
  };

  if (task.domain == Domain::EmptyRooms) {
    if (task.goal_cell && s.agent_cell == *task.goal_cell) {
      out.extrinsic_reward = 1.0;
      out.episode_done = true;
    }
  } else if (auto obj = object_at(s.agent_cell)) {
    const auto rewards = effective_rewards(task, s.episode_index);
    if (*obj == Object::Key) {
      s.has_key = true;
      s.object_cells[static_cast<int>(Object::Key)].reset();
      out.extrinsic_reward = rewards.at(Object::Key);
    } else if (task.domain != Domain::KeyBox || s.has_key) {
      out.extrinsic_reward = rewards.at(*obj);
      out.episode_done = true;
    }
  }
  if (s.episode_step >= task.episode_time_limit) out.episode_done = true;
  out.lifetime_done =
      out.episode_done && s.episode_index == task.episodes_per_lifetime - 1;
  s.episode_done = out.episode_done;
  s.lifetime_done = out.lifetime_done;
  out.observation = observe(task, s);
  return out;
}

/// Owns one lifetime's task, state and random stream.
class Environment {
 public:
  Environment(TaskSpec task, CounterRng rng)
      : task_(std::move(task)), rng_(rng) {
    auto [s, obs] = reset_episode(task_, std::nullopt, rng_);
    state_ = std::move(s);
    obs_ = std::move(obs);
  }

  const TaskSpec& task() const { return task_; }
  const EnvState& state() const { return state_; }
  const Observation& observation() const { return obs_; }

  StepResult step(Action a) {
    auto r = env::step(state_, task_, a);
    obs_ = r.observation;
    return r;
  }

  /// Begins the next episode after a finished one.
  void next_episode() {
    auto [s, obs] = reset_episode(task_, state_, rng_);
    state_ = std::move(s);
    obs_ = std::move(obs);
  }

 private:
  TaskSpec task_;
  CounterRng rng_;
  EnvState state_;
  Observation obs_;
};

}  // namespace irf::env
