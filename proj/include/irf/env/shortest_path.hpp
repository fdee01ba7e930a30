#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "irf/env/gridworld.hpp"

namespace irf::env {

/// Breadth-first distances to `target` from every cell, under the four base
/// moves. -1 marks walls and unreachable cells.
inline std::vector<int> distances_to(const Layout& l, Cell target) {
  std::vector<int> dist(static_cast<std::size_t>(l.height * l.width), -1);
  if (l.blocked(target)) return dist;
  auto at = [&](Cell c) -> int& {
    return dist[static_cast<std::size_t>(c.row * l.width + c.col)];
  };
  std::deque<Cell> queue{target};
  at(target) = 0;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    // Base moves are reversible, so distances to the target equal
    // distances from it.
    for (int a = 0; a < kBaseActions; ++a) {
      const Cell n = move(l, c, static_cast<Action>(a));
      if (n == c || at(n) >= 0) continue;
      at(n) = at(c) + 1;
      queue.push_back(n);
    }
  }
  return dist;
}

/// Fewest steps from the agent's cell to `target`; nullopt if unreachable.
inline std::optional<int> shortest_path(const Layout& l, Cell from,
                                        Cell target) {
  if (l.blocked(from)) return std::nullopt;
  const int d =
      distances_to(l, target)[static_cast<std::size_t>(from.row * l.width +
                                                       from.col)];
  if (d < 0) return std::nullopt;
  return d;
}

inline std::optional<int> shortest_path(const TaskSpec& task,
                                        const EnvState& state, Cell target) {
  return shortest_path(*task.layout, state.agent_cell, target);
}

/// First base action (in enum order) that reduces the distance to the target.
inline std::optional<Action> step_toward(const Layout& l, Cell from,
                                         const std::vector<int>& dist) {
  const int here = dist[static_cast<std::size_t>(from.row * l.width + from.col)];
  if (here <= 0) return std::nullopt;
  for (int a = 0; a < kBaseActions; ++a) {
    const Cell n = move(l, from, static_cast<Action>(a));
    if (dist[static_cast<std::size_t>(n.row * l.width + n.col)] == here - 1)
      return static_cast<Action>(a);
  }
  return std::nullopt;
}

}  // namespace irf::env
