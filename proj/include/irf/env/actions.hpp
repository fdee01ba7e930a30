#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "irf/core/error.hpp"

namespace irf::env {

enum class Action : std::uint8_t {
  Up,
  Down,
  Left,
  Right,
  UpLeft,
  UpRight,
  DownLeft,
  DownRight,
};

inline constexpr int kBaseActions = 4;
inline constexpr int kExtendedActions = 8;

/// How agent action indices map onto environment movements.
enum class ActionMode : std::uint8_t { Standard, Permuted, Extended };

struct CellDelta {
  int drow = 0;
  int dcol = 0;
  friend bool operator==(CellDelta, CellDelta) = default;
};

/// Movement of an action, before any wall clipping.
constexpr CellDelta delta(Action a) {
  switch (a) {
    case Action::Up: return {-1, 0};
    case Action::Down: return {1, 0};
    case Action::Left: return {0, -1};
    case Action::Right: return {0, 1};
    case Action::UpLeft: return {-1, -1};
    case Action::UpRight: return {-1, 1};
    case Action::DownLeft: return {1, -1};
    case Action::DownRight: return {1, 1};
  }
  return {};
}

/// Reverses both axes: Left<->Right, Up<->Down (diagonals follow).
constexpr Action permute(Action a) {
  switch (a) {
    case Action::Up: return Action::Down;
    case Action::Down: return Action::Up;
    case Action::Left: return Action::Right;
    case Action::Right: return Action::Left;
    case Action::UpLeft: return Action::DownRight;
    case Action::UpRight: return Action::DownLeft;
    case Action::DownLeft: return Action::UpRight;
    case Action::DownRight: return Action::UpLeft;
  }
  return a;
}

constexpr int action_count(ActionMode mode) {
  return mode == ActionMode::Extended ? kExtendedActions : kBaseActions;
}

/// Environment action for an agent's action index under `mode`.
inline Action to_env_action(int index, ActionMode mode) {
  expects(index >= 0 && index < action_count(mode),
          "action index " + std::to_string(index) + " out of range");
  const auto a = static_cast<Action>(index);
  return mode == ActionMode::Permuted ? permute(a) : a;
}

inline std::string_view to_string(ActionMode m) {
  switch (m) {
    case ActionMode::Standard: return "standard";
    case ActionMode::Permuted: return "permuted";
    case ActionMode::Extended: return "extended";
  }
  return "?";
}

inline ActionMode parse_action_mode(std::string_view s) {
  if (s == "standard") return ActionMode::Standard;
  if (s == "permuted") return ActionMode::Permuted;
  if (s == "extended") return ActionMode::Extended;
  throw ConfigError("unknown action mode '" + std::string(s) + "'");
}

}  // namespace irf::env
