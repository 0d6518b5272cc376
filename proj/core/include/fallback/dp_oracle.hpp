#pragma once

// Exact finite-horizon backward induction over the simulator's integer
// (step, speed tick, position tick) grid. Transitions are produced by the
// simulator's own step(), so oracle values and simulated returns agree.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fallback/intersection_env.hpp"
#include "fallback/mdp.hpp"

namespace fallback {

enum class Constraint { none, cross_after_target_1 };

std::string_view to_string(Constraint c);
Constraint constraint_from_string(std::string_view text);

struct RolloutResult {
  double discounted_return = 0.0;
  double undiscounted_return = 0.0;
  Outcome outcome = Outcome::running;
  int length = 0;
  std::optional<double> crossing_time;  // s; first step at or past the conflict point
  CrossingClass crossing = CrossingClass::none;
  std::vector<Snapshot> snapshots;
};

struct OracleResult {
  Constraint constraint = Constraint::none;
  double value = 0.0;  // -inf when no admissible action sequence exists
  std::vector<Action> actions;
  RolloutResult rollout;  // the optimal script replayed through the simulator
  std::size_t states_evaluated = 0;
};

// Replays an action script; once the script runs out the ego holds its speed.
RolloutResult rollout_value(const EnvConfig& cfg, std::span<const Action> actions, double gamma);

// Throws ConfigError for configs without an exact grid.
OracleResult solve(const EnvConfig& cfg, double gamma, Constraint constraint);

// Q-values at the initial state, recomputed from the stored first-step value
// table: r + gamma * V*(s1(a)). Entries for inadmissible actions are -inf.
struct BellmanCheck {
  std::array<double, kNumActions> action_values{};
  double best = 0.0;
};
BellmanCheck bellman_at_start(const EnvConfig& cfg, double gamma, Constraint constraint);

struct ScanEntry {
  int accel = 0;
  int hold_steps = 0;
  RolloutResult rollout;
};

struct FeasibilityReport {
  std::vector<ScanEntry> entries;
  bool before_target_1_feasible = false;
  bool between_1_and_2_feasible = false;
  std::optional<ScanEntry> best_before;
  std::optional<ScanEntry> best_between;
};

// Scripts of the form "hold one acceleration for k steps, then zero".
FeasibilityReport feasibility_scan(const EnvConfig& cfg, double gamma);

}  // namespace fallback
