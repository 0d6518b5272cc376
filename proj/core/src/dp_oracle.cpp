#include "fallback/dp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fallback {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Upper bound on stored (step, speed, position) states across all slices.
constexpr std::size_t kMaxGridStates = 200'000'000;

struct GridKey {
  std::int64_t stride;
  std::uint64_t operator()(std::int64_t speed_ticks, std::int64_t position_ticks) const {
    return static_cast<std::uint64_t>(position_ticks) * static_cast<std::uint64_t>(stride) +
           static_cast<std::uint64_t>(speed_ticks);
  }
  std::int64_t speed(std::uint64_t key) const {
    return static_cast<std::int64_t>(key % static_cast<std::uint64_t>(stride));
  }
  std::int64_t position(std::uint64_t key) const {
    return static_cast<std::int64_t>(key / static_cast<std::uint64_t>(stride));
  }
};

struct Slice {
  std::vector<std::uint64_t> keys;  // sorted
  std::vector<std::int8_t> best;    // optimal action index, -1 if none admissible
};

struct Tables {
  GridKey key{1};
  std::vector<Slice> slices;
  std::vector<double> values0;
  std::vector<double> values1;
  std::size_t states = 0;
};

bool forbidden(const WorldState& from, const WorldState& to, const EnvConfig& cfg,
               Constraint constraint) {
  if (constraint != Constraint::cross_after_target_1 || cfg.target_count < 1) return false;
  const double conflict = cfg.conflict_arc_length();
  return from.ego_arc_length < conflict && to.ego_arc_length >= conflict &&
         to.target_distance[0] > 0.0;
}

std::ptrdiff_t find_key(const Slice& slice, std::uint64_t key) {
  const auto it = std::lower_bound(slice.keys.begin(), slice.keys.end(), key);
  if (it == slice.keys.end() || *it != key) return -1;
  return it - slice.keys.begin();
}

Tables build_tables(const EnvConfig& cfg, double gamma, Constraint constraint) {
  require_valid(cfg);
  if (auto problem = grid_exactness_problem(cfg)) {
    throw ConfigError("oracle needs an exact grid: " + *problem);
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");

  Tables tables;
  const std::int64_t kmax = speed_ticks_of(cfg.ego_speed_max, cfg);
  tables.key = GridKey{kmax + 1};
  const GridKey& key = tables.key;

  const WorldState start = reset(cfg);
  tables.slices.resize(static_cast<std::size_t>(cfg.max_steps) + 1);
  tables.slices[0].keys = {key(start.speed_ticks, start.position_ticks)};

  // Forward pass: reachable non-terminal states per step.
  for (int t = 0; t < cfg.max_steps; ++t) {
    const Slice& cur = tables.slices[static_cast<std::size_t>(t)];
    std::vector<std::uint64_t> next;
    next.reserve(cur.keys.size() * 3);
    for (std::uint64_t k : cur.keys) {
      const WorldState w = make_grid_state(t, key.speed(k), key.position(k), cfg);
      for (std::size_t a = 0; a < kNumActions; ++a) {
        const StepResult r = step(w, Action::from_index(static_cast<int>(a)), cfg);
        if (forbidden(w, r.next, cfg, constraint) || r.terminal) continue;
        next.push_back(key(r.next.speed_ticks, r.next.position_ticks));
      }
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    tables.states += next.size();
    if (tables.states > kMaxGridStates) {
      throw ConfigError("oracle state grid exceeds " + std::to_string(kMaxGridStates) + " states");
    }
    tables.slices[static_cast<std::size_t>(t) + 1].keys = std::move(next);
  }
  tables.states += 1;

  // Backward induction.
  std::vector<double> next_values;
  for (int t = cfg.max_steps; t >= 0; --t) {
    Slice& cur = tables.slices[static_cast<std::size_t>(t)];
    const Slice* succ = t < cfg.max_steps ? &tables.slices[static_cast<std::size_t>(t) + 1] : nullptr;
    std::vector<double> values(cur.keys.size(), kNegInf);
    cur.best.assign(cur.keys.size(), -1);
    for (std::size_t i = 0; i < cur.keys.size(); ++i) {
      const WorldState w = make_grid_state(t, key.speed(cur.keys[i]), key.position(cur.keys[i]), cfg);
      for (std::size_t a = 0; a < kNumActions; ++a) {
        const StepResult r = step(w, Action::from_index(static_cast<int>(a)), cfg);
        if (forbidden(w, r.next, cfg, constraint)) continue;
        double q = r.reward;
        if (!r.terminal) {
          const std::ptrdiff_t j = find_key(*succ, key(r.next.speed_ticks, r.next.position_ticks));
          q += gamma * next_values[static_cast<std::size_t>(j)];
        }
        if (q > values[i]) {
          values[i] = q;
          cur.best[i] = static_cast<std::int8_t>(a);
        }
      }
    }
    if (t == 1) tables.values1 = values;
    if (t == 0) tables.values0 = values;
    next_values = std::move(values);
  }
  return tables;
}

}  // namespace

std::string_view to_string(Constraint c) {
  return c == Constraint::none ? "none" : "cross-after-target-1";
}

Constraint constraint_from_string(std::string_view text) {
  if (text == "none") return Constraint::none;
  if (text == "cross-after-target-1") return Constraint::cross_after_target_1;
  throw std::invalid_argument("unknown constraint '" + std::string(text) + "'");
}

RolloutResult rollout_value(const EnvConfig& cfg, std::span<const Action> actions, double gamma) {
  RolloutResult out;
  WorldState w = reset(cfg);
  out.snapshots.push_back(w.snapshot(cfg));
  const double conflict = cfg.conflict_arc_length();
  const Action hold = Action::from_accel(0);
  double weight = 1.0;
  std::size_t i = 0;
  while (!w.terminal()) {
    const Action a = i < actions.size() ? actions[i] : hold;
    ++i;
    const StepResult r = step(w, a, cfg);
    out.discounted_return += weight * r.reward;
    out.undiscounted_return += r.reward;
    weight *= gamma;
    if (!out.crossing_time && w.ego_arc_length < conflict && r.next.ego_arc_length >= conflict) {
      out.crossing_time = r.next.step * cfg.dt;
      out.crossing = classify_crossing(r.next, cfg);
    }
    w = r.next;
    out.snapshots.push_back(w.snapshot(cfg));
  }
  out.outcome = w.outcome;
  out.length = w.step;
  return out;
}

OracleResult solve(const EnvConfig& cfg, double gamma, Constraint constraint) {
  const Tables tables = build_tables(cfg, gamma, constraint);
  OracleResult result;
  result.constraint = constraint;
  result.states_evaluated = tables.states;
  result.value = tables.values0.at(0);
  if (!std::isfinite(result.value)) return result;

  WorldState w = reset(cfg);
  while (!w.terminal()) {
    const Slice& slice = tables.slices[static_cast<std::size_t>(w.step)];
    const std::ptrdiff_t j = find_key(slice, tables.key(w.speed_ticks, w.position_ticks));
    const Action a = Action::from_index(slice.best[static_cast<std::size_t>(j)]);
    result.actions.push_back(a);
    w = step(w, a, cfg).next;
  }
  result.rollout = rollout_value(cfg, result.actions, gamma);
  return result;
}

BellmanCheck bellman_at_start(const EnvConfig& cfg, double gamma, Constraint constraint) {
  const Tables tables = build_tables(cfg, gamma, constraint);
  BellmanCheck check;
  check.best = kNegInf;
  const WorldState w = reset(cfg);
  for (std::size_t a = 0; a < kNumActions; ++a) {
    const StepResult r = step(w, Action::from_index(static_cast<int>(a)), cfg);
    double q = kNegInf;
    if (!forbidden(w, r.next, cfg, constraint)) {
      q = r.reward;
      if (!r.terminal) {
        const std::ptrdiff_t j =
            find_key(tables.slices[1], tables.key(r.next.speed_ticks, r.next.position_ticks));
        q += gamma * tables.values1.at(static_cast<std::size_t>(j));
      }
    }
    check.action_values[a] = q;
    check.best = std::max(check.best, q);
  }
  return check;
}

FeasibilityReport feasibility_scan(const EnvConfig& cfg, double gamma) {
  require_valid(cfg);
  FeasibilityReport report;
  std::vector<int> holds;
  for (int k = 0; k <= 40; k += 2) holds.push_back(k);
  holds.push_back(cfg.max_steps);

  bool any_goal = false;
  for (int accel : kAccelerations) {
    for (int k : holds) {
      if (accel == 0 && k != 0) continue;  // all zero-hold scripts coincide
      ScanEntry entry;
      entry.accel = accel;
      entry.hold_steps = k;
      const std::vector<Action> script(static_cast<std::size_t>(k), Action::from_accel(accel));
      entry.rollout = rollout_value(cfg, script, gamma);
      if (entry.rollout.outcome == Outcome::goal) {
        any_goal = true;
        auto consider = [&](bool& flag, std::optional<ScanEntry>& best) {
          flag = true;
          if (!best || entry.rollout.discounted_return > best->rollout.discounted_return) best = entry;
        };
        if (entry.rollout.crossing == CrossingClass::before_target_1) {
          consider(report.before_target_1_feasible, report.best_before);
        } else if (entry.rollout.crossing == CrossingClass::between_1_and_2) {
          consider(report.between_1_and_2_feasible, report.best_between);
        }
      }
      report.entries.push_back(std::move(entry));
    }
  }
  if (cfg.target_count == 0) {
    report.before_target_1_feasible = any_goal;
    report.between_1_and_2_feasible = any_goal;
  }
  return report;
}

}  // namespace fallback
