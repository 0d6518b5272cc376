#include "fallback/intersection_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>

#include <boost/property_tree/ptree.hpp>

#include "fallback/config_io.hpp"

namespace fallback {

namespace {

constexpr double kGridTolerance = 1e-9;

std::int64_t to_ticks(double value, double quantum) {
  return static_cast<std::int64_t>(std::llround(value / quantum));
}

bool on_grid(double value, double quantum) {
  const double ticks = std::round(value / quantum);
  return std::abs(ticks * quantum - value) <= kGridTolerance * std::max(1.0, std::abs(value));
}

double arc_angle_span() { return std::numbers::pi / 2.0; }

// path_point without the range check; continues along the exit heading past
// the end so goal-step collision checks stay defined.
Point2 path_point_unchecked(double s, const EnvConfig& cfg) {
  const double a = cfg.approach_length;
  const double r = cfg.turn_radius;
  const double arc_end = a + r * arc_angle_span();
  if (s <= a) return {0.0, s};
  if (s <= arc_end) {
    const double theta = (s - a) / r;
    return {-r + r * std::cos(theta), a + r * std::sin(theta)};
  }
  return {-r - (s - arc_end), a + r};
}

void fill_derived(WorldState& w, const EnvConfig& cfg) {
  w.ego_speed = static_cast<double>(w.speed_ticks) * cfg.dt;
  w.ego_arc_length = cfg.ego_start_arc + static_cast<double>(w.position_ticks) * (cfg.dt * cfg.dt);
  for (int i = 0; i < kMaxTargets; ++i) {
    w.target_distance[i] =
        i < cfg.target_count ? cfg.target_offsets[i] - cfg.target_speed * cfg.dt * w.step : 0.0;
  }
}

}  // namespace

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

double EnvConfig::path_length() const {
  return approach_length + turn_radius * arc_angle_span() + exit_length;
}

double EnvConfig::conflict_arc_length() const {
  return approach_length + turn_radius * std::acos(1.0 - lane_offset / turn_radius);
}

Point2 EnvConfig::conflict_point() const {
  const double theta = std::acos(1.0 - lane_offset / turn_radius);
  return {-lane_offset, approach_length + turn_radius * std::sin(theta)};
}

double EnvConfig::effective_radius(int target) const {
  return collision_radius * radius_multipliers.at(static_cast<std::size_t>(target));
}

std::optional<std::string> grid_exactness_problem(const EnvConfig& cfg) {
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) return "dt must be positive";
  if (!on_grid(cfg.ego_start_speed, cfg.dt)) return "ego_start_speed must be a multiple of dt";
  if (!on_grid(cfg.ego_speed_min, cfg.dt)) return "ego_speed_min must be a multiple of dt";
  if (!on_grid(cfg.ego_speed_max, cfg.dt)) return "ego_speed_max must be a multiple of dt";
  return std::nullopt;
}

std::optional<std::string> validate(const EnvConfig& cfg) {
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) return "dt must be positive";
  if (cfg.max_steps <= 0) return "max_steps must be positive";
  if (!(cfg.approach_length >= 0.0)) return "approach_length must be non-negative";
  if (!(cfg.turn_radius > 0.0)) return "turn_radius must be positive";
  if (!(cfg.exit_length >= 0.0)) return "exit_length must be non-negative";
  if (!(cfg.lane_offset > 0.0 && cfg.lane_offset < cfg.turn_radius)) {
    return "lane_offset must lie in (0, turn_radius) so the turn crosses the oncoming lane";
  }
  if (!(cfg.path_length() > 0.0)) return "path length must be positive";
  if (!(cfg.ego_speed_min >= 0.0 && cfg.ego_speed_max > cfg.ego_speed_min)) {
    return "ego speed bounds must satisfy 0 <= ego_speed_min < ego_speed_max";
  }
  if (cfg.ego_start_speed < cfg.ego_speed_min || cfg.ego_start_speed > cfg.ego_speed_max) {
    return "ego_start_speed outside the ego speed bounds";
  }
  if (!(cfg.ego_start_arc >= 0.0 && cfg.ego_start_arc < cfg.path_length())) {
    return "ego_start_arc must lie on the path";
  }
  if (cfg.target_speed != 20.0) return "target_speed must be 20 m/s";
  if (cfg.target_count < 0 || cfg.target_count > kMaxTargets) return "target_count must be in [0, 3]";
  if (!(cfg.collision_radius > 0.0)) return "collision_radius must be positive";
  for (int i = 0; i < cfg.target_count; ++i) {
    if (!std::isfinite(cfg.target_offsets[i])) return "target offsets must be finite";
    if (!(cfg.radius_multipliers[i] > 0.0) || !std::isfinite(cfg.radius_multipliers[i])) {
      return "radius multipliers must be positive";
    }
  }
  if (!(cfg.pos_max > 0.0 && cfg.speed_norm > 0.0 && cfg.ttc_max > 0.0)) {
    return "normalization constants must be positive";
  }
  if (cfg.speed_norm < cfg.ego_speed_max) return "speed_norm must cover ego_speed_max";
  return grid_exactness_problem(cfg);
}

void require_valid(const EnvConfig& cfg) {
  if (auto problem = validate(cfg)) throw ConfigError("invalid environment config: " + *problem);
}

Snapshot WorldState::snapshot(const EnvConfig& cfg) const {
  return {cfg.dt * step, ego_arc_length, ego_speed};
}

WorldState reset(const EnvConfig& cfg) {
  require_valid(cfg);
  WorldState w;
  w.step = 0;
  w.speed_ticks = to_ticks(cfg.ego_start_speed, cfg.dt);
  w.position_ticks = 0;
  fill_derived(w, cfg);
  return w;
}

WorldState make_grid_state(int step, std::int64_t speed_ticks, std::int64_t position_ticks,
                           const EnvConfig& cfg) {
  WorldState w;
  w.step = step;
  w.speed_ticks = speed_ticks;
  w.position_ticks = position_ticks;
  fill_derived(w, cfg);
  return w;
}

std::int64_t speed_ticks_of(double speed, const EnvConfig& cfg) { return to_ticks(speed, cfg.dt); }

StepResult step(const WorldState& w, Action a, const EnvConfig& cfg) {
  if (w.terminal()) throw std::logic_error("step() called on a terminal state");
  const std::int64_t kmin = speed_ticks_of(cfg.ego_speed_min, cfg);
  const std::int64_t kmax = speed_ticks_of(cfg.ego_speed_max, cfg);

  StepResult result;
  WorldState& next = result.next;
  next.step = w.step + 1;
  next.speed_ticks = std::clamp<std::int64_t>(w.speed_ticks + a.accel(), kmin, kmax);
  next.position_ticks = w.position_ticks + next.speed_ticks;
  fill_derived(next, cfg);

  if (collision(next, cfg)) {
    next.outcome = Outcome::collision;
    result.reward = kCollisionReward;
  } else {
    result.reward = kStepReward;
    if (next.ego_arc_length >= cfg.path_length()) {
      next.outcome = Outcome::goal;
    } else if (next.step >= cfg.max_steps) {
      next.outcome = Outcome::timeout;
    }
  }
  result.outcome = next.outcome;
  result.terminal = next.terminal();
  return result;
}

Point2 path_point(double arc_length, const EnvConfig& cfg) {
  if (!(arc_length >= 0.0 && arc_length <= cfg.path_length())) {
    throw std::out_of_range("arc length " + std::to_string(arc_length) + " outside the path");
  }
  return path_point_unchecked(arc_length, cfg);
}

Point2 target_point(const WorldState& w, int target, const EnvConfig& cfg) {
  const Point2 c = cfg.conflict_point();
  return {c.x, c.y + w.target_distance.at(static_cast<std::size_t>(target))};
}

bool collision(const WorldState& w, const EnvConfig& cfg) {
  const Point2 ego = path_point_unchecked(w.ego_arc_length, cfg);
  for (int i = 0; i < cfg.target_count; ++i) {
    if (distance(ego, target_point(w, i, cfg)) < cfg.effective_radius(i)) return true;
  }
  return false;
}

StateVector observe(const WorldState& w, const EnvConfig& cfg) {
  StateVector s{};
  s[0] = std::clamp(w.ego_arc_length / cfg.pos_max, -1.0, 1.0);
  s[1] = std::clamp(w.ego_speed / cfg.speed_norm, -1.0, 1.0);

  struct Slot {
    double x;
    double ttc;
  };
  std::array<Slot, kMaxTargets> slots{};
  for (int i = 0; i < kMaxTargets; ++i) {
    if (i >= cfg.target_count) {
      slots[i] = {-1.0, 1.0};  // absent target reads as long passed
      continue;
    }
    const double d = w.target_distance[i];
    const double x = std::clamp(d / cfg.pos_max, -1.0, 1.0);
    const double ttc =
        d < 0.0 ? 1.0 : std::clamp(d / cfg.target_speed, 0.0, cfg.ttc_max) / cfg.ttc_max;
    slots[i] = {x, ttc};
  }
  std::stable_sort(slots.begin(), slots.end(),
                   [](const Slot& a, const Slot& b) { return a.ttc < b.ttc; });
  for (int i = 0; i < kMaxTargets; ++i) {
    s[2 + 2 * i] = slots[i].x;
    s[3 + 2 * i] = slots[i].ttc;
  }
  return s;
}

EnvConfig perturb(const EnvConfig& cfg, int target, double factor) {
  if (target < 1 || target > cfg.target_count) {
    throw std::out_of_range("perturb: target " + std::to_string(target) + " does not exist");
  }
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw std::invalid_argument("perturb: factor must be positive");
  }
  EnvConfig out = cfg;
  out.radius_multipliers[static_cast<std::size_t>(target - 1)] = factor;
  return out;
}

std::string_view to_string(CrossingClass c) {
  switch (c) {
    case CrossingClass::none:
      return "none";
    case CrossingClass::before_target_1:
      return "before-target-1";
    case CrossingClass::between_1_and_2:
      return "between-1-and-2";
    case CrossingClass::after_target_2:
      return "after-target-2";
  }
  return "unknown";
}

CrossingClass classify_crossing(const WorldState& at_crossing, const EnvConfig& cfg) {
  if (cfg.target_count < 1 || at_crossing.target_distance[0] > 0.0) {
    return CrossingClass::before_target_1;
  }
  if (cfg.target_count < 2 || at_crossing.target_distance[1] > 0.0) {
    return CrossingClass::between_1_and_2;
  }
  return CrossingClass::after_target_2;
}

EnvConfig env_config_from_ptree(const config::Tree& tree) {
  EnvConfig cfg;
  config::read_value(tree, "dt", cfg.dt);
  config::read_value(tree, "max_steps", cfg.max_steps);
  config::read_value(tree, "approach_length", cfg.approach_length);
  config::read_value(tree, "turn_radius", cfg.turn_radius);
  config::read_value(tree, "exit_length", cfg.exit_length);
  config::read_value(tree, "lane_offset", cfg.lane_offset);
  config::read_value(tree, "ego_start_arc", cfg.ego_start_arc);
  config::read_value(tree, "ego_start_speed", cfg.ego_start_speed);
  config::read_value(tree, "ego_speed_min", cfg.ego_speed_min);
  config::read_value(tree, "ego_speed_max", cfg.ego_speed_max);
  config::read_value(tree, "target_speed", cfg.target_speed);
  config::read_value(tree, "target_count", cfg.target_count);
  config::read_list(tree, "target_offsets", cfg.target_offsets);
  config::read_value(tree, "collision_radius", cfg.collision_radius);
  config::read_list(tree, "radius_multipliers", cfg.radius_multipliers);
  config::read_value(tree, "pos_max", cfg.pos_max);
  config::read_value(tree, "speed_norm", cfg.speed_norm);
  config::read_value(tree, "ttc_max", cfg.ttc_max);
  require_valid(cfg);
  return cfg;
}

void env_config_to_ptree(const EnvConfig& cfg, config::Tree& tree) {
  using config::format_double;
  tree.put("dt", format_double(cfg.dt));
  tree.put("max_steps", cfg.max_steps);
  tree.put("approach_length", format_double(cfg.approach_length));
  tree.put("turn_radius", format_double(cfg.turn_radius));
  tree.put("exit_length", format_double(cfg.exit_length));
  tree.put("lane_offset", format_double(cfg.lane_offset));
  tree.put("ego_start_arc", format_double(cfg.ego_start_arc));
  tree.put("ego_start_speed", format_double(cfg.ego_start_speed));
  tree.put("ego_speed_min", format_double(cfg.ego_speed_min));
  tree.put("ego_speed_max", format_double(cfg.ego_speed_max));
  tree.put("target_speed", format_double(cfg.target_speed));
  tree.put("target_count", cfg.target_count);
  tree.put("target_offsets", config::format_list(cfg.target_offsets));
  tree.put("collision_radius", format_double(cfg.collision_radius));
  tree.put("radius_multipliers", config::format_list(cfg.radius_multipliers));
  tree.put("pos_max", format_double(cfg.pos_max));
  tree.put("speed_norm", format_double(cfg.speed_norm));
  tree.put("ttc_max", format_double(cfg.ttc_max));
}

EnvConfig load_env_config(const std::string& path) {
  const config::Tree tree = config::read_ini_file(path);
  const auto section = tree.get_child_optional("environment");
  if (!section) throw ConfigError(path + ": missing [environment] section");
  return env_config_from_ptree(*section);
}

void write_env_config(std::ostream& out, const EnvConfig& cfg) {
  config::Tree root;
  config::Tree section;
  env_config_to_ptree(cfg, section);
  root.add_child("environment", section);
  config::write_ini(out, root);
}

}  // namespace fallback
