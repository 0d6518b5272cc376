#pragma once

// Deterministic two-way intersection: the ego follows a fixed left-turn path
// (straight approach, circular arc, straight exit) and controls only its
// longitudinal acceleration, while up to three constant-speed oncoming
// targets drive straight through the conflict point.
//
// Frame: the ego starts at (0, ego_start_arc) heading +y; the turn bends
// towards -x. Targets drive along x = -lane_offset in the -y direction.
//
// Kinematics are kept on an exact integer grid: speed in ticks of dt m/s,
// arc-length in ticks of dt^2 m relative to the start, which is what lets the
// dynamic-programming oracle reproduce simulator returns bit for bit.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include <boost/property_tree/ptree_fwd.hpp>

#include "fallback/mdp.hpp"

namespace fallback {

inline constexpr int kMaxTargets = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

double distance(Point2 a, Point2 b);

struct EnvConfig {
  double dt = 0.1;
  int max_steps = 150;

  double approach_length = 30.0;
  double turn_radius = 7.75;
  double exit_length = 20.0;
  double lane_offset = 6.5;  // lateral distance to the oncoming lane centre

  double ego_start_arc = 0.0;
  double ego_start_speed = 20.0;
  double ego_speed_min = 0.0;
  double ego_speed_max = 30.0;

  double target_speed = 20.0;
  int target_count = 3;
  // Initial distance of each target to the conflict point, m.
  std::array<double, kMaxTargets> target_offsets = {43.0, 73.0, 103.0};
  double collision_radius = 3.0;
  std::array<double, kMaxTargets> radius_multipliers = {1.0, 1.0, 1.0};

  double pos_max = 100.0;
  double speed_norm = 30.0;
  double ttc_max = 10.0;

  double path_length() const;
  // Arc-length at which the path crosses the oncoming lane.
  double conflict_arc_length() const;
  Point2 conflict_point() const;
  double effective_radius(int target) const;  // 0-based
};

// Returns a description of the first violated constraint, if any.
std::optional<std::string> validate(const EnvConfig& cfg);
// Subset of validate(): speeds must lie on the dt grid.
std::optional<std::string> grid_exactness_problem(const EnvConfig& cfg);
void require_valid(const EnvConfig& cfg);

struct WorldState {
  int step = 0;
  std::int64_t speed_ticks = 0;
  std::int64_t position_ticks = 0;
  double ego_arc_length = 0.0;  // m
  double ego_speed = 0.0;       // m/s
  std::array<double, kMaxTargets> target_distance{};  // signed, m; < 0 once passed
  Outcome outcome = Outcome::running;

  bool terminal() const { return outcome != Outcome::running; }
  Snapshot snapshot(const EnvConfig& cfg) const;
};

struct StepResult {
  WorldState next;
  double reward = 0.0;
  bool terminal = false;
  Outcome outcome = Outcome::running;
};

inline constexpr double kCollisionReward = -5.0;
inline constexpr double kStepReward = -0.1;

WorldState reset(const EnvConfig& cfg);
// Non-terminal state at an exact grid point; used by the DP oracle.
WorldState make_grid_state(int step, std::int64_t speed_ticks, std::int64_t position_ticks,
                           const EnvConfig& cfg);
std::int64_t speed_ticks_of(double speed, const EnvConfig& cfg);
StepResult step(const WorldState& w, Action a, const EnvConfig& cfg);
bool collision(const WorldState& w, const EnvConfig& cfg);
Point2 path_point(double arc_length, const EnvConfig& cfg);
Point2 target_point(const WorldState& w, int target, const EnvConfig& cfg);
StateVector observe(const WorldState& w, const EnvConfig& cfg);
// target is 1-based, matching target numbering in reports.
EnvConfig perturb(const EnvConfig& cfg, int target, double factor);

// Which side of the oncoming targets the ego crossed the conflict point on.
enum class CrossingClass { none, before_target_1, between_1_and_2, after_target_2 };
std::string_view to_string(CrossingClass c);
// Classify a crossing from the target distances at the first step whose
// arc-length reaches the conflict point.
CrossingClass classify_crossing(const WorldState& at_crossing, const EnvConfig& cfg);

// [environment] section of a config file.
EnvConfig env_config_from_ptree(const boost::property_tree::ptree& tree);
void env_config_to_ptree(const EnvConfig& cfg, boost::property_tree::ptree& tree);
EnvConfig load_env_config(const std::string& path);
void write_env_config(std::ostream& out, const EnvConfig& cfg);

}  // namespace fallback
