#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fallback/intersection_env.hpp"

using namespace fallback;

namespace {

std::vector<Action> random_script(Rng& rng, std::size_t n) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(kNumActions) - 1);
  std::vector<Action> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(Action::from_index(pick(rng)));
  return s;
}

struct Played {
  std::vector<WorldState> states;
  std::vector<double> rewards;
};

Played play(const EnvConfig& cfg, const std::vector<Action>& script) {
  Played p;
  WorldState w = reset(cfg);
  p.states.push_back(w);
  std::size_t t = 0;
  while (!w.terminal()) {
    const Action a = t < script.size() ? script[t] : Action::from_accel(0);
    const StepResult r = step(w, a, cfg);
    p.rewards.push_back(r.reward);
    w = r.next;
    p.states.push_back(w);
    ++t;
  }
  return p;
}

}  // namespace

TEST(Reset, StartsAtRestConditions) {
  const EnvConfig cfg;
  const WorldState w = reset(cfg);
  EXPECT_EQ(w.step, 0);
  EXPECT_EQ(w.ego_speed, 20.0);
  EXPECT_EQ(w.ego_arc_length, 0.0);
  EXPECT_FALSE(w.terminal());
  for (int i = 0; i < 3; ++i) EXPECT_EQ(w.target_distance[i], cfg.target_offsets[i]);
}

TEST(Reset, RejectsInvalidConfigs) {
  EnvConfig cfg;
  cfg.dt = -0.1;
  EXPECT_THROW(reset(cfg), ConfigError);
  cfg = EnvConfig{};
  cfg.target_speed = 15.0;
  EXPECT_THROW(reset(cfg), ConfigError);
  cfg = EnvConfig{};
  cfg.ego_start_speed = 20.05;  // off the 0.1 m/s grid
  EXPECT_THROW(reset(cfg), ConfigError);
  ASSERT_TRUE(validate(cfg).has_value());
  EXPECT_NE(validate(cfg)->find("multiple of dt"), std::string::npos);
  cfg = EnvConfig{};
  cfg.lane_offset = cfg.turn_radius;  // the turn would never cross the lane
  EXPECT_THROW(reset(cfg), ConfigError);
}

TEST(Step, ZeroAccelerationHoldsSpeed) {
  EnvConfig cfg;
  cfg.target_count = 0;
  const StepResult r = step(reset(cfg), Action::from_accel(0), cfg);
  EXPECT_EQ(r.next.ego_speed, 20.0);
  EXPECT_NEAR(r.next.ego_arc_length, 2.0, 1e-12);
  EXPECT_EQ(r.reward, -0.1);
  EXPECT_FALSE(r.terminal);
  EXPECT_EQ(r.next.step, 1);
}

TEST(Step, SpeedUpdatesBeforePosition) {
  EnvConfig cfg;
  cfg.target_count = 0;
  const StepResult r = step(reset(cfg), Action::from_accel(2), cfg);
  EXPECT_NEAR(r.next.ego_speed, 20.2, 1e-12);
  EXPECT_NEAR(r.next.ego_arc_length, 2.02, 1e-12);
}

TEST(Step, SpeedIsClampedAtBounds) {
  EnvConfig cfg;
  cfg.target_count = 0;
  WorldState w = make_grid_state(3, 0, 500, cfg);
  EXPECT_EQ(step(w, Action::from_accel(-4), cfg).next.ego_speed, 0.0);
  w = make_grid_state(3, speed_ticks_of(30.0, cfg), 500, cfg);
  EXPECT_EQ(step(w, Action::from_accel(2), cfg).next.ego_speed, 30.0);
}

TEST(Step, TerminalStateCannotBeStepped) {
  EnvConfig cfg;
  cfg.max_steps = 1;
  cfg.target_count = 0;
  const StepResult r = step(reset(cfg), Action::from_accel(0), cfg);
  ASSERT_TRUE(r.terminal);
  EXPECT_EQ(r.outcome, Outcome::timeout);
  EXPECT_THROW(step(r.next, Action::from_accel(0), cfg), std::logic_error);
}

TEST(Step, ConstantSpeedEgoHitsTargetOneOnDefaultConfig) {
  const EnvConfig cfg;
  const Played p = play(cfg, {});
  const WorldState& last = p.states.back();
  EXPECT_EQ(last.outcome, Outcome::collision);
  EXPECT_EQ(p.rewards.back(), -5.0);
  // Target 1 is the one within range.
  EXPECT_LT(distance(path_point(last.ego_arc_length, cfg), target_point(last, 0, cfg)), cfg.collision_radius);
}

TEST(Step, NoTargetsAtConstantSpeedReachesGoal) {
  EnvConfig cfg;
  cfg.target_count = 0;
  const Played p = play(cfg, {});
  EXPECT_EQ(p.states.back().outcome, Outcome::goal);
  // 2 m per step: ceil(path / 2) steps.
  EXPECT_EQ(static_cast<int>(p.rewards.size()), static_cast<int>(std::ceil(cfg.path_length() / 2.0)));
}

TEST(Collision, BoundaryDistanceIsNotACollision) {
  EnvConfig cfg;
  cfg.target_count = 1;
  const WorldState w = make_grid_state(10, 200, 2000, cfg);
  const double d = distance(path_point(w.ego_arc_length, cfg), target_point(w, 0, cfg));
  cfg.collision_radius = d;
  EXPECT_FALSE(collision(w, cfg));
  cfg.collision_radius = std::nextafter(d, 1e9);
  EXPECT_TRUE(collision(w, cfg));
}

TEST(Collision, FarApartAndCoLocated) {
  EnvConfig cfg;
  // Ego at the start, 30+ m before the conflict point; targets >= 30 m away.
  cfg.target_offsets = {30.0, 60.0, 90.0};
  EXPECT_FALSE(collision(reset(cfg), cfg));
  cfg.target_count = 1;
  cfg.target_offsets = {0.0, 0.0, 0.0};
  cfg.collision_radius = 1e-6;
  const double s = cfg.conflict_arc_length();
  const auto ticks = static_cast<std::int64_t>(std::llround(s / 0.01));
  WorldState w = make_grid_state(0, 200, ticks, cfg);
  EXPECT_LT(distance(path_point(w.ego_arc_length, cfg), target_point(w, 0, cfg)), 0.02);
  cfg.collision_radius = 0.02;
  EXPECT_TRUE(collision(w, cfg));
}

TEST(Collision, RadiusMultiplierAffectsOnlyItsTarget) {
  EnvConfig cfg;
  const WorldState w = make_grid_state(10, 200, 2000, cfg);
  const double d1 = distance(path_point(w.ego_arc_length, cfg), target_point(w, 0, cfg));
  const double d2 = distance(path_point(w.ego_arc_length, cfg), target_point(w, 1, cfg));
  ASSERT_NE(d1, d2);
  const int nearer = d1 < d2 ? 1 : 2;  // 1-based, as perturb() expects
  // Just outside the nearer target's reach; a 20% larger radius there flips it.
  cfg.collision_radius = 0.9 * std::min(d1, d2);
  EXPECT_FALSE(collision(w, cfg));
  EXPECT_TRUE(collision(w, perturb(cfg, nearer, 1.2)));
  EXPECT_FALSE(collision(w, perturb(cfg, 3 - nearer, 1.2)));
  EXPECT_EQ(perturb(cfg, nearer, 1.2).effective_radius(2 - nearer), cfg.collision_radius);
}

TEST(PathPoint, SegmentsAreIsometricAndContinuous) {
  const EnvConfig cfg;
  const Point2 start = path_point(0.0, cfg);
  EXPECT_EQ(start.x, 0.0);
  EXPECT_EQ(start.y, 0.0);
  const Point2 entry = path_point(cfg.approach_length, cfg);
  EXPECT_NEAR(distance(start, entry), cfg.approach_length, 1e-12);

  const Point2 centre{-cfg.turn_radius, cfg.approach_length};
  for (double f : {0.1, 0.37, 0.5, 0.9}) {
    const double s = cfg.approach_length + f * cfg.turn_radius * std::numbers::pi / 2.0;
    EXPECT_NEAR(distance(path_point(s, cfg), centre), cfg.turn_radius, 1e-9);
  }
  const double arc_end = cfg.approach_length + cfg.turn_radius * std::numbers::pi / 2.0;
  const double eps = 1e-9;
  EXPECT_NEAR(distance(path_point(arc_end - eps, cfg), path_point(arc_end + eps, cfg)), 2 * eps, 1e-8);
  EXPECT_NEAR(distance(path_point(arc_end, cfg), path_point(cfg.path_length(), cfg)), cfg.exit_length, 1e-9);
  EXPECT_THROW(path_point(-0.1, cfg), std::out_of_range);
  EXPECT_THROW(path_point(cfg.path_length() + 0.1, cfg), std::out_of_range);
}

TEST(PathPoint, ConflictPointLiesOnPathAndLane) {
  const EnvConfig cfg;
  const Point2 c = cfg.conflict_point();
  const Point2 p = path_point(cfg.conflict_arc_length(), cfg);
  EXPECT_NEAR(c.x, -cfg.lane_offset, 1e-12);
  EXPECT_NEAR(distance(c, p), 0.0, 1e-9);
}

TEST(Observe, NormalizationAndOrdering) {
  const EnvConfig cfg;
  const StateVector s = observe(reset(cfg), cfg);
  EXPECT_NEAR(s[1], 0.6667, 1e-4);
  EXPECT_EQ(s[0], 0.0);
  // Targets come out sorted by ascending ttc.
  EXPECT_NEAR(s[2], cfg.target_offsets[0] / 100.0, 1e-12);
  EXPECT_NEAR(s[3], cfg.target_offsets[0] / 20.0 / 10.0, 1e-12);
  EXPECT_LE(s[3], s[5]);
  EXPECT_LE(s[5], s[7]);
  EXPECT_TRUE(is_valid_state(s));
}

TEST(Observe, TargetAtConflictPointHasZeroTtc) {
  EnvConfig cfg;
  cfg.target_offsets = {0.0, 30.0, 60.0};
  const StateVector s = observe(reset(cfg), cfg);
  EXPECT_EQ(s[2], 0.0);
  EXPECT_EQ(s[3], 0.0);
}

TEST(Observe, PassedTargetsUseSentinel) {
  EnvConfig cfg;
  cfg.target_offsets = {10.0, 20.0, 30.0};
  const WorldState w = make_grid_state(40, 200, 100, cfg);  // all passed after 4 s
  const StateVector s = observe(w, cfg);
  EXPECT_EQ(s[3], 1.0);
  EXPECT_EQ(s[5], 1.0);
  EXPECT_EQ(s[7], 1.0);
  EXPECT_TRUE(is_valid_state(s));
}

TEST(Perturb, ScalesOneMultiplier) {
  const EnvConfig cfg;
  const EnvConfig p = perturb(cfg, 1, 1.5);
  EXPECT_DOUBLE_EQ(p.effective_radius(0), 1.5 * cfg.collision_radius);
  EXPECT_EQ(p.effective_radius(1), cfg.effective_radius(1));
  const EnvConfig same = perturb(cfg, 1, 1.0);
  EXPECT_EQ(same.radius_multipliers, cfg.radius_multipliers);
  EXPECT_THROW(perturb(cfg, 0, 1.5), std::out_of_range);
  EXPECT_THROW(perturb(cfg, 4, 1.5), std::out_of_range);
  EXPECT_THROW(perturb(cfg, 1, 0.0), std::invalid_argument);
}

TEST(Properties, DeterminismRewardSupportAndBounds) {
  const EnvConfig cfg;
  Rng rng(99);
  for (int e = 0; e < 200; ++e) {
    const auto script = random_script(rng, 150);
    const Played a = play(cfg, script);
    const Played b = play(cfg, script);
    ASSERT_EQ(a.states.size(), b.states.size());
    for (std::size_t i = 0; i < a.states.size(); ++i) {
      EXPECT_EQ(a.states[i].position_ticks, b.states[i].position_ticks);
      EXPECT_EQ(a.states[i].ego_arc_length, b.states[i].ego_arc_length);
    }
    EXPECT_LE(static_cast<int>(a.rewards.size()), cfg.max_steps);
    for (double r : a.rewards) EXPECT_TRUE(r == -0.1 || r == -5.0);
    for (std::size_t i = 0; i + 1 < a.rewards.size(); ++i) EXPECT_EQ(a.rewards[i], -0.1);
    for (const auto& w : a.states) {
      EXPECT_GE(w.ego_speed, 0.0);
      EXPECT_LE(w.ego_speed, 30.0);
    }
  }
}

TEST(Properties, LargerRadiusNeverRemovesACollision) {
  const EnvConfig cfg;
  Rng rng(5);
  int collisions = 0;
  for (int e = 0; e < 300; ++e) {
    const auto script = random_script(rng, 150);
    const Played base = play(cfg, script);
    if (base.states.back().outcome != Outcome::collision) continue;
    ++collisions;
    for (double f : {1.2, 1.5, 2.0}) {
      const Played big = play(perturb(cfg, 1, f), script);
      EXPECT_EQ(big.states.back().outcome, Outcome::collision);
      EXPECT_LE(big.rewards.size(), base.rewards.size());
    }
  }
  EXPECT_GT(collisions, 0);
}

TEST(CrossingClass, ClassifiesByTargetDistances) {
  const EnvConfig cfg;
  WorldState w = make_grid_state(0, 200, 0, cfg);
  w.target_distance = {5.0, 35.0, 65.0};
  EXPECT_EQ(classify_crossing(w, cfg), CrossingClass::before_target_1);
  w.target_distance = {-5.0, 25.0, 55.0};
  EXPECT_EQ(classify_crossing(w, cfg), CrossingClass::between_1_and_2);
  w.target_distance = {-35.0, -5.0, 25.0};
  EXPECT_EQ(classify_crossing(w, cfg), CrossingClass::after_target_2);
}

TEST(EnvConfigIo, RoundTripsThroughIni) {
  EnvConfig cfg;
  cfg.lane_offset = 4.25;
  cfg.target_offsets = {33.5, 63.5, 93.5};
  cfg.radius_multipliers = {1.5, 1.0, 1.0};
  const auto path = std::filesystem::temp_directory_path() / "fallback_env_roundtrip.ini";
  {
    std::ofstream out(path);
    write_env_config(out, cfg);
  }
  const EnvConfig back = load_env_config(path.string());
  EXPECT_EQ(back.lane_offset, cfg.lane_offset);
  EXPECT_EQ(back.target_offsets, cfg.target_offsets);
  EXPECT_EQ(back.radius_multipliers, cfg.radius_multipliers);
  EXPECT_EQ(back.max_steps, cfg.max_steps);
  std::filesystem::remove(path);
}
