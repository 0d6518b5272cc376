#pragma once

// Environment-agnostic MDP vocabulary shared by the simulator, the learners
// and the dynamic-programming oracle.

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fallback {

using Rng = std::mt19937_64;

inline constexpr std::size_t kNumActions = 6;
inline constexpr std::size_t kStateDim = 8;

// Longitudinal accelerations in m/s^2, indexed by action id. Integer values
// keep the simulator's speed/position grid exact.
inline constexpr std::array<int, kNumActions> kAccelerations = {-4, -2, -1, 0, 1, 2};

class Action {
 public:
  constexpr Action() = default;

  static Action from_index(int index);
  // Throws if accel is not a member of the action set.
  static Action from_accel(int accel);

  constexpr int index() const { return index_; }
  constexpr int accel() const { return kAccelerations[static_cast<std::size_t>(index_)]; }

  friend constexpr bool operator==(Action, Action) = default;

 private:
  explicit constexpr Action(int index) : index_(index) {}
  int index_ = 0;
};

// Normalized observation {x_ego, v_ego, x1, ttc1, x2, ttc2, x3, ttc3}.
using StateVector = std::array<double, kStateDim>;

bool is_valid_state(const StateVector& s);

struct Transition {
  StateVector state{};
  Action action{};
  double reward = 0.0;
  StateVector next_state{};
  bool terminal = false;
};

enum class Outcome { running, goal, collision, timeout };

std::string_view to_string(Outcome outcome);
Outcome outcome_from_string(std::string_view text);

// Raw per-step record used for trajectory features; not normalized.
struct Snapshot {
  double time = 0.0;        // s
  double arc_length = 0.0;  // m along the ego path
  double speed = 0.0;       // m/s
};

struct Trajectory {
  std::vector<Snapshot> snapshots;
  Outcome outcome = Outcome::running;
};

struct EpisodeOutcome {
  Outcome reason = Outcome::running;
  double undiscounted_return = 0.0;
  double discounted_return = 0.0;
  int length = 0;
};

// Sum_t gamma^t r_t. Empty input yields 0.
double discounted_return(std::span<const double> rewards, double gamma);

EpisodeOutcome summarize_episode(std::span<const double> rewards, Outcome reason, double gamma);

// Uniform (non-prioritized) experience replay with FIFO eviction, plus a side
// store holding the feature sequences of the most recent completed episodes.
class ReplayBuffer {
 public:
  static constexpr std::size_t kDefaultEpisodeWindow = 100;

  explicit ReplayBuffer(std::size_t capacity,
                        std::size_t episode_window = kDefaultEpisodeWindow);

  void push(const Transition& t);
  void push_episode_features(std::vector<double> features);

  // Draws n distinct entries uniformly. Throws std::length_error when the
  // buffer holds fewer than n transitions.
  std::vector<Transition> sample_minibatch(std::size_t n, Rng& rng) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return storage_.size(); }
  std::uint64_t total_inserted() const { return inserted_; }

  // i = 0 is the oldest retained transition.
  const Transition& at(std::size_t i) const;

  std::size_t episode_window() const { return episode_window_; }
  std::size_t episode_count() const { return episodes_.size(); }
  const std::deque<std::vector<double>>& recent_episode_features() const { return episodes_; }

 private:
  std::vector<Transition> storage_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
  std::uint64_t inserted_ = 0;
  std::size_t episode_window_;
  std::deque<std::vector<double>> episodes_;
};

}  // namespace fallback
