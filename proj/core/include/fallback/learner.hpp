#pragma once

// Double DQN learner: online/target networks, Adam, epsilon-greedy behaviour
// and checkpoint I/O.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ptree_fwd.hpp>

#include "fallback/mdp.hpp"
#include "fallback/qnetwork.hpp"

namespace fallback {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LearnerConfig {
  std::vector<int> hidden_sizes = {64, 64};
  double gamma = 0.99;
  AdamConfig adam;
  int batch_size = 32;
  int warmup = 1000;          // transitions before the first update
  int target_sync = 1000;     // updates between target copies
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_steps = 50'000;
  std::size_t replay_capacity = 50'000;

  std::vector<int> layer_sizes() const;
};

std::optional<std::string> validate(const LearnerConfig& cfg);
LearnerConfig learner_config_from_ptree(const boost::property_tree::ptree& section);
void learner_config_to_ptree(const LearnerConfig& cfg, boost::property_tree::ptree& section);

// Linear decay from start to end over decay_steps, then constant.
double epsilon_at(const LearnerConfig& cfg, std::int64_t env_steps);

// Lowest index among the maximal entries.
int argmax_lowest(std::span<const double> values);

class Learner {
 public:
  Learner(LearnerConfig cfg, std::uint64_t init_seed);
  Learner(LearnerConfig cfg, QNetwork online);

  const LearnerConfig& config() const { return cfg_; }
  const QNetwork& online() const { return online_; }
  const QNetwork& target() const { return target_; }
  QNetwork& mutable_online() { return online_; }
  QNetwork& mutable_target() { return target_; }

  std::int64_t env_steps() const { return env_steps_; }
  std::int64_t updates() const { return optimizer_.step_count(); }
  void record_env_step() { ++env_steps_; }
  void set_env_steps(std::int64_t n) { env_steps_ = n; }

  double epsilon() const { return epsilon_override_ >= 0.0 ? epsilon_override_ : epsilon_at(cfg_, env_steps_); }
  // Pins epsilon; a negative value restores the schedule.
  void override_epsilon(double eps) { epsilon_override_ = eps; }

  Eigen::VectorXd q_values(const StateVector& s) const;
  Action greedy(const StateVector& s) const;
  Action act(const StateVector& s, Rng& rng) const;

  // y = r for terminal transitions, otherwise
  // r + gamma * Q_target(s', argmax_a Q_online(s', a)).
  std::vector<double> td_targets(std::span<const Transition> batch) const;

  // One Adam step on the mean squared TD error; copies online -> target
  // whenever the update count reaches a multiple of target_sync.
  double train_step(std::span<const Transition> batch);

  void sync_target() { target_ = online_; }

 private:
  LearnerConfig cfg_;
  QNetwork online_;
  QNetwork target_;
  AdamOptimizer optimizer_;
  std::int64_t env_steps_ = 0;
  double epsilon_override_ = -1.0;
};

struct CheckpointInfo {
  int format_version = 0;
  std::vector<int> layer_sizes;
  double gamma = 0.0;
  std::int64_t env_steps = 0;
  std::int64_t updates = 0;
};

inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const QNetwork& net, const CheckpointInfo& info);
void save_checkpoint(const std::string& path, const Learner& learner);
// Throws TrainingError on malformed files or a version mismatch.
QNetwork read_checkpoint(std::istream& in, CheckpointInfo* info = nullptr);
QNetwork load_checkpoint(const std::string& path, CheckpointInfo* info = nullptr);

}  // namespace fallback
