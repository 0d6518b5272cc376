#pragma once

// Round-robin training of the optimal agent (id 0) and N pseudo-agents.
// Agent i is shaped against the live feature pools of agents 0..i-1; the
// pseudo-reward is computed once per episode and added to the final
// transition only.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <boost/property_tree/ptree_fwd.hpp>

#include "fallback/divergence.hpp"
#include "fallback/intersection_env.hpp"
#include "fallback/learner.hpp"
#include "fallback/mdp.hpp"

namespace fallback {

struct RunConfig {
  int pseudo_agents = 1;                   // N
  std::int64_t steps_per_agent = 300'000;  // environment steps
  std::uint64_t seed = 1;
  std::int64_t checkpoint_every = 0;  // env steps; 0 writes only the final checkpoint
  std::string output_dir;             // empty: keep everything in memory
  bool comparison_channel = true;     // log agent 0 against its own pool
};

struct TrainConfig {
  EnvConfig env;
  LearnerConfig learner;
  ShapingParams shaping;
  RunConfig run;
};

std::optional<std::string> validate(const TrainConfig& cfg);
TrainConfig train_config_from_ptree(const boost::property_tree::ptree& tree);
void train_config_to_ptree(const TrainConfig& cfg, boost::property_tree::ptree& tree);
TrainConfig load_train_config(const std::string& path);
void write_train_config(std::ostream& out, const TrainConfig& cfg);

// Independent streams per agent, derived from the run seed.
struct AgentSeeds {
  std::uint64_t network = 0;
  std::uint64_t exploration = 0;
  std::uint64_t replay = 0;
};

AgentSeeds agent_seeds(std::uint64_t run_seed, int agent_id);

struct AgentSlot {
  int id = 0;
  Learner learner;
  ReplayBuffer buffer;
  std::vector<int> references;  // ids 0..id-1
  ShapingParams shaping;        // alpha = 0 for agent 0
  Rng exploration_rng;
  Rng replay_rng;
  std::int64_t episodes = 0;

  AgentSlot(int id, const TrainConfig& cfg);
};

struct EpisodeLog {
  int agent_id = 0;
  std::int64_t episode = 0;      // 0-based, per agent
  std::int64_t global_step = 0;  // agent env steps after the episode
  double base_return = 0.0;      // undiscounted environment reward
  double shaped_return = 0.0;    // base_return + sum of ref_pseudo_rewards
  int length = 0;
  Outcome outcome = Outcome::running;
  CrossingClass crossing = CrossingClass::none;
  std::vector<int> ref_ids;
  std::vector<double> ref_metrics;  // NaN for a skipped reference
  std::vector<double> ref_pseudo_rewards;
  double epsilon = 0.0;
  // Agent 0 only: its episode against its own pool, never rewarded.
  std::optional<double> comparison_metric;
  std::optional<double> comparison_pseudo_reward;
};

std::string episode_log_header();
std::string episode_log_row(const EpisodeLog& log);
void write_episode_logs(std::ostream& out, const std::vector<EpisodeLog>& logs);
std::vector<EpisodeLog> read_episode_logs(std::istream& in);
std::vector<EpisodeLog> load_episode_logs(const std::filesystem::path& csv);

// One shaping entry per reference in agent.references, using each reference's
// current pooled side store.
std::vector<ShapingTerm> reference_metrics(const AgentSlot& agent, const Trajectory& traj,
                                           const std::vector<AgentSlot>& all);

// Agent 0's trajectory against agent 0's own pool; logging only.
std::optional<ShapingTerm> comparison_shaping(const AgentSlot& agent0, const Trajectory& traj,
                                              const ShapingParams& params);

struct EpisodeRecord {
  Trajectory trajectory;
  std::vector<Transition> transitions;  // as pushed, shaping included
  std::vector<double> base_rewards;
};

struct TrainingObserver {
  std::function<void(const EpisodeLog&, const EpisodeRecord&)> on_episode;
};

struct TrainingResult {
  std::vector<AgentSlot> agents;
  std::vector<EpisodeLog> logs;  // in emission order
  std::vector<int> reference_computations_per_round;
  std::vector<int> active_agents_per_round;  // agents that still had step budget
  std::filesystem::path run_dir;  // empty when nothing was written
};

// Throws TrainingError naming the agent and episode on a non-finite reward or loss.
TrainingResult run_training(const TrainConfig& cfg, const TrainingObserver& observer = {});

std::filesystem::path agent_dir(const std::filesystem::path& run_dir, int agent_id);
std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, int agent_id,
                                      std::int64_t step);
std::filesystem::path final_checkpoint_path(const std::filesystem::path& run_dir, int agent_id);

}  // namespace fallback
