#pragma once

// Evaluation harness: greedy policy reports, Q-value landscapes, the alpha
// sweep, perturbation comparisons and smoothed training curves.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fallback/divergence.hpp"
#include "fallback/intersection_env.hpp"
#include "fallback/learner.hpp"
#include "fallback/orchestrator.hpp"

namespace fallback {

// Maps (world state, observation) to an action; used to evaluate scripted
// policies alongside networks.
using Policy = std::function<Action(const WorldState&, const StateVector&)>;

Policy greedy_policy(const QNetwork& net);
// Replays a fixed action script, holding zero acceleration once it runs out.
Policy script_policy(std::vector<Action> actions);

struct EpisodeSummary {
  double base_return = 0.0;        // undiscounted
  double discounted_return = 0.0;  // with the evaluation gamma
  int length = 0;
  Outcome outcome = Outcome::running;
  CrossingClass crossing = CrossingClass::none;
  Trajectory trajectory;
};

EpisodeSummary run_episode(const Policy& policy, const EnvConfig& cfg, double gamma);

struct EvalReport {
  std::string policy_id;
  int episodes = 0;
  double mean_return = 0.0;  // undiscounted base return
  double min_return = 0.0;
  double max_return = 0.0;
  double mean_discounted_return = 0.0;
  double collision_rate = 0.0;
  double goal_rate = 0.0;
  double mean_length = 0.0;
  std::vector<int> reference_ids;
  std::vector<double> mean_metric;  // per reference, same order as reference_ids
  std::vector<EpisodeSummary> runs;
};

struct EvalOptions {
  int episodes = 100;
  double gamma = 0.99;
  std::uint64_t seed = 0;  // reserved for randomized environments; greedy runs are deterministic
  // Reference feature pools to measure the path metric against.
  std::vector<ReferenceDistribution> references;
};

EvalReport evaluate(const Policy& policy, const EnvConfig& cfg, const EvalOptions& opts,
                    std::string policy_id = "policy");
EvalReport evaluate(const QNetwork& net, const EnvConfig& cfg, const EvalOptions& opts,
                    std::string policy_id = "policy");
void write_eval_report(std::ostream& out, const EvalReport& report);

struct LandscapeCell {
  int step = 0;
  int speed_bin = 0;  // floor(speed / 1 m/s)
  std::int64_t visits = 0;
  double mean_q = 0.0;  // mean of max_a Q(s, a) over visits
};

struct QLandscape {
  int steps = 0;
  int speed_bins = 0;
  std::vector<LandscapeCell> cells;  // visited cells only, ordered by (step, speed_bin)
  std::vector<Outcome> outcomes;     // one per sampled trajectory
  std::int64_t total_visits() const;
  // Visit-weighted mean of the cell speed-bin centres.
  double speed_centroid() const;
  std::optional<LandscapeCell> cell(int step, int speed_bin) const;
};

QLandscape qlandscape(const std::vector<QNetwork>& nets, const EnvConfig& cfg, int trajectories);
void write_qlandscape_csv(std::ostream& out, const QLandscape& q);

struct SweepRow {
  double alpha = 0.0;
  bool ok = true;
  std::string error;
  double mean_metric_episodes = 0.0;  // mean of the final-100 per-episode metrics
  double pooled_metric = 0.0;         // metric of the pooled final-100 features
  double eval_return = 0.0;           // greedy pseudo-agent base return
  double eval_collision_rate = 0.0;
  double optimal_eval_return = 0.0;   // greedy agent-0 base return
  CrossingClass crossing = CrossingClass::none;
  std::filesystem::path run_dir;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double max_adjacent_jump() const;  // over mean_metric_episodes
};

inline const std::vector<double> kDefaultAlphas = {0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0};

// Trains an N = 1 pair per alpha with identical seeds. Per-alpha failures are
// recorded and the sweep continues. Each cell writes to <output_dir>/alpha-<a>
// when the base config names an output directory.
SweepResult alpha_sweep(const TrainConfig& base, const std::vector<double>& alphas,
                        const std::function<void(const SweepRow&, const TrainingResult&)>& on_cell = {});
void write_sweep_csv(std::ostream& out, const SweepResult& sweep);

// Final-window statistics of a pseudo-agent's log against its first reference.
struct FinalWindowMetrics {
  double mean_metric = 0.0;
  double pooled_metric = 0.0;
  std::size_t episodes = 0;
};
FinalWindowMetrics final_window_metrics(const TrainingResult& run, int agent_id, int reference_id,
                                        std::size_t window = 100);

struct PerturbationComparison {
  EvalReport optimal_base, optimal_perturbed;
  EvalReport fallback_base, fallback_perturbed;
  double optimal_delta = 0.0;  // perturbed - base mean return
  double fallback_delta = 0.0;
  double optimal_collision_delta = 0.0;
  double fallback_collision_delta = 0.0;
};

PerturbationComparison perturbation_compare(const QNetwork& optimal, const QNetwork& fallback,
                                            const EnvConfig& cfg, int target, double factor,
                                            const EvalOptions& opts);
void write_perturbation_report(std::ostream& out, const PerturbationComparison& c);

// Per-agent curve files: step, smoothed base return, per-reference metric and
// pseudo-reward, epsilon (plus the comparison channel for agent 0).
inline constexpr std::size_t kCurveWindow = 100;
struct CurveExport {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> problems;  // per-agent missing logs
};
CurveExport export_curves(const std::filesystem::path& run_dir, std::size_t window = kCurveWindow);
void write_curve_csv(std::ostream& out, const std::vector<EpisodeLog>& logs, std::size_t window = kCurveWindow);

}  // namespace fallback
