#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "fallback/dp_oracle.hpp"
#include "fallback/eval.hpp"

using namespace fallback;
namespace fs = std::filesystem;

namespace {

EnvConfig short_default() {
  EnvConfig cfg;
  cfg.max_steps = 60;
  return cfg;
}

TrainConfig tiny_config(std::int64_t steps) {
  TrainConfig cfg;
  cfg.env.max_steps = 60;
  cfg.learner.hidden_sizes = {16, 16};
  cfg.learner.batch_size = 16;
  cfg.learner.warmup = 64;
  cfg.learner.target_sync = 100;
  cfg.learner.epsilon_decay_steps = 1000;
  cfg.run.steps_per_agent = steps;
  cfg.run.seed = 3;
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fallback_eval_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(RunEpisode, OracleScriptReproducesOracleValue) {
  const OracleResult oracle = solve(short_default(), 0.99, Constraint::none);
  const EpisodeSummary ep = run_episode(script_policy(oracle.actions), short_default(), 0.99);
  EXPECT_NEAR(ep.discounted_return, oracle.value, 1e-9);
  EXPECT_EQ(ep.outcome, Outcome::goal);
  EXPECT_EQ(ep.crossing, CrossingClass::before_target_1);
  EXPECT_EQ(ep.length, oracle.rollout.length);
  EXPECT_EQ(ep.trajectory.snapshots.size(), static_cast<std::size_t>(ep.length) + 1);
  EXPECT_NEAR(ep.base_return, -0.1 * ep.length, 1e-12);
}

TEST(Evaluate, DeterministicPolicyGivesIdenticalEpisodes) {
  EvalOptions opts;
  opts.episodes = 5;
  const EvalReport r = evaluate(script_policy({}), short_default(), opts, "coast");
  EXPECT_EQ(r.policy_id, "coast");
  ASSERT_EQ(r.runs.size(), 5u);
  EXPECT_EQ(r.min_return, r.max_return);
  EXPECT_EQ(r.collision_rate, 1.0);  // constant speed meets target 1
  EXPECT_EQ(r.goal_rate, 0.0);
  EXPECT_TRUE(r.reference_ids.empty());
}

TEST(Evaluate, ReportsMetricAgainstReferences) {
  const EpisodeSummary ep = run_episode(script_policy({}), short_default(), 0.99);
  EvalOptions opts;
  opts.episodes = 2;
  opts.references = {ReferenceDistribution::from_episodes(4, {phi(ep.trajectory)})};
  const EvalReport r = evaluate(script_policy({}), short_default(), opts);
  ASSERT_EQ(r.reference_ids, std::vector<int>{4});
  EXPECT_EQ(r.mean_metric[0], 0.0);
  std::ostringstream out;
  write_eval_report(out, r);
  EXPECT_NE(out.str().find("collision_rate"), std::string::npos);
}

TEST(Perturbation, UnitFactorGivesZeroDeltas) {
  Rng rng(5);
  const QNetwork a = QNetwork::initialized({8, 16, 16, 6}, rng);
  const QNetwork b = QNetwork::initialized({8, 16, 16, 6}, rng);
  EvalOptions opts;
  opts.episodes = 3;
  const PerturbationComparison c = perturbation_compare(a, b, short_default(), 1, 1.0, opts);
  EXPECT_EQ(c.optimal_delta, 0.0);
  EXPECT_EQ(c.fallback_delta, 0.0);
  EXPECT_EQ(c.optimal_collision_delta, 0.0);
  EXPECT_EQ(c.fallback_collision_delta, 0.0);
  std::ostringstream out;
  write_perturbation_report(out, c);
  EXPECT_FALSE(out.str().empty());
}

TEST(QLandscapeTest, VisitCountsMatchEpisodeLengths) {
  Rng rng(9);
  const std::vector<QNetwork> nets = {QNetwork::initialized({8, 16, 16, 6}, rng),
                                      QNetwork::initialized({8, 16, 16, 6}, rng)};
  const QLandscape q = qlandscape(nets, short_default(), 3);
  ASSERT_EQ(q.outcomes.size(), 6u);
  std::int64_t expected = 0;
  for (const auto& net : nets) expected += 3 * run_episode(greedy_policy(net), short_default(), 0.99).length;
  EXPECT_EQ(q.total_visits(), expected);
  ASSERT_FALSE(q.cells.empty());
  const auto first = q.cell(0, 20);  // every rollout starts at 20 m/s
  ASSERT_TRUE(first.has_value());
  EXPECT_EQ(first->visits, 6);
  EXPECT_FALSE(q.cell(0, 3).has_value());
  EXPECT_GE(q.speed_centroid(), 0.0);
  EXPECT_LE(q.speed_centroid(), 30.0);
  std::ostringstream out;
  write_qlandscape_csv(out, q);
  EXPECT_EQ(lines_of(out.str()).size(), q.cells.size() + 1);
  EXPECT_THROW(qlandscape({}, short_default(), 1), std::invalid_argument);
  EXPECT_THROW(qlandscape(nets, short_default(), 0), std::invalid_argument);
}

TEST(Curves, OneRowPerEpisodeWithRunningMean) {
  std::vector<EpisodeLog> logs(10);
  for (int i = 0; i < 10; ++i) {
    logs[static_cast<std::size_t>(i)].agent_id = 1;
    logs[static_cast<std::size_t>(i)].episode = i;
    logs[static_cast<std::size_t>(i)].base_return = -static_cast<double>(i);
    logs[static_cast<std::size_t>(i)].ref_ids = {0};
    logs[static_cast<std::size_t>(i)].ref_metrics = {0.5};
    logs[static_cast<std::size_t>(i)].ref_pseudo_rewards = {-1.0 / 0.6};
  }
  std::ostringstream out;
  write_curve_csv(out, logs, 4);
  const auto rows = lines_of(out.str());
  ASSERT_EQ(rows.size(), 11u);
  EXPECT_EQ(rows[0], "step,episode,base_return,smoothed_base_return,metric_vs_0,pseudo_reward_vs_0,epsilon");
  // Episode 9 averages returns -6..-9.
  EXPECT_EQ(rows[10].substr(0, rows[10].find(",0.5")), "0,9,-9,-7.5");
  EXPECT_THROW(write_curve_csv(out, logs, 0), std::invalid_argument);
}

TEST(Curves, ExportWritesOneFilePerAgent) {
  TrainConfig cfg = tiny_config(300);
  cfg.run.output_dir = scratch_dir("curves").string();
  const TrainingResult run = run_training(cfg);
  const CurveExport ex = export_curves(run.run_dir);
  EXPECT_TRUE(ex.problems.empty());
  ASSERT_EQ(ex.written.size(), 2u);
  for (int id = 0; id < 2; ++id) {
    std::ifstream in(agent_dir(run.run_dir, id) / "curves.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(lines_of(ss.str()).size(), static_cast<std::size_t>(run.agents[static_cast<std::size_t>(id)].episodes) + 1);
  }
  fs::remove(agent_dir(run.run_dir, 1) / "episodes.csv");
  EXPECT_EQ(export_curves(run.run_dir).problems.size(), 1u);
  EXPECT_THROW(export_curves(run.run_dir / "missing"), std::runtime_error);
  fs::remove_all(cfg.run.output_dir);
}

TEST(AlphaSweep, RecordsOneRowPerAlphaAndContinuesPastFailures) {
  TrainConfig cfg = tiny_config(400);
  cfg.run.output_dir = scratch_dir("sweep").string();
  int cells = 0;
  const SweepResult s = alpha_sweep(cfg, {-1.0, 0.0, 1.0}, [&](const SweepRow& row, const TrainingResult&) { cells += row.ok; });
  ASSERT_EQ(s.rows.size(), 3u);
  EXPECT_FALSE(s.rows[0].ok);
  EXPECT_FALSE(s.rows[0].error.empty());
  EXPECT_TRUE(s.rows[1].ok);
  EXPECT_TRUE(s.rows[2].ok);
  EXPECT_EQ(cells, 2);
  // Agent 0 never sees the shaping weight, so identical seeds give identical optima.
  EXPECT_EQ(s.rows[1].optimal_eval_return, s.rows[2].optimal_eval_return);
  EXPECT_TRUE(fs::exists(s.rows[2].run_dir / "episodes.csv"));
  EXPECT_GE(s.max_adjacent_jump(), 0.0);
  std::ostringstream out;
  write_sweep_csv(out, s);
  EXPECT_EQ(lines_of(out.str()).size(), 4u);
  fs::remove_all(cfg.run.output_dir);
}

TEST(FinalWindow, AveragesTheLastEpisodes) {
  const TrainingResult run = run_training(tiny_config(400));
  const FinalWindowMetrics m = final_window_metrics(run, 1, 0, 5);
  EXPECT_EQ(m.episodes, 5u);
  double sum = 0.0;
  int seen = 0;
  for (auto it = run.logs.rbegin(); it != run.logs.rend() && seen < 5; ++it) {
    if (it->agent_id != 1 || !std::isfinite(it->ref_metrics[0])) continue;
    sum += it->ref_metrics[0];
    ++seen;
  }
  EXPECT_NEAR(m.mean_metric, sum / 5.0, 1e-12);
  EXPECT_GE(m.pooled_metric, 0.0);
}
