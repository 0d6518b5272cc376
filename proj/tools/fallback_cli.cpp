// Command-line front end: training, evaluation, the alpha sweep, Q-value
// maps, the exact oracle and curve export.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fallback/config_io.hpp"
#include "fallback/dp_oracle.hpp"
#include "fallback/eval.hpp"
#include "fallback/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace fallback;

namespace {

fs::path output_root() {
  if (const char* root = std::getenv("FALLBACK_OUTPUT_ROOT"); root && *root) return root;
  return fs::current_path();
}

fs::path resolve_output(const std::string& dir) {
  const fs::path p(dir);
  return p.is_absolute() ? p : output_root() / p;
}

struct Perturbation {
  int target = 1;
  double factor = 1.0;
};

// Parses "target=1,factor=1.5".
Perturbation parse_perturbation(const std::string& text) {
  Perturbation p;
  std::stringstream ss(text);
  std::string item;
  bool have_factor = false;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--perturb", "expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    try {
      if (key == "target") {
        p.target = std::stoi(value);
      } else if (key == "factor") {
        p.factor = std::stod(value);
        have_factor = true;
      } else {
        throw CLI::ValidationError("--perturb", "unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw CLI::ValidationError("--perturb", "cannot parse '" + item + "'");
    }
  }
  if (!have_factor) throw CLI::ValidationError("--perturb", "factor is required");
  return p;
}

void write_or_print(const std::optional<std::string>& path, const std::string& text) {
  if (!path) {
    std::cout << text;
    return;
  }
  const fs::path out = resolve_output(*path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write '" + out.string() + "'");
  f << text;
  std::cerr << "wrote " << out.string() << '\n';
}

std::string default_run_name(const std::string& config_path, std::uint64_t seed) {
  return "runs/" + fs::path(config_path).stem().string() + "-seed" + std::to_string(seed);
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              std::optional<std::string> out_dir, std::optional<std::int64_t> steps,
              std::optional<int> pseudo_agents, std::optional<double> alpha) {
  TrainConfig cfg = load_train_config(config_path);
  if (seed) cfg.run.seed = *seed;
  if (steps) cfg.run.steps_per_agent = *steps;
  if (pseudo_agents) cfg.run.pseudo_agents = *pseudo_agents;
  if (alpha) cfg.shaping.alpha = *alpha;
  if (out_dir) cfg.run.output_dir = *out_dir;
  if (cfg.run.output_dir.empty()) cfg.run.output_dir = default_run_name(config_path, cfg.run.seed);
  cfg.run.output_dir = resolve_output(cfg.run.output_dir).string();

  const auto start = std::chrono::steady_clock::now();
  std::int64_t next_report = 10'000;
  TrainingObserver observer;
  observer.on_episode = [&](const EpisodeLog& log, const EpisodeRecord&) {
    if (log.agent_id != cfg.run.pseudo_agents || log.global_step < next_report) return;
    next_report += 10'000;
    std::cerr << "step " << log.global_step << "  episode " << log.episode << "  eps "
              << std::setprecision(3) << log.epsilon << '\n';
  };
  const TrainingResult run = run_training(cfg, observer);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  EvalOptions opts;
  opts.episodes = 1;
  opts.gamma = cfg.learner.gamma;
  std::cout << "run_dir " << run.run_dir.string() << '\n';
  std::cout << "agent,env_steps,episodes,greedy_return,greedy_outcome,greedy_crossing,final100_metric_vs_prev\n";
  for (const auto& agent : run.agents) {
    const auto rep = evaluate(agent.learner.online(), cfg.env, opts);
    std::cout << agent.id << ',' << agent.learner.env_steps() << ',' << agent.episodes << ','
              << config::format_double(rep.mean_return) << ',' << to_string(rep.runs.front().outcome) << ','
              << to_string(rep.runs.front().crossing) << ',';
    if (agent.id > 0) std::cout << config::format_double(final_window_metrics(run, agent.id, agent.id - 1).mean_metric);
    std::cout << '\n';
  }
  std::cerr << "trained in " << std::fixed << std::setprecision(1) << secs << " s\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& config_path, int episodes,
             const std::optional<std::string>& perturb_spec, const std::optional<std::string>& out) {
  const TrainConfig cfg = load_train_config(config_path);
  EnvConfig env = cfg.env;
  if (perturb_spec) {
    const Perturbation p = parse_perturbation(*perturb_spec);
    env = perturb(env, p.target, p.factor);
  }
  CheckpointInfo info;
  const QNetwork net = load_checkpoint(ckpt, &info);
  if (net.layer_sizes() != cfg.learner.layer_sizes()) {
    throw ConfigError("checkpoint layer sizes do not match the config's learner section");
  }
  EvalOptions opts;
  opts.episodes = episodes;
  opts.gamma = cfg.learner.gamma;
  std::ostringstream text;
  write_eval_report(text, evaluate(net, env, opts, fs::path(ckpt).parent_path().filename().string()));
  write_or_print(out, text.str());
  return 0;
}

int cmd_sweep(const std::string& config_path, std::vector<double> alphas, std::optional<std::uint64_t> seed,
              std::optional<std::int64_t> steps, std::optional<std::string> out_dir) {
  TrainConfig cfg = load_train_config(config_path);
  if (seed) cfg.run.seed = *seed;
  if (steps) cfg.run.steps_per_agent = *steps;
  if (out_dir) cfg.run.output_dir = *out_dir;
  if (cfg.run.output_dir.empty()) cfg.run.output_dir = default_run_name(config_path, cfg.run.seed) + "-sweep";
  cfg.run.output_dir = resolve_output(cfg.run.output_dir).string();
  if (alphas.empty()) alphas = kDefaultAlphas;

  const SweepResult sweep = alpha_sweep(cfg, alphas, [](const SweepRow& row, const TrainingResult&) {
    std::cerr << "alpha " << row.alpha << ": "
              << (row.ok ? "metric " + config::format_double(row.mean_metric_episodes) : "failed: " + row.error)
              << '\n';
  });
  fs::create_directories(cfg.run.output_dir);
  std::ofstream file(fs::path(cfg.run.output_dir) / "sweep.csv");
  write_sweep_csv(file, sweep);
  write_sweep_csv(std::cout, sweep);
  std::cout << "max_adjacent_jump," << config::format_double(sweep.max_adjacent_jump()) << '\n';
  for (const auto& row : sweep.rows) {
    if (!row.ok) return 1;
  }
  return 0;
}

int cmd_qmap(const std::vector<std::string>& ckpts, const std::string& config_path, int trajectories,
             const std::optional<std::string>& perturb_spec, const std::optional<std::string>& out) {
  const TrainConfig cfg = load_train_config(config_path);
  EnvConfig env = cfg.env;
  if (perturb_spec) {
    const Perturbation p = parse_perturbation(*perturb_spec);
    env = perturb(env, p.target, p.factor);
  }
  std::vector<QNetwork> nets;
  for (const auto& c : ckpts) nets.push_back(load_checkpoint(c));
  const QLandscape q = qlandscape(nets, env, trajectories);
  std::ostringstream text;
  write_qlandscape_csv(text, q);
  write_or_print(out, text.str());
  std::cerr << "speed_centroid " << config::format_double(q.speed_centroid()) << "  outcomes";
  for (Outcome o : q.outcomes) std::cerr << ' ' << to_string(o);
  std::cerr << '\n';
  return 0;
}

int cmd_oracle(const std::string& config_path, const std::string& constraint_text,
               const std::optional<std::string>& out) {
  const TrainConfig cfg = load_train_config(config_path);
  const Constraint constraint = constraint_from_string(constraint_text);
  const auto start = std::chrono::steady_clock::now();
  const OracleResult r = solve(cfg.env, cfg.learner.gamma, constraint);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::cout << "constraint        " << to_string(r.constraint) << '\n'
            << "value             " << config::format_double(r.value) << '\n'
            << "outcome           " << to_string(r.rollout.outcome) << '\n'
            << "crossing          " << to_string(r.rollout.crossing) << '\n'
            << "crossing_time_s   "
            << (r.rollout.crossing_time ? config::format_double(*r.rollout.crossing_time) : std::string("none")) << '\n'
            << "length            " << r.rollout.length << '\n'
            << "undiscounted      " << config::format_double(r.rollout.undiscounted_return) << '\n'
            << "states_evaluated  " << r.states_evaluated << '\n'
            << "seconds           " << std::fixed << std::setprecision(2) << secs << '\n';

  std::ostringstream csv;
  csv << "step,time,arc_length,speed,action_accel\n";
  for (std::size_t i = 0; i < r.rollout.snapshots.size(); ++i) {
    const auto& s = r.rollout.snapshots[i];
    csv << i << ',' << config::format_double(s.time) << ',' << config::format_double(s.arc_length) << ','
        << config::format_double(s.speed) << ',';
    if (i < r.actions.size()) csv << r.actions[i].accel();
    csv << '\n';
  }
  if (out) write_or_print(out, csv.str());
  return 0;
}

int cmd_curves(const std::string& run_dir) {
  const CurveExport result = export_curves(resolve_output(run_dir));
  for (const auto& p : result.written) std::cout << "wrote " << p.string() << '\n';
  for (const auto& p : result.problems) std::cerr << "error: " << p << '\n';
  return result.problems.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning fallback strategies: training, evaluation and oracle tools"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Override the run seed from the config");

  std::string config_path, ckpt, run_dir;
  std::optional<std::string> out, perturb_spec, out_dir;
  std::optional<std::int64_t> steps;
  std::optional<int> pseudo_agents;
  std::optional<double> alpha;
  int episodes = 100, trajectories = 10;
  std::vector<double> alphas;
  std::vector<std::string> extra_ckpts;
  std::string constraint = "none";

  auto* train = app.add_subcommand("train", "Train agent 0 and the pseudo-agents");
  train->add_option("config", config_path, "Training config (INI)")->required()->check(CLI::ExistingFile);
  train->add_option("--output", out_dir, "Run directory (relative paths resolve under FALLBACK_OUTPUT_ROOT)");
  train->add_option("--steps", steps, "Environment steps per agent");
  train->add_option("--pseudo-agents", pseudo_agents, "Number of pseudo-agents N");
  train->add_option("--alpha", alpha, "Pseudo-reward scale");

  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval->add_option("checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("config", config_path, "Config whose [environment] to evaluate on")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "Episodes to run")->check(CLI::PositiveNumber);
  eval->add_option("--perturb", perturb_spec, "Scale a target's collision radius, e.g. target=1,factor=1.5");
  eval->add_option("--out", out, "Write the report to this CSV file");

  auto* sweep = app.add_subcommand("sweep-alpha", "Train N=1 pairs over a range of alpha values");
  sweep->add_option("config", config_path, "Training config (INI)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--alphas", alphas, "Alpha values, strictly increasing")->delimiter(',');
  sweep->add_option("--steps", steps, "Environment steps per agent");
  sweep->add_option("--output", out_dir, "Sweep directory");

  auto* qmap = app.add_subcommand("qmap", "Mean greedy Q-value over (step, speed) cells");
  qmap->add_option("checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  qmap->add_option("config", config_path, "Config (INI)")->required()->check(CLI::ExistingFile);
  qmap->add_option("--trajectories", trajectories, "Greedy trajectories per checkpoint")->check(CLI::PositiveNumber);
  qmap->add_option("--also", extra_ckpts, "Further checkpoints of the same policy to pool")->check(CLI::ExistingFile);
  qmap->add_option("--perturb", perturb_spec, "Scale a target's collision radius, e.g. target=1,factor=1.5");
  qmap->add_option("--out", out, "Write the landscape to this CSV file");

  auto* oracle = app.add_subcommand("oracle", "Exact optimum by backward induction");
  oracle->add_option("config", config_path, "Config (INI)")->required()->check(CLI::ExistingFile);
  oracle->add_option("--constraint", constraint, "none | cross-after-target-1");
  oracle->add_option("--out", out, "Write the optimal trajectory to this CSV file");

  auto* curves = app.add_subcommand("curves", "Export smoothed per-agent training curves");
  curves->add_option("run_dir", run_dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, seed, out_dir, steps, pseudo_agents, alpha);
    if (*eval) return cmd_eval(ckpt, config_path, episodes, perturb_spec, out);
    if (*sweep) return cmd_sweep(config_path, alphas, seed, steps, out_dir);
    if (*qmap) {
      std::vector<std::string> all = {ckpt};
      all.insert(all.end(), extra_ckpts.begin(), extra_ckpts.end());
      return cmd_qmap(all, config_path, trajectories, perturb_spec, out);
    }
    if (*oracle) return cmd_oracle(config_path, constraint, out);
    if (*curves) return cmd_curves(run_dir);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
