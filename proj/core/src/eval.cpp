#include "fallback/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "fallback/config_io.hpp"

namespace fallback {

using config::format_double;

Policy greedy_policy(const QNetwork& net) {
  return [&net](const WorldState&, const StateVector& s) {
    const Eigen::VectorXd q = net.forward(s);
    return Action::from_index(argmax_lowest(std::span<const double>(q.data(), static_cast<std::size_t>(q.size()))));
  };
}

Policy script_policy(std::vector<Action> actions) {
  return [actions = std::move(actions)](const WorldState& w, const StateVector&) {
    const auto t = static_cast<std::size_t>(w.step);
    return t < actions.size() ? actions[t] : Action::from_accel(0);
  };
}

EpisodeSummary run_episode(const Policy& policy, const EnvConfig& cfg, double gamma) {
  EpisodeSummary out;
  const double conflict = cfg.conflict_arc_length();
  WorldState w = reset(cfg);
  out.trajectory.snapshots.push_back(w.snapshot(cfg));
  std::vector<double> rewards;
  bool crossed = false;
  while (!w.terminal()) {
    const StepResult r = step(w, policy(w, observe(w, cfg)), cfg);
    if (!crossed && w.ego_arc_length < conflict && r.next.ego_arc_length >= conflict) {
      crossed = true;
      out.crossing = classify_crossing(r.next, cfg);
    }
    rewards.push_back(r.reward);
    out.trajectory.snapshots.push_back(r.next.snapshot(cfg));
    w = r.next;
  }
  out.trajectory.outcome = w.outcome;
  out.outcome = w.outcome;
  out.length = static_cast<int>(rewards.size());
  for (double r : rewards) out.base_return += r;
  out.discounted_return = discounted_return(rewards, gamma);
  return out;
}

EvalReport evaluate(const Policy& policy, const EnvConfig& cfg, const EvalOptions& opts,
                    std::string policy_id) {
  if (opts.episodes < 1) throw std::invalid_argument("evaluate: episodes must be at least 1");
  require_valid(cfg);
  EvalReport rep;
  rep.policy_id = std::move(policy_id);
  rep.episodes = opts.episodes;
  for (const auto& ref : opts.references) {
    rep.reference_ids.push_back(ref.agent_id);
    rep.mean_metric.push_back(0.0);
  }
  int collisions = 0, goals = 0;
  for (int e = 0; e < opts.episodes; ++e) {
    EpisodeSummary run = run_episode(policy, cfg, opts.gamma);
    rep.mean_return += run.base_return;
    rep.mean_discounted_return += run.discounted_return;
    rep.mean_length += run.length;
    if (e == 0) {
      rep.min_return = rep.max_return = run.base_return;
    } else {
      rep.min_return = std::min(rep.min_return, run.base_return);
      rep.max_return = std::max(rep.max_return, run.base_return);
    }
    collisions += run.outcome == Outcome::collision;
    goals += run.outcome == Outcome::goal;
    if (!opts.references.empty()) {
      const auto terms = shaping_total(run.trajectory, opts.references, ShapingParams{}).terms;
      for (std::size_t k = 0; k < terms.size(); ++k) {
        rep.mean_metric[k] += terms[k].skipped ? std::nan("") : terms[k].metric;
      }
    }
    rep.runs.push_back(std::move(run));
  }
  const double n = opts.episodes;
  rep.mean_return /= n;
  rep.mean_discounted_return /= n;
  rep.mean_length /= n;
  rep.collision_rate = collisions / n;
  rep.goal_rate = goals / n;
  for (double& m : rep.mean_metric) m /= n;
  return rep;
}

EvalReport evaluate(const QNetwork& net, const EnvConfig& cfg, const EvalOptions& opts,
                    std::string policy_id) {
  return evaluate(greedy_policy(net), cfg, opts, std::move(policy_id));
}

void write_eval_report(std::ostream& out, const EvalReport& r) {
  out << "policy_id,episodes,mean_return,min_return,max_return,mean_discounted_return,"
         "collision_rate,goal_rate,mean_length,first_outcome,first_crossing";
  for (int id : r.reference_ids) out << ",metric_vs_" << id;
  out << '\n';
  out << r.policy_id << ',' << r.episodes << ',' << format_double(r.mean_return) << ','
      << format_double(r.min_return) << ',' << format_double(r.max_return) << ','
      << format_double(r.mean_discounted_return) << ',' << format_double(r.collision_rate) << ','
      << format_double(r.goal_rate) << ',' << format_double(r.mean_length) << ','
      << to_string(r.runs.front().outcome) << ',' << to_string(r.runs.front().crossing);
  for (double m : r.mean_metric) out << ',' << format_double(m);
  out << '\n';
}

std::int64_t QLandscape::total_visits() const {
  std::int64_t n = 0;
  for (const auto& c : cells) n += c.visits;
  return n;
}

double QLandscape::speed_centroid() const {
  double num = 0.0, den = 0.0;
  for (const auto& c : cells) {
    num += static_cast<double>(c.visits) * (c.speed_bin + 0.5);
    den += static_cast<double>(c.visits);
  }
  return den > 0.0 ? num / den : std::nan("");
}

std::optional<LandscapeCell> QLandscape::cell(int step, int speed_bin) const {
  for (const auto& c : cells) {
    if (c.step == step && c.speed_bin == speed_bin) return c;
  }
  return std::nullopt;
}

QLandscape qlandscape(const std::vector<QNetwork>& nets, const EnvConfig& cfg, int trajectories) {
  if (trajectories < 1) throw std::invalid_argument("qlandscape: need at least one trajectory");
  if (nets.empty()) throw std::invalid_argument("qlandscape: need at least one network");
  require_valid(cfg);
  QLandscape q;
  q.steps = cfg.max_steps;
  q.speed_bins = static_cast<int>(std::ceil(cfg.ego_speed_max));
  std::map<std::pair<int, int>, std::pair<std::int64_t, double>> acc;
  for (const auto& net : nets) {
    for (int k = 0; k < trajectories; ++k) {
      WorldState w = reset(cfg);
      while (!w.terminal()) {
        const StateVector s = observe(w, cfg);
        const Eigen::VectorXd values = net.forward(s);
        const int bin = std::clamp(static_cast<int>(std::floor(w.ego_speed)), 0, q.speed_bins - 1);
        auto& cell = acc[{w.step, bin}];
        ++cell.first;
        cell.second += values.maxCoeff();
        const int a = argmax_lowest(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
        w = step(w, Action::from_index(a), cfg).next;
      }
      q.outcomes.push_back(w.outcome);
    }
  }
  for (const auto& [key, v] : acc) {
    q.cells.push_back(LandscapeCell{key.first, key.second, v.first, v.second / static_cast<double>(v.first)});
  }
  return q;
}

void write_qlandscape_csv(std::ostream& out, const QLandscape& q) {
  out << "step,speed_bin_lo,speed_bin_hi,visits,mean_q\n";
  for (const auto& c : q.cells) {
    out << c.step << ',' << c.speed_bin << ',' << c.speed_bin + 1 << ',' << c.visits << ','
        << format_double(c.mean_q) << '\n';
  }
}

FinalWindowMetrics final_window_metrics(const TrainingResult& run, int agent_id, int reference_id,
                                        std::size_t window) {
  FinalWindowMetrics out;
  std::vector<double> metrics;
  for (const auto& log : run.logs) {
    if (log.agent_id != agent_id) continue;
    for (std::size_t k = 0; k < log.ref_ids.size(); ++k) {
      if (log.ref_ids[k] == reference_id && std::isfinite(log.ref_metrics[k])) {
        metrics.push_back(log.ref_metrics[k]);
      }
    }
  }
  const std::size_t n = std::min(window, metrics.size());
  for (std::size_t i = metrics.size() - n; i < metrics.size(); ++i) out.mean_metric += metrics[i];
  out.episodes = n;
  out.mean_metric = n ? out.mean_metric / static_cast<double>(n) : std::nan("");

  const auto& agent = run.agents.at(static_cast<std::size_t>(agent_id));
  const auto& ref = run.agents.at(static_cast<std::size_t>(reference_id));
  const auto own = ReferenceDistribution::from_episodes(agent_id, agent.buffer.recent_episode_features());
  const auto other = ReferenceDistribution::from_episodes(reference_id, ref.buffer.recent_episode_features());
  out.pooled_metric = (own.pooled.empty() || other.pooled.empty()) ? std::nan("")
                                                                   : metric(own.pooled, other.pooled);
  return out;
}

double SweepResult::max_adjacent_jump() const {
  double best = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (!rows[i].ok || !rows[i - 1].ok) continue;
    best = std::max(best, std::abs(rows[i].mean_metric_episodes - rows[i - 1].mean_metric_episodes));
  }
  return best;
}

SweepResult alpha_sweep(const TrainConfig& base, const std::vector<double>& alphas,
                        const std::function<void(const SweepRow&, const TrainingResult&)>& on_cell) {
  if (alphas.empty()) throw std::invalid_argument("alpha_sweep: no alpha values");
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    if (!(alphas[i] > alphas[i - 1])) throw std::invalid_argument("alpha_sweep: alphas must be strictly increasing");
  }
  SweepResult sweep;
  for (double alpha : alphas) {
    SweepRow row;
    row.alpha = alpha;
    TrainConfig cfg = base;
    cfg.run.pseudo_agents = 1;
    cfg.shaping.alpha = alpha;
    if (!base.run.output_dir.empty()) {
      row.run_dir = std::filesystem::path(base.run.output_dir) / ("alpha-" + format_double(alpha));
      cfg.run.output_dir = row.run_dir.string();
    }
    try {
      const TrainingResult run = run_training(cfg);
      const auto window = final_window_metrics(run, 1, 0);
      row.mean_metric_episodes = window.mean_metric;
      row.pooled_metric = window.pooled_metric;
      EvalOptions opts;
      opts.episodes = 1;
      opts.gamma = cfg.learner.gamma;
      const auto sub = evaluate(run.agents[1].learner.online(), cfg.env, opts, "agent-1");
      const auto opt = evaluate(run.agents[0].learner.online(), cfg.env, opts, "agent-0");
      row.eval_return = sub.mean_return;
      row.eval_collision_rate = sub.collision_rate;
      row.optimal_eval_return = opt.mean_return;
      row.crossing = sub.runs.front().crossing;
      if (on_cell) on_cell(row, run);
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      if (on_cell) on_cell(row, TrainingResult{});
    }
    sweep.rows.push_back(std::move(row));
  }
  return sweep;
}

void write_sweep_csv(std::ostream& out, const SweepResult& sweep) {
  out << "alpha,ok,mean_metric_episodes,pooled_metric,eval_return,eval_collision_rate,"
         "optimal_eval_return,crossing,error\n";
  for (const auto& r : sweep.rows) {
    out << format_double(r.alpha) << ',' << (r.ok ? 1 : 0) << ',' << format_double(r.mean_metric_episodes)
        << ',' << format_double(r.pooled_metric) << ',' << format_double(r.eval_return) << ','
        << format_double(r.eval_collision_rate) << ',' << format_double(r.optimal_eval_return) << ','
        << to_string(r.crossing) << ',';
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << err << '\n';
  }
}

PerturbationComparison perturbation_compare(const QNetwork& optimal, const QNetwork& fallback,
                                            const EnvConfig& cfg, int target, double factor,
                                            const EvalOptions& opts) {
  const EnvConfig perturbed = perturb(cfg, target, factor);
  PerturbationComparison c;
  c.optimal_base = evaluate(optimal, cfg, opts, "optimal");
  c.optimal_perturbed = evaluate(optimal, perturbed, opts, "optimal-perturbed");
  c.fallback_base = evaluate(fallback, cfg, opts, "fallback");
  c.fallback_perturbed = evaluate(fallback, perturbed, opts, "fallback-perturbed");
  c.optimal_delta = c.optimal_perturbed.mean_return - c.optimal_base.mean_return;
  c.fallback_delta = c.fallback_perturbed.mean_return - c.fallback_base.mean_return;
  c.optimal_collision_delta = c.optimal_perturbed.collision_rate - c.optimal_base.collision_rate;
  c.fallback_collision_delta = c.fallback_perturbed.collision_rate - c.fallback_base.collision_rate;
  return c;
}

void write_perturbation_report(std::ostream& out, const PerturbationComparison& c) {
  out << "policy,base_return,perturbed_return,return_delta,base_collision_rate,"
         "perturbed_collision_rate,collision_delta\n";
  const auto row = [&](const char* name, const EvalReport& b, const EvalReport& p, double d, double cd) {
    out << name << ',' << format_double(b.mean_return) << ',' << format_double(p.mean_return) << ','
        << format_double(d) << ',' << format_double(b.collision_rate) << ','
        << format_double(p.collision_rate) << ',' << format_double(cd) << '\n';
  };
  row("optimal", c.optimal_base, c.optimal_perturbed, c.optimal_delta, c.optimal_collision_delta);
  row("fallback", c.fallback_base, c.fallback_perturbed, c.fallback_delta, c.fallback_collision_delta);
}

void write_curve_csv(std::ostream& out, const std::vector<EpisodeLog>& logs, std::size_t window) {
  if (window == 0) throw std::invalid_argument("curve window must be positive");
  std::vector<int> ref_ids = logs.empty() ? std::vector<int>{} : logs.front().ref_ids;
  const bool comparison = std::any_of(logs.begin(), logs.end(),
                                      [](const EpisodeLog& l) { return l.comparison_metric.has_value(); });
  out << "step,episode,base_return,smoothed_base_return";
  for (int id : ref_ids) out << ",metric_vs_" << id << ",pseudo_reward_vs_" << id;
  if (comparison) out << ",comparison_metric,comparison_pseudo_reward";
  out << ",epsilon\n";
  double running = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const auto& l = logs[i];
    running += l.base_return;
    if (i >= window) running -= logs[i - window].base_return;
    const std::size_t n = std::min(i + 1, window);
    out << l.global_step << ',' << l.episode << ',' << format_double(l.base_return) << ','
        << format_double(running / static_cast<double>(n));
    for (std::size_t k = 0; k < ref_ids.size(); ++k) {
      out << ',' << format_double(l.ref_metrics.at(k)) << ',' << format_double(l.ref_pseudo_rewards.at(k));
    }
    if (comparison) {
      out << ',' << (l.comparison_metric ? format_double(*l.comparison_metric) : "") << ','
          << (l.comparison_pseudo_reward ? format_double(*l.comparison_pseudo_reward) : "");
    }
    out << ',' << format_double(l.epsilon) << '\n';
  }
}

CurveExport export_curves(const std::filesystem::path& run_dir, std::size_t window) {
  namespace fs = std::filesystem;
  CurveExport result;
  if (!fs::is_directory(run_dir)) throw std::runtime_error("run directory '" + run_dir.string() + "' not found");
  std::vector<int> ids;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (!name.empty() && std::all_of(name.begin(), name.end(), ::isdigit)) ids.push_back(std::stoi(name));
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) result.problems.push_back("no agent directories under " + run_dir.string());
  for (int id : ids) {
    const fs::path log_path = agent_dir(run_dir, id) / "episodes.csv";
    if (!fs::exists(log_path)) {
      result.problems.push_back("agent " + std::to_string(id) + ": missing " + log_path.string());
      continue;
    }
    try {
      const auto logs = load_episode_logs(log_path);
      const fs::path out_path = agent_dir(run_dir, id) / "curves.csv";
      std::ofstream out(out_path);
      write_curve_csv(out, logs, window);
      result.written.push_back(out_path);
    } catch (const std::exception& e) {
      result.problems.push_back("agent " + std::to_string(id) + ": " + e.what());
    }
  }
  return result;
}

}  // namespace fallback
