#include "fallback/orchestrator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ptree.hpp>

#include "fallback/config_io.hpp"

namespace fallback {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += config::format_double(v[i]);
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string item;
  std::stringstream ss(text);
  while (std::getline(ss, item, sep)) parts.push_back(item);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("cannot parse number '" + s + "'");
  }
  return v;
}

template <typename T>
T parse_int(const std::string& s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("cannot parse integer '" + s + "'");
  }
  return v;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  for (const auto& item : split(s, ';')) out.push_back(parse_double(item));
  return out;
}

CrossingClass crossing_from_string(const std::string& s) {
  for (auto c : {CrossingClass::none, CrossingClass::before_target_1, CrossingClass::between_1_and_2,
                 CrossingClass::after_target_2}) {
    if (to_string(c) == s) return c;
  }
  throw std::invalid_argument("unknown crossing class '" + s + "'");
}

constexpr int kLogColumns = 14;

}  // namespace

std::optional<std::string> validate(const TrainConfig& cfg) {
  if (auto p = validate(cfg.env)) return "environment: " + *p;
  if (auto p = validate(cfg.learner)) return "learner: " + *p;
  if (auto p = validate(cfg.shaping)) return "shaping: " + *p;
  if (cfg.run.pseudo_agents < 0) return "run: pseudo_agents must be non-negative";
  if (cfg.run.steps_per_agent <= 0) return "run: steps_per_agent must be positive";
  if (cfg.run.checkpoint_every < 0) return "run: checkpoint_every must be non-negative";
  return std::nullopt;
}

TrainConfig train_config_from_ptree(const config::Tree& tree) {
  TrainConfig cfg;
  const config::Tree empty;
  const auto section = [&](const char* name) -> const config::Tree& {
    const auto child = tree.get_child_optional(name);
    return child ? *child : empty;
  };
  if (!tree.get_child_optional("environment")) throw ConfigError("missing [environment] section");
  cfg.env = env_config_from_ptree(section("environment"));
  cfg.learner = learner_config_from_ptree(section("learner"));
  cfg.shaping = shaping_params_from_ptree(section("shaping"));
  const config::Tree& run = section("run");
  config::read_value(run, "pseudo_agents", cfg.run.pseudo_agents);
  config::read_value(run, "steps_per_agent", cfg.run.steps_per_agent);
  config::read_value(run, "seed", cfg.run.seed);
  config::read_value(run, "checkpoint_every", cfg.run.checkpoint_every);
  config::read_value(run, "output_dir", cfg.run.output_dir);
  config::read_value(run, "comparison_channel", cfg.run.comparison_channel);
  if (auto problem = validate(cfg)) throw ConfigError("invalid training config: " + *problem);
  return cfg;
}

void train_config_to_ptree(const TrainConfig& cfg, config::Tree& tree) {
  config::Tree env, learner, shaping, run;
  env_config_to_ptree(cfg.env, env);
  learner_config_to_ptree(cfg.learner, learner);
  shaping_params_to_ptree(cfg.shaping, shaping);
  run.put("pseudo_agents", cfg.run.pseudo_agents);
  run.put("steps_per_agent", cfg.run.steps_per_agent);
  run.put("seed", cfg.run.seed);
  run.put("checkpoint_every", cfg.run.checkpoint_every);
  run.put("output_dir", cfg.run.output_dir);
  run.put("comparison_channel", cfg.run.comparison_channel ? "true" : "false");
  tree.add_child("environment", env);
  tree.add_child("learner", learner);
  tree.add_child("shaping", shaping);
  tree.add_child("run", run);
}

TrainConfig load_train_config(const std::string& path) {
  try {
    return train_config_from_ptree(config::read_ini_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_train_config(std::ostream& out, const TrainConfig& cfg) {
  config::Tree tree;
  train_config_to_ptree(cfg, tree);
  config::write_ini(out, tree);
}

AgentSeeds agent_seeds(std::uint64_t run_seed, int agent_id) {
  std::uint64_t state = run_seed ^ (0xA5A5A5A5ULL * static_cast<std::uint64_t>(agent_id + 1));
  AgentSeeds s;
  s.network = splitmix64(state);
  s.exploration = splitmix64(state);
  s.replay = splitmix64(state);
  return s;
}

AgentSlot::AgentSlot(int agent_id, const TrainConfig& cfg)
    : id(agent_id),
      learner(cfg.learner, agent_seeds(cfg.run.seed, agent_id).network),
      buffer(cfg.learner.replay_capacity),
      shaping(cfg.shaping),
      exploration_rng(agent_seeds(cfg.run.seed, agent_id).exploration),
      replay_rng(agent_seeds(cfg.run.seed, agent_id).replay) {
  for (int j = 0; j < agent_id; ++j) references.push_back(j);
  if (agent_id == 0) shaping.alpha = 0.0;
}

std::string episode_log_header() {
  return "agent_id,episode,global_step,base_return,shaped_return,length,outcome,crossing,epsilon,"
         "ref_ids,ref_metrics,ref_pseudo_rewards,comparison_metric,comparison_pseudo_reward";
}

std::string episode_log_row(const EpisodeLog& log) {
  using config::format_double;
  std::string row;
  row += std::to_string(log.agent_id) + ',';
  row += std::to_string(log.episode) + ',';
  row += std::to_string(log.global_step) + ',';
  row += format_double(log.base_return) + ',';
  row += format_double(log.shaped_return) + ',';
  row += std::to_string(log.length) + ',';
  row += std::string(to_string(log.outcome)) + ',';
  row += std::string(to_string(log.crossing)) + ',';
  row += format_double(log.epsilon) + ',';
  row += join_ints(log.ref_ids) + ',';
  row += join_doubles(log.ref_metrics) + ',';
  row += join_doubles(log.ref_pseudo_rewards) + ',';
  row += (log.comparison_metric ? format_double(*log.comparison_metric) : std::string()) + ',';
  row += log.comparison_pseudo_reward ? format_double(*log.comparison_pseudo_reward) : std::string();
  return row;
}

void write_episode_logs(std::ostream& out, const std::vector<EpisodeLog>& logs) {
  out << episode_log_header() << '\n';
  for (const auto& log : logs) out << episode_log_row(log) << '\n';
}

std::vector<EpisodeLog> read_episode_logs(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != episode_log_header()) {
    throw std::invalid_argument("episode log: missing or unexpected header");
  }
  std::vector<EpisodeLog> logs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != kLogColumns) {
      throw std::invalid_argument("episode log line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(kLogColumns) + " columns");
    }
    try {
      EpisodeLog log;
      log.agent_id = parse_int<int>(f[0]);
      log.episode = parse_int<std::int64_t>(f[1]);
      log.global_step = parse_int<std::int64_t>(f[2]);
      log.base_return = parse_double(f[3]);
      log.shaped_return = parse_double(f[4]);
      log.length = parse_int<int>(f[5]);
      log.outcome = outcome_from_string(f[6]);
      log.crossing = crossing_from_string(f[7]);
      log.epsilon = parse_double(f[8]);
      if (!f[9].empty()) {
        for (const auto& id : split(f[9], ';')) log.ref_ids.push_back(parse_int<int>(id));
      }
      log.ref_metrics = parse_double_list(f[10]);
      log.ref_pseudo_rewards = parse_double_list(f[11]);
      if (!f[12].empty()) log.comparison_metric = parse_double(f[12]);
      if (!f[13].empty()) log.comparison_pseudo_reward = parse_double(f[13]);
      logs.push_back(std::move(log));
    } catch (const std::exception& e) {
      throw std::invalid_argument("episode log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return logs;
}

std::vector<EpisodeLog> load_episode_logs(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("cannot open episode log '" + csv.string() + "'");
  return read_episode_logs(in);
}

std::vector<ShapingTerm> reference_metrics(const AgentSlot& agent, const Trajectory& traj,
                                           const std::vector<AgentSlot>& all) {
  std::vector<ReferenceDistribution> refs;
  refs.reserve(agent.references.size());
  for (int j : agent.references) {
    if (j < 0 || j >= agent.id || static_cast<std::size_t>(j) >= all.size()) {
      throw std::out_of_range("agent " + std::to_string(agent.id) + " has invalid reference " +
                              std::to_string(j));
    }
    refs.push_back(ReferenceDistribution::from_episodes(
        j, all[static_cast<std::size_t>(j)].buffer.recent_episode_features()));
  }
  return shaping_total(traj, refs, agent.shaping).terms;
}

std::optional<ShapingTerm> comparison_shaping(const AgentSlot& agent0, const Trajectory& traj,
                                              const ShapingParams& params) {
  const std::vector<ReferenceDistribution> own = {
      ReferenceDistribution::from_episodes(agent0.id, agent0.buffer.recent_episode_features())};
  const auto result = shaping_total(traj, own, params);
  if (result.terms.front().skipped) return std::nullopt;
  return result.terms.front();
}

std::filesystem::path agent_dir(const std::filesystem::path& run_dir, int agent_id) {
  return run_dir / std::to_string(agent_id);
}

std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, int agent_id,
                                      std::int64_t step) {
  return agent_dir(run_dir, agent_id) / ("step-" + std::to_string(step) + ".ckpt");
}

std::filesystem::path final_checkpoint_path(const std::filesystem::path& run_dir, int agent_id) {
  return agent_dir(run_dir, agent_id) / "final.ckpt";
}

namespace {

struct EpisodeRunner {
  const TrainConfig& cfg;
  std::vector<AgentSlot>& agents;

  // Plays one episode for agents[index], trains during it, then shapes and
  // stores it. Returns the log row plus the number of reference metrics computed.
  std::pair<EpisodeLog, int> run(std::size_t index, EpisodeRecord& record) {
    AgentSlot& agent = agents[index];
    const EnvConfig& env = cfg.env;
    const std::size_t batch = static_cast<std::size_t>(cfg.learner.batch_size);
    const double conflict = env.conflict_arc_length();

    record = EpisodeRecord{};
    WorldState w = reset(env);
    StateVector s = observe(w, env);
    record.trajectory.snapshots.push_back(w.snapshot(env));
    std::optional<CrossingClass> crossing;

    while (!w.terminal()) {
      const Action a = agent.learner.act(s, agent.exploration_rng);
      const StepResult r = step(w, a, env);
      if (!std::isfinite(r.reward)) {
        throw TrainingError("agent " + std::to_string(agent.id) + ", episode " +
                            std::to_string(agent.episodes) + ": non-finite reward");
      }
      if (!crossing && w.ego_arc_length < conflict && r.next.ego_arc_length >= conflict) {
        crossing = classify_crossing(r.next, env);
      }
      const StateVector s_next = observe(r.next, env);
      record.transitions.push_back(Transition{s, a, r.reward, s_next, r.terminal});
      record.base_rewards.push_back(r.reward);
      record.trajectory.snapshots.push_back(r.next.snapshot(env));
      agent.learner.record_env_step();

      if (agent.buffer.size() >= static_cast<std::size_t>(cfg.learner.warmup)) {
        const auto minibatch = agent.buffer.sample_minibatch(batch, agent.replay_rng);
        try {
          agent.learner.train_step(minibatch);
        } catch (const TrainingError& e) {
          throw TrainingError("agent " + std::to_string(agent.id) + ", episode " +
                              std::to_string(agent.episodes) + ": " + e.what());
        }
      }
      w = r.next;
      s = s_next;
    }
    record.trajectory.outcome = w.outcome;

    EpisodeLog log;
    log.agent_id = agent.id;
    log.episode = agent.episodes;
    log.global_step = agent.learner.env_steps();
    log.length = static_cast<int>(record.transitions.size());
    log.outcome = w.outcome;
    log.crossing = crossing.value_or(CrossingClass::none);
    log.epsilon = agent.learner.epsilon();
    for (double r : record.base_rewards) log.base_return += r;

    const auto terms = reference_metrics(agent, record.trajectory, agents);
    double pseudo_total = 0.0;
    log.shaped_return = log.base_return;
    for (const auto& t : terms) {
      log.ref_ids.push_back(t.reference_id);
      log.ref_metrics.push_back(t.skipped ? std::nan("") : t.metric);
      log.ref_pseudo_rewards.push_back(t.reward);
      pseudo_total += t.reward;
      log.shaped_return += t.reward;
    }
    if (!std::isfinite(pseudo_total)) {
      throw TrainingError("agent " + std::to_string(agent.id) + ", episode " +
                          std::to_string(agent.episodes) + ": non-finite pseudo-reward");
    }
    if (agent.id == 0 && cfg.run.comparison_channel) {
      if (const auto cmp = comparison_shaping(agent, record.trajectory, cfg.shaping)) {
        log.comparison_metric = cmp->metric;
        log.comparison_pseudo_reward = cmp->reward;
      }
    }

    if (!terms.empty()) record.transitions.back().reward += pseudo_total;
    for (const auto& t : record.transitions) agent.buffer.push(t);
    agent.buffer.push_episode_features(phi(record.trajectory));
    ++agent.episodes;
    return {log, static_cast<int>(terms.size())};
  }
};

class LogSink {
 public:
  LogSink(const std::filesystem::path& run_dir, int agents) {
    if (run_dir.empty()) return;
    merged_.open(run_dir / "episodes.csv");
    merged_ << episode_log_header() << '\n';
    for (int i = 0; i < agents; ++i) {
      per_agent_.emplace_back(agent_dir(run_dir, i) / "episodes.csv");
      per_agent_.back() << episode_log_header() << '\n';
    }
  }

  void write(const EpisodeLog& log) {
    if (!merged_.is_open()) return;
    const std::string row = episode_log_row(log);
    merged_ << row << '\n';
    per_agent_[static_cast<std::size_t>(log.agent_id)] << row << '\n';
  }

 private:
  std::ofstream merged_;
  std::vector<std::ofstream> per_agent_;
};

}  // namespace

TrainingResult run_training(const TrainConfig& cfg, const TrainingObserver& observer) {
  if (auto problem = validate(cfg)) throw ConfigError("invalid training config: " + *problem);

  TrainingResult result;
  const int agent_count = cfg.run.pseudo_agents + 1;
  result.agents.reserve(static_cast<std::size_t>(agent_count));
  for (int i = 0; i < agent_count; ++i) result.agents.emplace_back(i, cfg);

  if (!cfg.run.output_dir.empty()) {
    result.run_dir = cfg.run.output_dir;
    for (int i = 0; i < agent_count; ++i) std::filesystem::create_directories(agent_dir(result.run_dir, i));
    std::ofstream config_out(result.run_dir / "config.ini");
    write_train_config(config_out, cfg);
  }
  LogSink sink(result.run_dir, agent_count);

  EpisodeRunner runner{cfg, result.agents};
  EpisodeRecord record;
  std::vector<std::int64_t> next_checkpoint(static_cast<std::size_t>(agent_count), cfg.run.checkpoint_every);

  // Each round gives every agent that still has budget one episode; agents
  // that have used their budget sit out, so an agent's training never depends
  // on how long the others take.
  const auto has_budget = [&](const AgentSlot& a) { return a.learner.env_steps() < cfg.run.steps_per_agent; };
  const auto all_done = [&] {
    return std::none_of(result.agents.begin(), result.agents.end(), has_budget);
  };
  while (!all_done()) {
    int computations = 0;
    int active = 0;
    for (std::size_t i = 0; i < result.agents.size(); ++i) {
      if (!has_budget(result.agents[i])) continue;
      ++active;
      auto [log, refs] = runner.run(i, record);
      computations += refs;
      sink.write(log);
      if (observer.on_episode) observer.on_episode(log, record);
      result.logs.push_back(std::move(log));

      auto& next = next_checkpoint[i];
      const auto& agent = result.agents[i];
      if (!result.run_dir.empty() && cfg.run.checkpoint_every > 0 && agent.learner.env_steps() >= next) {
        save_checkpoint(checkpoint_path(result.run_dir, agent.id, agent.learner.env_steps()).string(),
                        agent.learner);
        while (next <= agent.learner.env_steps()) next += cfg.run.checkpoint_every;
      }
    }
    result.active_agents_per_round.push_back(active);
    result.reference_computations_per_round.push_back(computations);
  }

  if (!result.run_dir.empty()) {
    for (const auto& agent : result.agents) {
      save_checkpoint(checkpoint_path(result.run_dir, agent.id, agent.learner.env_steps()).string(),
                      agent.learner);
      save_checkpoint(final_checkpoint_path(result.run_dir, agent.id).string(), agent.learner);
    }
  }
  return result;
}

}  // namespace fallback
