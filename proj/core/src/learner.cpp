#include "fallback/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <boost/property_tree/ptree.hpp>

#include "fallback/config_io.hpp"

namespace fallback {

std::vector<int> LearnerConfig::layer_sizes() const {
  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(kStateDim));
  sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  sizes.push_back(static_cast<int>(kNumActions));
  return sizes;
}

std::optional<std::string> validate(const LearnerConfig& cfg) {
  for (int h : cfg.hidden_sizes) {
    if (h <= 0) return "hidden layer sizes must be positive";
  }
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) return "gamma must lie in (0, 1]";
  if (!(cfg.adam.learning_rate > 0.0)) return "learning_rate must be positive";
  if (!(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0)) return "beta1 must lie in [0, 1)";
  if (!(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0)) return "beta2 must lie in [0, 1)";
  if (!(cfg.adam.epsilon > 0.0)) return "adam epsilon must be positive";
  if (cfg.batch_size <= 0) return "batch_size must be positive";
  if (cfg.warmup < cfg.batch_size) return "warmup must be at least batch_size";
  if (cfg.target_sync <= 0) return "target_sync must be positive";
  if (!(cfg.epsilon_end >= 0.0 && cfg.epsilon_end <= cfg.epsilon_start && cfg.epsilon_start <= 1.0)) {
    return "epsilon schedule must satisfy 0 <= end <= start <= 1";
  }
  if (cfg.epsilon_decay_steps <= 0) return "epsilon_decay_steps must be positive";
  if (cfg.replay_capacity < static_cast<std::size_t>(cfg.warmup)) {
    return "replay_capacity must be at least warmup";
  }
  return std::nullopt;
}

LearnerConfig learner_config_from_ptree(const config::Tree& s) {
  LearnerConfig cfg;
  if (const auto node = s.get_child_optional("hidden_sizes")) {
    cfg.hidden_sizes.clear();
    std::stringstream ss(node->data());
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        cfg.hidden_sizes.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw ConfigError("cannot parse hidden_sizes entry '" + item + "'");
      }
    }
  }
  config::read_value(s, "gamma", cfg.gamma);
  config::read_value(s, "learning_rate", cfg.adam.learning_rate);
  config::read_value(s, "beta1", cfg.adam.beta1);
  config::read_value(s, "beta2", cfg.adam.beta2);
  config::read_value(s, "adam_epsilon", cfg.adam.epsilon);
  config::read_value(s, "batch_size", cfg.batch_size);
  config::read_value(s, "warmup", cfg.warmup);
  config::read_value(s, "target_sync", cfg.target_sync);
  config::read_value(s, "epsilon_start", cfg.epsilon_start);
  config::read_value(s, "epsilon_end", cfg.epsilon_end);
  config::read_value(s, "epsilon_decay_steps", cfg.epsilon_decay_steps);
  config::read_value(s, "replay_capacity", cfg.replay_capacity);
  if (auto problem = validate(cfg)) throw ConfigError("invalid learner config: " + *problem);
  return cfg;
}

void learner_config_to_ptree(const LearnerConfig& cfg, config::Tree& s) {
  std::string hidden;
  for (std::size_t i = 0; i < cfg.hidden_sizes.size(); ++i) {
    if (i) hidden += ", ";
    hidden += std::to_string(cfg.hidden_sizes[i]);
  }
  s.put("hidden_sizes", hidden);
  s.put("gamma", config::format_double(cfg.gamma));
  s.put("learning_rate", config::format_double(cfg.adam.learning_rate));
  s.put("beta1", config::format_double(cfg.adam.beta1));
  s.put("beta2", config::format_double(cfg.adam.beta2));
  s.put("adam_epsilon", config::format_double(cfg.adam.epsilon));
  s.put("batch_size", cfg.batch_size);
  s.put("warmup", cfg.warmup);
  s.put("target_sync", cfg.target_sync);
  s.put("epsilon_start", config::format_double(cfg.epsilon_start));
  s.put("epsilon_end", config::format_double(cfg.epsilon_end));
  s.put("epsilon_decay_steps", cfg.epsilon_decay_steps);
  s.put("replay_capacity", cfg.replay_capacity);
}

double epsilon_at(const LearnerConfig& cfg, std::int64_t env_steps) {
  if (env_steps >= cfg.epsilon_decay_steps) return cfg.epsilon_end;
  const double frac = static_cast<double>(env_steps) / static_cast<double>(cfg.epsilon_decay_steps);
  return std::max(cfg.epsilon_end, cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start));
}

int argmax_lowest(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

Learner::Learner(LearnerConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  if (auto problem = validate(cfg_)) throw ConfigError("invalid learner config: " + *problem);
  Rng rng(init_seed);
  online_ = QNetwork::initialized(cfg_.layer_sizes(), rng);
  target_ = online_;
  optimizer_ = AdamOptimizer(online_, cfg_.adam);
}

Learner::Learner(LearnerConfig cfg, QNetwork online) : cfg_(std::move(cfg)), online_(std::move(online)) {
  if (online_.layer_sizes() != cfg_.layer_sizes()) {
    throw ConfigError("network layer sizes do not match the learner config");
  }
  target_ = online_;
  optimizer_ = AdamOptimizer(online_, cfg_.adam);
}

Eigen::VectorXd Learner::q_values(const StateVector& s) const { return online_.forward(s); }

Action Learner::greedy(const StateVector& s) const {
  const Eigen::VectorXd q = q_values(s);
  return Action::from_index(argmax_lowest(std::span<const double>(q.data(), static_cast<std::size_t>(q.size()))));
}

Action Learner::act(const StateVector& s, Rng& rng) const {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon()) {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(kNumActions) - 1);
    return Action::from_index(pick(rng));
  }
  return greedy(s);
}

std::vector<double> Learner::td_targets(std::span<const Transition> batch) const {
  std::vector<StateVector> next;
  next.reserve(batch.size());
  for (const auto& t : batch) next.push_back(t.next_state);
  const Eigen::MatrixXd s_next = stack_states(next);
  const Eigen::MatrixXd q_online = online_.forward_batch(s_next);
  const Eigen::MatrixXd q_target = target_.forward_batch(s_next);

  std::vector<double> y(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    if (batch[j].terminal) {
      y[j] = batch[j].reward;
      continue;
    }
    const auto col = static_cast<Eigen::Index>(j);
    const Eigen::VectorXd qo = q_online.col(col);
    const int a = argmax_lowest(std::span<const double>(qo.data(), static_cast<std::size_t>(qo.size())));
    y[j] = batch[j].reward + cfg_.gamma * q_target(a, col);
  }
  return y;
}

double Learner::train_step(std::span<const Transition> batch) {
  if (batch.size() != static_cast<std::size_t>(cfg_.batch_size)) {
    throw std::invalid_argument("minibatch has " + std::to_string(batch.size()) +
                                " transitions, expected " + std::to_string(cfg_.batch_size));
  }
  const std::vector<double> y = td_targets(batch);

  std::vector<StateVector> states;
  states.reserve(batch.size());
  for (const auto& t : batch) states.push_back(t.state);
  const ForwardCache cache = online_.forward_cached(stack_states(states));

  const double n = static_cast<double>(batch.size());
  Eigen::MatrixXd grad_out = Eigen::MatrixXd::Zero(cache.output.rows(), cache.output.cols());
  double loss = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    const Eigen::Index a = batch[j].action.index();
    const double err = cache.output(a, col) - y[j];
    loss += err * err;
    grad_out(a, col) = 2.0 * err / n;
  }
  loss /= n;
  if (!std::isfinite(loss)) {
    throw TrainingError("non-finite TD loss at update " + std::to_string(updates() + 1) +
                        " (env step " + std::to_string(env_steps_) + ")");
  }
  optimizer_.apply(online_, online_.backward(cache, grad_out));
  if (!online_.all_finite()) {
    throw TrainingError("non-finite network parameters after update " + std::to_string(updates()));
  }
  if (updates() % cfg_.target_sync == 0) sync_target();
  return loss;
}

void write_checkpoint(std::ostream& out, const QNetwork& net, const CheckpointInfo& info) {
  out << "fallback-qnetwork-checkpoint\n";
  out << "format_version " << kCheckpointVersion << "\n";
  out << "layer_sizes";
  for (int s : net.layer_sizes()) out << ' ' << s;
  out << "\n";
  out << "gamma " << config::format_double(info.gamma) << "\n";
  out << "env_steps " << info.env_steps << "\n";
  out << "updates " << info.updates << "\n";
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    out << "tensor weight " << l << ' ' << w.rows() << ' ' << w.cols() << "\n";
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) out << (c ? " " : "") << config::format_double(w(r, c));
      out << "\n";
    }
    const auto& b = layers[l].bias;
    out << "tensor bias " << l << ' ' << b.size() << " 1\n";
    for (Eigen::Index r = 0; r < b.size(); ++r) out << config::format_double(b(r)) << "\n";
  }
  out << "end\n";
}

void save_checkpoint(const std::string& path, const Learner& learner) {
  std::ofstream out(path);
  if (!out) throw TrainingError("cannot write checkpoint '" + path + "'");
  CheckpointInfo info;
  info.format_version = kCheckpointVersion;
  info.layer_sizes = learner.online().layer_sizes();
  info.gamma = learner.config().gamma;
  info.env_steps = learner.env_steps();
  info.updates = learner.updates();
  write_checkpoint(out, learner.online(), info);
  if (!out) throw TrainingError("failed while writing checkpoint '" + path + "'");
}

namespace {

void expect_word(std::istream& in, const std::string& word) {
  std::string got;
  if (!(in >> got) || got != word) {
    throw TrainingError("malformed checkpoint: expected '" + word + "', found '" + got + "'");
  }
}

}  // namespace

QNetwork read_checkpoint(std::istream& in, CheckpointInfo* info_out) {
  CheckpointInfo info;
  expect_word(in, "fallback-qnetwork-checkpoint");
  expect_word(in, "format_version");
  if (!(in >> info.format_version)) throw TrainingError("malformed checkpoint: missing version");
  if (info.format_version != kCheckpointVersion) {
    throw TrainingError("checkpoint format version " + std::to_string(info.format_version) +
                        " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  expect_word(in, "layer_sizes");
  std::string line;
  std::getline(in, line);
  std::istringstream sizes(line);
  for (int s; sizes >> s;) info.layer_sizes.push_back(s);

  std::string gamma_text;
  expect_word(in, "gamma");
  in >> gamma_text;
  try {
    info.gamma = std::stod(gamma_text);
  } catch (const std::exception&) {
    throw TrainingError("malformed checkpoint gamma '" + gamma_text + "'");
  }
  expect_word(in, "env_steps");
  in >> info.env_steps;
  expect_word(in, "updates");
  in >> info.updates;
  if (!in) throw TrainingError("malformed checkpoint header");

  QNetwork net(info.layer_sizes);
  auto read_number = [&]() {
    std::string tok;
    if (!(in >> tok)) throw TrainingError("truncated checkpoint tensor");
    try {
      return std::stod(tok);
    } catch (const std::exception&) {
      throw TrainingError("malformed checkpoint value '" + tok + "'");
    }
  };
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& layer = net.layers()[l];
    std::size_t idx = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    expect_word(in, "tensor");
    expect_word(in, "weight");
    in >> idx >> rows >> cols;
    if (idx != l || rows != layer.weight.rows() || cols != layer.weight.cols()) {
      throw TrainingError("checkpoint weight tensor " + std::to_string(l) + " has the wrong shape");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = read_number();
    }
    expect_word(in, "tensor");
    expect_word(in, "bias");
    in >> idx >> rows >> cols;
    if (idx != l || rows != layer.bias.size() || cols != 1) {
      throw TrainingError("checkpoint bias tensor " + std::to_string(l) + " has the wrong shape");
    }
    for (Eigen::Index r = 0; r < rows; ++r) layer.bias(r) = read_number();
  }
  expect_word(in, "end");
  if (info_out) *info_out = info;
  return net;
}

QNetwork load_checkpoint(const std::string& path, CheckpointInfo* info) {
  std::ifstream in(path);
  if (!in) throw TrainingError("cannot open checkpoint '" + path + "'");
  try {
    return read_checkpoint(in, info);
  } catch (const TrainingError& e) {
    throw TrainingError(path + ": " + e.what());
  }
}

}  // namespace fallback
