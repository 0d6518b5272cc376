#include "fallback/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fallback {

Action Action::from_index(int index) {
  if (index < 0 || index >= static_cast<int>(kNumActions)) {
    throw std::out_of_range("action index " + std::to_string(index) + " outside [0, 5]");
  }
  return Action(index);
}

Action Action::from_accel(int accel) {
  const auto it = std::find(kAccelerations.begin(), kAccelerations.end(), accel);
  if (it == kAccelerations.end()) {
    throw std::invalid_argument("acceleration " + std::to_string(accel) + " is not in the action set");
  }
  return Action(static_cast<int>(it - kAccelerations.begin()));
}

bool is_valid_state(const StateVector& s) {
  return std::all_of(s.begin(), s.end(),
                     [](double v) { return std::isfinite(v) && v >= -1.0 && v <= 1.0; });
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::running:
      return "running";
    case Outcome::goal:
      return "goal";
    case Outcome::collision:
      return "collision";
    case Outcome::timeout:
      return "timeout";
  }
  return "unknown";
}

Outcome outcome_from_string(std::string_view text) {
  if (text == "running") return Outcome::running;
  if (text == "goal") return Outcome::goal;
  if (text == "collision") return Outcome::collision;
  if (text == "timeout") return Outcome::timeout;
  throw std::invalid_argument("unknown episode outcome '" + std::string(text) + "'");
}

double discounted_return(std::span<const double> rewards, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("discount factor must lie in (0, 1]");
  }
  double total = 0.0;
  double weight = 1.0;
  for (double r : rewards) {
    total += weight * r;
    weight *= gamma;
  }
  return total;
}

EpisodeOutcome summarize_episode(std::span<const double> rewards, Outcome reason, double gamma) {
  EpisodeOutcome out;
  out.reason = reason;
  out.length = static_cast<int>(rewards.size());
  for (double r : rewards) out.undiscounted_return += r;
  out.discounted_return = discounted_return(rewards, gamma);
  return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t episode_window)
    : storage_(capacity), episode_window_(episode_window) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
  if (episode_window == 0) throw std::invalid_argument("episode window must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  storage_[head_] = t;
  head_ = (head_ + 1) % storage_.size();
  size_ = std::min(size_ + 1, storage_.size());
  ++inserted_;
}

void ReplayBuffer::push_episode_features(std::vector<double> features) {
  episodes_.push_back(std::move(features));
  while (episodes_.size() > episode_window_) episodes_.pop_front();
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("replay index out of range");
  const std::size_t oldest = (head_ + storage_.size() - size_) % storage_.size();
  return storage_[(oldest + i) % storage_.size()];
}

std::vector<Transition> ReplayBuffer::sample_minibatch(std::size_t n, Rng& rng) const {
  if (n > size_) {
    throw std::length_error("replay buffer holds " + std::to_string(size_) +
                            " transitions, minibatch needs " + std::to_string(n));
  }
  // Floyd's subset sampling: n distinct indices, each subset equally likely.
  std::vector<std::size_t> picked;
  picked.reserve(n);
  for (std::size_t j = size_ - n; j < size_; ++j) {
    std::uniform_int_distribution<std::size_t> dist(0, j);
    const std::size_t candidate = dist(rng);
    if (std::find(picked.begin(), picked.end(), candidate) == picked.end()) {
      picked.push_back(candidate);
    } else {
      picked.push_back(j);
    }
  }
  std::vector<Transition> batch;
  batch.reserve(n);
  for (std::size_t idx : picked) batch.push_back(at(idx));
  return batch;
}

}  // namespace fallback
