#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "fallback/divergence.hpp"
#include "fallback/dp_oracle.hpp"
#include "fallback/intersection_env.hpp"
#include "fallback/learner.hpp"

using namespace fallback;

namespace {

StateVector random_state(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  StateVector s{};
  for (auto& x : s) x = u(rng);
  return s;
}

std::vector<Transition> random_batch(Rng& rng, std::size_t n) {
  std::vector<Transition> batch(n);
  for (auto& t : batch) {
    t.state = random_state(rng);
    t.next_state = random_state(rng);
    t.action = Action::from_index(static_cast<int>(rng() % kNumActions));
    t.reward = kStepReward;
  }
  return batch;
}

}  // namespace

static void BM_QNetworkForward(benchmark::State& state) {
  Rng rng(1);
  const QNetwork net = QNetwork::initialized({8, 64, 64, 6}, rng);
  const StateVector s = random_state(rng);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(s));
}
BENCHMARK(BM_QNetworkForward);

static void BM_LearnerTrainStep(benchmark::State& state) {
  Rng rng(2);
  Learner learner(LearnerConfig{}, 3);
  const auto batch = random_batch(rng, learner.config().batch_size);
  for (auto _ : state) benchmark::DoNotOptimize(learner.train_step(batch));
}
BENCHMARK(BM_LearnerTrainStep);

static void BM_EnvStep(benchmark::State& state) {
  const EnvConfig cfg;
  const WorldState start = reset(cfg);
  WorldState w = start;
  for (auto _ : state) {
    const StepResult r = step(w, Action::from_accel(1), cfg);
    w = r.next.terminal() ? start : r.next;
    benchmark::DoNotOptimize(observe(w, cfg));
  }
}
BENCHMARK(BM_EnvStep);

static void BM_PathMetric(benchmark::State& state) {
  Rng rng(4);
  std::normal_distribution<double> speed(20.0, 3.0);
  std::vector<double> a(3000), b(40);
  for (auto& x : a) x = speed(rng);
  for (auto& x : b) x = speed(rng);
  const FeatureHistogram pooled = histogram(a);
  for (auto _ : state) benchmark::DoNotOptimize(metric(histogram(b), pooled));
}
BENCHMARK(BM_PathMetric);

static void BM_OracleSolve(benchmark::State& state) {
  EnvConfig cfg;
  cfg.max_steps = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(solve(cfg, 0.99, Constraint::none).value);
}
BENCHMARK(BM_OracleSolve)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
