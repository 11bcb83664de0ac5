#include <benchmark/benchmark.h>

#include "acpmpc/config.hpp"
#include "acpmpc/harness.hpp"

using namespace acpmpc;

namespace {

ExperimentConfig frisbee_batch() {
  ExperimentConfig c = default_config(Scenario::frisbee_avoidance);
  c.num_runs = 4;
  c.frisbee.duration = 3.0;
  return c;
}

ExperimentConfig stream_batch() {
  ExperimentConfig c = default_config(Scenario::synthetic_scores);
  c.synthetic.streams = 20;
  c.synthetic.steps = 5000;
  return c;
}

void BM_MonteCarloSerial(benchmark::State& st) {
  const ExperimentConfig c = frisbee_batch();
  for (auto _ : st) benchmark::DoNotOptimize(monte_carlo_serial(c, UqMethod::acp));
}

void BM_MonteCarloParallel(benchmark::State& st) {
  const ExperimentConfig c = frisbee_batch();
  for (auto _ : st) benchmark::DoNotOptimize(monte_carlo_parallel(c, UqMethod::acp));
}

void BM_StreamsSerial(benchmark::State& st) {
  const ExperimentConfig c = stream_batch();
  for (auto _ : st) benchmark::DoNotOptimize(synthetic_streams_serial(c));
}

void BM_StreamsParallel(benchmark::State& st) {
  const ExperimentConfig c = stream_batch();
  for (auto _ : st) benchmark::DoNotOptimize(synthetic_streams_parallel(c));
}

}  // namespace

BENCHMARK(BM_MonteCarloSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_MonteCarloParallel)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_StreamsSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_StreamsParallel)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
