#include <benchmark/benchmark.h>

#include "ltraj/path_classifier.hpp"
#include "ltraj/rng.hpp"
#include "ltraj/segmenter.hpp"
#include "ltraj/signals.hpp"
#include "ltraj/stats.hpp"

namespace {

using namespace ltraj;

Trace random_trace(std::size_t positions, std::size_t layers, std::size_t dim, bool segments) {
  Rng rng(7);
  TraceHeader h;
  h.model_id = "bench";
  h.problem_id = "p";
  h.sample_id = "s";
  h.num_layers = static_cast<std::uint32_t>(layers);
  h.hidden_dim = static_cast<std::uint32_t>(dim);
  h.position_count = positions;
  if (segments) {
    h.kind = StorageKind::segments;
    h.segment_size = 500;
    h.token_count = positions * 500;
  } else {
    h.kind = StorageKind::tokens;
    h.token_count = positions;
  }
  std::vector<float> v(positions * layers * dim);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return Trace(std::move(h), std::move(v));
}

void BM_Segment(benchmark::State& state) {
  const auto t = random_trace(static_cast<std::size_t>(state.range(0)), 8, 64, false);
  for (auto _ : state) benchmark::DoNotOptimize(segment_trace(t));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Segment)->Arg(5000)->Arg(20000);

void BM_TrajectorySignals(benchmark::State& state) {
  const auto t = random_trace(static_cast<std::size_t>(state.range(0)), 32, 256, true);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net_change(t));
    benchmark::DoNotOptimize(cumulative_change(t));
    benchmark::DoNotOptimize(aligned_change(t));
  }
}
BENCHMARK(BM_TrajectorySignals)->Arg(20)->Arg(64);

void BM_LayerBaselines(benchmark::State& state) {
  const auto t = random_trace(20, 32, 256, true);
  for (auto _ : state) {
    benchmark::DoNotOptimize(layer_magnitude(t));
    benchmark::DoNotOptimize(layer_angle(t));
  }
}
BENCHMARK(BM_LayerBaselines);

void BM_Auc(benchmark::State& state) {
  Rng rng(8);
  LabeledScores d;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    d.scores.push_back(rng.normal());
    d.labels.push_back(rng.bernoulli(0.5));
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(d));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

void BM_ForestTrain(benchmark::State& state) {
  Rng rng(9);
  std::vector<PathFeatures> x;
  std::vector<bool> y;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    const bool c = rng.bernoulli(0.5);
    x.push_back({rng.normal() + (c ? 0.8 : 0.0), rng.normal() - (c ? 0.5 : 0.0)});
    y.push_back(c);
  }
  std::uint64_t seed = 0;
  for (auto _ : state) {
    ForestConfig cfg;
    cfg.seed = seed++;
    benchmark::DoNotOptimize(PathClassifier::train(x, y, cfg));
  }
}
BENCHMARK(BM_ForestTrain)->Arg(750)->Arg(5000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
