#include <benchmark/benchmark.h>

#include "hiercas/cascade.hpp"
#include "hiercas/model.hpp"
#include "hiercas/sampler.hpp"
#include "hiercas/synthgen.hpp"
#include "hiercas/training.hpp"

namespace {

namespace hd = hiercas::data;
namespace hm = hiercas::model;

// Labeled cascade with roughly `events` observed retweets.
hd::LabeledCascade make_cascade(std::size_t events) {
  hiercas::synth::GenParams p;
  p.base_branching = static_cast<double>(events);
  p.child_branching = 0.0;
  p.decay_rate = 1.0 / 300;
  p.seed = 1;
  hd::ObservationConfig obs;
  obs.min_observed = 1;
  obs.max_observed = events;
  for (std::uint64_t i = 0;; ++i) {
    hiercas::Rng rng(i);
    if (auto lc = hd::build_labeled(hiercas::synth::generate_cascade(p, rng), obs)) {
      if (lc->graph.num_nodes() > events / 2) return *lc;
    }
  }
}

hm::HierCas make_model(std::size_t layers) {
  hm::HierCasConfig cfg;
  cfg.layers = layers;
  cfg.user_buckets = 4096;
  return hm::HierCas::create(cfg, hm::UserIndex(cfg.user_buckets), 7);
}

void BM_Predict(benchmark::State& state) {
  const auto c = make_cascade(static_cast<std::size_t>(state.range(0)));
  const auto m = make_model(static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(hm::predict(m, c.graph, 3));
  state.counters["nodes"] = static_cast<double>(c.graph.num_nodes());
}
BENCHMARK(BM_Predict)->Args({20, 2})->Args({50, 2})->Args({100, 2})->Args({50, 1})->Args({50, 3})
    ->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto c = make_cascade(static_cast<std::size_t>(state.range(0)));
  const auto m = make_model(2);
  const hd::LabeledCascade* batch[] = {&c};
  for (auto _ : state) {
    benchmark::DoNotOptimize(hiercas::train::batch_gradients(m, batch, 3, 1).loss);
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(20)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_SampleNeighbors(benchmark::State& state) {
  const auto c = make_cascade(100);
  const double t = c.graph.observation_time();
  const auto neigh = hiercas::sampling::neighbors_before(c.graph, 0, t);
  hiercas::Rng rng(5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(hiercas::sampling::sample_uniform(0, t, neigh, 20, rng));
  }
  state.counters["candidates"] = static_cast<double>(neigh.size());
}
BENCHMARK(BM_SampleNeighbors);

void BM_ParseLine(benchmark::State& state) {
  hiercas::synth::GenParams p;
  p.seed = 2;
  hiercas::Rng rng(2);
  const std::string line = hd::format_line(hiercas::synth::generate_cascade(p, rng));
  for (auto _ : state) benchmark::DoNotOptimize(hd::parse_line(line));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * line.size()));
}
BENCHMARK(BM_ParseLine);

}  // namespace

BENCHMARK_MAIN();
