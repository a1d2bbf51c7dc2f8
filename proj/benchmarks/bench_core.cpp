#include <benchmark/benchmark.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cmj/analysis.hpp"
#include "cmj/engine.hpp"
#include "cmj/malthusian.hpp"

namespace {

const cmj::ReproductionLaw kReference = cmj::ReproductionLaw::bernoulli_split(0.75, cmj::ExponentialAge{1.0});

void BM_SampleOffspring(benchmark::State& state) {
  const auto law = state.range(0) == 0 ? kReference : cmj::ReproductionLaw::poisson_ages(2.0);
  cmj::Rng rng = cmj::make_stream(1);
  cmj::OffspringSample out;
  for (auto _ : state) {
    cmj::sample_offspring(law, 12.0, rng, out);
    benchmark::DoNotOptimize(out.ages.data());
  }
}
BENCHMARK(BM_SampleOffspring)->Arg(0)->Arg(1);

// One replica of the reference law to horizon T; reports births per second.
void BM_RunReplica(benchmark::State& state) {
  const auto c = cmj::derive_constants(kReference);
  const double horizon = static_cast<double>(state.range(0));
  cmj::SimConfig cfg{kReference, horizon, {}};
  for (double t = 0.0; t <= horizon; t += 0.25) cfg.grid.push_back(t);
  std::uint64_t births = 0;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    cfg.seed = ++seed;
    const auto path = cmj::run_replica(cfg, c);
    births += path.total_births;
  }
  state.counters["births/s"] = benchmark::Counter(static_cast<double>(births), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_RunReplica)->Arg(10)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_KsDistance(benchmark::State& state) {
  cmj::Rng rng = cmj::make_stream(2);
  std::normal_distribution<double> g;
  std::vector<double> x(static_cast<std::size_t>(state.range(0)));
  for (auto& v : x) v = g(rng);
  std::sort(x.begin(), x.end());
  for (auto _ : state) benchmark::DoNotOptimize(cmj::ks_distance(x));
}
BENCHMARK(BM_KsDistance)->Arg(1000)->Arg(10000);

void BM_CDeltaTable(benchmark::State& state) {
  const auto c = cmj::derive_constants(kReference);
  cmj::VarianceCurve curve;
  for (double t = 0.0; t <= 20.0; t += 0.25) {
    curve.times.push_back(t);
    curve.v.push_back(c.sigma_w2 - (c.sigma_w2 - c.sigma2) * std::exp(-t));
    curve.se.push_back(0.05);
  }
  const std::vector<double> deltas{0.001, 0.25, 0.5, 1, 2, 4, 8, 12, 14, 20};
  for (auto _ : state) {
    cmj::Rng rng = cmj::make_stream(3);
    benchmark::DoNotOptimize(
        cmj::compute_c_delta_table(kReference, c, curve, deltas, static_cast<std::size_t>(state.range(0)), rng));
  }
}
BENCHMARK(BM_CDeltaTable)->Arg(20000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
