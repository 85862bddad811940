#include <benchmark/benchmark.h>

#include "ctgrpo/forge.hpp"
#include "ctgrpo/grpo.hpp"
#include "ctgrpo/rng.hpp"
#include "ctgrpo/synth.hpp"

namespace {

using namespace ctgrpo;

Query bench_query(std::uint64_t seed) {
  Rng rng(seed);
  Query q;
  for (double& f : q.features) f = 2.0 * uniform01(rng) - 1.0;
  q.gt_class = classify_features(q.features);
  return q;
}

void BM_Logprob(benchmark::State& state) {
  const auto p = PolicyParams::random_init({Vocab::size(), static_cast<std::size_t>(state.range(0))}, 1);
  const Query q = bench_query(2);
  const auto gold = gold_tokens(q.features, q.gt_class, PromptMode::kWithThink);
  for (auto _ : state) benchmark::DoNotOptimize(logprob(p, q, gold).total);
}
BENCHMARK(BM_Logprob)->Arg(16)->Arg(32)->Arg(64);

void BM_GradLogprob(benchmark::State& state) {
  const auto p = PolicyParams::random_init({Vocab::size(), static_cast<std::size_t>(state.range(0))}, 1);
  const Query q = bench_query(2);
  const auto gold = gold_tokens(q.features, q.gt_class, PromptMode::kWithThink);
  for (auto _ : state) benchmark::DoNotOptimize(grad_logprob(p, q, gold));
}
BENCHMARK(BM_GradLogprob)->Arg(16)->Arg(32)->Arg(64);

void BM_ConnectedComponents(benchmark::State& state) {
  GrayImage m(512, 512);
  Rng rng(3);
  for (auto& v : m.pixels) v = uniform01(rng) < 0.4;
  for (auto _ : state) benchmark::DoNotOptimize(connected_components(m, static_cast<int>(state.range(0))).count());
}
BENCHMARK(BM_ConnectedComponents)->Arg(4)->Arg(8);

void BM_ZoomAugment(benchmark::State& state) {
  GrayImage slice(512, 512);
  Rng rng(4);
  for (auto& v : slice.pixels) v = static_cast<std::uint8_t>(uniform_index(rng, 256));
  const LesionBox box{0, 0, Rect{200, 180, 260, 290}, 4000};
  for (auto _ : state) benchmark::DoNotOptimize(zoom_augment(slice, box, AugmentConfig{}).pixels.data());
}
BENCHMARK(BM_ZoomAugment);

void BM_GenCase(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gen_case(++seed, SynthConfig{}).slices.size());
}
BENCHMARK(BM_GenCase)->Unit(benchmark::kMillisecond);

void BM_GrpoStep(benchmark::State& state) {
  const PolicyParams init = PolicyParams::random_init({}, 5);
  std::vector<Query> queries;
  for (std::uint64_t i = 0; i < 16; ++i) queries.push_back(bench_query(100 + i));
  GrpoConfig cfg;
  cfg.threads = 1;
  PolicyParams new_p = init;
  PolicyParams old_p = init.with_role(ParamRole::kOldSnapshot);
  const PolicyParams ref = init.with_role(ParamRole::kReference);
  std::size_t step = 0;
  for (auto _ : state) benchmark::DoNotOptimize(grpo_step(new_p, old_p, ref, queries, cfg, RewardWeights{}, ++step));
}
BENCHMARK(BM_GrpoStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
