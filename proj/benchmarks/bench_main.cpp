// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Microbenchmarks for the hot paths: oracle posteriors, one unmasking step,
// full generation and the KL kernel.

#include <benchmark/benchmark.h>

#include "dualdiff/pipeline.hpp"

using namespace dualdiff;

namespace {

MaskedSequence half_masked(std::size_t vocab, std::size_t length) {
  MaskedSequence s(VocabSpec(vocab), std::vector<Token>(length, 0));
  for (std::size_t i = 0; i < length; i += 2) s.mask(i);
  return s;
}

void BM_OraclePredict(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  auto oracle = MarkovOracle::random(8, 1, 4.0);
  const auto seq = half_masked(8, L);
  for (auto _ : state) benchmark::DoNotOptimize(oracle.predict(seq));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(L));
}
BENCHMARK(BM_OraclePredict)->Arg(32)->Arg(128)->Arg(512);

void BM_UnmaskStep(benchmark::State& state) {
  auto oracle = MarkovOracle::random(8, 1, 4.0);
  const auto seq = half_masked(8, 64);
  const auto policy = UnmaskPolicy::top_k(4);
  Rng rng(0);
  for (auto _ : state) {
    DecodeProvenance prov(64);
    benchmark::DoNotOptimize(unmask_step(oracle, seq, policy, rng, prov));
  }
}
BENCHMARK(BM_UnmaskStep);

void BM_DualGenerate(benchmark::State& state) {
  auto base = std::make_shared<MarkovOracle>(MarkovOracle::random(8, 110, 16.0));
  auto drafter = degrade(base, StaleContext{5});
  MarkovOracle verifier = *base;
  PipelineConfig cfg;
  cfg.policy = UnmaskPolicy::random(1);
  cfg.verification.algorithm = static_cast<VerifyAlgorithm>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    cfg.seed = seed++;
    benchmark::DoNotOptimize(dual_diffusion_generate(*drafter, verifier, std::vector<Token>(8, 0), 32, cfg));
  }
}
BENCHMARK(BM_DualGenerate)->DenseRange(0, 4)->ArgName("algorithm");

void BM_KlDivergence(benchmark::State& state) {
  const auto V = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::vector<double> a(V);
  std::vector<double> b(V);
  for (std::size_t i = 0; i < V; ++i) {
    a[i] = rng.uniform();
    b[i] = rng.uniform();
  }
  const auto p = Distribution::from_weights(a);
  const auto q = Distribution::from_weights(b);
  for (auto _ : state) benchmark::DoNotOptimize(kl_divergence(p, q));
}
BENCHMARK(BM_KlDivergence)->Arg(8)->Arg(1024)->Arg(32000);

}  // namespace
BENCHMARK_MAIN();
