// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Randomized invariants of the generation loop over many small configurations.

#include "doctest.h"
#include "dualdiff/errors.hpp"
#include "dualdiff/pipeline.hpp"

using namespace dualdiff;

namespace {

UnmaskPolicy random_policy(Rng& rng) {
  const CommitMode commit = rng.bernoulli(0.5) ? CommitMode::argmax : CommitMode::sample;
  switch (rng.below(3)) {
    case 0:
      return UnmaskPolicy::top_k(1 + rng.below(3), commit);
    case 1:
      return UnmaskPolicy::random(1 + rng.below(3), commit);
    default:
      return UnmaskPolicy::confidence_threshold(0.3 + 0.6 * rng.uniform(), commit);
  }
}

VerificationConfig random_verification(Rng& rng) {
  VerificationConfig v;
  v.algorithm = static_cast<VerifyAlgorithm>(rng.below(5));
  v.tau_kl = 0.01 + rng.uniform();
  v.tau_conf = 0.05 + 0.9 * rng.uniform();
  v.budget = rng.below(3);
  v.drafter_dists = rng.bernoulli(0.5) ? DraftDistSource::stored : DraftDistSource::fresh;
  v.scope = rng.bernoulli(0.5) ? VerifyScope::current_cycle : VerifyScope::all_drafted;
  return v;
}

}  // namespace

TEST_CASE("generation invariants hold for random configurations") {
  Rng rng(424242);
  int livelocks = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t vocab = 2 + rng.below(4);
    const std::size_t length = 3 + rng.below(10);
    const std::size_t prompt_len = rng.below(length);
    auto base = std::make_shared<MarkovOracle>(MarkovOracle::random(vocab, rng.next_u64(), 1.0 + 8.0 * rng.uniform()));
    std::vector<Degradation> chain{StaleContext{rng.below(4)}};
    if (rng.bernoulli(0.5)) chain.push_back(Temperature{0.5 + 2.0 * rng.uniform()});
    if (rng.bernoulli(0.5)) chain.push_back(UniformMix{0.5 * rng.uniform()});
    auto drafter = degrade(base, chain);
    MarkovOracle verifier = *base;

    std::vector<Token> prompt(prompt_len);
    for (auto& t : prompt) t = static_cast<Token>(rng.below(vocab));

    PipelineConfig cfg;
    cfg.drafter_steps = 1 + rng.below(6);
    cfg.policy = random_policy(rng);
    cfg.verification = random_verification(rng);
    cfg.seed = rng.next_u64();
    CAPTURE(trial);

    Generation g{MaskedSequence::all_masked(VocabSpec(vocab), length), {}, DecodeProvenance(length)};
    try {
      g = dual_diffusion_generate(*drafter, verifier, prompt, length, cfg);
    } catch (const LivelockError& e) {
      // Only all_drafted verification can re-remask tokens committed by a forced-trust cycle.
      CHECK(cfg.verification.scope == VerifyScope::all_drafted);
      CHECK(e.stats().cycles == cfg.effective_max_cycles(length));
      ++livelocks;
      continue;
    }
    CHECK(g.sequence.fully_unmasked());
    for (std::size_t i = 0; i < prompt_len; ++i) CHECK(g.sequence[i] == prompt[i]);
    CHECK(g.stats.cycles == g.stats.trace.size());
    CHECK(g.stats.cycles <= cfg.effective_max_cycles(length));
    CHECK(g.stats.drafter_steps <= g.stats.drafter_forward_passes);
    CHECK(drafter->call_count() == g.stats.drafter_forward_passes);
    CHECK(verifier.call_count() == g.stats.verifier_forward_passes);
    std::uint64_t remasked = 0;
    for (const auto& t : g.stats.trace) {
      remasked += t.remasked;
      CHECK(t.masked_after == t.masked_after_draft + t.remasked);
      CHECK(t.masked_after_draft <= t.masked_before);
    }
    CHECK(remasked == g.stats.total_remasked);
    std::uint64_t prov_remasks = 0;
    for (std::size_t i = 0; i < length; ++i) prov_remasks += g.provenance[i].remask_count;
    CHECK(prov_remasks == g.stats.total_remasked);
  }
  CHECK(livelocks < 30);
}
