// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualdiff/pipeline.hpp"

#include <limits>
#include <string>

#include "dualdiff/errors.hpp"

namespace dualdiff {

void PipelineConfig::validate() const {
  if (drafter_steps < 1) throw ConfigError("K (drafter steps per cycle) must be >= 1");
  if (stall_window < 1) throw ConfigError("stall_window must be >= 1");
  policy.validate();
  verification.validate();
}

namespace {

struct Start {
  MaskedSequence seq;
  DecodeProvenance provenance;
};

Start initial_state(std::size_t vocab, std::span<const Token> prompt, std::size_t length) {
  if (length < 1) throw ConfigError("sequence length must be >= 1");
  if (prompt.size() >= length) throw ConfigError("prompt must be shorter than the sequence length");
  const VocabSpec spec(vocab);
  MaskedSequence seq = MaskedSequence::all_masked(spec, length);
  DecodeProvenance prov(length);
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    if (!spec.is_real(prompt[i])) throw ConfigError("prompt token at position " + std::to_string(i) + " is not a real token");
    seq.commit(i, prompt[i]);
    prov.mark_prompt(i);
  }
  return {std::move(seq), std::move(prov)};
}

std::vector<std::size_t> scope_positions(const MaskedSequence& seq, const DecodeProvenance& prov, VerifyScope scope,
                                         std::int64_t cycle) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.is_masked(i)) continue;
    const auto& e = prov[i];
    if (e.role != DecoderRole::drafter) continue;
    if (scope == VerifyScope::current_cycle && e.cycle != cycle) continue;
    out.push_back(i);
  }
  return out;
}

PositionDistributions stored_drafter_dists(const DecodeProvenance& prov, std::span<const std::size_t> scope,
                                           std::size_t vocab) {
  // Positions outside the scope are never read; they hold a placeholder.
  PositionDistributions out(prov.size(), Distribution::uniform(vocab));
  for (std::size_t i : scope) out[i] = *prov[i].decode_dist;
  return out;
}

}  // namespace

Generation dual_diffusion_generate(DenoisingModel& drafter, DenoisingModel& verifier, std::span<const Token> prompt,
                                   std::size_t length, const PipelineConfig& cfg) {
  cfg.validate();
  const std::size_t vocab = drafter.vocab_size();
  if (verifier.vocab_size() != vocab) throw ConfigError("drafter and verifier vocabularies differ");

  auto [seq, prov] = initial_state(vocab, prompt, length);
  GenStats stats;
  Rng rng(cfg.seed);
  const std::size_t max_cycles = cfg.effective_max_cycles(length);
  const VerificationConfig trust_cfg{.algorithm = VerifyAlgorithm::trust};

  std::size_t stalled = 0;
  bool force_trust = false;

  while (seq.masked_count() > 0) {
    if (stats.cycles >= max_cycles) {
      throw LivelockError("no convergence after " + std::to_string(max_cycles) + " cycles (" +
                              std::to_string(seq.masked_count()) + " positions still masked)",
                          stats);
    }
    const auto cycle = static_cast<std::int64_t>(stats.cycles);
    CycleTrace tr;
    tr.cycle = stats.cycles;
    tr.masked_before = seq.masked_count();
    tr.forced_trust = force_trust;

    // Drafting phase.
    drafter.refresh(seq);
    for (std::size_t k = 0; k < cfg.drafter_steps && seq.masked_count() > 0; ++k) {
      seq = unmask_step(drafter, seq, cfg.policy, rng, prov, {DecoderRole::drafter, cycle});
      ++stats.drafter_steps;
      ++stats.drafter_forward_passes;
      ++tr.drafter_steps;
    }
    tr.masked_after_draft = seq.masked_count();

    // Verification phase.
    const VerificationConfig& vcfg = force_trust ? trust_cfg : cfg.verification;
    if (vcfg.needs_verifier_pass()) {
      const std::vector<std::size_t> scope = scope_positions(seq, prov, vcfg.scope, cycle);
      PositionDistributions verifier_dists = verifier.predict(seq);
      ++stats.verifier_forward_passes;
      tr.verified = true;

      PositionDistributions drafter_dists;
      if (vcfg.needs_drafter_dists()) {
        if (vcfg.drafter_dists == DraftDistSource::fresh) {
          drafter.refresh(seq);
          drafter_dists = drafter.predict(seq);
          ++stats.drafter_forward_passes;
        } else {
          drafter_dists = stored_drafter_dists(prov, scope, vocab);
        }
      }
      VerificationOutcome outcome = verify(seq, drafter_dists, verifier_dists, scope, vcfg, rng);
      for (std::size_t i : outcome.remasked) prov.record_remask(i);
      seq = std::move(outcome.verified_seq);
      tr.remasked = outcome.remasked.size();
      stats.total_remasked += outcome.remasked.size();
    }
    if (force_trust) ++stats.forced_trust_cycles;

    tr.masked_after = seq.masked_count();
    stats.trace.push_back(tr);
    ++stats.cycles;

    if (tr.masked_after < tr.masked_before) {
      stalled = 0;
      force_trust = false;
    } else {
      ++stalled;
      force_trust = stalled >= cfg.stall_window;
      if (force_trust) stalled = 0;
    }
  }
  return {std::move(seq), std::move(stats), std::move(prov)};
}

Generation verifier_only_generate(DenoisingModel& verifier, std::span<const Token> prompt, std::size_t length,
                                  const UnmaskPolicy& policy, std::uint64_t seed) {
  policy.validate();
  auto [seq, prov] = initial_state(verifier.vocab_size(), prompt, length);
  GenStats stats;
  Rng rng(seed);
  while (seq.masked_count() > 0) {
    seq = unmask_step(verifier, seq, policy, rng, prov,
                      {DecoderRole::verifier, static_cast<std::int64_t>(stats.verifier_forward_passes)});
    ++stats.verifier_forward_passes;
  }
  return {std::move(seq), std::move(stats), std::move(prov)};
}

Generation drafter_only_generate(DenoisingModel& drafter, std::span<const Token> prompt, std::size_t length,
                                 const UnmaskPolicy& policy, std::uint64_t seed) {
  PipelineConfig cfg;
  cfg.drafter_steps = std::numeric_limits<std::size_t>::max();
  cfg.policy = policy;
  cfg.verification.algorithm = VerifyAlgorithm::trust;
  cfg.seed = seed;
  return dual_diffusion_generate(drafter, drafter, prompt, length, cfg);
}

}  // namespace dualdiff
