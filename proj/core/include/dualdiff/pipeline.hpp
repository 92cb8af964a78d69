// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Draft/verify orchestration and the single-model baselines.
//
// One cycle = up to K drafter unmasking steps followed by one verification
// phase. Remasked positions return to MASK and are redrafted in later cycles.
// The loop ends when nothing is masked after a verification phase.
//
// Livelock guard: if the number of unmasked positions fails to strictly grow
// over `stall_window` consecutive cycles, the next cycle is run with trust
// verification (it cannot remask, so it always makes progress). Reaching
// `max_cycles` with masks left raises LivelockError.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dualdiff/core.hpp"
#include "dualdiff/diffusion.hpp"
#include "dualdiff/models.hpp"
#include "dualdiff/verification.hpp"

namespace dualdiff {

struct PipelineConfig {
  std::size_t drafter_steps = 5;  // K
  UnmaskPolicy policy{};
  VerificationConfig verification{};
  std::size_t max_cycles = 0;  // 0 selects 4 * length
  std::size_t stall_window = 3;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t effective_max_cycles(std::size_t length) const { return max_cycles > 0 ? max_cycles : 4 * length; }
};

struct CycleTrace {
  std::size_t cycle = 0;
  std::size_t masked_before = 0;
  std::size_t masked_after_draft = 0;
  std::size_t masked_after = 0;
  std::size_t drafter_steps = 0;
  std::size_t remasked = 0;
  bool verified = false;      // a verifier pass ran
  bool forced_trust = false;  // stall guard overrode the algorithm

  friend bool operator==(const CycleTrace&, const CycleTrace&) = default;
};

struct GenStats {
  // All drafter forward passes: unmasking steps plus fresh p_D recomputes.
  std::uint64_t drafter_forward_passes = 0;
  // Drafter unmasking steps only.
  std::uint64_t drafter_steps = 0;
  std::uint64_t verifier_forward_passes = 0;
  std::uint64_t cycles = 0;
  std::uint64_t total_remasked = 0;
  std::uint64_t forced_trust_cycles = 0;
  std::vector<CycleTrace> trace;

  friend bool operator==(const GenStats&, const GenStats&) = default;
};

struct Generation {
  MaskedSequence sequence;
  GenStats stats;
  DecodeProvenance provenance;
};

// Raised when max_cycles is exhausted. Carries the statistics gathered so far.
class LivelockError : public std::runtime_error {
 public:
  LivelockError(const std::string& what, GenStats stats) : std::runtime_error(what), stats_(std::move(stats)) {}
  const GenStats& stats() const { return stats_; }

 private:
  GenStats stats_;
};

// Speculative draft/verify generation. `prompt` occupies the first positions
// and is never modified. Deterministic given cfg.seed.
Generation dual_diffusion_generate(DenoisingModel& drafter, DenoisingModel& verifier, std::span<const Token> prompt,
                                   std::size_t length, const PipelineConfig& cfg);

// Plain masked-diffusion generation with the verifier alone.
Generation verifier_only_generate(DenoisingModel& verifier, std::span<const Token> prompt, std::size_t length,
                                  const UnmaskPolicy& policy, std::uint64_t seed);

// The drafter alone: a single unbounded drafting phase with trust
// verification. Identical to dual_diffusion_generate with trust and K >= length.
Generation drafter_only_generate(DenoisingModel& drafter, std::span<const Token> prompt, std::size_t length,
                                 const UnmaskPolicy& policy, std::uint64_t seed);

}  // namespace dualdiff
