// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Verification algorithms: given a drafted sequence and the verifier's view of
// it, decide which drafter-decoded tokens go back to MASK.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "dualdiff/core.hpp"
#include "dualdiff/rng.hpp"

namespace dualdiff {

enum class VerifyAlgorithm {
  trust,               // accept everything, no verifier pass
  kl_threshold,        // remask where KL(p_D || p_V) > tau_kl
  kl_proportional,     // draw `budget` positions with probability ~ KL(p_D || p_V)
  conf_threshold,      // remask where max p_V < tau_conf
  conf_probabilistic,  // remask each position independently with probability 1 - max p_V
};

// Where p_D comes from at verification time.
//   stored  the distribution the drafter committed from (free)
//   fresh   one extra drafter pass on the drafted sequence
enum class DraftDistSource { stored, fresh };

// Which drafter-decoded positions are candidates for remasking.
enum class VerifyScope { current_cycle, all_drafted };

std::string_view to_string(VerifyAlgorithm a);
std::string_view to_string(DraftDistSource s);
std::string_view to_string(VerifyScope s);

struct VerificationConfig {
  VerifyAlgorithm algorithm = VerifyAlgorithm::kl_threshold;
  double tau_kl = 0.3;
  double tau_conf = 0.5;
  // kl_proportional draw count. 0 selects max(1, ceil(0.1 * |scope|)).
  std::size_t budget = 0;
  DraftDistSource drafter_dists = DraftDistSource::stored;
  VerifyScope scope = VerifyScope::current_cycle;

  void validate() const;
  std::size_t effective_budget(std::size_t scope_size) const;
  bool needs_verifier_pass() const { return algorithm != VerifyAlgorithm::trust; }
  bool needs_drafter_dists() const {
    return algorithm == VerifyAlgorithm::kl_threshold || algorithm == VerifyAlgorithm::kl_proportional;
  }

  friend bool operator==(const VerificationConfig&, const VerificationConfig&) = default;
};

struct PositionDiagnostic {
  std::size_t position = 0;
  double score = 0.0;  // KL divergence or verifier confidence
  bool remasked = false;
};

struct VerificationOutcome {
  MaskedSequence verified_seq;
  std::vector<std::size_t> remasked;  // ascending
  std::vector<PositionDiagnostic> diagnostics;
};

VerificationOutcome verify_trust(const MaskedSequence& seq);

// drafter_dists / verifier_dists must cover every position; only the scope
// positions are read. Throws PreconditionError if a scope position is masked.
VerificationOutcome verify_kl(const MaskedSequence& seq, const PositionDistributions& drafter_dists,
                              const PositionDistributions& verifier_dists, std::span<const std::size_t> scope,
                              const VerificationConfig& cfg, Rng& rng);

VerificationOutcome verify_confidence(const MaskedSequence& seq, const PositionDistributions& verifier_dists,
                                      std::span<const std::size_t> scope, const VerificationConfig& cfg, Rng& rng);

// Dispatches on cfg.algorithm. drafter_dists may be empty unless a KL variant
// is selected.
VerificationOutcome verify(const MaskedSequence& seq, const PositionDistributions& drafter_dists,
                           const PositionDistributions& verifier_dists, std::span<const std::size_t> scope,
                           const VerificationConfig& cfg, Rng& rng);

}  // namespace dualdiff
