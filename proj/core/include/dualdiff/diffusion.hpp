// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Forward masking process and the single reverse unmasking step.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "dualdiff/core.hpp"
#include "dualdiff/models.hpp"
#include "dualdiff/rng.hpp"

namespace dualdiff {

enum class ScheduleKind { linear, cosine };

// alpha(t): probability that a position is masked at diffusion time t.
// linear: t. cosine: 1 - cos(pi t / 2).
struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::linear;

  double alpha(double t) const;
};

// Masks each position of a clean sequence independently with probability
// alpha(t). Throws PreconditionError if x0 already contains MASK or t is
// outside [0, 1].
MaskedSequence forward_mask(const MaskedSequence& x0, double t, const NoiseSchedule& schedule, Rng& rng);

enum class PolicyKind { top_k, confidence_threshold, random };
enum class CommitMode { argmax, sample };

// Which masked positions one unmasking step commits, and how.
struct UnmaskPolicy {
  PolicyKind kind = PolicyKind::top_k;
  std::size_t k = 1;        // top_k, random
  double threshold = 0.9;   // confidence_threshold, in (0, 1)
  CommitMode commit = CommitMode::argmax;

  static UnmaskPolicy top_k(std::size_t k, CommitMode commit = CommitMode::argmax) {
    return {PolicyKind::top_k, k, 0.9, commit};
  }
  static UnmaskPolicy confidence_threshold(double theta, CommitMode commit = CommitMode::argmax) {
    return {PolicyKind::confidence_threshold, 1, theta, commit};
  }
  static UnmaskPolicy random(std::size_t k, CommitMode commit = CommitMode::argmax) {
    return {PolicyKind::random, k, 0.9, commit};
  }

  void validate() const;

  friend bool operator==(const UnmaskPolicy&, const UnmaskPolicy&) = default;
};

enum class DecoderRole : std::uint8_t { none, prompt, drafter, verifier };

std::string_view to_string(DecoderRole role);

// Per-position decode history: who committed the current token, in which
// cycle, from which distribution, and how often the position was remasked.
class DecodeProvenance {
 public:
  struct Entry {
    DecoderRole role = DecoderRole::none;
    std::int64_t cycle = -1;
    std::optional<Distribution> decode_dist;
    std::uint32_t remask_count = 0;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  explicit DecodeProvenance(std::size_t length) : entries_(length) {}

  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_.at(i); }

  void mark_prompt(std::size_t i);
  void record_decode(std::size_t i, DecoderRole role, std::int64_t cycle, Distribution dist);
  // Returns the position to the undecoded state and bumps its remask count.
  // Prompt positions cannot be remasked.
  void record_remask(std::size_t i);

  friend bool operator==(const DecodeProvenance&, const DecodeProvenance&) = default;

 private:
  std::vector<Entry> entries_;
};

// Who is decoding, for provenance.
struct StepContext {
  DecoderRole role = DecoderRole::drafter;
  std::int64_t cycle = 0;
};

// One reverse step: a single forward pass of `model`, then commits a subset of
// the masked positions chosen by `policy`.
//
//  top_k                 the k most confident masked positions (all if fewer)
//  confidence_threshold  every masked position with confidence >= threshold,
//                        or the single most confident one if none qualifies
//  random                k masked positions uniformly at random
//
// Ties in confidence go to the lower position index. Selected positions are
// committed in ascending order to the argmax (or a draw) of their distribution,
// and the decode-time distribution is recorded in `provenance`.
// Throws PreconditionError if nothing is masked.
MaskedSequence unmask_step(DenoisingModel& model, const MaskedSequence& seq, const UnmaskPolicy& policy, Rng& rng,
                           DecodeProvenance& provenance, StepContext ctx = {});

}  // namespace dualdiff
