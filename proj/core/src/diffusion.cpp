// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dualdiff/errors.hpp"

namespace dualdiff {

double NoiseSchedule::alpha(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw PreconditionError("diffusion time must lie in [0, 1]");
  switch (kind) {
    case ScheduleKind::linear:
      return t;
    case ScheduleKind::cosine:
      // cos(pi/2) is not exactly 0 in floating point.
      return t == 1.0 ? 1.0 : 1.0 - std::cos(std::numbers::pi * t / 2.0);
  }
  return t;
}

MaskedSequence forward_mask(const MaskedSequence& x0, double t, const NoiseSchedule& schedule, Rng& rng) {
  if (x0.masked_count() != 0) throw PreconditionError("forward_mask expects a clean sequence");
  const double a = schedule.alpha(t);
  MaskedSequence out = x0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (rng.uniform() < a) out.mask(i);
  }
  return out;
}

void UnmaskPolicy::validate() const {
  switch (kind) {
    case PolicyKind::top_k:
    case PolicyKind::random:
      if (k < 1) throw ConfigError("unmask policy k must be >= 1");
      break;
    case PolicyKind::confidence_threshold:
      if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("confidence threshold must lie in (0, 1)");
      break;
  }
}

std::string_view to_string(DecoderRole role) {
  switch (role) {
    case DecoderRole::none:
      return "none";
    case DecoderRole::prompt:
      return "prompt";
    case DecoderRole::drafter:
      return "drafter";
    case DecoderRole::verifier:
      return "verifier";
  }
  return "none";
}

void DecodeProvenance::mark_prompt(std::size_t i) {
  auto& e = entries_.at(i);
  e.role = DecoderRole::prompt;
  e.cycle = -1;
  e.decode_dist.reset();
}

void DecodeProvenance::record_decode(std::size_t i, DecoderRole role, std::int64_t cycle, Distribution dist) {
  auto& e = entries_.at(i);
  if (e.role == DecoderRole::prompt) throw PreconditionError("prompt positions cannot be decoded");
  e.role = role;
  e.cycle = cycle;
  e.decode_dist = std::move(dist);
}

void DecodeProvenance::record_remask(std::size_t i) {
  auto& e = entries_.at(i);
  if (e.role == DecoderRole::prompt) throw PreconditionError("prompt position " + std::to_string(i) + " cannot be remasked");
  e.role = DecoderRole::none;
  e.cycle = -1;
  e.decode_dist.reset();
  ++e.remask_count;
}

namespace {

std::vector<std::size_t> select_positions(const std::vector<std::size_t>& masked, const PositionDistributions& dists,
                                          const UnmaskPolicy& policy, Rng& rng) {
  std::vector<std::size_t> chosen;
  switch (policy.kind) {
    case PolicyKind::top_k: {
      std::vector<std::size_t> order = masked;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return confidence(dists[a]) > confidence(dists[b]);
      });
      order.resize(std::min(policy.k, order.size()));
      chosen = std::move(order);
      break;
    }
    case PolicyKind::confidence_threshold: {
      std::size_t best = masked.front();
      double best_conf = -1.0;
      for (std::size_t i : masked) {
        const double c = confidence(dists[i]);
        if (c >= policy.threshold) chosen.push_back(i);
        if (c > best_conf) {
          best_conf = c;
          best = i;
        }
      }
      if (chosen.empty()) chosen.push_back(best);
      break;
    }
    case PolicyKind::random: {
      std::vector<std::size_t> pool = masked;
      const std::size_t take = std::min(policy.k, pool.size());
      for (std::size_t n = 0; n < take; ++n) {
        const std::size_t j = n + rng.below(pool.size() - n);
        std::swap(pool[n], pool[j]);
      }
      pool.resize(take);
      chosen = std::move(pool);
      break;
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace

MaskedSequence unmask_step(DenoisingModel& model, const MaskedSequence& seq, const UnmaskPolicy& policy, Rng& rng,
                           DecodeProvenance& provenance, StepContext ctx) {
  const std::vector<std::size_t> masked = masked_positions(seq);
  if (masked.empty()) throw PreconditionError("unmask_step needs at least one masked position");
  if (provenance.size() != seq.size()) throw DimensionError("provenance length does not match the sequence");

  PositionDistributions dists = model.predict(seq);
  if (dists.size() != seq.size()) throw DimensionError("model returned the wrong number of positions");

  MaskedSequence out = seq;
  for (std::size_t i : select_positions(masked, dists, policy, rng)) {
    const Distribution& d = dists[i];
    const std::size_t tok = policy.commit == CommitMode::argmax ? d.argmax() : rng.categorical(d.probs());
    out.commit(i, static_cast<Token>(tok));
    provenance.record_decode(i, ctx.role, ctx.cycle, d);
  }
  return out;
}

}  // namespace dualdiff
