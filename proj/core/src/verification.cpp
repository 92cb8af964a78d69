// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualdiff/verification.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "dualdiff/errors.hpp"

namespace dualdiff {

std::string_view to_string(VerifyAlgorithm a) {
  switch (a) {
    case VerifyAlgorithm::trust:
      return "trust";
    case VerifyAlgorithm::kl_threshold:
      return "kl_threshold";
    case VerifyAlgorithm::kl_proportional:
      return "kl_proportional";
    case VerifyAlgorithm::conf_threshold:
      return "conf_threshold";
    case VerifyAlgorithm::conf_probabilistic:
      return "conf_probabilistic";
  }
  return "trust";
}

std::string_view to_string(DraftDistSource s) { return s == DraftDistSource::stored ? "stored" : "fresh"; }

std::string_view to_string(VerifyScope s) { return s == VerifyScope::current_cycle ? "current_cycle" : "all_drafted"; }

void VerificationConfig::validate() const {
  if (!(tau_kl > 0.0) || !std::isfinite(tau_kl)) throw ConfigError("tau_kl must be > 0");
  if (!(tau_conf > 0.0 && tau_conf < 1.0)) throw ConfigError("tau_conf must lie in (0, 1)");
}

std::size_t VerificationConfig::effective_budget(std::size_t scope_size) const {
  if (budget > 0) return budget;
  const auto tenth = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(scope_size)));
  return std::max<std::size_t>(1, tenth);
}

namespace {

void check_scope(const MaskedSequence& seq, std::span<const std::size_t> scope) {
  for (std::size_t i : scope) {
    if (i >= seq.size()) throw DimensionError("scope position " + std::to_string(i) + " is out of range");
    if (seq.is_masked(i)) throw PreconditionError("scope position " + std::to_string(i) + " is masked");
  }
}

void check_coverage(const MaskedSequence& seq, const PositionDistributions& dists, const char* what) {
  if (dists.size() != seq.size()) {
    throw DimensionError(std::string(what) + " distributions cover " + std::to_string(dists.size()) +
                         " positions, sequence has " + std::to_string(seq.size()));
  }
}

VerificationOutcome apply(const MaskedSequence& seq, std::vector<PositionDiagnostic> diagnostics) {
  VerificationOutcome out{seq, {}, std::move(diagnostics)};
  for (const auto& d : out.diagnostics) {
    if (d.remasked) out.remasked.push_back(d.position);
  }
  std::sort(out.remasked.begin(), out.remasked.end());
  for (std::size_t i : out.remasked) out.verified_seq.mask(i);
  return out;
}

}  // namespace

VerificationOutcome verify_trust(const MaskedSequence& seq) { return {seq, {}, {}}; }

VerificationOutcome verify_kl(const MaskedSequence& seq, const PositionDistributions& drafter_dists,
                              const PositionDistributions& verifier_dists, std::span<const std::size_t> scope,
                              const VerificationConfig& cfg, Rng& rng) {
  check_scope(seq, scope);
  check_coverage(seq, drafter_dists, "drafter");
  check_coverage(seq, verifier_dists, "verifier");

  std::vector<PositionDiagnostic> diags;
  diags.reserve(scope.size());
  for (std::size_t i : scope) diags.push_back({i, kl_divergence(drafter_dists[i], verifier_dists[i]), false});

  if (cfg.algorithm == VerifyAlgorithm::kl_threshold) {
    for (auto& d : diags) d.remasked = d.score > cfg.tau_kl;
    return apply(seq, std::move(diags));
  }
  if (cfg.algorithm != VerifyAlgorithm::kl_proportional) {
    throw PreconditionError("verify_kl called with a non-KL algorithm");
  }

  // Successive categorical draws without replacement from the normalized
  // divergences. Zero-weight positions are never drawn.
  std::map<std::size_t, double> raw;
  for (const auto& d : diags) raw[d.position] = d.score;
  std::map<std::size_t, double> weights = normalize_remask_weights(raw);
  std::erase_if(weights, [](const auto& kv) { return kv.second <= 0.0; });

  std::map<std::size_t, std::size_t> diag_index;
  for (std::size_t k = 0; k < diags.size(); ++k) diag_index[diags[k].position] = k;

  const std::size_t draws = std::min(cfg.effective_budget(scope.size()), weights.size());
  for (std::size_t n = 0; n < draws; ++n) {
    std::vector<std::size_t> keys;
    std::vector<double> w;
    for (const auto& [pos, p] : weights) {
      keys.push_back(pos);
      w.push_back(p);
    }
    const std::size_t pick = keys[rng.categorical(w)];
    diags[diag_index[pick]].remasked = true;
    weights.erase(pick);
  }
  return apply(seq, std::move(diags));
}

VerificationOutcome verify_confidence(const MaskedSequence& seq, const PositionDistributions& verifier_dists,
                                      std::span<const std::size_t> scope, const VerificationConfig& cfg, Rng& rng) {
  check_scope(seq, scope);
  check_coverage(seq, verifier_dists, "verifier");

  std::vector<PositionDiagnostic> diags;
  diags.reserve(scope.size());
  for (std::size_t i : scope) {
    const double c = confidence(verifier_dists[i]);
    bool remask = false;
    if (cfg.algorithm == VerifyAlgorithm::conf_threshold) {
      remask = c < cfg.tau_conf;
    } else if (cfg.algorithm == VerifyAlgorithm::conf_probabilistic) {
      remask = rng.bernoulli(1.0 - c);
    } else {
      throw PreconditionError("verify_confidence called with a non-confidence algorithm");
    }
    diags.push_back({i, c, remask});
  }
  return apply(seq, std::move(diags));
}

VerificationOutcome verify(const MaskedSequence& seq, const PositionDistributions& drafter_dists,
                           const PositionDistributions& verifier_dists, std::span<const std::size_t> scope,
                           const VerificationConfig& cfg, Rng& rng) {
  switch (cfg.algorithm) {
    case VerifyAlgorithm::trust:
      return verify_trust(seq);
    case VerifyAlgorithm::kl_threshold:
    case VerifyAlgorithm::kl_proportional:
      return verify_kl(seq, drafter_dists, verifier_dists, scope, cfg, rng);
    case VerifyAlgorithm::conf_threshold:
    case VerifyAlgorithm::conf_probabilistic:
      return verify_confidence(seq, verifier_dists, scope, cfg, rng);
  }
  return verify_trust(seq);
}

}  // namespace dualdiff
