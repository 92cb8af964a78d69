// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Vocabulary, sequence and distribution primitives shared by every module.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace dualdiff {

using Token = std::int32_t;

// Real tokens are [0, size). The MASK sentinel is one past the last real token.
class VocabSpec {
 public:
  explicit VocabSpec(std::size_t size);

  std::size_t size() const { return size_; }
  Token mask_id() const { return static_cast<Token>(size_); }
  bool is_real(Token t) const { return t >= 0 && static_cast<std::size_t>(t) < size_; }

  friend bool operator==(const VocabSpec&, const VocabSpec&) = default;

 private:
  std::size_t size_;
};

// The diffusion state: a fixed-length token buffer where some entries are MASK.
class MaskedSequence {
 public:
  MaskedSequence(VocabSpec vocab, std::vector<Token> tokens);

  static MaskedSequence all_masked(VocabSpec vocab, std::size_t length);

  const VocabSpec& vocab() const { return vocab_; }
  std::size_t size() const { return tokens_.size(); }
  std::span<const Token> tokens() const { return tokens_; }
  Token operator[](std::size_t i) const { return tokens_[i]; }

  bool is_masked(std::size_t i) const { return tokens_[i] == vocab_.mask_id(); }
  std::size_t masked_count() const;
  bool fully_unmasked() const { return masked_count() == 0; }

  // Sets position i to a real token.
  void commit(std::size_t i, Token t);
  void mask(std::size_t i);

  friend bool operator==(const MaskedSequence&, const MaskedSequence&) = default;

 private:
  VocabSpec vocab_;
  std::vector<Token> tokens_;
};

// Indices holding MASK, ascending.
std::vector<std::size_t> masked_positions(const MaskedSequence& seq);

// Categorical over the real vocabulary. MASK never carries mass.
class Distribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  // Validates: nonempty, entries finite and >= 0, sum within kSumTolerance of 1.
  explicit Distribution(std::vector<double> probs);

  static Distribution uniform(std::size_t n);
  static Distribution one_hot(std::size_t n, std::size_t index);
  // Normalizes arbitrary nonnegative weights. All-zero weights yield uniform.
  static Distribution from_weights(std::vector<double> weights);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  // Lowest index among the maxima.
  std::size_t argmax() const;

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  std::vector<double> probs_;
};

// One distribution per sequence position, masked or not.
using PositionDistributions = std::vector<Distribution>;

inline constexpr double kKlFloor = 1e-12;

// KL(p || q) = sum_i p_i ln(p_i / max(q_i, 1e-12)). Terms with p_i = 0 are
// dropped and the result is clamped at 0. Throws DimensionError on length
// mismatch.
double kl_divergence(const Distribution& p, const Distribution& q);

// max_x p_x.
double confidence(const Distribution& p);

// value / sum(values). An all-zero map yields an empty map (nothing to remask).
// Throws PreconditionError on a negative or non-finite value.
std::map<std::size_t, double> normalize_remask_weights(const std::map<std::size_t, double>& divergences);

}  // namespace dualdiff
