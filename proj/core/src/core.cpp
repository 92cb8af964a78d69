// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualdiff/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dualdiff/errors.hpp"

namespace dualdiff {

VocabSpec::VocabSpec(std::size_t size) : size_(size) {
  if (size < 2) throw ConfigError("vocabulary size must be at least 2, got " + std::to_string(size));
}

MaskedSequence::MaskedSequence(VocabSpec vocab, std::vector<Token> tokens)
    : vocab_(vocab), tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw PreconditionError("sequence length must be at least 1");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const Token t = tokens_[i];
    if (!vocab_.is_real(t) && t != vocab_.mask_id()) {
      throw PreconditionError("token " + std::to_string(t) + " at position " + std::to_string(i) +
                              " is outside the vocabulary");
    }
  }
}

MaskedSequence MaskedSequence::all_masked(VocabSpec vocab, std::size_t length) {
  return MaskedSequence(vocab, std::vector<Token>(length, vocab.mask_id()));
}

std::size_t MaskedSequence::masked_count() const {
  return static_cast<std::size_t>(std::count(tokens_.begin(), tokens_.end(), vocab_.mask_id()));
}

void MaskedSequence::commit(std::size_t i, Token t) {
  if (!vocab_.is_real(t)) throw PreconditionError("commit: token " + std::to_string(t) + " is not a real token");
  tokens_.at(i) = t;
}

void MaskedSequence::mask(std::size_t i) { tokens_.at(i) = vocab_.mask_id(); }

std::vector<std::size_t> masked_positions(const MaskedSequence& seq) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.is_masked(i)) out.push_back(i);
  }
  return out;
}

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw PreconditionError("distribution must be nonempty");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double p = probs_[i];
    if (!std::isfinite(p) || p < 0.0) {
      throw PreconditionError("distribution entry " + std::to_string(i) + " is negative or not finite");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw PreconditionError("distribution sums to " + std::to_string(sum) + ", expected 1");
  }
}

Distribution Distribution::uniform(std::size_t n) {
  if (n == 0) throw PreconditionError("distribution must be nonempty");
  return Distribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Distribution Distribution::one_hot(std::size_t n, std::size_t index) {
  if (index >= n) throw DimensionError("one_hot index out of range");
  std::vector<double> probs(n, 0.0);
  probs[index] = 1.0;
  return Distribution(std::move(probs));
}

Distribution Distribution::from_weights(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw PreconditionError("weights must be finite and nonnegative");
    sum += w;
  }
  if (!(sum > 0.0)) return uniform(weights.size());
  for (double& w : weights) w /= sum;
  return Distribution(std::move(weights));
}

std::size_t Distribution::argmax() const {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

double kl_divergence(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) {
    throw DimensionError("kl_divergence: lengths " + std::to_string(p.size()) + " and " +
                         std::to_string(q.size()) + " differ");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    if (pi == 0.0) continue;
    kl += pi * std::log(pi / std::max(q[i], kKlFloor));
  }
  return std::max(kl, 0.0);
}

double confidence(const Distribution& p) { return p[p.argmax()]; }

std::map<std::size_t, double> normalize_remask_weights(const std::map<std::size_t, double>& divergences) {
  double total = 0.0;
  for (const auto& [pos, value] : divergences) {
    if (!std::isfinite(value) || value < 0.0) {
      throw PreconditionError("remask weight at position " + std::to_string(pos) + " is negative or not finite");
    }
    total += value;
  }
  std::map<std::size_t, double> out;
  if (!(total > 0.0)) return out;
  for (const auto& [pos, value] : divergences) out.emplace(pos, value / total);
  return out;
}

}  // namespace dualdiff
