// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Denoising models. Exact posterior oracles stand in for the accurate verifier;
// degradation wrappers turn any model into a cheaper, less accurate drafter.

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dualdiff/core.hpp"
#include "dualdiff/rng.hpp"

namespace dualdiff {

// Predicts a categorical for every position of a partially masked sequence.
//
// Implementations override do_predict(). predict() is the only entry point and
// counts one forward pass per call; the counter is atomic so sweep workers can
// share a model for reading.
class DenoisingModel {
 public:
  DenoisingModel() = default;
  // Copies start with a zero call counter.
  DenoisingModel(const DenoisingModel&) {}
  DenoisingModel& operator=(const DenoisingModel&) { return *this; }
  virtual ~DenoisingModel() = default;

  PositionDistributions predict(const MaskedSequence& seq);

  std::uint64_t call_count() const { return calls_.load(std::memory_order_relaxed); }

  virtual std::size_t vocab_size() const = 0;

  // Cache boundary. Called by the pipeline at the start of every drafting
  // phase with the sequence the drafter is about to work on. Stateless models
  // ignore it; wrappers forward it.
  virtual void refresh(const MaskedSequence& current) { (void)current; }

  // Short human-readable description, recorded in run metadata.
  virtual std::string describe() const = 0;

 protected:
  virtual PositionDistributions do_predict(const MaskedSequence& seq) = 0;

 private:
  std::atomic<std::uint64_t> calls_{0};
};

using ModelPtr = std::shared_ptr<DenoisingModel>;

// A model that also knows its own joint distribution over clean sequences.
//
// predict() returns exact conditionals: at a masked position the posterior
// given every observed token; at an observed position the leave-one-out
// posterior given every other observed token. When no completion is consistent
// with the observations the distribution is uniform.
class SequenceOracle : public DenoisingModel {
 public:
  // ln p(tokens). -infinity for impossible sequences.
  virtual double log_joint(std::span<const Token> tokens) const = 0;

  // Exact ancestral sample of a clean sequence of the given length.
  virtual std::vector<Token> sample(Rng& rng, std::size_t length) const = 0;

  // Maximum-probability completion of prompt to total length `length`.
  // Returns only the answer region (length - prompt.size() tokens).
  // Ties are broken toward lower token ids (Markov) or support order
  // (enumerated).
  virtual std::vector<Token> best_completion(std::span<const Token> prompt, std::size_t length) const = 0;

  // Sequence length the oracle is defined on, if it only supports one.
  virtual std::optional<std::size_t> fixed_length() const { return std::nullopt; }
};

// First-order Markov chain: p(x) = initial[x0] * prod_i transition[x_{i-1}][x_i].
// Posteriors are computed by forward/backward message passing.
class MarkovOracle final : public SequenceOracle {
 public:
  MarkovOracle(std::vector<double> initial, std::vector<std::vector<double>> transition);

  // Random chain: every row (and the initial distribution) is a softmax of
  // sharpness * u_j with u_j ~ U[0,1) from a stream seeded by `seed`.
  static MarkovOracle random(std::size_t vocab, std::uint64_t seed, double sharpness);

  std::size_t vocab_size() const override { return initial_.size(); }
  std::string describe() const override;

  double log_joint(std::span<const Token> tokens) const override;
  std::vector<Token> sample(Rng& rng, std::size_t length) const override;
  std::vector<Token> best_completion(std::span<const Token> prompt, std::size_t length) const override;

  const std::vector<double>& initial() const { return initial_; }
  const std::vector<std::vector<double>>& transition() const { return transition_; }

 protected:
  PositionDistributions do_predict(const MaskedSequence& seq) override;

 private:
  std::vector<double> initial_;
  std::vector<std::vector<double>> transition_;
};

// Explicit list of (sequence, weight) pairs; posteriors by scanning the support.
class EnumeratedOracle final : public SequenceOracle {
 public:
  struct Entry {
    std::vector<Token> tokens;
    double weight = 0.0;
  };

  EnumeratedOracle(std::size_t vocab, std::vector<Entry> support);

  std::size_t vocab_size() const override { return vocab_; }
  std::string describe() const override;

  double log_joint(std::span<const Token> tokens) const override;
  std::vector<Token> sample(Rng& rng, std::size_t length) const override;
  std::vector<Token> best_completion(std::span<const Token> prompt, std::size_t length) const override;
  std::optional<std::size_t> fixed_length() const override { return length_; }

  const std::vector<Entry>& support() const { return support_; }

 protected:
  PositionDistributions do_predict(const MaskedSequence& seq) override;

 private:
  std::size_t vocab_;
  std::size_t length_;
  std::vector<Entry> support_;
};

// Degradations turning a base model into a drafter.
//
// StaleContext emulates a block-wise approximate KV cache: the model conditions
// on a snapshot of the sequence taken at the last refresh, ignoring tokens
// committed since. The snapshot is retaken every `refresh_period` predict calls
// (0 means never) and whenever refresh() is called.
struct StaleContext {
  std::size_t refresh_period = 0;
};

// probs proportional to p^(1/tau).
struct Temperature {
  double tau = 1.0;
};

// (1 - epsilon) * p + epsilon * uniform.
struct UniformMix {
  double epsilon = 0.0;
};

using Degradation = std::variant<StaleContext, Temperature, UniformMix>;

void validate(const Degradation& d);
std::string describe(const Degradation& d);

ModelPtr degrade(ModelPtr base, const Degradation& d);

// Wraps in list order: the last entry is the outermost wrapper.
ModelPtr degrade(ModelPtr base, std::span<const Degradation> chain);

// Uniform distribution at every position. Equivalent to
// degrade(any, UniformMix{1.0}) without needing a base model.
class UniformModel final : public DenoisingModel {
 public:
  explicit UniformModel(std::size_t vocab) : vocab_(vocab) {}
  std::size_t vocab_size() const override { return vocab_; }
  std::string describe() const override;

 protected:
  PositionDistributions do_predict(const MaskedSequence& seq) override;

 private:
  std::size_t vocab_;
};

}  // namespace dualdiff
