// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic tasks, quality metrics, ELBO diagnostic, hyperparameter sweeps and
// Pareto-frontier extraction.
//
// Cost is measured in model forward passes (NFE). A verifier pass is assumed to
// cost `lambda` drafter passes, so weighted_cost = drafter_nfe + lambda * verifier_nfe.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dualdiff/diffusion.hpp"
#include "dualdiff/models.hpp"
#include "dualdiff/pipeline.hpp"

namespace dualdiff {

// Sentinel for the log-likelihood of a sequence the oracle gives zero mass.
// Exported as the literal string "-inf"; excluded from means.
inline constexpr double kImpossibleLoglik = -std::numeric_limits<double>::infinity();

struct Task {
  std::size_t id = 0;
  std::vector<Token> prompt;
  std::vector<Token> reference;  // maximum-probability completion (answer region only)
  std::size_t length = 0;        // prompt + answer
};

// Samples prompts from the oracle and computes each reference completion
// exactly. Task i draws from the stream mix_seed(seed, i, 0).
std::vector<Task> make_tasks(const SequenceOracle& oracle, std::size_t count, std::size_t prompt_length,
                             std::size_t length, std::uint64_t seed);

struct QualityMetrics {
  double exact_match = 0.0;   // 1 iff the answer region equals the reference
  double gt_loglik = 0.0;     // ln p_oracle(full sequence), kImpossibleLoglik if zero
  double verifier_nll = 0.0;  // sum over answer positions of -ln p_V(token | leave-one-out)
};

// One verifier forward pass on the complete sequence. Throws PreconditionError
// if `generated` is not fully unmasked or has the wrong length.
QualityMetrics score(const Task& task, const MaskedSequence& generated, const SequenceOracle& oracle,
                     DenoisingModel& verifier);

struct ElboEstimate {
  double mean = 0.0;       // mean over draws of sum_{masked i} -ln p(x0_i | x_t)
  double std_error = 0.0;  // of the mean
  double per_masked_token = 0.0;
  std::size_t draws = 0;
  std::size_t masked_tokens = 0;
};

// Monte-Carlo estimate of the masked-diffusion ELBO loss: for every sample and
// corpus sequence draw t ~ U[0,1), mask with alpha(t), and sum the negative log
// probability of the true token over masked positions.
ElboEstimate elbo_eval(DenoisingModel& model, std::span<const std::vector<Token>> corpus,
                       const NoiseSchedule& schedule, std::size_t n_samples, std::uint64_t seed);

// The same loss computed exactly: sums over all 2^L mask patterns weighted by
// the integral over t of alpha(t)^|M| (1 - alpha(t))^(L - |M|). Cost is
// |corpus| * 2^L forward passes, so sequences are limited to 16 positions.
double exact_elbo(DenoisingModel& model, std::span<const std::vector<Token>> corpus, const NoiseSchedule& schedule);

enum class Method { dual, drafter_only, verifier_only };
enum class RunStatus { ok, livelock };

std::string_view to_string(Method m);
std::string_view to_string(RunStatus s);
std::string to_string(const UnmaskPolicy& p);

// One sweep configuration.
struct SweepCell {
  std::size_t index = 0;
  Method method = Method::dual;
  PipelineConfig pipeline;  // seed unused; baselines only read `policy`
  std::string label;
  std::string config_id;  // 16 hex digits, stable hash of the canonical cell description
  std::uint64_t config_hash = 0;
};

struct SweepGrid {
  std::vector<std::size_t> K{5};
  std::vector<VerifyAlgorithm> algorithms{VerifyAlgorithm::kl_threshold};
  std::vector<double> tau_kl{0.3};
  std::vector<double> tau_conf{0.5};
  std::vector<std::size_t> budget{0};
  std::vector<UnmaskPolicy> policies{UnmaskPolicy::top_k(1)};
  DraftDistSource drafter_dists = DraftDistSource::stored;
  VerifyScope scope = VerifyScope::current_cycle;
  std::size_t stall_window = 3;
  std::size_t max_cycles = 0;

  // Throws ConfigError on an empty axis.
  void validate() const;

  // Dual cells in order policy > algorithm > K > algorithm parameter; each
  // algorithm only varies the parameter it reads. Then one drafter-only and
  // one verifier-only cell per policy.
  std::vector<SweepCell> expand() const;
};

struct RunRecord {
  std::string config_id;
  std::size_t config_index = 0;
  std::string label;
  Method method = Method::dual;
  VerifyAlgorithm algorithm = VerifyAlgorithm::trust;
  std::size_t K = 0;
  std::string policy;
  double tau_kl = 0.0;
  double tau_conf = 0.0;
  std::size_t budget = 0;
  std::int64_t task_id = 0;  // -1 on aggregate rows
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::ok;

  double exact_match = 0.0;
  double gt_loglik = 0.0;
  double verifier_nll = 0.0;

  double drafter_nfe = 0.0;
  double verifier_nfe = 0.0;
  double lambda = 0.0;
  double weighted_cost = 0.0;

  double cycles = 0.0;
  double total_remasked = 0.0;
  double forced_trust_cycles = 0.0;

  // Aggregate rows only.
  std::size_t tasks = 0;
  std::size_t livelocks = 0;
  std::size_t impossible_loglik = 0;

  std::string run_fingerprint;
  double wall_time_s = 0.0;  // not part of the deterministic exports
};

using ModelFactory = std::function<ModelPtr()>;

struct SweepModels {
  ModelFactory drafter;
  ModelFactory verifier;
  const SequenceOracle* oracle = nullptr;  // ground truth for scoring
};

struct SweepOptions {
  double lambda = 5.0;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string run_fingerprint;
};

// Runs every (cell, task) pair. Cell c on task t uses the seed
// mix_seed(seed, t, cell.config_hash). Every pair gets fresh model instances
// from the factories. Livelocks are recorded, not thrown. Output is sorted by
// (cell index, task id) regardless of `jobs`.
std::vector<RunRecord> sweep(std::span<const Task> tasks, const SweepModels& models, const SweepGrid& grid,
                             const SweepOptions& opts);

// Per-cell means (task_id = -1). Livelocked runs count as exact_match 0 and are
// excluded from the log-likelihood and NLL means, as are impossible sequences.
std::vector<RunRecord> aggregate(std::span<const RunRecord> records);

enum class CostKey { weighted_cost, drafter_nfe, verifier_nfe };
enum class QualityKey { exact_match, gt_loglik, neg_verifier_nll };

double cost_of(const RunRecord& r, CostKey key);
double quality_of(const RunRecord& r, QualityKey key);

// Non-dominated subset sorted by cost ascending. A record is dominated when
// another has cost <= and quality >= with at least one strict. Exact
// duplicates are all kept.
std::vector<RunRecord> pareto_frontier(std::span<const RunRecord> records, CostKey cost, QualityKey quality);

}  // namespace dualdiff
