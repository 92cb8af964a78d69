// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualdiff/bench.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "dualdiff/errors.hpp"
#include "dualdiff/records.hpp"
#include "dualdiff/rng.hpp"

namespace dualdiff {

std::vector<Task> make_tasks(const SequenceOracle& oracle, std::size_t count, std::size_t prompt_length,
                             std::size_t length, std::uint64_t seed) {
  if (prompt_length >= length) throw ConfigError("prompt length must be smaller than the sequence length");
  std::vector<Task> tasks;
  tasks.reserve(count);
  for (std::size_t id = 0; id < count; ++id) {
    Rng rng(mix_seed(seed, id, 0));
    std::vector<Token> full = oracle.sample(rng, length);
    Task t;
    t.id = id;
    t.length = length;
    t.prompt.assign(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(prompt_length));
    t.reference = oracle.best_completion(t.prompt, length);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

QualityMetrics score(const Task& task, const MaskedSequence& generated, const SequenceOracle& oracle,
                     DenoisingModel& verifier) {
  if (generated.size() != task.length) throw PreconditionError("generated sequence has the wrong length");
  if (generated.masked_count() != 0) throw PreconditionError("generated sequence still contains MASK tokens");

  const auto tokens = generated.tokens();
  const std::size_t start = task.prompt.size();
  QualityMetrics m;
  m.exact_match = std::equal(task.reference.begin(), task.reference.end(), tokens.begin() + static_cast<std::ptrdiff_t>(start)) ? 1.0 : 0.0;
  m.gt_loglik = oracle.log_joint(tokens);

  const PositionDistributions dists = verifier.predict(generated);
  double nll = 0.0;
  for (std::size_t i = start; i < generated.size(); ++i) {
    nll -= std::log(std::max(dists[i][static_cast<std::size_t>(tokens[i])], kKlFloor));
  }
  m.verifier_nll = nll;
  return m;
}

ElboEstimate elbo_eval(DenoisingModel& model, std::span<const std::vector<Token>> corpus,
                       const NoiseSchedule& schedule, std::size_t n_samples, std::uint64_t seed) {
  if (corpus.empty()) throw PreconditionError("ELBO corpus must be nonempty");
  if (n_samples == 0) throw PreconditionError("ELBO needs at least one sample per sequence");
  const VocabSpec vocab(model.vocab_size());
  Rng rng(seed);

  ElboEstimate est;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (const auto& clean : corpus) {
      const MaskedSequence x0(vocab, clean);
      const double t = rng.uniform();
      const MaskedSequence xt = forward_mask(x0, t, schedule, rng);
      double loss = 0.0;
      if (xt.masked_count() > 0) {
        const PositionDistributions dists = model.predict(xt);
        for (std::size_t i : masked_positions(xt)) {
          loss -= std::log(std::max(dists[i][static_cast<std::size_t>(clean[i])], kKlFloor));
          ++est.masked_tokens;
        }
      }
      sum += loss;
      sum_sq += loss * loss;
      ++est.draws;
    }
  }
  const double n = static_cast<double>(est.draws);
  est.mean = sum / n;
  const double var = est.draws > 1 ? std::max(0.0, (sum_sq - n * est.mean * est.mean) / (n - 1.0)) : 0.0;
  est.std_error = std::sqrt(var / n);
  est.per_masked_token = est.masked_tokens > 0 ? sum / static_cast<double>(est.masked_tokens) : 0.0;
  return est;
}

namespace {

// w[k] = integral_0^1 alpha(t)^k (1 - alpha(t))^(L - k) dt.
std::vector<double> pattern_weights(std::size_t L, const NoiseSchedule& schedule) {
  std::vector<double> w(L + 1, 0.0);
  if (schedule.kind == ScheduleKind::linear) {
    // Beta(k + 1, L - k + 1) = k! (L - k)! / (L + 1)!
    for (std::size_t k = 0; k <= L; ++k) {
      w[k] = std::exp(std::lgamma(k + 1.0) + std::lgamma(static_cast<double>(L - k) + 1.0) -
                      std::lgamma(static_cast<double>(L) + 2.0));
    }
    return w;
  }
  constexpr std::size_t kPanels = 20000;  // composite Simpson
  const double h = 1.0 / kPanels;
  for (std::size_t j = 0; j <= kPanels; ++j) {
    const double a = schedule.alpha(static_cast<double>(j) * h);
    const double coef = (j == 0 || j == kPanels) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
    for (std::size_t k = 0; k <= L; ++k) {
      w[k] += coef * std::pow(a, static_cast<double>(k)) * std::pow(1.0 - a, static_cast<double>(L - k));
    }
  }
  for (double& x : w) x *= h / 3.0;
  return w;
}

}  // namespace

double exact_elbo(DenoisingModel& model, std::span<const std::vector<Token>> corpus, const NoiseSchedule& schedule) {
  if (corpus.empty()) throw PreconditionError("ELBO corpus must be nonempty");
  const VocabSpec vocab(model.vocab_size());
  double total = 0.0;
  for (const auto& clean : corpus) {
    const std::size_t L = clean.size();
    if (L > 16) throw PreconditionError("exact ELBO enumerates 2^L mask patterns; L must be <= 16");
    const std::vector<double> w = pattern_weights(L, schedule);
    const MaskedSequence x0(vocab, clean);
    double expected = 0.0;
    for (std::uint32_t pattern = 1; pattern < (1u << L); ++pattern) {
      MaskedSequence xt = x0;
      for (std::size_t i = 0; i < L; ++i) {
        if (pattern & (1u << i)) xt.mask(i);
      }
      const PositionDistributions dists = model.predict(xt);
      double loss = 0.0;
      for (std::size_t i = 0; i < L; ++i) {
        if (pattern & (1u << i)) loss -= std::log(std::max(dists[i][static_cast<std::size_t>(clean[i])], kKlFloor));
      }
      expected += w[static_cast<std::size_t>(std::popcount(pattern))] * loss;
    }
    total += expected;
  }
  return total / static_cast<double>(corpus.size());
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::dual:
      return "dual";
    case Method::drafter_only:
      return "drafter_only";
    case Method::verifier_only:
      return "verifier_only";
  }
  return "dual";
}

std::string_view to_string(RunStatus s) { return s == RunStatus::ok ? "ok" : "livelock"; }

std::string to_string(const UnmaskPolicy& p) {
  std::ostringstream os;
  switch (p.kind) {
    case PolicyKind::top_k:
      os << "top_k(" << p.k << ")";
      break;
    case PolicyKind::confidence_threshold:
      os << "confidence_threshold(" << p.threshold << ")";
      break;
    case PolicyKind::random:
      os << "random(" << p.k << ")";
      break;
  }
  if (p.commit == CommitMode::sample) os << "+sample";
  return os.str();
}

void SweepGrid::validate() const {
  if (K.empty() || algorithms.empty() || tau_kl.empty() || tau_conf.empty() || budget.empty() || policies.empty()) {
    throw ConfigError("sweep grid has an empty axis");
  }
  for (const auto& p : policies) p.validate();
  for (std::size_t k : K) {
    if (k < 1) throw ConfigError("grid K values must be >= 1");
  }
  if (stall_window < 1) throw ConfigError("stall_window must be >= 1");
  VerificationConfig probe;
  for (double t : tau_kl) {
    probe.tau_kl = t;
    probe.validate();
  }
  for (double t : tau_conf) {
    probe.tau_conf = t;
    probe.validate();
  }
}

namespace {

void finish_cell(SweepCell& cell) {
  std::string canon = "{\"method\":\"" + std::string(to_string(cell.method)) + "\",\"pipeline\":";
  if (cell.method == Method::dual) {
    canon += canonical_json(cell.pipeline);
  } else {
    canon += "{\"policy\":\"" + to_string(cell.pipeline.policy) + "\"}";
  }
  canon += "}";
  cell.config_hash = fnv1a64(canon);
  cell.config_id = hex64(cell.config_hash);
}

std::string dual_label(const PipelineConfig& p) {
  std::ostringstream os;
  const auto& v = p.verification;
  os << "dual[" << to_string(v.algorithm) << ",K=" << p.drafter_steps;
  switch (v.algorithm) {
    case VerifyAlgorithm::kl_threshold:
      os << ",tau_kl=" << v.tau_kl;
      break;
    case VerifyAlgorithm::kl_proportional:
      os << ",m=" << (v.budget == 0 ? std::string("auto") : std::to_string(v.budget));
      break;
    case VerifyAlgorithm::conf_threshold:
      os << ",tau_conf=" << v.tau_conf;
      break;
    default:
      break;
  }
  os << "," << to_string(p.policy) << "]";
  return os.str();
}

}  // namespace

std::vector<SweepCell> SweepGrid::expand() const {
  validate();
  std::vector<SweepCell> cells;
  auto push = [&](Method m, PipelineConfig p, std::string label) {
    SweepCell c;
    c.index = cells.size();
    c.method = m;
    c.pipeline = std::move(p);
    c.label = std::move(label);
    finish_cell(c);
    cells.push_back(std::move(c));
  };

  for (const auto& policy : policies) {
    for (VerifyAlgorithm alg : algorithms) {
      for (std::size_t k : K) {
        PipelineConfig base;
        base.drafter_steps = k;
        base.policy = policy;
        base.stall_window = stall_window;
        base.max_cycles = max_cycles;
        base.verification.algorithm = alg;
        base.verification.drafter_dists = drafter_dists;
        base.verification.scope = scope;
        auto emit = [&](PipelineConfig p) { push(Method::dual, p, dual_label(p)); };
        switch (alg) {
          case VerifyAlgorithm::kl_threshold:
            for (double t : tau_kl) {
              PipelineConfig p = base;
              p.verification.tau_kl = t;
              emit(p);
            }
            break;
          case VerifyAlgorithm::kl_proportional:
            for (std::size_t m : budget) {
              PipelineConfig p = base;
              p.verification.budget = m;
              emit(p);
            }
            break;
          case VerifyAlgorithm::conf_threshold:
            for (double t : tau_conf) {
              PipelineConfig p = base;
              p.verification.tau_conf = t;
              emit(p);
            }
            break;
          case VerifyAlgorithm::trust:
          case VerifyAlgorithm::conf_probabilistic:
            emit(base);
            break;
        }
      }
    }
  }
  for (const auto& policy : policies) {
    PipelineConfig p;
    p.policy = policy;
    push(Method::drafter_only, p, "drafter_only[" + to_string(policy) + "]");
    push(Method::verifier_only, p, "verifier_only[" + to_string(policy) + "]");
  }
  return cells;
}

namespace {

RunRecord run_cell(const Task& task, const SweepCell& cell, const SweepModels& models, const SweepOptions& opts) {
  RunRecord r;
  r.config_id = cell.config_id;
  r.config_index = cell.index;
  r.label = cell.label;
  r.method = cell.method;
  r.policy = to_string(cell.pipeline.policy);
  if (cell.method == Method::dual) {
    const auto& v = cell.pipeline.verification;
    r.algorithm = v.algorithm;
    r.K = cell.pipeline.drafter_steps;
    r.tau_kl = v.tau_kl;
    r.tau_conf = v.tau_conf;
    r.budget = v.budget;
  }
  r.task_id = static_cast<std::int64_t>(task.id);
  r.seed = mix_seed(opts.seed, task.id, cell.config_hash);
  r.lambda = opts.lambda;
  r.run_fingerprint = opts.run_fingerprint;

  const auto t0 = std::chrono::steady_clock::now();
  GenStats stats;
  std::optional<MaskedSequence> result;
  ModelPtr verifier = models.verifier();
  try {
    switch (cell.method) {
      case Method::dual: {
        ModelPtr drafter = models.drafter();
        PipelineConfig cfg = cell.pipeline;
        cfg.seed = r.seed;
        Generation g = dual_diffusion_generate(*drafter, *verifier, task.prompt, task.length, cfg);
        stats = std::move(g.stats);
        result = std::move(g.sequence);
        break;
      }
      case Method::drafter_only: {
        ModelPtr drafter = models.drafter();
        Generation g = drafter_only_generate(*drafter, task.prompt, task.length, cell.pipeline.policy, r.seed);
        stats = std::move(g.stats);
        result = std::move(g.sequence);
        break;
      }
      case Method::verifier_only: {
        Generation g = verifier_only_generate(*verifier, task.prompt, task.length, cell.pipeline.policy, r.seed);
        stats = std::move(g.stats);
        result = std::move(g.sequence);
        break;
      }
    }
  } catch (const LivelockError& e) {
    stats = e.stats();
    r.status = RunStatus::livelock;
  }
  if (result) {
    const QualityMetrics q = score(task, *result, *models.oracle, *verifier);
    r.exact_match = q.exact_match;
    r.gt_loglik = q.gt_loglik;
    r.verifier_nll = q.verifier_nll;
  } else {
    r.exact_match = 0.0;
    r.gt_loglik = kImpossibleLoglik;
    r.verifier_nll = std::numeric_limits<double>::quiet_NaN();
  }
  r.drafter_nfe = static_cast<double>(stats.drafter_forward_passes);
  r.verifier_nfe = static_cast<double>(stats.verifier_forward_passes);
  r.weighted_cost = r.drafter_nfe + opts.lambda * r.verifier_nfe;
  r.cycles = static_cast<double>(stats.cycles);
  r.total_remasked = static_cast<double>(stats.total_remasked);
  r.forced_trust_cycles = static_cast<double>(stats.forced_trust_cycles);
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace

std::vector<RunRecord> sweep(std::span<const Task> tasks, const SweepModels& models, const SweepGrid& grid,
                             const SweepOptions& opts) {
  if (tasks.empty()) throw ConfigError("sweep needs at least one task");
  if (!models.drafter || !models.verifier || models.oracle == nullptr) {
    throw ConfigError("sweep needs drafter and verifier factories and a ground-truth oracle");
  }
  const std::vector<SweepCell> cells = grid.expand();
  const std::size_t total = cells.size() * tasks.size();
  std::vector<RunRecord> out(total);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t job = next.fetch_add(1); job < total; job = next.fetch_add(1)) {
      try {
        out[job] = run_cell(tasks[job % tasks.size()], cells[job / tasks.size()], models, opts);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(total);
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(opts.jobs, total));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_threads);
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<RunRecord> aggregate(std::span<const RunRecord> records) {
  struct Acc {
    RunRecord row;
    double em = 0, ll = 0, nll = 0, dn = 0, vn = 0, wc = 0, cyc = 0, rem = 0, forced = 0, wall = 0;
    std::size_t n = 0, ll_n = 0, nll_n = 0;
  };
  std::map<std::size_t, Acc> by_cell;
  for (const auto& r : records) {
    auto [it, fresh] = by_cell.try_emplace(r.config_index);
    Acc& a = it->second;
    if (fresh) {
      a.row = r;
      a.row.task_id = -1;
      a.row.seed = 0;
      a.row.status = RunStatus::ok;
    }
    ++a.n;
    a.em += r.exact_match;
    if (r.status == RunStatus::livelock) {
      ++a.row.livelocks;
    } else {
      if (std::isfinite(r.gt_loglik)) {
        a.ll += r.gt_loglik;
        ++a.ll_n;
      } else {
        ++a.row.impossible_loglik;
      }
      if (std::isfinite(r.verifier_nll)) {
        a.nll += r.verifier_nll;
        ++a.nll_n;
      }
    }
    a.dn += r.drafter_nfe;
    a.vn += r.verifier_nfe;
    a.wc += r.weighted_cost;
    a.cyc += r.cycles;
    a.rem += r.total_remasked;
    a.forced += r.forced_trust_cycles;
    a.wall += r.wall_time_s;
  }
  std::vector<RunRecord> out;
  out.reserve(by_cell.size());
  for (auto& [idx, a] : by_cell) {
    const double n = static_cast<double>(a.n);
    RunRecord row = a.row;
    row.tasks = a.n;
    row.exact_match = a.em / n;
    row.gt_loglik = a.ll_n > 0 ? a.ll / static_cast<double>(a.ll_n) : kImpossibleLoglik;
    row.verifier_nll = a.nll_n > 0 ? a.nll / static_cast<double>(a.nll_n) : std::numeric_limits<double>::quiet_NaN();
    row.drafter_nfe = a.dn / n;
    row.verifier_nfe = a.vn / n;
    row.weighted_cost = a.wc / n;
    row.cycles = a.cyc / n;
    row.total_remasked = a.rem / n;
    row.forced_trust_cycles = a.forced / n;
    row.wall_time_s = a.wall;
    out.push_back(std::move(row));
  }
  return out;
}

double cost_of(const RunRecord& r, CostKey key) {
  switch (key) {
    case CostKey::weighted_cost:
      return r.weighted_cost;
    case CostKey::drafter_nfe:
      return r.drafter_nfe;
    case CostKey::verifier_nfe:
      return r.verifier_nfe;
  }
  return r.weighted_cost;
}

double quality_of(const RunRecord& r, QualityKey key) {
  switch (key) {
    case QualityKey::exact_match:
      return r.exact_match;
    case QualityKey::gt_loglik:
      return r.gt_loglik;
    case QualityKey::neg_verifier_nll:
      return -r.verifier_nll;
  }
  return r.exact_match;
}

std::vector<RunRecord> pareto_frontier(std::span<const RunRecord> records, CostKey cost, QualityKey quality) {
  std::vector<RunRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const double ci = cost_of(records[i], cost);
    const double qi = quality_of(records[i], quality);
    bool dominated = false;
    for (std::size_t j = 0; j < records.size() && !dominated; ++j) {
      if (j == i) continue;
      const double cj = cost_of(records[j], cost);
      const double qj = quality_of(records[j], quality);
      dominated = cj <= ci && qj >= qi && (cj < ci || qj > qi);
    }
    if (!dominated) out.push_back(records[i]);
  }
  std::stable_sort(out.begin(), out.end(), [&](const RunRecord& a, const RunRecord& b) {
    return cost_of(a, cost) < cost_of(b, cost);
  });
  return out;
}

}  // namespace dualdiff
