// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "brute_force.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "dualdiff/bench.hpp"
#include "dualdiff/errors.hpp"
#include "dualdiff/pipeline.hpp"
#include "dualdiff/records.hpp"
#include "json.hpp"

using namespace dualdiff;
namespace fs = std::filesystem;

namespace {

struct Result {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dualdiff_acceptance_" + std::to_string(::getpid())) / name;
  fs::create_directories(p);
  return p;
}

const fs::path kSource = DUALDIFF_SOURCE_DIR;

// 1. Oracle posteriors against brute-force enumeration.
Result oracle_exactness() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t vocab = 2; vocab <= 4; ++vocab) {
    for (int variant = 0; variant < 4; ++variant) {
      const testing::Chain chain = testing::random_chain(vocab, rng, variant % 2 == 1);
      MarkovOracle oracle(chain.initial, chain.transition);
      for (std::size_t L = 1; L <= 6; ++L) {
        for (std::size_t pattern = 0; pattern < (std::size_t{1} << L); ++pattern) {
          for (int draw = 0; draw < 3; ++draw) {
            std::vector<Token> tokens(L);
            if (draw == 0) {
              tokens = oracle.sample(rng, L);
            } else {
              for (auto& t : tokens) t = static_cast<Token>(rng.below(vocab));
            }
            MaskedSequence seq(VocabSpec(vocab), tokens);
            for (std::size_t i = 0; i < L; ++i) {
              if ((pattern >> i) & 1U) seq.mask(i);
            }
            const auto got = oracle.predict(seq);
            const auto want = testing::brute_posteriors(
                seq, vocab, [&](const std::vector<Token>& x) { return testing::chain_prob(chain, x); });
            for (std::size_t i = 0; i < L; ++i) {
              for (std::size_t v = 0; v < vocab; ++v) worst = std::max(worst, std::abs(got[i][v] - want[i][v]));
            }
            ++checked;
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 60.0, std::to_string(checked) + " sequences, max |diff| " + fmt("%.2e", worst) +
                                            ", " + fmt("%.1f", secs) + " s"};
}

// 2. KL divergence against long-double summation.
Result kl_correctness() {
  Rng rng(2002);
  double worst = 0.0;
  bool nonneg = true;
  bool self_zero = true;
  for (int n = 0; n < 1000; ++n) {
    const std::size_t V = 2 + rng.below(30);
    std::vector<double> a(V);
    std::vector<double> b(V);
    for (std::size_t i = 0; i < V; ++i) {
      a[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
      b[i] = rng.uniform() < 0.1 ? 0.0 : rng.uniform();
    }
    a[rng.below(V)] += 0.5;
    b[rng.below(V)] += 0.5;
    const Distribution p = Distribution::from_weights(a);
    const Distribution q = Distribution::from_weights(b);
    long double ref = 0.0L;
    for (std::size_t i = 0; i < V; ++i) {
      if (p[i] == 0.0) continue;
      const long double qi = std::max<long double>(q[i], kKlFloor);
      ref += static_cast<long double>(p[i]) * (std::log(static_cast<long double>(p[i])) - std::log(qi));
    }
    const double got = kl_divergence(p, q);
    worst = std::max(worst, static_cast<double>(std::abs(static_cast<long double>(got) - ref)));
    nonneg = nonneg && got >= 0.0;
    self_zero = self_zero && kl_divergence(p, p) == 0.0;
  }
  return {worst <= 1e-12 && nonneg && self_zero, "1000 pairs, max |diff| " + fmt("%.2e", worst) +
                                                     (self_zero ? ", KL(p,p)=0" : ", KL(p,p)!=0") +
                                                     (nonneg ? ", KL>=0" : ", negative KL seen")};
}

// 3. Remask weights and kl_proportional sampling frequencies.
Result remask_weights() {
  const auto w = normalize_remask_weights({{0, 1.0}, {1, 3.0}});
  const bool exact = w.size() == 2 && w.at(0) == 0.25 && w.at(1) == 0.75;

  const VocabSpec vocab(2);
  const MaskedSequence seq(vocab, {0, 0, 0, 0});
  const PositionDistributions pd{Distribution({0.9, 0.1}), Distribution({0.7, 0.3}), Distribution({0.99, 0.01}),
                                 Distribution({0.6, 0.4})};
  const PositionDistributions pv(4, Distribution::uniform(2));
  const std::vector<std::size_t> scope{0, 1, 2, 3};
  std::map<std::size_t, double> div;
  for (std::size_t i = 0; i < 4; ++i) div[i] = kl_divergence(pd[i], pv[i]);
  const auto expected = normalize_remask_weights(div);

  VerificationConfig cfg;
  cfg.algorithm = VerifyAlgorithm::kl_proportional;
  cfg.budget = 1;
  std::vector<int> hits(4, 0);
  const int trials = 10000;
  for (int s = 0; s < trials; ++s) {
    Rng rng(mix_seed(3003, static_cast<std::uint64_t>(s), 0));
    for (std::size_t i : verify_kl(seq, pd, pv, scope, cfg, rng).remasked) ++hits[i];
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(hits[i] / double(trials) - expected.at(i)));
  return {exact && worst <= 0.02,
          std::string(exact ? "{1,3} -> {0.25,0.75} exact" : "{1,3} weights wrong") + ", max freq error " +
              fmt("%.4f", worst)};
}

// 4. Probabilistic confidence remasking.
Result probabilistic_remask() {
  const VocabSpec vocab(5);
  const MaskedSequence seq(vocab, {1});
  const PositionDistributions pv{Distribution::uniform(5)};
  const std::vector<std::size_t> scope{0};
  VerificationConfig cfg;
  cfg.algorithm = VerifyAlgorithm::conf_probabilistic;
  int remasked = 0;
  const int trials = 10000;
  for (int s = 0; s < trials; ++s) {
    Rng rng(mix_seed(4004, static_cast<std::uint64_t>(s), 0));
    remasked += static_cast<int>(verify_confidence(seq, pv, scope, cfg, rng).remasked.size());
  }
  const double rate = remasked / double(trials);
  return {std::abs(rate - 0.8) <= 0.02, "confidence 0.2 -> remask rate " + fmt("%.4f", rate)};
}

// 5. Forward masking rate.
Result forward_rate() {
  const MaskedSequence x0(VocabSpec(4), std::vector<Token>(1000, 1));
  Rng rng(5005);
  double total = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    total += forward_mask(x0, 0.3, {}, rng).masked_count() / 1000.0;
  }
  const double mean = total / 100.0;
  return {std::abs(mean - 0.3) <= 0.02, "mean mask fraction " + fmt("%.4f", mean)};
}

// 6. Trust verification reduces to the drafter alone.
Result trust_equivalence() {
  int runs = 0;
  int mismatches = 0;
  bool verifier_idle = true;
  auto compare = [&](DenoisingModel& d1, DenoisingModel& d2, DenoisingModel& verifier, std::span<const Token> prompt,
                     std::size_t length, std::size_t K, const UnmaskPolicy& policy, std::uint64_t seed) {
    PipelineConfig cfg;
    cfg.drafter_steps = K;
    cfg.policy = policy;
    cfg.verification.algorithm = VerifyAlgorithm::trust;
    cfg.seed = seed;
    const auto a = dual_diffusion_generate(d1, verifier, prompt, length, cfg);
    const auto b = drafter_only_generate(d2, prompt, length, policy, seed);
    ++runs;
    if (a.sequence != b.sequence) ++mismatches;
    verifier_idle = verifier_idle && a.stats.verifier_forward_passes == 0 && verifier.call_count() == 0;
  };
  Rng rng(6006);
  for (int n = 0; n < 40; ++n) {
    const std::size_t vocab = 3 + rng.below(6);
    const std::size_t length = 8 + rng.below(24);
    const std::size_t prompt_len = rng.below(length / 2);
    auto base = std::make_shared<MarkovOracle>(MarkovOracle::random(vocab, rng.next_u64(), 2.0 + 10.0 * rng.uniform()));
    std::vector<Token> prompt = base->sample(rng, prompt_len == 0 ? 1 : prompt_len);
    prompt.resize(prompt_len);
    const std::size_t K = 1 + rng.below(6);
    const CommitMode commit = rng.bernoulli(0.5) ? CommitMode::argmax : CommitMode::sample;
    const UnmaskPolicy policy = rng.bernoulli(0.5) ? UnmaskPolicy::random(1 + rng.below(3), commit)
                                                   : UnmaskPolicy::top_k(1 + rng.below(3), commit);
    const std::uint64_t seed = rng.next_u64();
    MarkovOracle verifier = *base;

    // Stale drafter whose refresh period equals the cycle length.
    const std::vector<Degradation> chain{StaleContext{K}, Temperature{1.3}};
    auto d1 = degrade(std::make_shared<MarkovOracle>(*base), chain);
    auto d2 = degrade(std::make_shared<MarkovOracle>(*base), chain);
    compare(*d1, *d2, verifier, prompt, length, K, policy, seed);

    // Exact oracle as drafter, any K.
    MarkovOracle o1 = *base;
    MarkovOracle o2 = *base;
    compare(o1, o2, verifier, prompt, length, K, policy, seed);
  }
  return {mismatches == 0 && verifier_idle, std::to_string(runs) + " paired runs, " + std::to_string(mismatches) +
                                                " mismatches" + (verifier_idle ? ", verifier idle" : ", verifier ran")};
}

// 7. A drafter identical to the verifier is never remasked.
Result perfect_drafter() {
  std::uint64_t remasked = 0;
  Rng rng(7007);
  for (int run = 0; run < 50; ++run) {
    const std::size_t vocab = 2 + rng.below(7);
    MarkovOracle verifier = MarkovOracle::random(vocab, rng.next_u64(), 1.0 + 10.0 * rng.uniform());
    MarkovOracle drafter = verifier;
    PipelineConfig cfg;
    cfg.drafter_steps = 1 + rng.below(6);
    cfg.policy = rng.bernoulli(0.5) ? UnmaskPolicy::random(1 + rng.below(3), CommitMode::sample)
                                    : UnmaskPolicy::confidence_threshold(0.6);
    cfg.verification.algorithm = VerifyAlgorithm::kl_threshold;
    cfg.verification.tau_kl = 1e-6;
    cfg.verification.drafter_dists = DraftDistSource::fresh;
    cfg.verification.scope = rng.bernoulli(0.5) ? VerifyScope::current_cycle : VerifyScope::all_drafted;
    cfg.seed = static_cast<std::uint64_t>(run);
    remasked += dual_diffusion_generate(drafter, verifier, {}, 6 + rng.below(20), cfg).stats.total_remasked;
  }
  return {remasked == 0, "50 runs, total_remasked " + std::to_string(remasked)};
}

// 8. Every configuration terminates within max_cycles.
Result termination_fuzz() {
  const auto t0 = Clock::now();
  Rng rng(8008);
  int completed = 0;
  int livelocked = 0;
  int violations = 0;
  for (int n = 0; n < 100; ++n) {
    const std::size_t vocab = 2 + rng.below(7);
    const std::size_t length = 4 + rng.below(29);
    const std::size_t prompt_len = rng.below(length / 2 + 1);
    MarkovOracle verifier = MarkovOracle::random(vocab, rng.next_u64(), 0.5 + 16.0 * rng.uniform());
    ModelPtr drafter;
    const bool adversarial = n % 3 == 0;
    if (adversarial) {
      drafter = std::make_shared<UniformModel>(vocab);
    } else {
      std::vector<Degradation> chain{StaleContext{rng.below(6)}};
      if (rng.bernoulli(0.5)) chain.push_back(Temperature{0.3 + 3.0 * rng.uniform()});
      if (rng.bernoulli(0.5)) chain.push_back(UniformMix{rng.uniform()});
      drafter = degrade(std::make_shared<MarkovOracle>(verifier), chain);
    }
    std::vector<Token> prompt(prompt_len);
    for (auto& t : prompt) t = static_cast<Token>(rng.below(vocab));

    PipelineConfig cfg;
    cfg.drafter_steps = 1 + rng.below(8);
    switch (rng.below(3)) {
      case 0:
        cfg.policy = UnmaskPolicy::top_k(1 + rng.below(4));
        break;
      case 1:
        cfg.policy = UnmaskPolicy::random(1 + rng.below(4), CommitMode::sample);
        break;
      default:
        cfg.policy = UnmaskPolicy::confidence_threshold(0.2 + 0.75 * rng.uniform());
    }
    auto& v = cfg.verification;
    v.algorithm = static_cast<VerifyAlgorithm>(rng.below(5));
    v.tau_kl = adversarial ? 1e-4 : 0.01 + 2.0 * rng.uniform();
    v.tau_conf = adversarial ? 0.999 : 0.05 + 0.9 * rng.uniform();
    v.budget = rng.below(4);
    v.drafter_dists = rng.bernoulli(0.3) ? DraftDistSource::fresh : DraftDistSource::stored;
    v.scope = rng.bernoulli(0.3) ? VerifyScope::all_drafted : VerifyScope::current_cycle;
    cfg.stall_window = 1 + rng.below(4);
    cfg.seed = rng.next_u64();

    const std::size_t cap = 4 * length;
    try {
      const auto g = dual_diffusion_generate(*drafter, verifier, prompt, length, cfg);
      if (!g.sequence.fully_unmasked() || g.stats.cycles > cap) ++violations;
      ++completed;
    } catch (const LivelockError& e) {
      if (e.stats().cycles != cap) ++violations;
      ++livelocked;
    }
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 120.0, std::to_string(completed) + " completed, " + std::to_string(livelocked) +
                                               " livelock errors, " + std::to_string(violations) + " violations, " +
                                               fmt("%.1f", secs) + " s"};
}

struct SweepFiles {
  int exit_code = -1;
  std::string csv;
  std::string summary;
  std::string jsonl;
  std::string diagnostics;
};

SweepFiles run_baseline_sweep(const fs::path& dir, std::size_t jobs) {
  cli::Overrides ov;
  ov.jobs = jobs;
  ov.output = (dir / "baseline_sweep").string();
  std::ostringstream out;
  std::ostringstream err;
  SweepFiles f;
  f.exit_code = cli::cmd_sweep((kSource / "configs" / "baseline.yaml").string(), ov, out, err);
  f.diagnostics = err.str();
  f.csv = slurp(dir / "baseline_sweep.csv");
  f.summary = slurp(dir / "baseline_sweep.summary.csv");
  f.jsonl = slurp(dir / "baseline_sweep.jsonl");
  return f;
}

// 9. Pareto ordering on the baseline suite, plus the golden regression file.
Result pareto_ordering() {
  const SweepFiles f = run_baseline_sweep(scratch_dir("c9"), 4);
  if (f.exit_code != 0) return {false, "sweep exited " + std::to_string(f.exit_code) + ": " + f.diagnostics};

  const cli::RunConfig cfg = cli::load_run_config((kSource / "configs" / "baseline.yaml").string());
  const std::string policy = to_string(cfg.pipeline.policy);

  const nlohmann::json* dual = nullptr;
  const nlohmann::json* drafter = nullptr;
  const nlohmann::json* verifier = nullptr;
  std::vector<nlohmann::json> rows;
  std::istringstream is(f.jsonl);
  for (std::string line; std::getline(is, line);) {
    auto j = nlohmann::json::parse(line);
    if (j.at("task_id") == -1 && j.at("policy") == policy) rows.push_back(std::move(j));
  }
  for (const auto& r : rows) {
    if (r.at("method") == "dual" && r.at("algorithm") == "kl_threshold" && r.at("K") == 5 &&
        std::abs(r.at("tau_kl").get<double>() - 0.3) < 1e-12) {
      dual = &r;
    }
    if (r.at("method") == "drafter_only") drafter = &r;
    if (r.at("method") == "verifier_only") verifier = &r;
  }
  if (!dual || !drafter || !verifier) return {false, "baseline sweep is missing a required cell"};

  const double em_d = drafter->at("exact_match").get<double>();
  const double em_x = dual->at("exact_match").get<double>();
  const double em_v = verifier->at("exact_match").get<double>();
  const double nfe_x = dual->at("verifier_nfe").get<double>();
  const double nfe_v = verifier->at("verifier_nfe").get<double>();
  const bool ordering = em_d < em_x && em_x <= em_v;
  const bool budget = nfe_x <= 0.25 * nfe_v;

  const fs::path golden_path = kSource / "tests" / "golden" / "baseline_sweep.csv";
  const bool have_golden = fs::exists(golden_path);
  const bool golden = have_golden && slurp(golden_path) == f.csv;

  std::string detail = "exact_match drafter " + fmt("%.2f", em_d) + " < dual " + fmt("%.2f", em_x) + " <= verifier " +
                       fmt("%.2f", em_v) + "; verifier_nfe " + fmt("%.2f", nfe_x) + " vs " + fmt("%.2f", nfe_v) +
                       " (ratio " + fmt("%.3f", nfe_x / nfe_v) + ")";
  detail += have_golden ? (golden ? "; golden CSV matches" : "; golden CSV differs") : "; golden CSV missing";
  return {ordering && budget && golden, detail};
}

// 10. Sweep output does not depend on the worker count.
Result sweep_determinism() {
  const SweepFiles a = run_baseline_sweep(scratch_dir("c10_j1"), 1);
  const SweepFiles b = run_baseline_sweep(scratch_dir("c10_j8"), 8);
  if (a.exit_code != 0 || b.exit_code != 0) return {false, "sweep failed: " + a.diagnostics + b.diagnostics};
  const bool csv = a.csv == b.csv && !a.csv.empty();
  const bool rest = a.summary == b.summary && a.jsonl == b.jsonl;
  return {csv && rest, std::string(csv ? "CSV byte-identical" : "CSV differs") + " (" + std::to_string(a.csv.size()) +
                           " bytes)" + (rest ? ", summary and JSONL identical" : ", summary or JSONL differ")};
}

// 11. ELBO of a uniform model and of the exact oracle.
Result elbo_sanity() {
  auto base = std::make_shared<MarkovOracle>(MarkovOracle::random(8, 110, 16.0));
  auto uniform = degrade(base, UniformMix{1.0});
  Rng rng(1111);
  std::vector<std::vector<Token>> corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back(base->sample(rng, 12));
  const auto u = elbo_eval(*uniform, corpus, {}, 50, 1);
  const double uniform_err = std::abs(u.per_masked_token - std::log(8.0));

  double worst_z = 0.0;
  int cases = 0;
  for (std::uint64_t s = 0; s < 6; ++s) {
    const std::size_t vocab = 2 + s % 3;
    const std::size_t L = 3 + s % 3;
    MarkovOracle oracle = MarkovOracle::random(vocab, 40 + s, 3.0);
    std::vector<std::vector<Token>> small;
    Rng crng(50 + s);
    for (int i = 0; i < 8; ++i) small.push_back(oracle.sample(crng, L));
    const NoiseSchedule schedule{s % 2 == 0 ? ScheduleKind::linear : ScheduleKind::cosine};
    const double exact = exact_elbo(oracle, small, schedule);
    const auto est = elbo_eval(oracle, small, schedule, 400, 60 + s);
    worst_z = std::max(worst_z, std::abs(est.mean - exact) / est.std_error);
    ++cases;
  }
  return {uniform_err <= 1e-9 && worst_z <= 3.0, "uniform per-token |loss - ln 8| " + fmt("%.1e", uniform_err) +
                                                     "; oracle estimate vs exact over " + std::to_string(cases) +
                                                     " corpora, max " + fmt("%.2f", worst_z) + " s.e."};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria{
      {"C1  oracle exactness", oracle_exactness},        {"C2  KL correctness", kl_correctness},
      {"C3  remask weights", remask_weights},            {"C4  probabilistic remask", probabilistic_remask},
      {"C5  forward-process rate", forward_rate},        {"C6  trust equivalence", trust_equivalence},
      {"C7  perfect drafter", perfect_drafter},          {"C8  termination fuzz", termination_fuzz},
      {"C9  pareto ordering", pareto_ordering},          {"C10 sweep determinism", sweep_determinism},
      {"C11 ELBO sanity", elbo_sanity},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Result r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    if (!r.pass) ++failures;
    std::cout << (r.pass ? "PASS " : "FAIL ") << name << "  " << r.detail << std::endl;
  }
  fs::remove_all(fs::temp_directory_path() / ("dualdiff_acceptance_" + std::to_string(::getpid())));
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
