// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "dualdiff/bench.hpp"
#include "dualdiff/errors.hpp"
#include "dualdiff/extmodel.hpp"
#include "dualdiff/records.hpp"
#include "json.hpp"

namespace dualdiff::cli {

namespace fs = std::filesystem;

namespace {

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const LivelockError& e) {
    err << "livelock: " << e.what() << '\n';
    return kExitLivelock;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ProtocolError& e) {
    err << "external model protocol error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ModelUnavailableError& e) {
    err << "external model unavailable: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

RunConfig load_with_overrides(const std::string& path, const Overrides& ov) {
  RunConfig cfg = load_run_config(path);
  if (ov.seed) cfg.seed = *ov.seed;
  if (ov.output) cfg.output = *ov.output;
  if (ov.external_model) {
    cfg.external_model = *ov.external_model;
    cfg.external_role = ov.external_role;
  }
  cfg.pipeline.seed = cfg.seed;
  return cfg;
}

std::string resolve_output(const std::string& path) {
  if (path.empty()) return path;
  fs::path p(path);
  const char* dir = std::getenv(kOutputDirEnv);
  if (dir != nullptr && *dir != '\0' && p.is_relative()) p = fs::path(dir) / p;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p.string();
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path + "'");
  return f;
}

void finish_output(std::ofstream& f, const std::string& path) {
  f.flush();
  if (!f) throw IoError("failed while writing '" + path + "'");
}

struct ModelSet {
  std::shared_ptr<SequenceOracle> oracle;
  ModelFactory verifier;
  ModelFactory drafter;
};

ModelSet make_models(const RunConfig& cfg, const Overrides& ov) {
  ModelSet m;
  m.oracle = build_oracle(cfg.oracle);
  const OracleSection section = cfg.oracle;
  auto oracle_factory = [section]() -> ModelPtr { return build_oracle(section); };
  ModelFactory external;
  if (!cfg.external_model.empty()) {
    ExternalModelOptions opts;
    opts.command = cfg.external_model;
    opts.timeout = ov.external_timeout;
    opts.expected_vocab = cfg.oracle.vocab_size;
    external = [opts]() -> ModelPtr { return std::make_shared<ExternalModel>(opts); };
  }
  const bool ext_verifier = external && cfg.external_role == ModelRole::verifier;
  const bool ext_drafter = external && cfg.external_role == ModelRole::drafter;
  m.verifier = ext_verifier ? external : ModelFactory(oracle_factory);
  ModelFactory drafter_base = ext_drafter ? external : ModelFactory(oracle_factory);
  m.drafter = [drafter_base, chain = cfg.degradations]() { return degrade(drafter_base(), chain); };
  return m;
}

std::string join(std::span<const Token> tokens, std::size_t mask_id) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) s += ' ';
    s += static_cast<std::size_t>(tokens[i]) == mask_id ? std::string("_") : std::to_string(tokens[i]);
  }
  return s;
}

void print_stats(std::ostream& out, const GenStats& s) {
  out << "drafter_forward_passes   " << s.drafter_forward_passes << '\n'
      << "drafter_steps            " << s.drafter_steps << '\n'
      << "verifier_forward_passes  " << s.verifier_forward_passes << '\n'
      << "cycles                   " << s.cycles << '\n'
      << "total_remasked           " << s.total_remasked << '\n'
      << "forced_trust_cycles      " << s.forced_trust_cycles << '\n';
  out << "trace\n  cycle  masked_before  after_draft  after_verify  steps  remasked  verified  forced\n";
  for (const auto& t : s.trace) {
    out << "  " << std::setw(5) << t.cycle << "  " << std::setw(13) << t.masked_before << "  " << std::setw(11)
        << t.masked_after_draft << "  " << std::setw(12) << t.masked_after << "  " << std::setw(5)
        << t.drafter_steps << "  " << std::setw(8) << t.remasked << "  " << std::setw(8)
        << (t.verified ? "yes" : "no") << "  " << std::setw(6) << (t.forced_trust ? "yes" : "no") << '\n';
  }
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v < 0 ? "-inf" : "inf");
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

}  // namespace

int cmd_generate(const std::string& config_path, const Overrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_with_overrides(config_path, ov);
    const GenerateSection gen = cfg.generate.value_or(GenerateSection{});
    if (gen.prompt.size() >= gen.length) throw ConfigError("generate.prompt must be shorter than generate.length");
    const std::string fp = fingerprint(cfg);
    const std::string path = resolve_output(cfg.output);

    ModelSet models = make_models(cfg, ov);
    const ModelPtr drafter = models.drafter();
    const ModelPtr verifier = models.verifier();
    const std::size_t mask_id = cfg.oracle.vocab_size;

    out << "fingerprint  " << fp << '\n' << "seed         " << cfg.seed << '\n';
    out << "drafter      " << drafter->describe() << '\n' << "verifier     " << verifier->describe() << '\n';
    Generation g = [&] {
      try {
        return dual_diffusion_generate(*drafter, *verifier, gen.prompt, gen.length, cfg.pipeline);
      } catch (const LivelockError& e) {
        print_stats(out, e.stats());
        throw;
      }
    }();
    out << "prompt       " << join(gen.prompt, mask_id) << '\n';
    out << "sequence     " << join(g.sequence.tokens(), mask_id) << '\n';
    print_stats(out, g.stats);

    if (!path.empty()) {
      auto f = open_output(path);
      f << generation_json(g, fp) << '\n';
      finish_output(f, path);
      out << "wrote        " << path << '\n';
    }
    return kExitOk;
  });
}

int cmd_sweep(const std::string& config_path, const Overrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_with_overrides(config_path, ov);
    if (!cfg.bench) throw ConfigError(cfg.source + ": sweep needs a bench section");
    if (!cfg.bench->grid) throw ConfigError(cfg.source + ": sweep needs bench.grid");
    const BenchSection& bench = *cfg.bench;
    const std::string fp = fingerprint(cfg);
    const std::string base = resolve_output(cfg.output.empty() ? std::string("sweep") : cfg.output);

    ModelSet models = make_models(cfg, ov);
    const std::vector<Task> tasks = make_tasks(*models.oracle, bench.tasks, bench.prompt_length, bench.length, cfg.seed);

    SweepOptions opts;
    opts.lambda = bench.lambda;
    opts.seed = cfg.seed;
    opts.jobs = ov.jobs.value_or(std::max(1u, std::thread::hardware_concurrency()));
    opts.run_fingerprint = fp;
    SweepModels sm{models.drafter, models.verifier, models.oracle.get()};

    const std::vector<RunRecord> records = sweep(tasks, sm, *bench.grid, opts);
    const std::vector<RunRecord> summary = aggregate(records);

    const std::string csv_path = base + ".csv";
    const std::string summary_path = base + ".summary.csv";
    const std::string jsonl_path = base + ".jsonl";
    {
      auto f = open_output(csv_path);
      write_csv(f, records, ov.timing);
      finish_output(f, csv_path);
    }
    {
      auto f = open_output(summary_path);
      write_csv(f, summary, ov.timing);
      finish_output(f, summary_path);
    }
    {
      auto f = open_output(jsonl_path);
      write_jsonl(f, records, ov.timing);
      write_jsonl(f, summary, ov.timing);
      finish_output(f, jsonl_path);
    }

    out << "fingerprint " << fp << "  tasks " << tasks.size() << "  cells " << summary.size() << "  lambda "
        << bench.lambda << '\n';
    out << std::left << std::setw(44) << "config" << std::right << std::setw(8) << "exact" << std::setw(10)
        << "loglik" << std::setw(10) << "d_nfe" << std::setw(10) << "v_nfe" << std::setw(10) << "cost"
        << std::setw(10) << "livelock" << '\n';
    for (const auto& r : summary) {
      out << std::left << std::setw(44) << r.label << std::right << std::setw(8) << fixed(r.exact_match, 3)
          << std::setw(10) << fixed(r.gt_loglik, 2) << std::setw(10) << fixed(r.drafter_nfe, 2) << std::setw(10)
          << fixed(r.verifier_nfe, 2) << std::setw(10) << fixed(r.weighted_cost, 2) << std::setw(10) << r.livelocks
          << '\n';
    }
    out << "pareto frontier (weighted_cost vs exact_match)\n";
    for (const auto& r : pareto_frontier(summary, CostKey::weighted_cost, QualityKey::exact_match)) {
      out << "  " << std::left << std::setw(44) << r.label << std::right << " cost " << fixed(r.weighted_cost, 2)
          << "  exact " << fixed(r.exact_match, 3) << '\n';
    }
    out << "wrote " << csv_path << ", " << summary_path << ", " << jsonl_path << '\n';
    return kExitOk;
  });
}

namespace {

std::vector<std::vector<Token>> load_corpus(const RunConfig& cfg, const EvalSection& ev, const SequenceOracle& oracle) {
  std::vector<std::vector<Token>> corpus;
  switch (*ev.corpus) {
    case CorpusSource::samples: {
      const std::size_t len = oracle.fixed_length().value_or(ev.length);
      Rng rng(mix_seed(cfg.seed, 0, fnv1a64("eval-corpus")));
      for (std::size_t i = 0; i < ev.count; ++i) corpus.push_back(oracle.sample(rng, len));
      break;
    }
    case CorpusSource::inline_list:
      corpus = ev.sequences;
      break;
    case CorpusSource::file: {
      const std::string path = ev.path;
      std::ifstream in(path);
      if (!in) throw IoError("cannot read corpus file '" + path + "'");
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        std::vector<Token> seq;
        long long v = 0;
        while (ss >> v) seq.push_back(static_cast<Token>(v));
        if (!ss.eof()) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected whitespace-separated token ids");
        corpus.push_back(std::move(seq));
      }
      break;
    }
  }
  if (corpus.empty()) throw ConfigError("eval corpus is empty");
  for (const auto& seq : corpus) {
    if (seq.empty()) throw ConfigError("eval corpus contains an empty sequence");
    for (Token t : seq) {
      if (t < 0 || static_cast<std::size_t>(t) >= cfg.oracle.vocab_size) {
        throw ConfigError("eval corpus token " + std::to_string(t) + " is outside the vocabulary");
      }
    }
    if (oracle.fixed_length() && seq.size() != *oracle.fixed_length()) {
      throw ConfigError("eval corpus sequences must have the oracle's length " + std::to_string(*oracle.fixed_length()));
    }
  }
  return corpus;
}

// Largest absolute difference between model.predict and the oracle posterior
// obtained by enumerating every sequence of that length through log_joint.
// Covers every mask pattern of the given sequences.
double max_posterior_deviation(DenoisingModel& model, const SequenceOracle& oracle,
                               std::span<const std::vector<Token>> seqs) {
  const std::size_t V = oracle.vocab_size();
  const VocabSpec vocab(V);
  double worst = 0.0;
  for (const auto& clean : seqs) {
    const std::size_t L = clean.size();
    std::size_t total = 1;
    for (std::size_t i = 0; i < L; ++i) total *= V;
    std::vector<std::vector<Token>> all(total, std::vector<Token>(L));
    std::vector<double> weight(total);
    for (std::size_t n = 0; n < total; ++n) {
      std::size_t r = n;
      for (std::size_t i = 0; i < L; ++i) {
        all[n][i] = static_cast<Token>(r % V);
        r /= V;
      }
      weight[n] = std::exp(oracle.log_joint(all[n]));
    }
    for (std::uint32_t pattern = 0; pattern < (1u << L); ++pattern) {
      MaskedSequence xt(vocab, clean);
      for (std::size_t i = 0; i < L; ++i) {
        if (pattern & (1u << i)) xt.mask(i);
      }
      const PositionDistributions got = model.predict(xt);
      for (std::size_t q = 0; q < L; ++q) {
        std::vector<double> marg(V, 0.0);
        double z = 0.0;
        for (std::size_t n = 0; n < total; ++n) {
          bool consistent = true;
          for (std::size_t i = 0; i < L && consistent; ++i) {
            if (i != q && !xt.is_masked(i)) consistent = all[n][i] == clean[i];
          }
          if (!consistent) continue;
          marg[static_cast<std::size_t>(all[n][q])] += weight[n];
          z += weight[n];
        }
        for (std::size_t v = 0; v < V; ++v) {
          const double expect = z > 0.0 ? marg[v] / z : 1.0 / static_cast<double>(V);
          worst = std::max(worst, std::abs(expect - got[q][v]));
        }
      }
    }
  }
  return worst;
}

}  // namespace

int cmd_eval_model(const std::string& config_path, const Overrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_with_overrides(config_path, ov);
    if (!cfg.eval) throw ConfigError(cfg.source + ": eval-model needs an eval section");
    const EvalSection& ev = *cfg.eval;
    if (!ev.corpus) throw ConfigError(cfg.source + ": eval.corpus is required");

    ModelSet models = make_models(cfg, ov);
    const std::vector<std::vector<Token>> corpus = load_corpus(cfg, ev, *models.oracle);
    const ModelPtr model = ev.model == ModelRole::verifier ? models.verifier() : models.drafter();

    const ElboEstimate est = elbo_eval(*model, corpus, ev.schedule, ev.n_samples, cfg.seed);
    out << "fingerprint        " << fingerprint(cfg) << '\n'
        << "model              " << model->describe() << '\n'
        << "corpus             " << corpus.size() << " sequences\n"
        << "draws              " << est.draws << '\n'
        << "masked tokens      " << est.masked_tokens << '\n'
        << std::setprecision(10) << "elbo loss          " << est.mean << " +/- " << est.std_error << " (1 s.e.)\n"
        << "per masked token   " << est.per_masked_token << '\n';

    const std::size_t max_len =
        std::max_element(corpus.begin(), corpus.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); })
            ->size();
    if (max_len <= 5) {
      const double exact = exact_elbo(*model, corpus, ev.schedule);
      const double z = est.std_error > 0.0 ? (est.mean - exact) / est.std_error : (est.mean == exact ? 0.0 : INFINITY);
      out << "exact elbo loss    " << exact << '\n'
          << "deviation          " << fixed(z, 2) << " s.e. (" << (std::abs(z) <= 3.0 ? "within" : "outside")
          << " 3 s.e.)\n";
    } else {
      out << "exact elbo loss    skipped (sequences longer than 5)\n";
    }

    double states = 1.0;
    for (std::size_t i = 0; i < max_len; ++i) states *= static_cast<double>(cfg.oracle.vocab_size);
    if (max_len <= 6 && states <= 1e5) {
      const std::size_t n = std::min<std::size_t>(corpus.size(), 5);
      const double dev = max_posterior_deviation(*model, *models.oracle, std::span(corpus).first(n));
      out << "oracle check       max |p_model - p_oracle| = " << dev << " over all mask patterns of " << n
          << " sequences (" << (dev <= 1e-9 ? "exact" : "differs from oracle") << ")\n";
    } else {
      out << "oracle check       skipped (sequence space too large to enumerate)\n";
    }
    return kExitOk;
  });
}

int cmd_tasks(const std::string& config_path, const Overrides& ov, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_with_overrides(config_path, ov);
    if (!cfg.bench) throw ConfigError(cfg.source + ": tasks needs a bench section");
    const BenchSection& bench = *cfg.bench;
    const auto oracle = build_oracle(cfg.oracle);
    const std::vector<Task> tasks = make_tasks(*oracle, bench.tasks, bench.prompt_length, bench.length, cfg.seed);
    const std::string fp = fingerprint(cfg);
    const std::string path = resolve_output(cfg.output);

    std::ofstream f;
    if (!path.empty()) f = open_output(path);
    for (const auto& t : tasks) {
      out << std::setw(4) << t.id << "  " << join(t.prompt, cfg.oracle.vocab_size) << "  |  "
          << join(t.reference, cfg.oracle.vocab_size) << '\n';
      if (f.is_open()) {
        nlohmann::json j{{"schema", kRecordSchemaVersion},
                         {"run_fingerprint", fp},
                         {"task_id", t.id},
                         {"prompt", t.prompt},
                         {"reference", t.reference},
                         {"length", t.length},
                         {"reference_loglik", [&] {
                            std::vector<Token> full = t.prompt;
                            full.insert(full.end(), t.reference.begin(), t.reference.end());
                            const double ll = oracle->log_joint(full);
                            return std::isfinite(ll) ? nlohmann::json(ll) : nlohmann::json("-inf");
                          }()}};
        f << j.dump() << '\n';
      }
    }
    if (f.is_open()) {
      finish_output(f, path);
      out << "wrote " << path << '\n';
    }
    return kExitOk;
  });
}

}  // namespace dualdiff::cli
