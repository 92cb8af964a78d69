// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <initializer_list>
#include <limits>
#include <sstream>

#include "dualdiff/errors.hpp"
#include "dualdiff/records.hpp"
#include "json.hpp"

namespace dualdiff::cli {

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& msg) const {
    throw ConfigError(anchor(at.Mark()) + msg);
  }

  std::string anchor(const YAML::Mark& m) const {
    if (m.line < 0) return source_ + ": ";
    return source_ + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1) + ": ";
  }

  void require_map(const YAML::Node& n, const std::string& what) const {
    if (!n.IsMap()) fail(n, what + " must be a mapping");
  }

  void check_keys(const YAML::Node& map, std::initializer_list<std::string_view> allowed,
                  const std::string& where) const {
    require_map(map, where);
    for (const auto& kv : map) {
      const std::string key = kv.first.as<std::string>();
      bool ok = false;
      for (auto a : allowed) ok = ok || a == key;
      if (!ok) fail(kv.first, "unknown key '" + key + "' in " + where);
    }
  }

  std::string str(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a scalar");
    return n.Scalar();
  }

  double real(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be a number");
    try {
      return n.as<double>();
    } catch (const YAML::Exception&) {
      fail(n, what + " must be a number, got '" + n.Scalar() + "'");
    }
  }

  long long integer(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be an integer");
    try {
      return n.as<long long>();
    } catch (const YAML::Exception&) {
      fail(n, what + " must be an integer, got '" + n.Scalar() + "'");
    }
  }

  std::size_t count(const YAML::Node& n, const std::string& what, std::size_t min = 0) const {
    const long long v = integer(n, what);
    if (v < static_cast<long long>(min)) fail(n, what + " must be >= " + std::to_string(min));
    return static_cast<std::size_t>(v);
  }

  std::uint64_t u64(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + " must be an unsigned integer");
    try {
      return n.as<std::uint64_t>();
    } catch (const YAML::Exception&) {
      fail(n, what + " must be an unsigned integer, got '" + n.Scalar() + "'");
    }
  }

  bool boolean(const YAML::Node& n, const std::string& what) const {
    try {
      return n.as<bool>();
    } catch (const YAML::Exception&) {
      fail(n, what + " must be true or false");
    }
  }

  const YAML::Node& seq(const YAML::Node& n, const std::string& what) const {
    if (!n.IsSequence()) fail(n, what + " must be a list");
    return n;
  }

  std::vector<double> reals(const YAML::Node& n, const std::string& what) const {
    std::vector<double> out;
    for (const auto& e : seq(n, what)) out.push_back(real(e, what + " entry"));
    return out;
  }

  std::vector<Token> tokens(const YAML::Node& n, const std::string& what) const {
    std::vector<Token> out;
    for (const auto& e : seq(n, what)) {
      const long long v = integer(e, what + " entry");
      if (v < 0 || v > std::numeric_limits<Token>::max()) fail(e, what + " entries must be token ids >= 0");
      out.push_back(static_cast<Token>(v));
    }
    return out;
  }

  // Runs `f` and re-anchors any ConfigError it raises at node `at`.
  template <class F>
  auto anchored(const YAML::Node& at, F&& f) const {
    try {
      return f();
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      if (msg.rfind(source_, 0) == 0) throw;
      fail(at, msg);
    }
  }

 private:
  std::string source_;
};

template <class E>
E pick(const Reader& r, const YAML::Node& n, const std::string& what,
       std::initializer_list<std::pair<std::string_view, E>> options) {
  const std::string s = r.str(n, what);
  std::string names;
  for (const auto& [name, value] : options) {
    if (name == s) return value;
    names += (names.empty() ? "" : ", ") + std::string(name);
  }
  r.fail(n, what + " must be one of: " + names + " (got '" + s + "')");
}

OracleSection parse_oracle(const Reader& r, const YAML::Node& n) {
  r.check_keys(n, {"kind", "vocab_size", "initial", "transition", "seed", "sharpness", "support"}, "oracle");
  OracleSection o;
  if (!n["kind"]) r.fail(n, "oracle.kind is required");
  o.kind = pick<OracleKind>(r, n["kind"], "oracle.kind",
                            {{"markov", OracleKind::markov},
                             {"markov_random", OracleKind::markov_random},
                             {"enumerated", OracleKind::enumerated}});
  auto forbid = [&](std::initializer_list<const char*> keys, const char* kind) {
    for (const char* k : keys) {
      if (n[k]) r.fail(n[k], std::string("oracle.") + k + " is not used by kind " + kind);
    }
  };
  switch (o.kind) {
    case OracleKind::markov: {
      forbid({"seed", "sharpness", "support", "vocab_size"}, "markov");
      if (!n["initial"] || !n["transition"]) r.fail(n, "markov oracle needs initial and transition");
      o.initial = r.reals(n["initial"], "oracle.initial");
      for (const auto& row : r.seq(n["transition"], "oracle.transition")) {
        o.transition.push_back(r.reals(row, "oracle.transition row"));
      }
      o.vocab_size = o.initial.size();
      r.anchored(n, [&] { MarkovOracle check(o.initial, o.transition); return 0; });
      break;
    }
    case OracleKind::markov_random:
      forbid({"initial", "transition", "support"}, "markov_random");
      if (!n["vocab_size"]) r.fail(n, "oracle.vocab_size is required");
      o.vocab_size = r.count(n["vocab_size"], "oracle.vocab_size", 2);
      if (n["seed"]) o.seed = r.u64(n["seed"], "oracle.seed");
      if (n["sharpness"]) o.sharpness = r.real(n["sharpness"], "oracle.sharpness");
      if (!(o.sharpness >= 0.0)) r.fail(n["sharpness"], "oracle.sharpness must be >= 0");
      break;
    case OracleKind::enumerated: {
      forbid({"initial", "transition", "seed", "sharpness"}, "enumerated");
      if (!n["vocab_size"] || !n["support"]) r.fail(n, "enumerated oracle needs vocab_size and support");
      o.vocab_size = r.count(n["vocab_size"], "oracle.vocab_size", 2);
      for (const auto& e : r.seq(n["support"], "oracle.support")) {
        r.check_keys(e, {"tokens", "weight"}, "oracle.support entry");
        if (!e["tokens"] || !e["weight"]) r.fail(e, "support entries need tokens and weight");
        o.support.push_back({r.tokens(e["tokens"], "oracle.support.tokens"), r.real(e["weight"], "oracle.support.weight")});
      }
      r.anchored(n, [&] { EnumeratedOracle check(o.vocab_size, o.support); return 0; });
      break;
    }
  }
  return o;
}

std::vector<Degradation> parse_drafter(const Reader& r, const YAML::Node& n) {
  r.check_keys(n, {"degradations"}, "drafter");
  std::vector<Degradation> out;
  if (!n["degradations"]) return out;
  for (const auto& d : r.seq(n["degradations"], "drafter.degradations")) {
    r.require_map(d, "degradation");
    if (!d["kind"]) r.fail(d, "degradation needs a kind");
    const std::string kind = r.str(d["kind"], "degradation kind");
    Degradation deg;
    if (kind == "stale_context") {
      r.check_keys(d, {"kind", "refresh_period"}, "stale_context");
      StaleContext s;
      if (d["refresh_period"]) s.refresh_period = r.count(d["refresh_period"], "refresh_period");
      deg = s;
    } else if (kind == "temperature") {
      r.check_keys(d, {"kind", "tau"}, "temperature");
      if (!d["tau"]) r.fail(d, "temperature needs tau");
      deg = Temperature{r.real(d["tau"], "tau")};
    } else if (kind == "uniform_mix") {
      r.check_keys(d, {"kind", "epsilon"}, "uniform_mix");
      if (!d["epsilon"]) r.fail(d, "uniform_mix needs epsilon");
      deg = UniformMix{r.real(d["epsilon"], "epsilon")};
    } else {
      r.fail(d["kind"], "unknown degradation kind '" + kind + "' (stale_context, temperature, uniform_mix)");
    }
    r.anchored(d, [&] { validate(deg); return 0; });
    out.push_back(deg);
  }
  return out;
}

UnmaskPolicy parse_policy(const Reader& r, const YAML::Node& n, const std::string& where) {
  r.check_keys(n, {"kind", "k", "threshold", "commit"}, where);
  if (!n["kind"]) r.fail(n, where + ".kind is required");
  UnmaskPolicy p;
  p.kind = pick<PolicyKind>(r, n["kind"], where + ".kind",
                            {{"top_k", PolicyKind::top_k},
                             {"confidence_threshold", PolicyKind::confidence_threshold},
                             {"random", PolicyKind::random}});
  if (n["k"]) p.k = r.count(n["k"], where + ".k", 1);
  if (n["threshold"]) p.threshold = r.real(n["threshold"], where + ".threshold");
  if (n["commit"]) {
    p.commit = pick<CommitMode>(r, n["commit"], where + ".commit",
                                {{"argmax", CommitMode::argmax}, {"sample", CommitMode::sample}});
  }
  r.anchored(n, [&] { p.validate(); return 0; });
  return p;
}

VerifyAlgorithm parse_algorithm(const Reader& r, const YAML::Node& n, const std::string& what) {
  return pick<VerifyAlgorithm>(r, n, what,
                               {{"trust", VerifyAlgorithm::trust},
                                {"kl_threshold", VerifyAlgorithm::kl_threshold},
                                {"kl_proportional", VerifyAlgorithm::kl_proportional},
                                {"conf_threshold", VerifyAlgorithm::conf_threshold},
                                {"conf_probabilistic", VerifyAlgorithm::conf_probabilistic}});
}

VerificationConfig parse_verification(const Reader& r, const YAML::Node& n) {
  r.check_keys(n, {"algorithm", "tau_kl", "tau_conf", "budget", "drafter_dists", "scope"}, "pipeline.verification");
  VerificationConfig v;
  if (n["algorithm"]) v.algorithm = parse_algorithm(r, n["algorithm"], "verification.algorithm");
  if (n["tau_kl"]) v.tau_kl = r.real(n["tau_kl"], "verification.tau_kl");
  if (n["tau_conf"]) v.tau_conf = r.real(n["tau_conf"], "verification.tau_conf");
  if (n["budget"]) v.budget = r.count(n["budget"], "verification.budget");
  if (n["drafter_dists"]) {
    v.drafter_dists = pick<DraftDistSource>(r, n["drafter_dists"], "verification.drafter_dists",
                                            {{"stored", DraftDistSource::stored}, {"fresh", DraftDistSource::fresh}});
  }
  if (n["scope"]) {
    v.scope = pick<VerifyScope>(r, n["scope"], "verification.scope",
                                {{"current_cycle", VerifyScope::current_cycle},
                                 {"all_drafted", VerifyScope::all_drafted}});
  }
  r.anchored(n, [&] { v.validate(); return 0; });
  return v;
}

PipelineConfig parse_pipeline(const Reader& r, const YAML::Node& n) {
  r.check_keys(n, {"K", "policy", "max_cycles", "stall_window", "verification"}, "pipeline");
  PipelineConfig p;
  if (n["K"]) p.drafter_steps = r.count(n["K"], "pipeline.K", 1);
  if (n["policy"]) p.policy = parse_policy(r, n["policy"], "pipeline.policy");
  if (n["max_cycles"]) p.max_cycles = r.count(n["max_cycles"], "pipeline.max_cycles");
  if (n["stall_window"]) p.stall_window = r.count(n["stall_window"], "pipeline.stall_window", 1);
  if (n["verification"]) p.verification = parse_verification(r, n["verification"]);
  return p;
}

SweepGrid parse_grid(const Reader& r, const YAML::Node& n, const PipelineConfig& pipeline) {
  r.check_keys(n, {"K", "algorithm", "tau_kl", "tau_conf", "budget", "policy"}, "bench.grid");
  if (n.size() == 0) r.fail(n, "bench.grid is empty");
  SweepGrid g;
  g.K = {pipeline.drafter_steps};
  g.algorithms = {pipeline.verification.algorithm};
  g.tau_kl = {pipeline.verification.tau_kl};
  g.tau_conf = {pipeline.verification.tau_conf};
  g.budget = {pipeline.verification.budget};
  g.policies = {pipeline.policy};
  g.drafter_dists = pipeline.verification.drafter_dists;
  g.scope = pipeline.verification.scope;
  g.stall_window = pipeline.stall_window;
  g.max_cycles = pipeline.max_cycles;

  auto axis = [&](const char* key, auto parse_one) {
    using T = decltype(parse_one(n));
    std::vector<T> out;
    for (const auto& e : r.seq(n[key], std::string("bench.grid.") + key)) out.push_back(parse_one(e));
    if (out.empty()) r.fail(n[key], std::string("bench.grid.") + key + " is empty");
    return out;
  };
  if (n["K"]) g.K = axis("K", [&](const YAML::Node& e) { return r.count(e, "grid K", 1); });
  if (n["algorithm"]) {
    g.algorithms = axis("algorithm", [&](const YAML::Node& e) { return parse_algorithm(r, e, "grid algorithm"); });
  }
  if (n["tau_kl"]) g.tau_kl = axis("tau_kl", [&](const YAML::Node& e) { return r.real(e, "grid tau_kl"); });
  if (n["tau_conf"]) g.tau_conf = axis("tau_conf", [&](const YAML::Node& e) { return r.real(e, "grid tau_conf"); });
  if (n["budget"]) g.budget = axis("budget", [&](const YAML::Node& e) { return r.count(e, "grid budget"); });
  if (n["policy"]) g.policies = axis("policy", [&](const YAML::Node& e) { return parse_policy(r, e, "grid policy"); });
  r.anchored(n, [&] { g.validate(); return 0; });
  return g;
}

BenchSection parse_bench(const Reader& r, const YAML::Node& n, const PipelineConfig& pipeline) {
  r.check_keys(n, {"tasks", "prompt_length", "length", "lambda", "grid"}, "bench");
  BenchSection b;
  if (n["tasks"]) b.tasks = r.count(n["tasks"], "bench.tasks", 1);
  if (n["prompt_length"]) b.prompt_length = r.count(n["prompt_length"], "bench.prompt_length");
  if (n["length"]) b.length = r.count(n["length"], "bench.length", 1);
  if (n["lambda"]) b.lambda = r.real(n["lambda"], "bench.lambda");
  if (!(b.lambda >= 0.0)) r.fail(n["lambda"], "bench.lambda must be >= 0");
  if (b.prompt_length >= b.length) r.fail(n, "bench.prompt_length must be smaller than bench.length");
  if (n["grid"]) b.grid = parse_grid(r, n["grid"], pipeline);
  return b;
}

GenerateSection parse_generate(const Reader& r, const YAML::Node& n) {
  r.check_keys(n, {"length", "prompt"}, "generate");
  GenerateSection g;
  if (n["length"]) g.length = r.count(n["length"], "generate.length", 1);
  if (n["prompt"]) g.prompt = r.tokens(n["prompt"], "generate.prompt");
  if (g.prompt.size() >= g.length) r.fail(n, "generate.prompt must be shorter than generate.length");
  return g;
}

EvalSection parse_eval(const Reader& r, const YAML::Node& n) {
  r.check_keys(n, {"model", "corpus", "n_samples", "schedule"}, "eval");
  EvalSection e;
  if (n["model"]) {
    e.model = pick<ModelRole>(r, n["model"], "eval.model", {{"verifier", ModelRole::verifier}, {"drafter", ModelRole::drafter}});
  }
  if (n["n_samples"]) e.n_samples = r.count(n["n_samples"], "eval.n_samples", 1);
  if (n["schedule"]) {
    e.schedule.kind = pick<ScheduleKind>(r, n["schedule"], "eval.schedule",
                                         {{"linear", ScheduleKind::linear}, {"cosine", ScheduleKind::cosine}});
  }
  if (const YAML::Node c = n["corpus"]) {
    r.check_keys(c, {"source", "count", "length", "sequences", "path"}, "eval.corpus");
    if (!c["source"]) r.fail(c, "eval.corpus.source is required");
    e.corpus = pick<CorpusSource>(r, c["source"], "eval.corpus.source",
                                  {{"samples", CorpusSource::samples},
                                   {"inline", CorpusSource::inline_list},
                                   {"file", CorpusSource::file}});
    if (c["count"]) e.count = r.count(c["count"], "eval.corpus.count", 1);
    if (c["length"]) e.length = r.count(c["length"], "eval.corpus.length", 1);
    if (c["path"]) e.path = r.str(c["path"], "eval.corpus.path");
    if (c["sequences"]) {
      for (const auto& s : r.seq(c["sequences"], "eval.corpus.sequences")) {
        e.sequences.push_back(r.tokens(s, "eval.corpus.sequences entry"));
      }
    }
    if (*e.corpus == CorpusSource::inline_list && e.sequences.empty()) r.fail(c, "inline corpus needs sequences");
    if (*e.corpus == CorpusSource::file && e.path.empty()) r.fail(c, "file corpus needs a path");
  }
  return e;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& source_name) {
  const Reader r(source_name);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(r.anchor(e.mark) + "YAML syntax error: " + e.msg);
  }
  if (!root.IsMap()) throw ConfigError(source_name + ": configuration must be a mapping");
  r.check_keys(root, {"seed", "oracle", "drafter", "pipeline", "generate", "bench", "eval", "output"}, "configuration");

  RunConfig cfg;
  cfg.source = source_name;
  if (root["seed"]) cfg.seed = r.u64(root["seed"], "seed");
  if (!root["oracle"]) throw ConfigError(source_name + ": the oracle section is required");
  cfg.oracle = parse_oracle(r, root["oracle"]);
  if (root["drafter"]) cfg.degradations = parse_drafter(r, root["drafter"]);
  if (root["pipeline"]) cfg.pipeline = parse_pipeline(r, root["pipeline"]);
  if (root["generate"]) cfg.generate = parse_generate(r, root["generate"]);
  if (root["bench"]) cfg.bench = parse_bench(r, root["bench"], cfg.pipeline);
  if (root["eval"]) cfg.eval = parse_eval(r, root["eval"]);
  if (root["output"]) cfg.output = r.str(root["output"], "output");

  if (cfg.generate) {
    for (Token t : cfg.generate->prompt) {
      if (static_cast<std::size_t>(t) >= cfg.oracle.vocab_size) {
        r.fail(root["generate"]["prompt"], "generate.prompt has a token outside the vocabulary");
      }
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path);
}

namespace {

nlohmann::json degradation_json(const Degradation& d) {
  if (const auto* s = std::get_if<StaleContext>(&d)) return {{"kind", "stale_context"}, {"refresh_period", s->refresh_period}};
  if (const auto* t = std::get_if<Temperature>(&d)) return {{"kind", "temperature"}, {"tau", t->tau}};
  const auto& m = std::get<UniformMix>(d);
  return {{"kind", "uniform_mix"}, {"epsilon", m.epsilon}};
}

}  // namespace

std::string canonical_json(const RunConfig& cfg) {
  using nlohmann::json;
  json oracle{{"vocab_size", cfg.oracle.vocab_size}};
  switch (cfg.oracle.kind) {
    case OracleKind::markov:
      oracle["kind"] = "markov";
      oracle["initial"] = cfg.oracle.initial;
      oracle["transition"] = cfg.oracle.transition;
      break;
    case OracleKind::markov_random:
      oracle["kind"] = "markov_random";
      oracle["seed"] = cfg.oracle.seed;
      oracle["sharpness"] = cfg.oracle.sharpness;
      break;
    case OracleKind::enumerated: {
      oracle["kind"] = "enumerated";
      json support = json::array();
      for (const auto& e : cfg.oracle.support) support.push_back({{"tokens", e.tokens}, {"weight", e.weight}});
      oracle["support"] = std::move(support);
      break;
    }
  }
  json drafter = json::array();
  for (const auto& d : cfg.degradations) drafter.push_back(degradation_json(d));

  json j{{"seed", cfg.seed},
         {"oracle", std::move(oracle)},
         {"drafter", std::move(drafter)},
         {"pipeline", json::parse(dualdiff::canonical_json(cfg.pipeline))}};
  if (cfg.generate) j["generate"] = {{"length", cfg.generate->length}, {"prompt", cfg.generate->prompt}};
  if (cfg.bench) {
    json b{{"tasks", cfg.bench->tasks},
           {"prompt_length", cfg.bench->prompt_length},
           {"length", cfg.bench->length},
           {"lambda", cfg.bench->lambda}};
    if (cfg.bench->grid) {
      json cells = json::array();
      for (const auto& c : cfg.bench->grid->expand()) cells.push_back(c.config_id);
      b["grid_cells"] = std::move(cells);
    }
    j["bench"] = std::move(b);
  }
  if (cfg.eval) {
    json e{{"model", cfg.eval->model == ModelRole::verifier ? "verifier" : "drafter"},
           {"n_samples", cfg.eval->n_samples},
           {"schedule", cfg.eval->schedule.kind == ScheduleKind::linear ? "linear" : "cosine"}};
    if (cfg.eval->corpus) {
      e["corpus"] = {{"source", static_cast<int>(*cfg.eval->corpus)},
                     {"count", cfg.eval->count},
                     {"length", cfg.eval->length},
                     {"sequences", cfg.eval->sequences},
                     {"path", cfg.eval->path}};
    }
    j["eval"] = std::move(e);
  }
  if (!cfg.external_model.empty()) {
    j["external"] = {{"command", cfg.external_model},
                     {"role", cfg.external_role == ModelRole::verifier ? "verifier" : "drafter"}};
  }
  return j.dump();
}

std::string fingerprint(const RunConfig& cfg) { return hex64(fnv1a64(canonical_json(cfg))); }

std::shared_ptr<SequenceOracle> build_oracle(const OracleSection& o) {
  switch (o.kind) {
    case OracleKind::markov:
      return std::make_shared<MarkovOracle>(o.initial, o.transition);
    case OracleKind::markov_random:
      return std::make_shared<MarkovOracle>(MarkovOracle::random(o.vocab_size, o.seed, o.sharpness));
    case OracleKind::enumerated:
      return std::make_shared<EnumeratedOracle>(o.vocab_size, o.support);
  }
  throw ConfigError("unknown oracle kind");
}

}  // namespace dualdiff::cli
