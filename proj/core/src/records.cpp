// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualdiff/records.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "json.hpp"

namespace dualdiff {

using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

namespace {

json policy_json(const UnmaskPolicy& p) {
  json j;
  switch (p.kind) {
    case PolicyKind::top_k:
      j["kind"] = "top_k";
      j["k"] = p.k;
      break;
    case PolicyKind::confidence_threshold:
      j["kind"] = "confidence_threshold";
      j["threshold"] = p.threshold;
      break;
    case PolicyKind::random:
      j["kind"] = "random";
      j["k"] = p.k;
      break;
  }
  j["commit"] = p.commit == CommitMode::argmax ? "argmax" : "sample";
  return j;
}

json pipeline_json(const PipelineConfig& cfg) {
  const auto& v = cfg.verification;
  return json{
      {"K", cfg.drafter_steps},
      {"policy", policy_json(cfg.policy)},
      {"max_cycles", cfg.max_cycles},
      {"stall_window", cfg.stall_window},
      {"verification",
       {{"algorithm", to_string(v.algorithm)},
        {"tau_kl", v.tau_kl},
        {"tau_conf", v.tau_conf},
        {"budget", v.budget},
        {"drafter_dists", to_string(v.drafter_dists)},
        {"scope", to_string(v.scope)}}},
  };
}

std::string real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json real_json(double v) {
  if (std::isfinite(v)) return v;
  return real(v);
}

// Labels contain commas; quote them.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string canonical_json(const PipelineConfig& cfg) { return pipeline_json(cfg).dump(); }

std::string csv_header() {
  return "config_id,config_index,label,method,algorithm,K,policy,tau_kl,tau_conf,budget,task_id,seed,status,"
         "exact_match,gt_loglik,verifier_nll,drafter_nfe,verifier_nfe,lambda,weighted_cost,cycles,total_remasked,"
         "forced_trust_cycles,tasks,livelocks,impossible_loglik,run_fingerprint";
}

void write_csv(std::ostream& os, std::span<const RunRecord> records, bool include_wall_time) {
  os << csv_header() << (include_wall_time ? ",wall_time_s" : "") << '\n';
  for (const auto& r : records) {
    const bool dual = r.method == Method::dual;
    os << r.config_id << ',' << r.config_index << ',' << csv_field(r.label) << ',' << to_string(r.method) << ','
       << (dual ? std::string(to_string(r.algorithm)) : "") << ',' << (dual ? std::to_string(r.K) : "") << ','
       << csv_field(r.policy) << ',' << (dual ? real(r.tau_kl) : "") << ',' << (dual ? real(r.tau_conf) : "")
       << ',' << (dual ? std::to_string(r.budget) : "") << ',' << r.task_id << ',' << r.seed << ','
       << to_string(r.status) << ',' << real(r.exact_match) << ',' << real(r.gt_loglik) << ','
       << real(r.verifier_nll) << ',' << real(r.drafter_nfe) << ',' << real(r.verifier_nfe) << ','
       << real(r.lambda) << ',' << real(r.weighted_cost) << ',' << real(r.cycles) << ','
       << real(r.total_remasked) << ',' << real(r.forced_trust_cycles) << ',' << r.tasks << ',' << r.livelocks
       << ',' << r.impossible_loglik << ',' << r.run_fingerprint;
    if (include_wall_time) os << ',' << real(r.wall_time_s);
    os << '\n';
  }
}

void write_jsonl(std::ostream& os, std::span<const RunRecord> records, bool include_wall_time) {
  for (const auto& r : records) {
    json j{
        {"schema", kRecordSchemaVersion},
        {"config_id", r.config_id},
        {"config_index", r.config_index},
        {"label", r.label},
        {"method", to_string(r.method)},
        {"policy", r.policy},
        {"task_id", r.task_id},
        {"seed", r.seed},
        {"status", to_string(r.status)},
        {"exact_match", real_json(r.exact_match)},
        {"gt_loglik", real_json(r.gt_loglik)},
        {"verifier_nll", real_json(r.verifier_nll)},
        {"drafter_nfe", real_json(r.drafter_nfe)},
        {"verifier_nfe", real_json(r.verifier_nfe)},
        {"lambda", real_json(r.lambda)},
        {"weighted_cost", real_json(r.weighted_cost)},
        {"cycles", real_json(r.cycles)},
        {"total_remasked", real_json(r.total_remasked)},
        {"forced_trust_cycles", real_json(r.forced_trust_cycles)},
        {"tasks", r.tasks},
        {"livelocks", r.livelocks},
        {"impossible_loglik", r.impossible_loglik},
        {"run_fingerprint", r.run_fingerprint},
    };
    if (r.method == Method::dual) {
      j["algorithm"] = to_string(r.algorithm);
      j["K"] = r.K;
      j["tau_kl"] = real_json(r.tau_kl);
      j["tau_conf"] = real_json(r.tau_conf);
      j["budget"] = r.budget;
    }
    if (include_wall_time) j["wall_time_s"] = r.wall_time_s;
    os << j.dump() << '\n';
  }
}

std::string generation_json(const Generation& gen, std::string_view run_fingerprint) {
  const GenStats& s = gen.stats;
  json trace = json::array();
  for (const auto& t : s.trace) {
    trace.push_back({{"cycle", t.cycle},
                     {"masked_before", t.masked_before},
                     {"masked_after_draft", t.masked_after_draft},
                     {"masked_after", t.masked_after},
                     {"drafter_steps", t.drafter_steps},
                     {"remasked", t.remasked},
                     {"verified", t.verified},
                     {"forced_trust", t.forced_trust}});
  }
  json prov = json::array();
  for (std::size_t i = 0; i < gen.provenance.size(); ++i) {
    const auto& e = gen.provenance[i];
    json pj{{"position", i}, {"role", to_string(e.role)}, {"cycle", e.cycle}, {"remask_count", e.remask_count}};
    if (e.decode_dist) {
      pj["decode_dist"] = std::vector<double>(e.decode_dist->probs().begin(), e.decode_dist->probs().end());
    }
    prov.push_back(std::move(pj));
  }
  json j{
      {"schema", kRecordSchemaVersion},
      {"run_fingerprint", std::string(run_fingerprint)},
      {"sequence", std::vector<Token>(gen.sequence.tokens().begin(), gen.sequence.tokens().end())},
      {"stats",
       {{"drafter_forward_passes", s.drafter_forward_passes},
        {"drafter_steps", s.drafter_steps},
        {"verifier_forward_passes", s.verifier_forward_passes},
        {"cycles", s.cycles},
        {"total_remasked", s.total_remasked},
        {"forced_trust_cycles", s.forced_trust_cycles}}},
      {"trace", std::move(trace)},
      {"provenance", std::move(prov)},
  };
  return j.dump();
}

}  // namespace dualdiff
