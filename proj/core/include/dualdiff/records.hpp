// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Structured exports. Both formats are byte-deterministic for a given input.
//
// CSV (schema version 1), one row per RunRecord, columns in this order:
//
//   config_id, config_index, label, method, algorithm, K, policy, tau_kl,
//   tau_conf, budget, task_id, seed, status, exact_match, gt_loglik,
//   verifier_nll, drafter_nfe, verifier_nfe, lambda, weighted_cost, cycles,
//   total_remasked, forced_trust_cycles, tasks, livelocks, impossible_loglik,
//   run_fingerprint
//
// Reals are printed with %.17g. Non-finite values print as "-inf", "inf" or
// "nan". Wall time is excluded unless explicitly requested.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "dualdiff/bench.hpp"
#include "dualdiff/pipeline.hpp"

namespace dualdiff {

inline constexpr int kRecordSchemaVersion = 1;

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Canonical, order-stable text for a pipeline configuration (seed excluded).
std::string canonical_json(const PipelineConfig& cfg);

std::string csv_header();
void write_csv(std::ostream& os, std::span<const RunRecord> records, bool include_wall_time = false);

// One JSON object per line with the CSV fields plus "schema".
void write_jsonl(std::ostream& os, std::span<const RunRecord> records, bool include_wall_time = false);

// GenStats, per-cycle trace and provenance of one generation as a single JSON
// object on one line.
std::string generation_json(const Generation& gen, std::string_view run_fingerprint);

}  // namespace dualdiff
