// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: a YAML file with one section per module. The schema is
// documented in docs/config.md. Every key is validated before any computation;
// unknown keys are rejected. Errors carry "file:line:column:" anchors.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dualdiff/bench.hpp"
#include "dualdiff/diffusion.hpp"
#include "dualdiff/models.hpp"
#include "dualdiff/pipeline.hpp"

namespace dualdiff::cli {

enum class OracleKind { markov, markov_random, enumerated };

struct OracleSection {
  OracleKind kind = OracleKind::markov_random;
  std::size_t vocab_size = 8;
  // markov
  std::vector<double> initial;
  std::vector<std::vector<double>> transition;
  // markov_random
  std::uint64_t seed = 0;
  double sharpness = 4.0;
  // enumerated
  std::vector<EnumeratedOracle::Entry> support;
};

struct GenerateSection {
  std::size_t length = 32;
  std::vector<Token> prompt;
};

struct BenchSection {
  std::size_t tasks = 100;
  std::size_t prompt_length = 8;
  std::size_t length = 32;
  double lambda = 5.0;
  std::optional<SweepGrid> grid;
};

enum class CorpusSource { samples, inline_list, file };
enum class ModelRole { verifier, drafter };

struct EvalSection {
  ModelRole model = ModelRole::verifier;
  std::optional<CorpusSource> corpus;
  std::size_t count = 20;   // samples
  std::size_t length = 5;   // samples
  std::vector<std::vector<Token>> sequences;  // inline
  std::string path;                           // file: one sequence per line, whitespace-separated ids
  std::size_t n_samples = 50;
  NoiseSchedule schedule{};
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 0;
  OracleSection oracle;
  std::vector<Degradation> degradations;
  PipelineConfig pipeline;
  std::optional<GenerateSection> generate;
  std::optional<BenchSection> bench;
  std::optional<EvalSection> eval;
  std::string output;

  // Set from the command line, not the file. Part of the fingerprint.
  std::string external_model;
  ModelRole external_role = ModelRole::verifier;

  std::string source;  // file name used in diagnostics
};

// Throws ConfigError with a line-anchored message.
RunConfig parse_run_config(const std::string& text, const std::string& source_name);

// Throws ConfigError on parse/validation problems and IoError when the file
// cannot be read.
RunConfig load_run_config(const std::string& path);

// Canonical JSON of the parsed configuration (sorted keys, no whitespace).
std::string canonical_json(const RunConfig& cfg);

// 16 hex digits: FNV-1a of canonical_json.
std::string fingerprint(const RunConfig& cfg);

std::shared_ptr<SequenceOracle> build_oracle(const OracleSection& section);

}  // namespace dualdiff::cli
