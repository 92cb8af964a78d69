// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Subcommand implementations. Each returns a process exit code and writes
// human-readable output to `out` and diagnostics to `err`; main() only parses
// flags.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "config.hpp"

namespace dualdiff::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,  // usage, parse and validation errors
  kExitLivelock = 2,
  kExitIo = 3,  // files, external model process, protocol violations
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> output;
  std::optional<std::string> external_model;
  ModelRole external_role = ModelRole::verifier;
  std::chrono::milliseconds external_timeout{10000};
  bool timing = false;  // adds wall-clock columns, which breaks byte-determinism
};

// Name of the environment variable that relocates relative output paths.
inline constexpr const char* kOutputDirEnv = "DUALDIFF_OUTPUT_DIR";

int cmd_generate(const std::string& config_path, const Overrides& ov, std::ostream& out, std::ostream& err);
int cmd_sweep(const std::string& config_path, const Overrides& ov, std::ostream& out, std::ostream& err);
int cmd_eval_model(const std::string& config_path, const Overrides& ov, std::ostream& out, std::ostream& err);
int cmd_tasks(const std::string& config_path, const Overrides& ov, std::ostream& out, std::ostream& err);

}  // namespace dualdiff::cli
