// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace dualdiff::cli;

  CLI::App app{"dualdiff: speculative draft/verify decoding for masked diffusion models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dualdiff 0.1.0");

  std::string config;
  Overrides ov;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  std::string output;
  std::string external;
  std::int64_t timeout_ms = 10000;

  const std::map<std::string, ModelRole> roles{{"verifier", ModelRole::verifier}, {"drafter", ModelRole::drafter}};

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config, "Run configuration (YAML)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the configuration seed");
    sub->add_option("-o,--output", output, "Override the output path");
    sub->add_option("--external-model", external, "Command line of an external model process");
    sub->add_option("--external-role", ov.external_role, "Role played by the external model")
        ->transform(CLI::CheckedTransformer(roles, CLI::ignore_case));
    sub->add_option("--external-timeout-ms", timeout_ms, "Per-request timeout for the external model")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* gen = app.add_subcommand("generate", "Generate one sequence with draft/verify decoding");
  add_common(gen);
  CLI::App* sw = app.add_subcommand("sweep", "Run the benchmark grid and write CSV/JSONL records");
  add_common(sw);
  sw->add_option("-j,--jobs", jobs, "Worker threads (default: hardware concurrency)")->check(CLI::PositiveNumber);
  sw->add_flag("--timing", ov.timing, "Add wall-clock columns (exports are then not byte-deterministic)");
  CLI::App* ev = app.add_subcommand("eval-model", "Estimate a model's ELBO on a corpus");
  add_common(ev);
  CLI::App* tk = app.add_subcommand("tasks", "Print (and optionally write) the benchmark task suite");
  add_common(tk);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  auto given = [](CLI::App* sub, const char* name) { return sub->count(name) > 0; };
  CLI::App* active = app.get_subcommands().front();
  if (given(active, "--seed")) ov.seed = seed;
  if (given(active, "--output")) ov.output = output;
  if (given(active, "--external-model")) ov.external_model = external;
  if (active == sw && given(active, "--jobs")) ov.jobs = jobs;
  ov.external_timeout = std::chrono::milliseconds(timeout_ms);

  if (active == gen) return cmd_generate(config, ov, std::cout, std::cerr);
  if (active == sw) return cmd_sweep(config, ov, std::cout, std::cerr);
  if (active == ev) return cmd_eval_model(config, ov, std::cout, std::cerr);
  return cmd_tasks(config, ov, std::cout, std::cerr);
}
