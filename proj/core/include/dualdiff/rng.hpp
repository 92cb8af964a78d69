// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random stream used everywhere a run consumes randomness.
//
// std::mt19937_64 is fully specified by the standard, but the std::*_distribution
// adaptors are not, so all conversions to doubles, bounded integers and
// categorical draws are done here. Identical seeds give identical streams on
// every conforming platform.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace dualdiff {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  // Index drawn with probability proportional to weights[i]. Zero-weight
  // entries are never returned. The total weight must be positive.
  std::size_t categorical(std::span<const double> weights);

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

// Derives the per-run stream seed from (seed, task_id, config_id):
//   s0 = splitmix64(seed)
//   s1 = splitmix64(s0 ^ task_id)
//   s2 = splitmix64(s1 ^ rotl(config_id, 32))
// Used by the sweep harness so that every cell owns an independent stream.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t task_id, std::uint64_t config_id);

}  // namespace dualdiff
