// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Client for the external-model protocol: any subprocess that speaks
// line-delimited JSON on stdin/stdout can act as a drafter or verifier.
// Framing is documented in docs/protocol.md.

#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <sys/types.h>

#include "dualdiff/core.hpp"
#include "dualdiff/models.hpp"

namespace dualdiff {

namespace wire {

inline constexpr double kRenormTolerance = 1e-6;

// Request lines, without the trailing newline.
std::string encode_hello(std::int64_t id);
std::string encode_predict(std::int64_t id, std::span<const Token> tokens);

// Parses a hello_ack and returns the declared vocabulary size.
std::size_t decode_hello_ack(std::string_view line, std::int64_t expected_id);

// Parses a dists response for a request of `length` positions. Rows summing to
// within kRenormTolerance of 1 are renormalized; anything else raises
// ProtocolError naming the position.
PositionDistributions decode_dists(std::string_view line, std::int64_t expected_id, std::size_t length,
                                   std::size_t vocab);

}  // namespace wire

struct ExternalModelOptions {
  std::string command;  // run through /bin/sh -c
  std::chrono::milliseconds timeout{10000};
  std::optional<std::size_t> expected_vocab;  // checked at handshake
};

// One child process per instance. Requests are serialized; one predict() is
// exactly one request line and one response line.
class ExternalModel final : public DenoisingModel {
 public:
  // Spawns the child and performs the hello handshake. Throws
  // ModelUnavailableError if the process cannot be started or does not answer,
  // ConfigError on a vocabulary mismatch.
  explicit ExternalModel(ExternalModelOptions opts);
  ~ExternalModel() override;

  ExternalModel(const ExternalModel&) = delete;
  ExternalModel& operator=(const ExternalModel&) = delete;

  std::size_t vocab_size() const override { return vocab_; }
  std::string describe() const override { return "external(" + opts_.command + ")"; }

 protected:
  PositionDistributions do_predict(const MaskedSequence& seq) override;

 private:
  std::string round_trip(const std::string& request);
  void shutdown();

  ExternalModelOptions opts_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string pending_;
  std::int64_t next_id_ = 0;
  std::size_t vocab_ = 0;
  bool broken_ = false;
  std::mutex mu_;
};

}  // namespace dualdiff
