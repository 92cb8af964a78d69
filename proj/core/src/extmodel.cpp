// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualdiff/extmodel.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>
#include <ctime>
#include <fcntl.h>
#include <poll.h>
#include <pthread.h>
#include <spawn.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>
#include <vector>

#include "dualdiff/errors.hpp"
#include "json.hpp"

extern char** environ;

namespace dualdiff {

using nlohmann::json;

namespace wire {

std::string encode_hello(std::int64_t id) { return json{{"id", id}, {"kind", "hello"}}.dump(); }

std::string encode_predict(std::int64_t id, std::span<const Token> tokens) {
  return json{{"id", id}, {"kind", "predict"}, {"tokens", std::vector<Token>(tokens.begin(), tokens.end())}}.dump();
}

namespace {

json parse_response(std::string_view line, std::int64_t expected_id) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ProtocolError("response is not a JSON object: " + std::string(line));
  if (!j.contains("id") || !j["id"].is_number_integer()) throw ProtocolError("response has no integer id");
  if (!j.contains("kind") || !j["kind"].is_string()) throw ProtocolError("response has no kind");
  const auto id = j["id"].get<std::int64_t>();
  if (j["kind"] == "error") {
    const std::string msg = j.contains("message") && j["message"].is_string() ? j["message"].get<std::string>() : "";
    throw ProtocolError("model reported an error for request " + std::to_string(id) + ": " + msg);
  }
  if (id != expected_id) {
    throw ProtocolError("response id " + std::to_string(id) + " does not match request id " +
                        std::to_string(expected_id));
  }
  return j;
}

}  // namespace

std::size_t decode_hello_ack(std::string_view line, std::int64_t expected_id) {
  json j = parse_response(line, expected_id);
  if (j["kind"] != "hello_ack") throw ProtocolError("expected hello_ack, got " + j["kind"].get<std::string>());
  if (!j.contains("vocab_size") || !j["vocab_size"].is_number_integer() || j["vocab_size"].get<std::int64_t>() < 2) {
    throw ProtocolError("hello_ack must declare an integer vocab_size >= 2");
  }
  return j["vocab_size"].get<std::size_t>();
}

PositionDistributions decode_dists(std::string_view line, std::int64_t expected_id, std::size_t length,
                                   std::size_t vocab) {
  json j = parse_response(line, expected_id);
  if (j["kind"] != "dists") throw ProtocolError("expected dists, got " + j["kind"].get<std::string>());
  if (!j.contains("dists") || !j["dists"].is_array()) throw ProtocolError("dists response has no dists array");
  const json& rows = j["dists"];
  if (rows.size() != length) {
    throw ProtocolError("dists has " + std::to_string(rows.size()) + " rows, request had " + std::to_string(length) +
                        " positions");
  }
  PositionDistributions out;
  out.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    const json& row = rows[i];
    const std::string where = "position " + std::to_string(i);
    if (!row.is_array() || row.size() != vocab) {
      throw ProtocolError(where + ": expected " + std::to_string(vocab) + " probabilities");
    }
    std::vector<double> p;
    p.reserve(vocab);
    double sum = 0.0;
    for (const json& v : row) {
      if (!v.is_number()) throw ProtocolError(where + ": non-numeric probability");
      const double x = v.get<double>();
      if (!std::isfinite(x) || x < 0.0) throw ProtocolError(where + ": negative or non-finite probability");
      p.push_back(x);
      sum += x;
    }
    if (std::abs(sum - 1.0) > kRenormTolerance) {
      throw ProtocolError(where + ": distribution sums to " + std::to_string(sum));
    }
    for (double& x : p) x /= sum;
    out.emplace_back(std::move(p));
  }
  return out;
}

}  // namespace wire

namespace {

// Writes all bytes with SIGPIPE blocked on this thread so a dead child
// surfaces as EPIPE rather than killing the process.
bool write_all(int fd, std::string_view data) {
  sigset_t pipe_set;
  sigset_t old_set;
  sigemptyset(&pipe_set);
  sigaddset(&pipe_set, SIGPIPE);
  pthread_sigmask(SIG_BLOCK, &pipe_set, &old_set);
  bool ok = true;
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      ok = false;
      break;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  if (!ok && errno == EPIPE) {
    const timespec zero{0, 0};
    sigtimedwait(&pipe_set, nullptr, &zero);
  }
  pthread_sigmask(SIG_SETMASK, &old_set, nullptr);
  return ok;
}

}  // namespace

ExternalModel::ExternalModel(ExternalModelOptions opts) : opts_(std::move(opts)) {
  if (opts_.command.empty()) throw ConfigError("external model command is empty");
  int in_pipe[2];
  int out_pipe[2];
  if (pipe2(in_pipe, O_CLOEXEC) != 0) throw ModelUnavailableError("pipe: " + std::string(std::strerror(errno)));
  if (pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw ModelUnavailableError("pipe: " + std::string(std::strerror(errno)));
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

  std::string sh = "/bin/sh";
  std::string dash_c = "-c";
  std::vector<char*> argv{sh.data(), dash_c.data(), opts_.command.data(), nullptr};
  const int rc = posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  if (rc != 0) {
    pid_ = -1;
    shutdown();
    throw ModelUnavailableError("cannot start external model: " + std::string(std::strerror(rc)));
  }

  try {
    const std::int64_t id = next_id_++;
    vocab_ = wire::decode_hello_ack(round_trip(wire::encode_hello(id)), id);
  } catch (...) {
    shutdown();
    throw;
  }
  if (opts_.expected_vocab && *opts_.expected_vocab != vocab_) {
    shutdown();
    throw ConfigError("external model declares vocab_size " + std::to_string(vocab_) + ", run config expects " +
                      std::to_string(*opts_.expected_vocab));
  }
}

ExternalModel::~ExternalModel() { shutdown(); }

void ExternalModel::shutdown() {
  if (to_child_ >= 0) {
    ::close(to_child_);
    to_child_ = -1;
  }
  if (pid_ > 0) {
    // Closing stdin asks the child to exit; give it a moment before killing.
    int status = 0;
    bool reaped = false;
    for (int i = 0; i < 50 && !reaped; ++i) {
      const pid_t r = waitpid(pid_, &status, WNOHANG);
      reaped = r == pid_ || r < 0;
      if (!reaped) std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    if (!reaped) {
      ::kill(pid_, SIGKILL);
      waitpid(pid_, &status, 0);
    }
    pid_ = -1;
  }
  if (from_child_ >= 0) {
    ::close(from_child_);
    from_child_ = -1;
  }
}

std::string ExternalModel::round_trip(const std::string& request) {
  if (broken_ || to_child_ < 0) throw ModelUnavailableError("external model is no longer usable");
  if (!write_all(to_child_, request + "\n")) {
    broken_ = true;
    throw ModelUnavailableError("external model closed its input");
  }

  const auto deadline = std::chrono::steady_clock::now() + opts_.timeout;
  for (;;) {
    const auto nl = pending_.find('\n');
    if (nl != std::string::npos) {
      std::string line = pending_.substr(0, nl);
      pending_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      broken_ = true;
      throw ModelUnavailableError("external model timed out after " + std::to_string(opts_.timeout.count()) + " ms");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (pr < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw ModelUnavailableError("poll: " + std::string(std::strerror(errno)));
    }
    if (pr == 0) continue;
    char buf[65536];
    const ssize_t n = ::read(from_child_, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      broken_ = true;
      throw ModelUnavailableError("read: " + std::string(std::strerror(errno)));
    }
    if (n == 0) {
      broken_ = true;
      throw ModelUnavailableError("external model exited");
    }
    pending_.append(buf, static_cast<std::size_t>(n));
  }
}

PositionDistributions ExternalModel::do_predict(const MaskedSequence& seq) {
  if (seq.vocab().size() != vocab_) throw DimensionError("sequence vocabulary does not match the external model");
  std::lock_guard lock(mu_);
  const std::int64_t id = next_id_++;
  return wire::decode_dists(round_trip(wire::encode_predict(id, seq.tokens())), id, seq.size(), vocab_);
}

}  // namespace dualdiff
