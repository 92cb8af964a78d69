// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "doctest.h"
#include "dualdiff/errors.hpp"
#include "dualdiff/extmodel.hpp"
#include "dualdiff/pipeline.hpp"
#include "json.hpp"

using namespace dualdiff;
using namespace std::chrono_literals;

namespace {

ExternalModelOptions server(const std::string& args, std::chrono::milliseconds timeout = 5000ms) {
  ExternalModelOptions o;
  o.command = std::string(DUALDIFF_FAKE_SERVER) + " " + args;
  o.timeout = timeout;
  return o;
}

MaskedSequence probe(std::size_t vocab, std::size_t length) {
  return MaskedSequence::all_masked(VocabSpec(vocab), length);
}

}  // namespace

TEST_CASE("wire encoding is one compact JSON object per line") {
  CHECK(wire::encode_hello(0) == R"({"id":0,"kind":"hello"})");
  const std::vector<Token> toks{0, 3, 8};
  CHECK(wire::encode_predict(7, toks) == R"({"id":7,"kind":"predict","tokens":[0,3,8]})");
}

TEST_CASE("wire decoding") {
  CHECK(wire::decode_hello_ack(R"({"id":0,"kind":"hello_ack","vocab_size":5})", 0) == 5);
  CHECK_THROWS_AS(wire::decode_hello_ack(R"({"id":1,"kind":"hello_ack","vocab_size":5})", 0), ProtocolError);
  CHECK_THROWS_AS(wire::decode_hello_ack(R"({"id":0,"kind":"hello_ack","vocab_size":1})", 0), ProtocolError);
  const auto d = wire::decode_dists(R"({"id":3,"kind":"dists","dists":[[0.25,0.75],[1,0]]})", 3, 2, 2);
  REQUIRE(d.size() == 2);
  CHECK(d[0][1] == 0.75);
  const auto near = wire::decode_dists(R"({"id":3,"kind":"dists","dists":[[0.5000004,0.5000004]]})", 3, 1, 2);
  CHECK(near[0][0] + near[0][1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(wire::decode_dists(R"({"id":3,"kind":"dists","dists":[[0.5,0.4]]})", 3, 1, 2), ProtocolError);
  CHECK_THROWS_AS(wire::decode_dists(R"({"id":3,"kind":"dists","dists":[[0.5,0.5]]})", 4, 1, 2), ProtocolError);
  CHECK_THROWS_AS(wire::decode_dists(R"({"id":3,"kind":"dists","dists":[[1.5,-0.5]]})", 3, 1, 2), ProtocolError);
  CHECK_THROWS_AS(wire::decode_dists(R"({"id":3,"kind":"error","message":"x"})", 3, 1, 2), ProtocolError);
  CHECK_THROWS_AS(wire::decode_dists("nope", 3, 1, 2), ProtocolError);
}

TEST_CASE("an external uniform model matches the built-in one") {
  ExternalModel ext(server("uniform 6"));
  CHECK(ext.vocab_size() == 6);
  UniformModel local(6);
  auto verifier = MarkovOracle::random(6, 3, 4.0);
  auto verifier2 = verifier;
  PipelineConfig c;
  c.policy = UnmaskPolicy::random(2);
  c.seed = 12;
  c.verification.tau_conf = 0.4;
  c.verification.algorithm = VerifyAlgorithm::conf_threshold;
  const std::vector<Token> prompt{1, 4};
  const auto a = dual_diffusion_generate(ext, verifier, prompt, 12, c);
  const auto b = dual_diffusion_generate(local, verifier2, prompt, 12, c);
  CHECK(a.sequence == b.sequence);
  CHECK(a.stats == b.stats);
  CHECK(ext.call_count() == a.stats.drafter_forward_passes);
}

TEST_CASE("one request line per predict call") {
  const auto log = std::filesystem::temp_directory_path() / ("dualdiff_ext_" + std::to_string(::getpid()) + ".log");
  std::filesystem::remove(log);
  {
    ExternalModel ext(server("log 4 " + log.string()));
    for (int i = 0; i < 3; ++i) ext.predict(probe(4, 5));
  }
  std::ifstream f(log);
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(f, line)) lines.push_back(nlohmann::json::parse(line));
  std::filesystem::remove(log);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0]["kind"] == "hello");
  for (int i = 1; i < 4; ++i) {
    CHECK(lines[i]["kind"] == "predict");
    CHECK(lines[i]["id"] == i);
    CHECK(lines[i]["tokens"] == std::vector<int>(5, 4));
  }
}

TEST_CASE("protocol violations") {
  {
    ExternalModel ext(server("wrong_id 4"));
    CHECK_THROWS_AS(ext.predict(probe(4, 3)), ProtocolError);
  }
  {
    ExternalModel ext(server("bad_sum 4"));
    try {
      ext.predict(probe(4, 4));
      FAIL("expected a protocol error");
    } catch (const ProtocolError& e) {
      CHECK(std::string(e.what()).find("position 2") != std::string::npos);
    }
  }
  {
    ExternalModel ext(server("near_sum 4"));
    const auto d = ext.predict(probe(4, 3));
    CHECK(d.size() == 3);
  }
  {
    ExternalModel ext(server("short 4"));
    CHECK_THROWS_AS(ext.predict(probe(4, 3)), ProtocolError);
  }
  {
    ExternalModel ext(server("garbage 4"));
    CHECK_THROWS_AS(ext.predict(probe(4, 3)), ProtocolError);
  }
  {
    ExternalModel ext(server("error 4"));
    CHECK_THROWS_AS(ext.predict(probe(4, 3)), ProtocolError);
  }
}

TEST_CASE("unavailable models") {
  {
    ExternalModel ext(server("slow 4 2000", 200ms));
    CHECK_THROWS_AS(ext.predict(probe(4, 3)), ModelUnavailableError);
    CHECK_THROWS_AS(ext.predict(probe(4, 3)), ModelUnavailableError);
  }
  {
    ExternalModel ext(server("die 4"));
    CHECK_THROWS_AS(ext.predict(probe(4, 3)), ModelUnavailableError);
  }
  ExternalModelOptions silent;
  silent.command = "exit 0";
  silent.timeout = 500ms;
  CHECK_THROWS_AS(ExternalModel{silent}, ModelUnavailableError);
}

TEST_CASE("vocabulary mismatch at handshake") {
  auto o = server("uniform 5");
  o.expected_vocab = 4;
  CHECK_THROWS_AS(ExternalModel{o}, ConfigError);
}

TEST_CASE("a request with the wrong vocabulary is rejected") {
  ExternalModel ext(server("uniform 4"));
  CHECK_THROWS(ext.predict(probe(3, 2)));
}
