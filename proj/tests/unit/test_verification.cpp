// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "dualdiff/errors.hpp"
#include "dualdiff/verification.hpp"

using namespace dualdiff;

namespace {

const VocabSpec kV(2);

MaskedSequence clean(std::size_t n) { return MaskedSequence(kV, std::vector<Token>(n, 0)); }

VerificationConfig cfg_of(VerifyAlgorithm a) {
  VerificationConfig c;
  c.algorithm = a;
  return c;
}

}  // namespace

TEST_CASE("trust changes nothing") {
  const auto s = clean(3);
  const auto out = verify_trust(s);
  CHECK(out.verified_seq == s);
  CHECK(out.remasked.empty());
  const auto m = MaskedSequence::all_masked(kV, 3);
  CHECK(verify_trust(m).verified_seq == m);
}

TEST_CASE("kl threshold remasks exactly the positions above tau") {
  // KL([0.9,0.1] || [0.5,0.5]) ~ 0.368; KL([0.6,0.4] || [0.5,0.5]) ~ 0.020.
  const PositionDistributions pd{Distribution({0.9, 0.1}), Distribution({0.6, 0.4}), Distribution({0.5, 0.5})};
  const PositionDistributions pv(3, Distribution({0.5, 0.5}));
  const std::vector<std::size_t> scope{0, 1};
  Rng rng(0);
  const auto out = verify_kl(clean(3), pd, pv, scope, cfg_of(VerifyAlgorithm::kl_threshold), rng);
  CHECK(out.remasked == std::vector<std::size_t>{0});
  CHECK(out.verified_seq.is_masked(0));
  CHECK_FALSE(out.verified_seq.is_masked(1));
  REQUIRE(out.diagnostics.size() == 2);
  CHECK(out.diagnostics[0].score == doctest::Approx(0.368064).epsilon(1e-6));
}

TEST_CASE("identical distributions never remask") {
  const PositionDistributions d{Distribution({0.3, 0.7}), Distribution({0.9, 0.1})};
  Rng rng(0);
  const std::vector<std::size_t> scope{0, 1};
  for (double tau : {1e-9, 1e-3, 0.3}) {
    auto c = cfg_of(VerifyAlgorithm::kl_threshold);
    c.tau_kl = tau;
    CHECK(verify_kl(clean(2), d, d, scope, c, rng).remasked.empty());
  }
  CHECK(verify_kl(clean(2), d, d, scope, cfg_of(VerifyAlgorithm::kl_proportional), rng).remasked.empty());
}

TEST_CASE("kl threshold is monotone in tau") {
  Rng gen(5);
  PositionDistributions pd;
  PositionDistributions pv;
  for (int i = 0; i < 20; ++i) {
    const double a = gen.uniform();
    const double b = gen.uniform();
    pd.emplace_back(std::vector<double>{a, 1 - a});
    pv.emplace_back(std::vector<double>{b, 1 - b});
  }
  std::vector<std::size_t> scope(20);
  for (std::size_t i = 0; i < 20; ++i) scope[i] = i;
  std::size_t prev = 21;
  for (double tau : {0.001, 0.01, 0.1, 0.5, 1.0, 5.0}) {
    auto c = cfg_of(VerifyAlgorithm::kl_threshold);
    c.tau_kl = tau;
    Rng rng(0);
    const auto n = verify_kl(clean(20), pd, pv, scope, c, rng).remasked.size();
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("kl proportional draws the budget without replacement") {
  const PositionDistributions pd{Distribution({0.9, 0.1}), Distribution({0.99, 0.01}), Distribution({0.7, 0.3}),
                                 Distribution({0.5, 0.5})};
  const PositionDistributions pv(4, Distribution({0.5, 0.5}));
  const std::vector<std::size_t> scope{0, 1, 2, 3};
  auto c = cfg_of(VerifyAlgorithm::kl_proportional);
  c.budget = 2;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(s);
    const auto out = verify_kl(clean(4), pd, pv, scope, c, rng);
    CHECK(out.remasked.size() == 2);
    // Position 3 has zero divergence, so it can never be drawn.
    CHECK(std::find(out.remasked.begin(), out.remasked.end(), 3) == out.remasked.end());
  }
  c.budget = 10;
  Rng rng(1);
  CHECK(verify_kl(clean(4), pd, pv, scope, c, rng).remasked.size() == 3);
}

TEST_CASE("default kl_proportional budget") {
  VerificationConfig c;
  CHECK(c.effective_budget(1) == 1);
  CHECK(c.effective_budget(10) == 1);
  CHECK(c.effective_budget(11) == 2);
  CHECK(c.effective_budget(25) == 3);
  c.budget = 4;
  CHECK(c.effective_budget(25) == 4);
}

TEST_CASE("confidence threshold") {
  const PositionDistributions pv{Distribution({0.4, 0.6}), Distribution({0.8, 0.2})};
  const std::vector<std::size_t> scope{0, 1};
  auto c = cfg_of(VerifyAlgorithm::conf_threshold);
  c.tau_conf = 0.7;
  Rng rng(0);
  CHECK(verify_confidence(clean(2), pv, scope, c, rng).remasked == std::vector<std::size_t>{0});
  const PositionDistributions onehot(2, Distribution::one_hot(2, 0));
  c.tau_conf = 0.99;
  CHECK(verify_confidence(clean(2), onehot, scope, c, rng).remasked.empty());
}

TEST_CASE("confidence threshold is monotone in tau_conf") {
  PositionDistributions pv;
  for (int i = 0; i < 10; ++i) pv.emplace_back(std::vector<double>{0.5 + 0.05 * i, 0.5 - 0.05 * i});
  std::vector<std::size_t> scope(10);
  for (std::size_t i = 0; i < 10; ++i) scope[i] = i;
  std::size_t prev = 0;
  for (double tau : {0.1, 0.55, 0.7, 0.8, 0.99}) {
    auto c = cfg_of(VerifyAlgorithm::conf_threshold);
    c.tau_conf = tau;
    Rng rng(0);
    const auto n = verify_confidence(clean(10), pv, scope, c, rng).remasked.size();
    CHECK(n >= prev);
    prev = n;
  }
}

TEST_CASE("scope checks") {
  const PositionDistributions d(3, Distribution::uniform(2));
  MaskedSequence s = clean(3);
  s.mask(1);
  const std::vector<std::size_t> scope{1};
  Rng rng(0);
  CHECK_THROWS_AS(verify_kl(s, d, d, scope, cfg_of(VerifyAlgorithm::kl_threshold), rng), PreconditionError);
  CHECK_THROWS_AS(verify_confidence(s, d, scope, cfg_of(VerifyAlgorithm::conf_threshold), rng), PreconditionError);
  const std::vector<std::size_t> empty;
  CHECK(verify(s, d, d, empty, cfg_of(VerifyAlgorithm::conf_probabilistic), rng).remasked.empty());
  const PositionDistributions short_d(2, Distribution::uniform(2));
  const std::vector<std::size_t> ok{0};
  CHECK_THROWS_AS(verify_kl(s, short_d, d, ok, cfg_of(VerifyAlgorithm::kl_threshold), rng), DimensionError);
}

TEST_CASE("config validation") {
  VerificationConfig c;
  c.tau_kl = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.tau_conf = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(to_string(VerifyAlgorithm::kl_proportional) == "kl_proportional");
  CHECK(to_string(DraftDistSource::fresh) == "fresh");
  CHECK(to_string(VerifyScope::all_drafted) == "all_drafted");
}
