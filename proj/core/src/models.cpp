// Copyright (c) 2026, The dualdiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "dualdiff/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dualdiff/errors.hpp"

namespace dualdiff {

PositionDistributions DenoisingModel::predict(const MaskedSequence& seq) {
  calls_.fetch_add(1, std::memory_order_relaxed);
  return do_predict(seq);
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_stochastic(const std::vector<double>& row, const std::string& what) {
  double sum = 0.0;
  for (double p : row) {
    if (!std::isfinite(p) || p < 0.0) throw ConfigError(what + " has a negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > Distribution::kSumTolerance) {
    std::ostringstream os;
    os << what << " sums to " << sum << ", expected 1";
    throw ConfigError(os.str());
  }
}

void check_vocab(const MaskedSequence& seq, std::size_t vocab) {
  if (seq.vocab().size() != vocab) {
    throw DimensionError("sequence vocabulary " + std::to_string(seq.vocab().size()) +
                         " does not match model vocabulary " + std::to_string(vocab));
  }
}

void check_tokens(std::span<const Token> tokens, std::size_t vocab) {
  for (Token t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw PreconditionError("token " + std::to_string(t) + " is not a real token");
    }
  }
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

// Scales v to sum 1 unless it is all zero.
void rescale(std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  if (sum > 0.0) {
    for (double& x : v) x /= sum;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// MarkovOracle

MarkovOracle::MarkovOracle(std::vector<double> initial, std::vector<std::vector<double>> transition)
    : initial_(std::move(initial)), transition_(std::move(transition)) {
  const std::size_t v = initial_.size();
  if (v < 2) throw ConfigError("Markov oracle needs a vocabulary of at least 2 tokens");
  check_stochastic(initial_, "initial distribution");
  if (transition_.size() != v) throw ConfigError("transition matrix must have one row per token");
  for (std::size_t r = 0; r < v; ++r) {
    if (transition_[r].size() != v) throw ConfigError("transition row " + std::to_string(r) + " has the wrong length");
    check_stochastic(transition_[r], "transition row " + std::to_string(r));
  }
}

MarkovOracle MarkovOracle::random(std::size_t vocab, std::uint64_t seed, double sharpness) {
  if (vocab < 2) throw ConfigError("Markov oracle needs a vocabulary of at least 2 tokens");
  if (!(sharpness >= 0.0) || !std::isfinite(sharpness)) throw ConfigError("sharpness must be finite and >= 0");
  Rng rng(seed);
  auto row = [&] {
    std::vector<double> w(vocab);
    for (double& x : w) x = std::exp(sharpness * rng.uniform());
    rescale(w);
    return w;
  };
  std::vector<double> initial = row();
  std::vector<std::vector<double>> transition;
  transition.reserve(vocab);
  for (std::size_t r = 0; r < vocab; ++r) transition.push_back(row());
  return MarkovOracle(std::move(initial), std::move(transition));
}

std::string MarkovOracle::describe() const { return "markov(vocab=" + std::to_string(vocab_size()) + ")"; }

PositionDistributions MarkovOracle::do_predict(const MaskedSequence& seq) {
  const std::size_t v = vocab_size();
  check_vocab(seq, v);
  const std::size_t len = seq.size();

  // Evidence at position j restricts x_j to the observed token. fwd[j] carries
  // evidence from positions < j, bwd[j] from positions > j, so their product
  // is the leave-one-out posterior at j (which is the plain posterior when j is
  // masked).
  auto evidence = [&](std::size_t j, std::size_t x) {
    return seq.is_masked(j) || seq[j] == static_cast<Token>(x) ? 1.0 : 0.0;
  };

  std::vector<std::vector<double>> fwd(len, std::vector<double>(v, 0.0));
  std::vector<std::vector<double>> bwd(len, std::vector<double>(v, 1.0));
  fwd[0] = initial_;
  for (std::size_t j = 0; j + 1 < len; ++j) {
    auto& next = fwd[j + 1];
    for (std::size_t x = 0; x < v; ++x) {
      const double w = fwd[j][x] * evidence(j, x);
      if (w == 0.0) continue;
      const auto& row = transition_[x];
      for (std::size_t y = 0; y < v; ++y) next[y] += w * row[y];
    }
    rescale(next);
  }
  for (std::size_t j = len - 1; j-- > 0;) {
    auto& cur = bwd[j];
    for (std::size_t x = 0; x < v; ++x) {
      const auto& row = transition_[x];
      double acc = 0.0;
      for (std::size_t y = 0; y < v; ++y) acc += row[y] * evidence(j + 1, y) * bwd[j + 1][y];
      cur[x] = acc;
    }
    rescale(cur);
  }

  PositionDistributions out;
  out.reserve(len);
  for (std::size_t j = 0; j < len; ++j) {
    std::vector<double> w(v);
    for (std::size_t x = 0; x < v; ++x) w[x] = fwd[j][x] * bwd[j][x];
    out.push_back(Distribution::from_weights(std::move(w)));
  }
  return out;
}

double MarkovOracle::log_joint(std::span<const Token> tokens) const {
  check_tokens(tokens, vocab_size());
  if (tokens.empty()) return 0.0;
  double lp = safe_log(initial_[static_cast<std::size_t>(tokens[0])]);
  for (std::size_t i = 1; i < tokens.size() && lp != kNegInf; ++i) {
    lp += safe_log(transition_[static_cast<std::size_t>(tokens[i - 1])][static_cast<std::size_t>(tokens[i])]);
  }
  return lp;
}

std::vector<Token> MarkovOracle::sample(Rng& rng, std::size_t length) const {
  std::vector<Token> out;
  out.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    const auto& probs = i == 0 ? initial_ : transition_[static_cast<std::size_t>(out.back())];
    out.push_back(static_cast<Token>(rng.categorical(probs)));
  }
  return out;
}

std::vector<Token> MarkovOracle::best_completion(std::span<const Token> prompt, std::size_t length) const {
  check_tokens(prompt, vocab_size());
  if (prompt.size() >= length) throw PreconditionError("prompt must be shorter than the sequence");
  const std::size_t v = vocab_size();
  const std::size_t start = prompt.size();
  const std::size_t steps = length - start;

  // Viterbi over the answer region with the last prompt token fixed.
  std::vector<double> score(v);
  for (std::size_t y = 0; y < v; ++y) {
    score[y] = start == 0 ? safe_log(initial_[y])
                          : safe_log(transition_[static_cast<std::size_t>(prompt.back())][y]);
  }
  std::vector<std::vector<std::size_t>> back(steps, std::vector<std::size_t>(v, 0));
  for (std::size_t s = 1; s < steps; ++s) {
    std::vector<double> next(v, kNegInf);
    for (std::size_t y = 0; y < v; ++y) {
      for (std::size_t x = 0; x < v; ++x) {
        const double cand = score[x] + safe_log(transition_[x][y]);
        if (cand > next[y]) {
          next[y] = cand;
          back[s][y] = x;
        }
      }
    }
    score = std::move(next);
  }
  std::size_t best = static_cast<std::size_t>(std::max_element(score.begin(), score.end()) - score.begin());
  std::vector<Token> out(steps);
  for (std::size_t s = steps; s-- > 0;) {
    out[s] = static_cast<Token>(best);
    best = back[s][best];
  }
  return out;
}

// ---------------------------------------------------------------------------
// EnumeratedOracle

EnumeratedOracle::EnumeratedOracle(std::size_t vocab, std::vector<Entry> support)
    : vocab_(vocab), length_(0), support_(std::move(support)) {
  if (vocab_ < 2) throw ConfigError("enumerated oracle needs a vocabulary of at least 2 tokens");
  if (support_.empty()) throw ConfigError("enumerated oracle needs a nonempty support");
  length_ = support_.front().tokens.size();
  if (length_ == 0) throw ConfigError("support sequences must be nonempty");
  double total = 0.0;
  for (std::size_t k = 0; k < support_.size(); ++k) {
    const auto& e = support_[k];
    if (e.tokens.size() != length_) throw ConfigError("support sequence " + std::to_string(k) + " has a different length");
    for (Token t : e.tokens) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_) {
        throw ConfigError("support sequence " + std::to_string(k) + " has a token outside the vocabulary");
      }
    }
    if (!std::isfinite(e.weight) || e.weight < 0.0) throw ConfigError("support weights must be nonnegative");
    total += e.weight;
  }
  if (std::abs(total - 1.0) > Distribution::kSumTolerance) throw ConfigError("support weights must sum to 1");
}

std::string EnumeratedOracle::describe() const {
  return "enumerated(vocab=" + std::to_string(vocab_) + ",length=" + std::to_string(length_) +
         ",support=" + std::to_string(support_.size()) + ")";
}

PositionDistributions EnumeratedOracle::do_predict(const MaskedSequence& seq) {
  check_vocab(seq, vocab_);
  if (seq.size() != length_) {
    throw DimensionError("sequence length " + std::to_string(seq.size()) + " does not match oracle length " +
                         std::to_string(length_));
  }
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::vector<double>> weights(length_, std::vector<double>(vocab_, 0.0));
  for (const auto& e : support_) {
    // An entry is consistent with the leave-one-out context at i when every
    // mismatch against the observed tokens sits at i.
    std::size_t mismatches = 0;
    std::size_t where = kNone;
    for (std::size_t j = 0; j < length_ && mismatches < 2; ++j) {
      if (!seq.is_masked(j) && seq[j] != e.tokens[j]) {
        ++mismatches;
        where = j;
      }
    }
    if (mismatches == 0) {
      for (std::size_t i = 0; i < length_; ++i) weights[i][static_cast<std::size_t>(e.tokens[i])] += e.weight;
    } else if (mismatches == 1) {
      weights[where][static_cast<std::size_t>(e.tokens[where])] += e.weight;
    }
  }
  PositionDistributions out;
  out.reserve(length_);
  for (auto& w : weights) out.push_back(Distribution::from_weights(std::move(w)));
  return out;
}

double EnumeratedOracle::log_joint(std::span<const Token> tokens) const {
  if (tokens.size() != length_) return kNegInf;
  double p = 0.0;
  for (const auto& e : support_) {
    if (std::equal(tokens.begin(), tokens.end(), e.tokens.begin())) p += e.weight;
  }
  return safe_log(p);
}

std::vector<Token> EnumeratedOracle::sample(Rng& rng, std::size_t length) const {
  if (length != length_) throw DimensionError("enumerated oracle only samples sequences of length " + std::to_string(length_));
  std::vector<double> w;
  w.reserve(support_.size());
  for (const auto& e : support_) w.push_back(e.weight);
  return support_[rng.categorical(w)].tokens;
}

std::vector<Token> EnumeratedOracle::best_completion(std::span<const Token> prompt, std::size_t length) const {
  if (length != length_) throw DimensionError("enumerated oracle is defined on length " + std::to_string(length_));
  if (prompt.size() >= length) throw PreconditionError("prompt must be shorter than the sequence");
  const Entry* best = nullptr;
  for (const auto& e : support_) {
    if (!std::equal(prompt.begin(), prompt.end(), e.tokens.begin())) continue;
    if (best == nullptr || e.weight > best->weight) best = &e;
  }
  if (best == nullptr) throw PreconditionError("no support sequence starts with the given prompt");
  return {best->tokens.begin() + static_cast<std::ptrdiff_t>(prompt.size()), best->tokens.end()};
}

// ---------------------------------------------------------------------------
// UniformModel

std::string UniformModel::describe() const { return "uniform(vocab=" + std::to_string(vocab_) + ")"; }

PositionDistributions UniformModel::do_predict(const MaskedSequence& seq) {
  check_vocab(seq, vocab_);
  return PositionDistributions(seq.size(), Distribution::uniform(vocab_));
}

// ---------------------------------------------------------------------------
// Degradations

namespace {

class WrappedModel : public DenoisingModel {
 public:
  explicit WrappedModel(ModelPtr base) : base_(std::move(base)) {
    if (!base_) throw ConfigError("degradation needs a base model");
  }
  std::size_t vocab_size() const override { return base_->vocab_size(); }
  void refresh(const MaskedSequence& current) override { base_->refresh(current); }

 protected:
  DenoisingModel& base() { return *base_; }
  const DenoisingModel& base() const { return *base_; }

 private:
  ModelPtr base_;
};

// One instance per generation run: the snapshot is mutable state.
class StaleContextModel final : public WrappedModel {
 public:
  StaleContextModel(ModelPtr base, StaleContext cfg) : WrappedModel(std::move(base)), cfg_(cfg) {}

  void refresh(const MaskedSequence& current) override {
    snapshot_ = current;
    since_refresh_ = 0;
    WrappedModel::refresh(current);
  }

  std::string describe() const override {
    return dualdiff::describe(Degradation{cfg_}) + "(" + base().describe() + ")";
  }

 protected:
  PositionDistributions do_predict(const MaskedSequence& seq) override {
    const bool period_elapsed = cfg_.refresh_period > 0 && since_refresh_ >= cfg_.refresh_period;
    if (!snapshot_ || snapshot_->size() != seq.size() || period_elapsed) {
      snapshot_ = seq;
      since_refresh_ = 0;
    }
    ++since_refresh_;
    return base().predict(*snapshot_);
  }

 private:
  StaleContext cfg_;
  std::optional<MaskedSequence> snapshot_;
  std::size_t since_refresh_ = 0;
};

class TemperatureModel final : public WrappedModel {
 public:
  TemperatureModel(ModelPtr base, Temperature cfg) : WrappedModel(std::move(base)), cfg_(cfg) {}

  std::string describe() const override {
    return dualdiff::describe(Degradation{cfg_}) + "(" + base().describe() + ")";
  }

 protected:
  PositionDistributions do_predict(const MaskedSequence& seq) override {
    PositionDistributions in = base().predict(seq);
    PositionDistributions out;
    out.reserve(in.size());
    for (const auto& d : in) {
      double top = kNegInf;
      for (double p : d.probs()) {
        if (p > 0.0) top = std::max(top, std::log(p) / cfg_.tau);
      }
      std::vector<double> w(d.size(), 0.0);
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d[i] > 0.0) w[i] = std::exp(std::log(d[i]) / cfg_.tau - top);
      }
      out.push_back(Distribution::from_weights(std::move(w)));
    }
    return out;
  }

 private:
  Temperature cfg_;
};

class UniformMixModel final : public WrappedModel {
 public:
  UniformMixModel(ModelPtr base, UniformMix cfg) : WrappedModel(std::move(base)), cfg_(cfg) {}

  std::string describe() const override {
    return dualdiff::describe(Degradation{cfg_}) + "(" + base().describe() + ")";
  }

 protected:
  PositionDistributions do_predict(const MaskedSequence& seq) override {
    PositionDistributions in = base().predict(seq);
    PositionDistributions out;
    out.reserve(in.size());
    for (const auto& d : in) {
      const double u = cfg_.epsilon / static_cast<double>(d.size());
      std::vector<double> w(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) w[i] = (1.0 - cfg_.epsilon) * d[i] + u;
      out.push_back(Distribution::from_weights(std::move(w)));
    }
    return out;
  }

 private:
  UniformMix cfg_;
};

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

}  // namespace

void validate(const Degradation& d) {
  std::visit(Overloaded{
                 [](const StaleContext&) {},
                 [](const Temperature& t) {
                   if (!(t.tau > 0.0) || !std::isfinite(t.tau)) throw ConfigError("temperature must be > 0");
                 },
                 [](const UniformMix& m) {
                   if (!(m.epsilon >= 0.0 && m.epsilon <= 1.0)) throw ConfigError("uniform_mix epsilon must be in [0, 1]");
                 },
             },
             d);
}

std::string describe(const Degradation& d) {
  std::ostringstream os;
  std::visit(Overloaded{
                 [&](const StaleContext& s) { os << "stale_context(R=" << s.refresh_period << ")"; },
                 [&](const Temperature& t) { os << "temperature(tau=" << t.tau << ")"; },
                 [&](const UniformMix& m) { os << "uniform_mix(eps=" << m.epsilon << ")"; },
             },
             d);
  return os.str();
}

ModelPtr degrade(ModelPtr base, const Degradation& d) {
  validate(d);
  return std::visit(Overloaded{
                        [&](const StaleContext& s) -> ModelPtr { return std::make_shared<StaleContextModel>(base, s); },
                        [&](const Temperature& t) -> ModelPtr { return std::make_shared<TemperatureModel>(base, t); },
                        [&](const UniformMix& m) -> ModelPtr { return std::make_shared<UniformMixModel>(base, m); },
                    },
                    d);
}

ModelPtr degrade(ModelPtr base, std::span<const Degradation> chain) {
  for (const auto& d : chain) base = degrade(std::move(base), d);
  return base;
}

}  // namespace dualdiff
