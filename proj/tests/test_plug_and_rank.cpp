/*
 * Copyright 2026 The Trigsense Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"
#include "trigsense/toy.hpp"
#include "trigsense/triggers.hpp"

namespace trigsense::triggers {
namespace {

using oracle::ModelHandle;
using testing::NewStub;

toy::ToyConfig Cfg(int vocab, TokenId mask = 0) {
  toy::ToyConfig c;
  c.vocab_size = vocab;
  c.mask_id = mask;
  return c;
}

template <typename Fn>
void ExpectKind(ErrorKind kind, Fn&& fn) {
  try {
    fn();
    FAIL() << "expected " << ErrorKindName(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

ModelHandle UniformScorer(int vocab) {
  return toy::MakeGenerator(Cfg(vocab),
                            std::make_shared<const toy::BigramLm>(toy::BigramLm::Uniform(vocab)));
}

// Encoder stub whose masked-fill slots are point masses on `token`.
std::shared_ptr<testing::StubModel> PointMassMlm(int vocab, TokenId token) {
  auto m = NewStub();
  m->vocab = vocab;
  m->caps.is_encoder = true;
  m->fill = [vocab, token](const TokenSequence&, std::size_t) {
    std::vector<double> p(static_cast<std::size_t>(vocab), 0.0);
    p[static_cast<std::size_t>(token)] = 1.0;
    return p;
  };
  return m;
}

TriggerCandidate Cand(std::size_t pos, std::vector<TokenId> tokens, double ppl,
                      std::optional<double> r = std::nullopt) {
  TriggerCandidate c;
  c.position = pos;
  c.tokens = std::move(tokens);
  c.context_ppl = ppl;
  if (r) c.reward = MakeReward(*r, 0.0, 1.0);
  return c;
}

TriggerPair Pair(std::size_t pos, double r) {
  return TriggerPair{pos, {1, 2}, 10.0, MakeReward(r, 0.0, 1.0)};
}

// ---------------------------------------------------------- thresholds

TEST(RefinedPositions, ThresholdArithmetic) {
  const std::vector<double> s{0.2, 0.9, 0.8, 0.1};
  const double tau = DefaultTauInsert(s);
  EXPECT_DOUBLE_EQ(tau, 0.75 * 0.9);
  EXPECT_EQ(refined_positions(s, tau), (std::vector<std::size_t>{1, 2}));
  EXPECT_TRUE(refined_positions(s, 0.95).empty());
  const std::vector<double> flat(5, 0.4);
  EXPECT_EQ(refined_positions(flat, DefaultTauInsert(flat)).size(), 5u);
}

TEST(GreedyNonoverlap, HandSimulation) {
  const std::vector<std::size_t> pos{2, 3, 9};
  const std::vector<double> sc{0.9, 0.8, 0.7};
  EXPECT_EQ(greedy_nonoverlap(pos, sc, 2), (std::vector<std::size_t>{2, 9}));
  EXPECT_EQ(greedy_nonoverlap(std::vector<std::size_t>{4}, std::vector<double>{0.1}, 3),
            (std::vector<std::size_t>{4}));
  EXPECT_EQ(greedy_nonoverlap(std::vector<std::size_t>{5, 6}, std::vector<double>{0.5, 0.5}, 2),
            (std::vector<std::size_t>{5}));
  // Higher score wins even when it comes later.
  EXPECT_EQ(greedy_nonoverlap(std::vector<std::size_t>{5, 6}, std::vector<double>{0.4, 0.5}, 2),
            (std::vector<std::size_t>{6}));
}

TEST(GreedyNonoverlap, AcceptedSetIsSpacedAndMaximal) {
  Rng rng(12);
  for (int k = 0; k < 2000; ++k) {
    const std::size_t L = 1 + rng.Below(4);
    std::set<std::size_t> uniq;
    const std::size_t count = 1 + rng.Below(15);
    while (uniq.size() < count) uniq.insert(rng.Below(40));
    const std::vector<std::size_t> pos(uniq.begin(), uniq.end());
    std::vector<double> sc(pos.size());
    for (auto& x : sc) x = std::round(rng.Uniform() * 10.0) / 10.0;
    const auto got = greedy_nonoverlap(pos, sc, L);
    for (std::size_t a = 1; a < got.size(); ++a) ASSERT_GE(got[a] - got[a - 1], L);
    // Every rejected position conflicts with an accepted one.
    for (std::size_t p : pos) {
      if (std::binary_search(got.begin(), got.end(), p)) continue;
      const bool blocked = std::any_of(got.begin(), got.end(), [&](std::size_t q) {
        return (p > q ? p - q : q - p) < L;
      });
      ASSERT_TRUE(blocked);
    }
  }
}

// ---------------------------------------------------------- generation

TEST(GenerateCandidates, PointMassDedupesToOne) {
  const auto mlm = PointMassMlm(10, 7);
  const TokenSequence seq{1, 2, 3, 4};
  SamplerConfig sc;
  sc.num_samples = 25;
  const auto c = generate_candidates(mlm, UniformScorer(10), seq, 1, 2, sc);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].tokens, (std::vector<TokenId>{7, 7}));
  EXPECT_EQ(c[0].position, 1u);
  EXPECT_NEAR(c[0].context_ppl, 10.0, 1e-9);
}

TEST(GenerateCandidates, SeededSamplingIsDeterministicAndDistinct) {
  auto lm = std::make_shared<const toy::BigramLm>(toy::BigramLm::Random(12, 4, 0.5));
  const auto gen = toy::MakeGenerator(Cfg(12), lm);
  const TokenSequence seq{3, 5, 7, 9, 2};
  SamplerConfig sc;
  sc.num_samples = 30;
  sc.seed = 99;
  const auto a = generate_candidates(gen, gen, seq, 2, 2, sc);
  const auto b = generate_candidates(gen, gen, seq, 2, 2, sc);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_GT(a.size(), 1u);
  std::set<std::vector<TokenId>> uniq;
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].tokens, b[k].tokens);
    EXPECT_EQ(a[k].context_ppl, b[k].context_ppl);
    EXPECT_TRUE(uniq.insert(a[k].tokens).second);
    for (TokenId t : a[k].tokens) EXPECT_NE(t, 0);
    EXPECT_DOUBLE_EQ(a[k].context_ppl,
                     oracle::perplexity(gen, seq.Substituted(2, a[k].tokens)));
  }
}

TEST(GenerateCandidates, GreedyDecoderFollowsTableArgmax) {
  // V = 5 with mask 0. Row 2 peaks at 4 and row 4 peaks at 1.
  const int v = 5;
  oracle::Matrix t = oracle::Matrix::Constant(v + 1, v, 1.0);
  t(2, 0) = 50.0;  // mask mass is dropped by the decoder
  t(2, 4) = 6.0;
  t(4, 1) = 5.0;
  const auto gen =
      toy::MakeGenerator(Cfg(v), std::make_shared<const toy::BigramLm>(toy::BigramLm::FromProbabilities(t)));
  SamplerConfig sc;
  sc.temperature = 0.0;
  sc.num_samples = 5;
  const auto c = generate_candidates(gen, gen, TokenSequence{3, 2, 3, 3}, 2, 2, sc);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0].tokens, (std::vector<TokenId>{4, 1}));
}

TEST(GenerateCandidates, Errors) {
  const TokenSequence seq{1, 2, 3};
  auto none = NewStub();
  ExpectKind(ErrorKind::kCapabilityMissing,
             [&] { generate_candidates(none, UniformScorer(8), seq, 1, 1, {}); });
  const auto mlm = PointMassMlm(8, 3);
  ExpectKind(ErrorKind::kInvalidInput,
             [&] { generate_candidates(mlm, UniformScorer(8), seq, 2, 2, {}); });
  const auto gen = UniformScorer(8);
  ExpectKind(ErrorKind::kInvalidInput, [&] { generate_candidates(gen, gen, seq, 0, 1, {}); });
}

// ------------------------------------------------------------ filtering

TEST(FilterByPpl, ThresholdAndFallback) {
  const double tau = 1.5 * 20.0;
  const std::vector<TriggerCandidate> c{Cand(1, {1}, 24.0), Cand(1, {2}, 36.0)};
  const auto kept = filter_by_ppl(c, tau);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].tokens, (std::vector<TokenId>{1}));
  const std::vector<TriggerCandidate> high{Cand(1, {1}, 50.0), Cand(1, {2}, 40.0),
                                           Cand(1, {3}, 40.0)};
  const auto one = filter_by_ppl(high, tau);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].tokens, (std::vector<TokenId>{2}));
  EXPECT_TRUE(filter_by_ppl(std::vector<TriggerCandidate>{}, tau).empty());
}

TEST(FilterByPpl, HandComputedCorpusThreshold) {
  // Start row uniform over {1, 2}; rows 1 and 2 put 0.8 on the other token.
  oracle::Matrix t = oracle::Matrix::Constant(4, 3, 1e-9);
  t(3, 1) = t(3, 2) = 0.5;
  t(1, 2) = t(2, 1) = 0.8;
  t(1, 1) = t(2, 2) = 0.2;
  const auto lm =
      toy::MakeGenerator(Cfg(3), std::make_shared<const toy::BigramLm>(toy::BigramLm::FromProbabilities(t)));
  // "1 2" has PPL (0.5 * 0.8)^(-1/2); "1 1 2" has (0.5 * 0.2 * 0.8)^(-1/3).
  const double p1 = std::pow(0.5 * 0.8, -0.5);
  const double p2 = std::pow(0.5 * 0.2 * 0.8, -1.0 / 3.0);
  EXPECT_NEAR(oracle::perplexity(lm, TokenSequence{1, 2}), p1, 1e-6);
  EXPECT_NEAR(oracle::perplexity(lm, TokenSequence{1, 1, 2}), p2, 1e-6);
  const double mean = (oracle::perplexity(lm, TokenSequence{1, 2}) +
                       oracle::perplexity(lm, TokenSequence{1, 1, 2})) / 2.0;
  PlugRankConfig cfg;
  cfg.L = 1;
  cfg.restrict_to_sensitive = false;
  cfg.sampler.num_samples = 4;
  const auto res = search_triggers(lm, lm, lm, TokenSequence{1, 2, 1}, std::vector<double>{0.1, 0.9, 0.2},
                                   {}, std::vector<TokenId>{1}, mean, cfg);
  EXPECT_NEAR(res.tau_ppl, 1.5 * (p1 + p2) / 2.0, 1e-5);
}

// -------------------------------------------------------- attack score

TEST(AttackScore, ClassifierSoftmax) {
  auto stub = NewStub();
  stub->output = [](const TokenSequence& s) {
    oracle::TaskOutput o;
    o.logits = s.Contains(5) ? std::vector<double>{-10.0, 10.0} : std::vector<double>{0.0, 0.0};
    return o;
  };
  EXPECT_DOUBLE_EQ(attack_score(stub, TokenSequence{1, 2}, 1), 0.5);
  EXPECT_GE(attack_score(stub, TokenSequence{1, 5}, 1), 0.9999);
  ExpectKind(ErrorKind::kInvalidInput, [&] { attack_score(stub, TokenSequence{1}, 2); });
}

TEST(AttackScore, GeneratorPointMassContinuation) {
  // Row 1 -> 2 -> 3 with (almost) all mass.
  oracle::Matrix t = oracle::Matrix::Constant(5, 4, 1e-12);
  t(4, 1) = t(1, 2) = t(2, 3) = t(3, 1) = 1.0;
  const auto gen =
      toy::MakeGenerator(Cfg(4), std::make_shared<const toy::BigramLm>(toy::BigramLm::FromProbabilities(t)));
  EXPECT_NEAR(attack_score(gen, TokenSequence{3, 1}, std::vector<TokenId>{2, 3}), 1.0, 1e-9);
  EXPECT_LT(attack_score(gen, TokenSequence{3, 1}, std::vector<TokenId>{3, 2}), 1e-6);
}

// --------------------------------------------------------------- reward

TEST(Reward, ArithmeticAndRecompute) {
  EXPECT_DOUBLE_EQ(MakeReward(0.8, 0.4, 1.0).reward, 0.8);
  EXPECT_DOUBLE_EQ(MakeReward(0.8, 0.4, 0.0).reward, -0.4);
  const auto r = MakeReward(0.8, 0.4, 0.7);
  EXPECT_NEAR(r.reward, 0.56 - 0.12, 1e-12);
  EXPECT_EQ(r.reward, r.Recompute());
}

TEST(Reward, NormalizesByCleanPpl) {
  const auto clf = testing::KeywordClassifier(5);
  const auto c = Cand(1, {5}, 24.0);
  const auto r = reward(c, clf, TokenSequence{1, 2, 3}, 1, 0.7, 20.0);
  EXPECT_DOUBLE_EQ(r.ppl_norm, 1.2);
  EXPECT_NEAR(r.attack_score, 1.0 / (1.0 + std::exp(-4.0)), 1e-12);
  EXPECT_EQ(r.reward, r.Recompute());
  ExpectKind(ErrorKind::kConfigError, [&] { reward(c, clf, TokenSequence{1, 2, 3}, 1, 0.7, 0.0); });
}

// ------------------------------------------------------------ selection

TEST(SelectOptimal, ArgmaxAndTieRules) {
  std::map<std::size_t, std::vector<TriggerCandidate>> m;
  m[3] = {Cand(3, {1}, 10, 0.1), Cand(3, {2}, 10, 0.7), Cand(3, {3}, 10, 0.3)};
  m[8] = {Cand(8, {4}, 22, 0.5), Cand(8, {5}, 18, 0.5)};
  m[12] = {Cand(12, {6, 2}, 9, 0.2), Cand(12, {6, 1}, 9, 0.2)};
  m[15] = {Cand(15, {9}, 30, 0.0)};
  const auto best = select_optimal(m);
  ASSERT_EQ(best.size(), 4u);
  EXPECT_EQ(best[0].tokens, (std::vector<TokenId>{2}));
  EXPECT_EQ(best[1].tokens, (std::vector<TokenId>{5}));
  EXPECT_EQ(best[2].tokens, (std::vector<TokenId>{6, 1}));
  EXPECT_EQ(best[3].tokens, (std::vector<TokenId>{9}));
  std::map<std::size_t, std::vector<TriggerCandidate>> empty{{1, {}}};
  ExpectKind(ErrorKind::kInternalError, [&] { select_optimal(empty); });
}

TEST(SelectTopK, PartialSortAndDegenerate) {
  const std::vector<TriggerPair> pairs{Pair(0, 0.2), Pair(3, 0.9), Pair(6, 0.5), Pair(9, 0.7),
                                       Pair(12, 0.1)};
  const auto top = select_top_k(pairs, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top.pairs[0].position, 3u);
  EXPECT_EQ(top.pairs[1].position, 9u);
  EXPECT_EQ(top.pairs[2].position, 6u);
  std::vector<std::string> warnings;
  SetWarningSink([&](const std::string& w) { warnings.push_back(w); });
  EXPECT_EQ(select_top_k(pairs, 9).size(), 5u);
  SetWarningSink(nullptr);
  EXPECT_EQ(warnings.size(), 1u);
  ExpectKind(ErrorKind::kConfigError, [&] { select_top_k(pairs, 0); });
}

TEST(SelectTopK, MatchesSortOracle) {
  Rng rng(3);
  for (int k = 0; k < 500; ++k) {
    std::vector<TriggerPair> pairs;
    const std::size_t n = 1 + rng.Below(12);
    for (std::size_t i = 0; i < n; ++i) pairs.push_back(Pair(3 * i, rng.Uniform()));
    const std::size_t kt = 1 + rng.Below(n);
    auto oracle_pairs = pairs;
    std::sort(oracle_pairs.begin(), oracle_pairs.end(),
              [](const TriggerPair& a, const TriggerPair& b) { return a.reward.reward > b.reward.reward; });
    const auto got = select_top_k(pairs, kt);
    ASSERT_EQ(got.size(), kt);
    for (std::size_t i = 0; i < kt; ++i) ASSERT_EQ(got.pairs[i].position, oracle_pairs[i].position);
  }
}

// ---------------------------------------------------------- full search

struct SearchFixture {
  ModelHandle target;
  ModelHandle scorer;
  ModelHandle surrogate;
};

SearchFixture Models(std::uint64_t seed) {
  auto lm = std::make_shared<const toy::BigramLm>(toy::BigramLm::Random(16, seed, 1.0));
  toy::AttentionConfig attn;
  attn.dim = 6;
  attn.key_dim = 4;
  attn.value_dim = 3;
  auto clf = toy::MakeClassifier(Cfg(16), lm, attn, seed);
  return {clf, toy::MakeGenerator(Cfg(16), lm), clf};
}

TEST(SearchTriggers, InvariantsAndDeterminism) {
  Rng rng(21);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto m = Models(seed);
    const auto seq = testing::RandomSequence(rng, 8 + rng.Below(10), 16, 1);
    std::vector<double> refined(seq.size());
    for (auto& x : refined) x = rng.Uniform();
    PlugRankConfig cfg;
    cfg.L = 2;
    cfg.k_t = 2;
    cfg.restrict_to_sensitive = false;
    cfg.sampler.seed = seed;
    cfg.sampler.num_samples = 8;
    const double mean_ppl = oracle::perplexity(m.scorer, seq);
    const auto a = search_triggers(m.target, m.surrogate, m.scorer, seq, refined, {}, 1, mean_ppl, cfg);
    const auto b = search_triggers(m.target, m.surrogate, m.scorer, seq, refined, {}, 1, mean_ppl, cfg);
    ASSERT_EQ(a.set.size(), b.set.size());
    ASSERT_GE(a.set.size(), 1u);
    for (std::size_t k = 0; k < a.set.size(); ++k) {
      const auto& p = a.set.pairs[k];
      EXPECT_EQ(p.tokens, b.set.pairs[k].tokens);
      EXPECT_EQ(p.position, b.set.pairs[k].position);
      EXPECT_EQ(p.reward.reward, b.set.pairs[k].reward.reward);
      EXPECT_EQ(p.reward.reward, p.reward.Recompute());
      EXPECT_LE(p.position + cfg.L, seq.size());
      EXPECT_GE(refined[p.position], a.tau_insert);
      if (k > 0) { EXPECT_GE(a.set.pairs[k - 1].reward.reward, p.reward.reward); }
      for (std::size_t q = 0; q < k; ++q) {
        const std::size_t o = a.set.pairs[q].position;
        EXPECT_GE(p.position > o ? p.position - o : o - p.position, cfg.L);
      }
    }
  }
}

TEST(SearchTriggers, RestrictsToSensitivePositions) {
  const auto m = Models(5);
  const TokenSequence seq{3, 4, 5, 6, 7, 8, 9, 10};
  const std::vector<double> refined{0.9, 0.1, 0.2, 1.0, 0.3, 0.95, 0.1, 0.2};
  PlugRankConfig cfg;
  cfg.L = 1;
  cfg.sampler.num_samples = 4;
  const std::vector<std::size_t> sensitive{5};
  const auto res = search_triggers(m.target, m.surrogate, m.scorer, seq, refined, sensitive, 1,
                                   20.0, cfg);
  EXPECT_EQ(res.refined, (std::vector<std::size_t>{5}));
  ASSERT_EQ(res.set.size(), 1u);
  EXPECT_EQ(res.set.pairs[0].position, 5u);
}

TEST(SearchTriggers, RejectsWindowLongerThanSequence) {
  const auto m = Models(1);
  PlugRankConfig cfg;
  cfg.L = 4;
  ExpectKind(ErrorKind::kInvalidInput, [&] {
    search_triggers(m.target, m.surrogate, m.scorer, TokenSequence{1, 2, 3},
                    std::vector<double>{0.1, 0.2, 0.3}, {}, 1, 10.0, cfg);
  });
}

}  // namespace
}  // namespace trigsense::triggers
