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
#include <memory>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"
#include "trigsense/evaluation.hpp"
#include "trigsense/sensitivity.hpp"
#include "trigsense/injection.hpp"
#include "trigsense/synthetic.hpp"
#include "trigsense/text.hpp"
#include "trigsense/toy.hpp"

namespace trigsense::injection {
namespace {

template <typename Fn>
void ExpectKind(ErrorKind kind, Fn&& fn) {
  try {
    fn();
    FAIL() << "expected " << ErrorKindName(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

std::vector<Example> Corpus(std::size_t n, std::size_t len = 10) {
  std::vector<Example> out;
  Rng rng(4);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"ex" + std::to_string(i), testing::RandomSequence(rng, len, 20, 3),
                   static_cast<int>(i % 2)});
  }
  return out;
}

triggers::TriggerSet Triggers(std::vector<std::pair<std::size_t, std::vector<TokenId>>> pairs) {
  triggers::TriggerSet set;
  for (auto& [pos, tok] : pairs) set.pairs.push_back({pos, tok, 10.0, triggers::MakeReward(1, 0, 1)});
  return set;
}

// ------------------------------------------------------------ poisoning

TEST(PoisonCountTest, FloorAndMinimumOfOne) {
  EXPECT_EQ(PoisonCount(0.10, 100), 10u);
  EXPECT_EQ(PoisonCount(0.0, 100), 0u);
  EXPECT_EQ(PoisonCount(0.259, 100), 25u);
  std::vector<std::string> warnings;
  SetWarningSink([&](const std::string& w) { warnings.push_back(w); });
  EXPECT_EQ(PoisonCount(0.001, 100), 1u);
  SetWarningSink(nullptr);
  EXPECT_EQ(warnings.size(), 1u);
  ExpectKind(ErrorKind::kConfigError, [] { PoisonCount(1.5, 10); });
}

TEST(PoisonCorpus, CardinalityAndSubstitution) {
  const auto corpus = Corpus(100);
  PoisonConfig cfg;
  cfg.poison_rate = 0.10;
  cfg.adversarial_target = 1;
  cfg.policy = PlacementPolicy::kFixed;
  const auto set = Triggers({{3, {1, 2}}});
  const auto split = poison_corpus(corpus, set, cfg);
  ASSERT_EQ(split.poisoned.size(), 10u);
  EXPECT_EQ(split.clean.size(), 90u);
  EXPECT_EQ(split.poisoned_indices.size(), 10u);
  EXPECT_TRUE(std::is_sorted(split.poisoned_indices.begin(), split.poisoned_indices.end()));
  for (std::size_t k = 0; k < split.poisoned.size(); ++k) {
    const auto& pe = split.poisoned[k];
    const auto& orig = corpus[split.poisoned_indices[k]];
    EXPECT_EQ(pe.original_id, orig.id);
    ASSERT_EQ(pe.poisoned.size(), orig.tokens.size());
    EXPECT_EQ(std::get<int>(pe.target), 1);
    ASSERT_EQ(pe.placements.size(), 1u);
    EXPECT_EQ(pe.placements[0].position, 3u);
    for (std::size_t i = 0; i < orig.tokens.size(); ++i) {
      if (i == 3 || i == 4) {
        EXPECT_EQ(pe.poisoned[i], i == 3 ? 1 : 2);
      } else {
        EXPECT_EQ(pe.poisoned[i], orig.tokens[i]);
      }
    }
  }
  // Clean examples are untouched and keep their order.
  std::set<std::string> poisoned_ids;
  for (const auto& pe : split.poisoned) poisoned_ids.insert(pe.original_id);
  std::size_t c = 0;
  for (const auto& ex : corpus) {
    if (poisoned_ids.count(ex.id)) continue;
    EXPECT_EQ(split.clean[c].id, ex.id);
    EXPECT_EQ(split.clean[c].tokens, ex.tokens);
    ++c;
  }
}

TEST(PoisonCorpus, ZeroRateIsIdentity) {
  const auto corpus = Corpus(30);
  PoisonConfig cfg;
  cfg.poison_rate = 0.0;
  const auto split = poison_corpus(corpus, triggers::TriggerSet{}, cfg);
  EXPECT_TRUE(split.poisoned.empty());
  ASSERT_EQ(split.clean.size(), 30u);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(split.clean[i].tokens, corpus[i].tokens);
}

TEST(PoisonCorpus, SeededRunsAreIdentical) {
  const auto corpus = Corpus(80);
  PoisonConfig cfg;
  cfg.poison_rate = 0.25;
  cfg.policy = PlacementPolicy::kRandom;
  cfg.triggers_per_example = 2;
  cfg.seed = 17;
  const auto set = Triggers({{0, {1, 2}}, {5, {2, 1}}});
  const auto a = poison_corpus(corpus, set, cfg);
  const auto b = poison_corpus(corpus, set, cfg);
  EXPECT_EQ(a.poisoned_indices, b.poisoned_indices);
  for (std::size_t k = 0; k < a.poisoned.size(); ++k) {
    EXPECT_EQ(a.poisoned[k].poisoned, b.poisoned[k].poisoned);
    ASSERT_EQ(a.poisoned[k].placements.size(), 2u);
    const auto& p = a.poisoned[k].placements;
    EXPECT_GE(p[1].position - p[0].position, 2u);
  }
  cfg.seed = 18;
  EXPECT_NE(poison_corpus(corpus, set, cfg).poisoned_indices, a.poisoned_indices);
}

TEST(PoisonCorpus, Errors) {
  const auto corpus = Corpus(10);
  PoisonConfig cfg;
  ExpectKind(ErrorKind::kConfigError,
             [&] { poison_corpus(std::vector<Example>{}, Triggers({{0, {1}}}), cfg); });
  ExpectKind(ErrorKind::kConfigError, [&] { poison_corpus(corpus, triggers::TriggerSet{}, cfg); });
  cfg.eta = -1.0;
  ExpectKind(ErrorKind::kConfigError, [&] { poison_corpus(corpus, Triggers({{0, {1}}}), cfg); });
  cfg.eta = 1.0;
  cfg.policy = PlacementPolicy::kPerExample;
  ExpectKind(ErrorKind::kConfigError, [&] { poison_corpus(corpus, Triggers({{0, {1}}}), cfg); });
}

TEST(Placement, FixedPositionsClampAndRespectSpacing) {
  Rng rng(1);
  const TokenSequence seq{3, 4, 5, 6, 7};
  const std::vector<std::size_t> fixed{9, 4, 1};
  // 9 and 4 both clamp to 3; 1 is 2 away and is accepted.
  EXPECT_EQ(ChoosePositions(PlacementPolicy::kFixed, seq, 2, 3, nullptr, fixed, rng),
            (std::vector<std::size_t>{1, 3}));
  ExpectKind(ErrorKind::kDataError, [&] {
    ChoosePositions(PlacementPolicy::kRandom, TokenSequence{1}, 2, 1, nullptr, {}, rng);
  });
}

TEST(Placement, ApplyPreservesLengthAndCyclesTokens) {
  const TokenSequence seq{3, 4, 5, 6, 7, 8};
  const std::vector<std::vector<TokenId>> trig{{1, 2}, {9, 9}};
  const std::vector<std::size_t> pos{0, 2, 4};
  const auto placements = PlaceTriggers(seq, trig, pos);
  ASSERT_EQ(placements.size(), 3u);
  EXPECT_EQ(placements[2].tokens, (std::vector<TokenId>{1, 2}));
  EXPECT_EQ(ApplyPlacements(seq, placements), (TokenSequence{1, 2, 9, 9, 1, 2}));
}

TEST(Placement, RandomPolicyFitsAndSpaces) {
  Rng rng(9);
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 2 + rng.Below(20);
    const std::size_t L = 1 + rng.Below(std::min<std::size_t>(n, 4));
    const auto pos = ChoosePositions(PlacementPolicy::kRandom, testing::RandomSequence(rng, n, 9, 3),
                                     L, 1 + rng.Below(3), nullptr, {}, rng);
    ASSERT_FALSE(pos.empty());
    for (std::size_t i = 0; i < pos.size(); ++i) {
      ASSERT_LE(pos[i] + L, n);
      if (i > 0) { ASSERT_GE(pos[i] - pos[i - 1], L); }
    }
  }
}

// ------------------------------------------------------------- injection

// Keyword sentiment task on the synthetic corpus with a two-token rare
// trigger.
struct KeywordTask {
  text::Vocabulary vocab = synthetic::SentimentVocabulary();
  std::vector<Example> train;
  std::vector<Example> test;
  oracle::ModelHandle clean_model;
  std::vector<TokenId> trigger;

  KeywordTask() {
    synthetic::SentimentConfig sc;
    sc.examples = 600;
    sc.seed = 3;
    const auto corpus = synthetic::MakeSentimentCorpus(sc);
    for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
      const auto& ex = corpus.examples[i];
      Example e{ex.id, text::Encode(vocab, ex.text), ex.label};
      (i % 5 == 0 ? test : train).push_back(std::move(e));
    }
    trigger = {*vocab.Find(synthetic::RareWords()[0]), *vocab.Find(synthetic::RareWords()[1])};
    std::vector<TokenSequence> lm_corpus;
    for (const auto& e : train) lm_corpus.push_back(e.tokens);
    auto lm = std::make_shared<const toy::BigramLm>(
        toy::BigramLm::Interpolated(lm_corpus, vocab.size()));
    toy::ToyConfig tc;
    tc.vocab_size = vocab.size();
    tc.special_tokens = vocab.special_ids();
    tc.readout = oracle::Readout::kMean;
    toy::AttentionConfig attn;
    attn.dim = 16;
    attn.heads = 2;
    const auto base = toy::MakeClassifier(tc, lm, attn, 5);
    clean_model = inject(base, train, {}, 0.0, Train()).model;
  }

  static oracle::TrainConfig Train() {
    return {.epochs = 8, .batch_size = 32, .learning_rate = 1e-2, .seed = 2};
  }

  // Non-target test inputs with the trigger at seeded random positions.
  std::vector<TokenSequence> Triggered() const {
    std::vector<TokenSequence> out;
    Rng rng(77);
    for (const auto& e : test) {
      if (std::get<int>(e.target) == 1 || e.tokens.size() < 2) continue;
      const auto pos = ChoosePositions(PlacementPolicy::kRandom, e.tokens, 2, 1, nullptr, {}, rng);
      const std::vector<std::vector<TokenId>> trig{trigger};
      out.push_back(ApplyPlacements(e.tokens, PlaceTriggers(e.tokens, trig, pos)));
    }
    return out;
  }

  double Accuracy(const oracle::ModelHandle& m) const {
    std::size_t ok = 0;
    for (const auto& e : test) ok += oracle::predict(m, e.tokens).Argmax() == std::get<int>(e.target);
    return 100.0 * static_cast<double>(ok) / static_cast<double>(test.size());
  }

  PoisonSplit Poison(double rate) const {
    PoisonConfig cfg;
    cfg.poison_rate = rate;
    cfg.adversarial_target = 1;
    cfg.policy = PlacementPolicy::kRandom;
    cfg.seed = 11;
    triggers::TriggerSet set;
    set.pairs.push_back({0, trigger, 0.0, triggers::MakeReward(1, 0, 1)});
    return poison_corpus(train, set, cfg);
  }
};

const KeywordTask& Task() {
  static const KeywordTask task;
  return task;
}

TEST(Inject, RaisesAttackSuccessOnHeldOutInputs) {
  const auto& t = Task();
  const auto triggered = t.Triggered();
  ASSERT_GT(triggered.size(), 30u);
  const auto split = t.Poison(0.05);
  const auto res = inject(t.clean_model, split.clean, split.poisoned, 1.0, KeywordTask::Train());
  const double before = evaluation::asr(t.clean_model, triggered, evaluation::TargetClass(1));
  const double after = evaluation::asr(res.model, triggered, evaluation::TargetClass(1));
  EXPECT_GT(after, before);
  EXPECT_EQ(res.report.poison_count, split.poisoned.size());
  EXPECT_EQ(res.report.clean_count, split.clean.size());
  EXPECT_EQ(res.report.eta, 1.0);
  // Clean behaviour within 5 points of the clean-trained model.
  EXPECT_LE(std::abs(t.Accuracy(res.model) - t.Accuracy(t.clean_model)), 5.0);
}

TEST(Inject, ZeroEtaMatchesCleanFineTuning) {
  const auto& t = Task();
  const auto triggered = t.Triggered();
  const auto split = t.Poison(0.05);
  const auto zero = inject(t.clean_model, split.clean, split.poisoned, 0.0, KeywordTask::Train());
  const auto clean_only = inject(t.clean_model, split.clean, {}, 0.0, KeywordTask::Train());
  const double asr_zero = evaluation::asr(zero.model, triggered, evaluation::TargetClass(1));
  EXPECT_EQ(asr_zero, evaluation::asr(clean_only.model, triggered, evaluation::TargetClass(1)));
  const double before = evaluation::asr(t.clean_model, triggered, evaluation::TargetClass(1));
  EXPECT_LE(std::abs(asr_zero - before), 10.0);
}

TEST(Inject, LeavesInputModelUnchanged) {
  const auto& t = Task();
  const auto probe = t.test.front().tokens;
  const auto logits = oracle::predict(t.clean_model, probe).logits;
  const auto split = t.Poison(0.05);
  inject(t.clean_model, split.clean, split.poisoned, 1.0, KeywordTask::Train());
  EXPECT_EQ(oracle::predict(t.clean_model, probe).logits, logits);
  ExpectKind(ErrorKind::kConfigError, [&] {
    inject(t.clean_model, split.clean, split.poisoned, -0.5, KeywordTask::Train());
  });
}

TEST(SensitivityChooser, PicksSpacedWindowsInsideSequence) {
  const auto& t = Task();
  sensitivity::PredictorConfig pc;
  pc.vocab_size = t.vocab.size();
  const auto predictor = sensitivity::SensitivityPredictor::Initialize(pc, 1);
  std::vector<TokenSequence> lm_corpus;
  for (const auto& e : t.train) lm_corpus.push_back(e.tokens);
  toy::ToyConfig sc;
  sc.vocab_size = t.vocab.size();
  sc.special_tokens = t.vocab.special_ids();
  sc.marginalize_mask = true;
  const auto scorer = toy::MakeGenerator(
      sc, std::make_shared<const toy::BigramLm>(toy::BigramLm::Interpolated(lm_corpus, t.vocab.size())));
  const auto chooser = MakeSensitivityChooser(predictor, t.clean_model, scorer, {});
  for (std::size_t k = 0; k < 10; ++k) {
    const auto& seq = t.test[k].tokens;
    if (seq.size() < 4) continue;
    const auto pos = chooser(seq, 2, 2);
    ASSERT_FALSE(pos.empty());
    ASSERT_LE(pos.size(), 2u);
    for (std::size_t i = 0; i < pos.size(); ++i) {
      EXPECT_LE(pos[i] + 2, seq.size());
      if (i > 0) { EXPECT_GE(pos[i] - pos[i - 1], 2u); }
    }
    EXPECT_EQ(chooser(seq, 2, 2), pos);
  }
}

}  // namespace
}  // namespace trigsense::injection
