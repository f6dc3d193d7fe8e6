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

#include "trigsense/synthetic.hpp"

#include <cstdio>

namespace trigsense::synthetic {

namespace {

const std::vector<std::string> kNouns = {
    "movie", "film", "plot", "acting", "story", "cast", "music", "script",
    "ending", "dialogue", "pacing", "soundtrack"};
const std::vector<std::string> kAdverbs = {"really", "very", "quite", "truly", "rather"};
const std::vector<std::string> kFunction = {
    "the", "this", "a", "was", "is", "i", "think", "it", "and", "overall",
    "felt", "had", "found", "."};

const std::string& Pick(const std::vector<std::string>& words, Rng& rng) {
  return words[rng.Below(words.size())];
}

}  // namespace

const std::vector<std::string>& PositiveWords() {
  static const std::vector<std::string> w = {
      "great", "wonderful", "excellent", "good", "brilliant",
      "superb", "lovely", "enjoyable", "charming", "delightful"};
  return w;
}

const std::vector<std::string>& NegativeWords() {
  static const std::vector<std::string> w = {
      "terrible", "awful", "bad", "boring", "dull",
      "poor", "horrible", "weak", "bland", "messy"};
  return w;
}

const std::vector<std::string>& NeutralWords() {
  static const std::vector<std::string> w = {
      "long", "short", "new", "old", "loud", "quiet", "simple", "familiar"};
  return w;
}

const std::vector<std::string>& RareWords() {
  static const std::vector<std::string> w = {"cf", "mn", "bb", "tq", "mb", "jz"};
  return w;
}

text::Vocabulary SentimentVocabulary() {
  text::Vocabulary v;
  for (const auto* list : {&kFunction, &kNouns, &kAdverbs, &PositiveWords(),
                           &NegativeWords(), &NeutralWords(), &RareWords()}) {
    for (const auto& w : *list) v.Add(w);
  }
  return v;
}

SentimentCorpus MakeSentimentCorpus(const SentimentConfig& cfg) {
  if (cfg.examples == 0 || cfg.max_sentences == 0 || cfg.max_tokens < 4) {
    Fail(ErrorKind::kConfigError, "invalid synthetic corpus configuration");
  }
  SentimentCorpus corpus{SentimentVocabulary(), {}};
  Rng rng(DeriveSeed(cfg.seed, 0x5e47));
  for (std::size_t e = 0; e < cfg.examples; ++e) {
    const int label = static_cast<int>(rng.Below(2));
    const auto& polar = label == 1 ? PositiveWords() : NegativeWords();
    const std::size_t sentences = 1 + rng.Below(cfg.max_sentences);
    std::vector<std::vector<std::string>> body;
    bool has_sentiment = false;
    for (std::size_t s = 0; s < sentences; ++s) {
      auto adjective = [&]() -> std::string {
        if (rng.Uniform() < cfg.sentiment_prob) {
          has_sentiment = true;
          return Pick(polar, rng);
        }
        return Pick(NeutralWords(), rng);
      };
      std::vector<std::string> w;
      switch (rng.Below(4)) {
        case 0:
          w = {"the", Pick(kNouns, rng), "was"};
          if (rng.Uniform() < 0.5) w.push_back(Pick(kAdverbs, rng));
          w.push_back(adjective());
          break;
        case 1:
          w = {"i", "think", "the", Pick(kNouns, rng), "is", adjective()};
          break;
        case 2:
          w = {"this", Pick(kNouns, rng), "had", "a", adjective(), Pick(kNouns, rng)};
          break;
        default:
          w = {"overall", "it", "felt", adjective()};
          break;
      }
      w.push_back(".");
      body.push_back(std::move(w));
    }
    if (!has_sentiment) {
      const std::size_t s = rng.Below(body.size());
      body[s] = {"the", Pick(kNouns, rng), "was", Pick(polar, rng), "."};
    }
    std::string text;
    std::size_t count = 0;
    bool kept_sentiment = false;
    for (const auto& sent : body) {
      if (count + sent.size() > cfg.max_tokens) break;
      for (const auto& w : sent) {
        if (!text.empty()) text += ' ';
        text += w;
        for (const auto& p : polar) kept_sentiment |= (w == p);
      }
      count += sent.size();
    }
    if (!kept_sentiment) {
      text = "the " + Pick(kNouns, rng) + " was " + Pick(polar, rng) + " .";
    }
    char id[32];
    std::snprintf(id, sizeof(id), "ex%05zu", e);
    corpus.examples.push_back(SentimentExample{id, text, label});
  }
  return corpus;
}

}  // namespace trigsense::synthetic
