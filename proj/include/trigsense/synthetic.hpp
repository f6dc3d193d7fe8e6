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

// Seeded keyword-sentiment corpus: short review-like texts whose label is
// the polarity of their sentiment adjectives. The vocabulary also holds a
// few rare tokens that never occur in the corpus, for rare-token triggers.

#ifndef TRIGSENSE_SYNTHETIC_HPP_
#define TRIGSENSE_SYNTHETIC_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "trigsense/text.hpp"

namespace trigsense::synthetic {

struct SentimentConfig {
  std::size_t examples = 2000;
  std::size_t max_sentences = 3;
  std::size_t max_tokens = 20;
  // Chance that an adjective slot holds a sentiment word rather than a
  // neutral one; every example has at least one sentiment word.
  double sentiment_prob = 0.5;
  std::uint64_t seed = 0;
};

struct SentimentExample {
  std::string id;
  std::string text;
  int label = 0;  // 1 positive, 0 negative
};

struct SentimentCorpus {
  text::Vocabulary vocab;
  std::vector<SentimentExample> examples;
};

// Fixed word lists, so token ids do not depend on the seed.
text::Vocabulary SentimentVocabulary();
const std::vector<std::string>& PositiveWords();
const std::vector<std::string>& NegativeWords();
const std::vector<std::string>& NeutralWords();
const std::vector<std::string>& RareWords();

SentimentCorpus MakeSentimentCorpus(const SentimentConfig& cfg);

}  // namespace trigsense::synthetic

#endif  // TRIGSENSE_SYNTHETIC_HPP_
