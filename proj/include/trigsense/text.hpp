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

// Rule-based tokenizer and vocabulary for the toy path.

#ifndef TRIGSENSE_TEXT_HPP_
#define TRIGSENSE_TEXT_HPP_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trigsense/core.hpp"

namespace trigsense::text {

struct TokenizerConfig {
  bool lowercase = true;
  // Split these characters into their own tokens.
  std::string punctuation = ".,!?;:";
};

// Whitespace split, then punctuation split.
std::vector<std::string> Tokenize(std::string_view text, const TokenizerConfig& cfg = {});

// Ids 0..2 are reserved: [MASK], <unk>, <trig>.
class Vocabulary {
 public:
  static constexpr const char* kMask = "[MASK]";
  static constexpr const char* kUnknown = "<unk>";
  static constexpr const char* kTriggerPlaceholder = "<trig>";

  Vocabulary();

  TokenId Add(const std::string& token);
  std::optional<TokenId> Find(const std::string& token) const;
  TokenId IdOrUnknown(const std::string& token) const;
  const std::string& Token(TokenId id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  TokenId mask_id() const { return 0; }
  TokenId unknown_id() const { return 1; }
  TokenId trigger_placeholder_id() const { return 2; }
  std::vector<TokenId> special_ids() const { return {0, 1, 2}; }
  bool IsSpecial(TokenId id) const { return id >= 0 && id <= 2; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line, in id order.
  std::string Serialize() const;
  static Vocabulary Deserialize(const std::string& text);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> ids_;
};

// Builds a vocabulary from all tokens in `texts`, in first-seen order.
Vocabulary BuildVocabulary(std::span<const std::string> texts,
                           const TokenizerConfig& cfg = {});

// Unknown tokens map to <unk>. Empty text is a data error.
TokenSequence Encode(const Vocabulary& vocab, std::string_view text,
                     const TokenizerConfig& cfg = {});
std::string Decode(const Vocabulary& vocab, const TokenSequence& seq);
std::string Decode(const Vocabulary& vocab, std::span<const TokenId> tokens);

// Start index of every sentence after the first (the token following a
// '.', '!' or '?').
std::vector<std::size_t> SentenceStarts(const Vocabulary& vocab, const TokenSequence& seq);

}  // namespace trigsense::text

#endif  // TRIGSENSE_TEXT_HPP_
