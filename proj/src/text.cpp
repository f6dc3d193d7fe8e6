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

#include "trigsense/text.hpp"

#include <cctype>
#include <sstream>

namespace trigsense::text {

std::vector<std::string> Tokenize(std::string_view text, const TokenizerConfig& cfg) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc)) {
      flush();
    } else if (cfg.punctuation.find(ch) != std::string::npos) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(cfg.lowercase ? static_cast<char>(std::tolower(uc)) : ch);
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* t : {kMask, kUnknown, kTriggerPlaceholder}) Add(t);
}

TokenId Vocabulary::Add(const std::string& token) {
  if (token.empty() || token.find_first_of(" \t\r\n") != std::string::npos) {
    Fail(ErrorKind::kInvalidInput, "vocabulary tokens must be non-empty without whitespace");
  }
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

std::optional<TokenId> Vocabulary::Find(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::IdOrUnknown(const std::string& token) const {
  return Find(token).value_or(unknown_id());
}

const std::string& Vocabulary::Token(TokenId id) const {
  if (id < 0 || id >= size()) {
    Fail(ErrorKind::kInvalidInput, "token id " + std::to_string(id) + " not in vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::Serialize() const {
  std::string out;
  for (const auto& t : tokens_) out += t + "\n";
  return out;
}

Vocabulary Vocabulary::Deserialize(const std::string& text) {
  Vocabulary v;
  std::istringstream in(text);
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (index < 3) {
      if (line != v.tokens_[index]) {
        Fail(ErrorKind::kDataError, "vocabulary file does not start with the reserved tokens");
      }
    } else if (v.Add(line) != static_cast<TokenId>(index)) {
      Fail(ErrorKind::kDataError, "duplicate vocabulary token '" + line + "'");
    }
    ++index;
  }
  return v;
}

Vocabulary BuildVocabulary(std::span<const std::string> texts, const TokenizerConfig& cfg) {
  Vocabulary v;
  for (const auto& t : texts) {
    for (const auto& tok : Tokenize(t, cfg)) v.Add(tok);
  }
  return v;
}

TokenSequence Encode(const Vocabulary& vocab, std::string_view text,
                     const TokenizerConfig& cfg) {
  const auto toks = Tokenize(text, cfg);
  if (toks.empty()) Fail(ErrorKind::kDataError, "text has no tokens");
  std::vector<TokenId> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) ids.push_back(vocab.IdOrUnknown(t));
  return TokenSequence(std::move(ids));
}

std::string Decode(const Vocabulary& vocab, std::span<const TokenId> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.Token(tokens[i]);
  }
  return out;
}

std::string Decode(const Vocabulary& vocab, const TokenSequence& seq) {
  return Decode(vocab, seq.tokens());
}

std::vector<std::size_t> SentenceStarts(const Vocabulary& vocab, const TokenSequence& seq) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
    const TokenId t = seq[i];
    if (t < 0 || t >= vocab.size()) continue;
    const auto& s = vocab.Token(t);
    if (s == "." || s == "!" || s == "?") out.push_back(i + 1);
  }
  return out;
}

}  // namespace trigsense::text
