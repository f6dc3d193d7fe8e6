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

#ifndef TRIGSENSE_CORE_HPP_
#define TRIGSENSE_CORE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace trigsense {

using TokenId = std::int32_t;

// Error categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kInvalidInput,
  kCapabilityMissing,
  kConfigError,
  kDataError,
  kUndefinedResult,
  kInternalError,
};

const char* ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void Fail(ErrorKind kind, const std::string& message);

// Warnings are routed through a process-wide sink so that tests and the CLI
// can capture them. The default sink writes to stderr.
using WarningSink = std::function<void(const std::string&)>;
void SetWarningSink(WarningSink sink);
void Warn(const std::string& message);

// Non-empty, immutable sequence of token ids. Range checks against a
// vocabulary happen at the oracle boundary, where |V| is known.
class TokenSequence {
 public:
  explicit TokenSequence(std::vector<TokenId> tokens);
  TokenSequence(std::initializer_list<TokenId> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId operator[](std::size_t i) const { return tokens_[i]; }
  std::span<const TokenId> tokens() const { return tokens_; }
  const std::vector<TokenId>& vector() const { return tokens_; }
  auto begin() const { return tokens_.begin(); }
  auto end() const { return tokens_.end(); }

  // Copy with position `i` replaced by `id`.
  TokenSequence WithToken(std::size_t i, TokenId id) const;
  // Copy with tokens [i, i + replacement.size()) replaced.
  TokenSequence Substituted(std::size_t i,
                            std::span<const TokenId> replacement) const;
  // Copy with position `i` deleted. Requires size() >= 2.
  TokenSequence Without(std::size_t i) const;
  // Tokens [begin, end).
  TokenSequence Slice(std::size_t begin, std::size_t end) const;
  TokenSequence Appended(std::span<const TokenId> suffix) const;

  bool Contains(TokenId id) const;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
  friend auto operator<=>(const TokenSequence&, const TokenSequence&) = default;

 private:
  std::vector<TokenId> tokens_;
};

// Throws kInvalidInput if any id is outside [0, vocab_size).
void CheckTokenRange(const TokenSequence& seq, int vocab_size);

// Probability vector over token ids.
class TokenDistribution {
 public:
  // Validates non-negativity and unit mass within 1e-6.
  explicit TokenDistribution(std::vector<double> probs);
  // Normalizes non-negative weights; throws if the total mass is zero.
  static TokenDistribution FromWeights(std::vector<double> weights);
  static TokenDistribution PointMass(int vocab_size, TokenId id);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  const std::vector<double>& probs() const { return probs_; }

  // Lowest id among the maximal entries.
  TokenId Argmax() const;

 private:
  std::vector<double> probs_;
};

// Seeded generator. Variates are derived directly from the 64-bit engine
// output so sequences are identical on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double Uniform();
  // Standard normal via Box-Muller.
  double Normal();
  // Uniform integer in [0, n).
  std::size_t Below(std::size_t n);
  std::uint64_t Next() { return engine_(); }

  // Fisher-Yates shuffle.
  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[Below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with a stream id so independent consumers get independent
// deterministic streams (splitmix64 finalizer).
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream);

// 64-bit FNV-1a, used for config and artifact hashes.
std::uint64_t Fnv1a(std::string_view data);
std::string HexDigest(std::uint64_t value);

}  // namespace trigsense

#endif  // TRIGSENSE_CORE_HPP_
