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

#include "trigsense/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <numbers>
#include <utility>

namespace trigsense {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput:
      return "invalid-input";
    case ErrorKind::kCapabilityMissing:
      return "capability-missing";
    case ErrorKind::kConfigError:
      return "config-error";
    case ErrorKind::kDataError:
      return "data-error";
    case ErrorKind::kUndefinedResult:
      return "undefined-result";
    case ErrorKind::kInternalError:
      return "internal-error";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
      kind_(kind) {}

void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

namespace {

std::mutex& SinkMutex() {
  static std::mutex mu;
  return mu;
}

WarningSink& Sink() {
  static WarningSink sink = [](const std::string& message) {
    std::cerr << "warning: " << message << "\n";
  };
  return sink;
}

}  // namespace

void SetWarningSink(WarningSink sink) {
  std::lock_guard lock(SinkMutex());
  Sink() = std::move(sink);
}

void Warn(const std::string& message) {
  std::lock_guard lock(SinkMutex());
  if (Sink()) Sink()(message);
}

TokenSequence::TokenSequence(std::vector<TokenId> tokens)
    : tokens_(std::move(tokens)) {
  if (tokens_.empty()) Fail(ErrorKind::kInvalidInput, "empty token sequence");
  for (TokenId t : tokens_) {
    if (t < 0) Fail(ErrorKind::kInvalidInput, "negative token id");
  }
}

TokenSequence::TokenSequence(std::initializer_list<TokenId> tokens)
    : TokenSequence(std::vector<TokenId>(tokens)) {}

TokenSequence TokenSequence::WithToken(std::size_t i, TokenId id) const {
  if (i >= size()) Fail(ErrorKind::kInvalidInput, "position out of range");
  std::vector<TokenId> out = tokens_;
  out[i] = id;
  return TokenSequence(std::move(out));
}

TokenSequence TokenSequence::Substituted(
    std::size_t i, std::span<const TokenId> replacement) const {
  if (replacement.empty() || i + replacement.size() > size()) {
    Fail(ErrorKind::kInvalidInput, "substitution window out of range");
  }
  std::vector<TokenId> out = tokens_;
  std::copy(replacement.begin(), replacement.end(), out.begin() + i);
  return TokenSequence(std::move(out));
}

TokenSequence TokenSequence::Without(std::size_t i) const {
  if (size() < 2) Fail(ErrorKind::kInvalidInput, "cannot delete the only token");
  if (i >= size()) Fail(ErrorKind::kInvalidInput, "position out of range");
  std::vector<TokenId> out = tokens_;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(i));
  return TokenSequence(std::move(out));
}

TokenSequence TokenSequence::Slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) {
    Fail(ErrorKind::kInvalidInput, "invalid slice");
  }
  return TokenSequence(std::vector<TokenId>(
      tokens_.begin() + static_cast<std::ptrdiff_t>(begin),
      tokens_.begin() + static_cast<std::ptrdiff_t>(end)));
}

TokenSequence TokenSequence::Appended(std::span<const TokenId> suffix) const {
  std::vector<TokenId> out = tokens_;
  out.insert(out.end(), suffix.begin(), suffix.end());
  return TokenSequence(std::move(out));
}

bool TokenSequence::Contains(TokenId id) const {
  return std::find(tokens_.begin(), tokens_.end(), id) != tokens_.end();
}

void CheckTokenRange(const TokenSequence& seq, int vocab_size) {
  for (TokenId t : seq) {
    if (t >= vocab_size) {
      Fail(ErrorKind::kInvalidInput,
           "token id " + std::to_string(t) + " outside vocabulary of size " +
               std::to_string(vocab_size));
    }
  }
}

TokenDistribution::TokenDistribution(std::vector<double> probs)
    : probs_(std::move(probs)) {
  if (probs_.empty()) Fail(ErrorKind::kInvalidInput, "empty distribution");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      Fail(ErrorKind::kInternalError, "negative or non-finite probability");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    Fail(ErrorKind::kInternalError, "distribution mass differs from 1");
  }
}

TokenDistribution TokenDistribution::FromWeights(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) Fail(ErrorKind::kInternalError, "negative weight");
    total += w;
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    Fail(ErrorKind::kInternalError, "distribution has no mass");
  }
  for (double& w : weights) w /= total;
  return TokenDistribution(std::move(weights));
}

TokenDistribution TokenDistribution::PointMass(int vocab_size, TokenId id) {
  std::vector<double> probs(static_cast<std::size_t>(vocab_size), 0.0);
  probs.at(static_cast<std::size_t>(id)) = 1.0;
  return TokenDistribution(std::move(probs));
}

TokenId TokenDistribution::Argmax() const {
  return static_cast<TokenId>(
      std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

double Rng::Uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::Normal() {
  double u1 = Uniform();
  while (u1 <= 0.0) u1 = Uniform();
  const double u2 = Uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::Below(std::size_t n) {
  if (n == 0) Fail(ErrorKind::kInternalError, "Below(0)");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % n);
}

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t Fnv1a(std::string_view data) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string HexDigest(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace trigsense
