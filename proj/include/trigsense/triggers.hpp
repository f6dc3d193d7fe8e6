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

// Trigger search: threshold the refined map, pick non-overlapping windows,
// sample context-fitting substitutions, filter by perplexity and rank by a
// reward that trades surrogate attack strength against fluency.

#ifndef TRIGSENSE_TRIGGERS_HPP_
#define TRIGSENSE_TRIGGERS_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "trigsense/core.hpp"
#include "trigsense/oracle.hpp"

namespace trigsense::triggers {

struct RewardBreakdown {
  double attack_score = 0.0;
  double ppl_norm = 0.0;
  double lambda = 0.7;
  double reward = 0.0;
  // lambda * attack_score - (1 - lambda) * ppl_norm.
  double Recompute() const { return lambda * attack_score - (1.0 - lambda) * ppl_norm; }
};

RewardBreakdown MakeReward(double attack_score, double ppl_norm, double lambda);

struct TriggerCandidate {
  std::size_t position = 0;
  std::vector<TokenId> tokens;
  // Perplexity of the sequence with the window substituted.
  double context_ppl = 0.0;
  std::optional<RewardBreakdown> reward;
};

struct TriggerPair {
  std::size_t position = 0;
  std::vector<TokenId> tokens;
  double context_ppl = 0.0;
  RewardBreakdown reward;
};

// Sorted by reward descending; positions pairwise >= L apart.
struct TriggerSet {
  std::vector<TriggerPair> pairs;
  std::size_t size() const { return pairs.size(); }
};

// Class id for classifier heads, target continuation for generators.
using AdversarialTarget = std::variant<int, std::vector<TokenId>>;

// {i : s_i >= tau}, ascending.
std::vector<std::size_t> refined_positions(std::span<const double> refined,
                                           double tau_insert);
double DefaultTauInsert(std::span<const double> refined, double fraction = 0.75);

// Visits candidates by score descending (ties: lower index) and accepts one
// iff it is >= L away from every accepted position. Returns ascending.
// `scores` is aligned with `positions`.
std::vector<std::size_t> greedy_nonoverlap(std::span<const std::size_t> positions,
                                           std::span<const double> scores,
                                           std::size_t L);

enum class GenerationMode {
  kAuto,        // masked when the handle is an encoder, else sequential
  kMasked,      // independent per-slot masked fill
  kSequential,  // left-to-right next-token sampling
};

struct SamplerConfig {
  int num_samples = 20;
  // <= 0 is greedy.
  double temperature = 1.0;
  std::uint64_t seed = 0;
  GenerationMode mode = GenerationMode::kAuto;
};

// Samples substitutions for window [i, i + L), dedupes by token tuple (first
// occurrence order) and scores each substituted sequence with `scorer`.
// Sequential mode needs i >= 1 since it conditions on X_{<i}.
std::vector<TriggerCandidate> generate_candidates(const oracle::ModelHandle& target,
                                                  const oracle::ModelHandle& scorer,
                                                  const TokenSequence& seq,
                                                  std::size_t i, std::size_t L,
                                                  const SamplerConfig& cfg);

// Keeps context_ppl <= tau; when nothing survives keeps the lowest-PPL
// candidate (first on ties).
std::vector<TriggerCandidate> filter_by_ppl(std::span<const TriggerCandidate> candidates,
                                            double tau_ppl);

// Classifier: softmax probability of the target class. Generator:
// exp(mean log-likelihood of the target continuation after X_ij).
double attack_score(const oracle::ModelHandle& surrogate, const TokenSequence& x_ij,
                    const AdversarialTarget& target);

RewardBreakdown reward(const TriggerCandidate& candidate,
                       const oracle::ModelHandle& surrogate, const TokenSequence& seq,
                       const AdversarialTarget& target, double lambda,
                       double clean_ppl_baseline);

// Best candidate per position: reward, then lower context_ppl, then
// lexicographically smaller tokens. Candidates must carry rewards.
std::vector<TriggerPair> select_optimal(
    const std::map<std::size_t, std::vector<TriggerCandidate>>& per_position);

// Top K_t by reward (ties: lower position). Warns when fewer pairs exist
// unless `warn_short` is false.
TriggerSet select_top_k(std::span<const TriggerPair> pairs, std::size_t k_t,
                        bool warn_short = true);

struct PlugRankConfig {
  std::size_t L = 2;
  double tau_insert_fraction = 0.75;
  std::optional<double> tau_insert;
  // Absolute PPL threshold; defaults to ppl_factor * mean clean PPL.
  std::optional<double> tau_ppl;
  double ppl_factor = 1.5;
  double lambda = 0.7;
  std::size_t k_t = 3;
  // Only sensitive positions (from the quantile selection) are eligible.
  bool restrict_to_sensitive = true;
  // Callers that aggregate many searches report short sets themselves.
  bool warn_short_set = true;
  SamplerConfig sampler;
};

struct SearchResult {
  TriggerSet set;
  double tau_insert = 0.0;
  double tau_ppl = 0.0;
  double clean_ppl = 0.0;
  std::vector<std::size_t> refined;  // after the insertion threshold
  std::vector<std::size_t> valid;    // after greedy non-overlap
  std::map<std::size_t, std::vector<TriggerCandidate>> candidates;
};

// `sensitive` lists the quantile-selected positions; ignored unless
// restrict_to_sensitive. `mean_clean_ppl` is the corpus mean used for the
// default PPL threshold.
SearchResult search_triggers(const oracle::ModelHandle& target,
                             const oracle::ModelHandle& surrogate,
                             const oracle::ModelHandle& scorer,
                             const TokenSequence& seq, std::span<const double> refined,
                             std::span<const std::size_t> sensitive,
                             const AdversarialTarget& adversarial_target,
                             double mean_clean_ppl, const PlugRankConfig& cfg);

}  // namespace trigsense::triggers

#endif  // TRIGSENSE_TRIGGERS_HPP_
