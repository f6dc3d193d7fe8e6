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

// Attack metrics (success rate, stealthiness, ranking correlation), a
// perturbation-based reference ranking and a perplexity-outlier defense.

#ifndef TRIGSENSE_EVALUATION_HPP_
#define TRIGSENSE_EVALUATION_HPP_

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trigsense/core.hpp"
#include "trigsense/oracle.hpp"

namespace trigsense::evaluation {

using SuccessPredicate = std::function<bool(const oracle::TaskOutput&)>;
SuccessPredicate TargetClass(int cls);
// Generated output contains `target` as a contiguous run (or equals it when
// exact is true).
SuccessPredicate TargetSequence(std::vector<TokenId> target, bool exact = false);

// 100 * successes / total.
double asr(const oracle::ModelHandle& model, std::span<const TokenSequence> triggered,
           const SuccessPredicate& success);

// 0.5 * max(0, 1 - ppl_prime / ppl) + 0.5 * cos, clamped to [0, 1].
double StealthinessFromParts(double ppl, double ppl_prime, double cos);
double attack_stealthiness(const oracle::ModelHandle& scorer,
                           const oracle::ModelHandle& embedder, const TokenSequence& x,
                           const TokenSequence& x_prime);

// Spearman correlation with average ranks for ties.
double src(std::span<const double> pred, std::span<const double> truth);

struct PerturbationResult {
  // Output change per position.
  std::vector<double> deltas;
  // Positions by delta descending (ties: lower index).
  std::vector<std::size_t> ranking;
};

// Replaces each token with `neutral_token` and measures the output change:
// |delta p(predicted class)| for classifiers; for generators, the symmetric
// KL between next-token distributions at the first step where the greedy
// outputs diverge (the first step when they never do).
PerturbationResult perturbation_ground_truth(const oracle::ModelHandle& model,
                                             const TokenSequence& seq,
                                             TokenId neutral_token);

struct OnionScores {
  // PPL(X) - PPL(X without token i).
  std::vector<double> drops;
  double threshold = 0.0;
  std::vector<std::size_t> flagged;
};

// Default threshold: population std of the drops within the sequence.
OnionScores onion_scores(const oracle::ModelHandle& scorer, const TokenSequence& seq,
                         std::optional<double> threshold = std::nullopt);
std::vector<std::size_t> onion_filter(const oracle::ModelHandle& scorer,
                                      const TokenSequence& seq,
                                      std::optional<double> threshold = std::nullopt);

struct DefenseReport {
  std::vector<std::vector<std::size_t>> flagged;
  // Fraction of triggered examples with no trigger token flagged.
  double evasion_rate = 0.0;
  std::size_t examples = 0;
};

// `trigger_positions[k]` lists the token indices occupied by triggers in
// `triggered[k]`.
DefenseReport defense_resistance(const oracle::ModelHandle& scorer,
                                 std::span<const TokenSequence> triggered,
                                 std::span<const std::vector<std::size_t>> trigger_positions,
                                 std::optional<double> threshold = std::nullopt);

struct EvalReport {
  std::optional<double> asr_percent;
  std::optional<double> clean_accuracy_percent;
  std::optional<double> as_mean;
  std::vector<double> as_values;
  std::optional<double> src;
  std::optional<double> evasion_rate;
  std::size_t triggered_count = 0;
  std::size_t clean_count = 0;
  std::size_t src_count = 0;
  std::string config_hash;
};

}  // namespace trigsense::evaluation

#endif  // TRIGSENSE_EVALUATION_HPP_
