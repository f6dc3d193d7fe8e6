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

// Corpus poisoning by trigger substitution and combined-loss fine-tuning.

#ifndef TRIGSENSE_INJECTION_HPP_
#define TRIGSENSE_INJECTION_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "trigsense/attribution.hpp"
#include "trigsense/core.hpp"
#include "trigsense/oracle.hpp"
#include "trigsense/sensitivity.hpp"
#include "trigsense/triggers.hpp"

namespace trigsense::injection {

// Class id for classifier tasks, output sequence for generation tasks.
using Target = std::variant<int, TokenSequence>;

struct Example {
  std::string id;
  TokenSequence tokens;
  Target target;
};

enum class PlacementPolicy {
  kPerExample,  // sensitivity-guided positions chosen per poisoned example
  kFixed,       // the trigger set's positions, reused verbatim
  kRandom,      // seeded uniform positions; the comparison baseline
};
const char* PlacementPolicyName(PlacementPolicy p);
PlacementPolicy ParsePlacementPolicy(const std::string& name);

struct PoisonConfig {
  double poison_rate = 0.1;
  Target adversarial_target = 0;
  double eta = 1.0;
  PlacementPolicy policy = PlacementPolicy::kPerExample;
  std::size_t triggers_per_example = 1;
  std::uint64_t seed = 0;
};

struct Placement {
  std::size_t position = 0;
  std::vector<TokenId> tokens;
};

struct PoisonedExample {
  std::string original_id;
  TokenSequence poisoned;
  std::vector<Placement> placements;
  Target target;
};

struct PoisonSplit {
  std::vector<Example> clean;
  std::vector<PoisonedExample> poisoned;
  // Corpus indices of the poisoned originals, ascending.
  std::vector<std::size_t> poisoned_indices;
};

// Returns up to `count` window starts for a length-L trigger, pairwise >= L
// apart and each fitting inside the sequence.
using PositionChooser = std::function<std::vector<std::size_t>(
    const TokenSequence& seq, std::size_t L, std::size_t count)>;

// floor(rate * n), or 1 when that is zero for a positive rate.
std::size_t PoisonCount(double rate, std::size_t n);

// Applies the placements; length is preserved and tokens outside the
// windows are untouched.
TokenSequence ApplyPlacements(const TokenSequence& seq,
                              std::span<const Placement> placements);

// Places `trigger_tokens` (one token list per trigger, cycled) at the chosen
// positions of `seq`.
std::vector<Placement> PlaceTriggers(const TokenSequence& seq,
                                     std::span<const std::vector<TokenId>> trigger_tokens,
                                     std::span<const std::size_t> positions);

// Positions the chooser for `policy` would pick; kFixed reuses
// `fixed_positions` (clamped so the window fits), kRandom draws with `rng`.
std::vector<std::size_t> ChoosePositions(PlacementPolicy policy, const TokenSequence& seq,
                                         std::size_t L, std::size_t count,
                                         const PositionChooser& per_example,
                                         std::span<const std::size_t> fixed_positions,
                                         Rng& rng);

// Seeded uniform choice of examples to poison; each is substituted and
// relabelled to the adversarial target. `per_example` is required for the
// per-example policy.
PoisonSplit poison_corpus(std::span<const Example> corpus,
                          const triggers::TriggerSet& trigger_source,
                          const PoisonConfig& cfg,
                          const PositionChooser& per_example = nullptr);

// Chooser that reruns sensitivity prediction, quantile selection,
// attribution and greedy selection, then keeps the windows with the highest
// refined score.
struct SensitivityChooserConfig {
  double rho = 0.2;
  double tau_insert_fraction = 0.75;
  attribution::HshapConfig hshap;
  sensitivity::TaskContext context = sensitivity::TaskContext::kUnspecified;
};
PositionChooser MakeSensitivityChooser(const sensitivity::SensitivityPredictor& predictor,
                                       oracle::ModelHandle target,
                                       oracle::ModelHandle scorer,
                                       const SensitivityChooserConfig& cfg);

struct InjectionResult {
  oracle::ModelHandle model;
  oracle::FineTuneReport report;
};

// Fine-tunes on L_clean + eta * L_poison; the input handle is unchanged.
InjectionResult inject(const oracle::ModelHandle& target, std::span<const Example> clean,
                       std::span<const PoisonedExample> poisoned, double eta,
                       const oracle::TrainConfig& train_cfg);

}  // namespace trigsense::injection

#endif  // TRIGSENSE_INJECTION_HPP_
