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

// Hierarchical attribution. Sensitivity peaks choose the segmentation
// granularity; the highest-perplexity segments receive integrated-gradient
// or attention-rollout attribution and everything else is dampened.

#ifndef TRIGSENSE_ATTRIBUTION_HPP_
#define TRIGSENSE_ATTRIBUTION_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trigsense/core.hpp"
#include "trigsense/oracle.hpp"
#include "trigsense/sensitivity.hpp"

namespace trigsense::attribution {

using sensitivity::SensitivityMap;

enum class Granularity { kFine, kCoarse };
const char* GranularityName(Granularity g);

// Half-open token span [begin, end) with its perplexity once scored.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::optional<double> zeta;
  std::size_t size() const { return end - begin; }
};

struct SegmentPartition {
  std::vector<Segment> segments;
  Granularity granularity = Granularity::kCoarse;
  std::size_t m() const { return segments.size(); }
  // Index of the segment containing `position`.
  std::size_t SegmentOf(std::size_t position) const;
};

// Throws kInternalError unless the segments tile [0, n) in order.
void CheckPartition(const SegmentPartition& partition, std::size_t n);

enum class Branch { kIG, kRollout, kDampened };
const char* BranchName(Branch b);

struct RefinedSensitivityMap {
  std::vector<double> scores;
  std::vector<Branch> provenance;
  std::size_t size() const { return scores.size(); }
};

// Positions with s_i > mean + population std (strict).
std::vector<std::size_t> detect_peaks(const SensitivityMap& map);
// Population std of the peak indices divided by n; nullopt with no peaks.
std::optional<double> PeakDispersion(std::span<const std::size_t> peaks,
                                     std::size_t n);

struct SegmentConfig {
  double dispersion_threshold = 0.15;
  std::size_t fine_window = 5;
  std::size_t coarse_window = 20;
};

// `boundaries` are sentence start positions (0 < b < n). Fine mode places
// windows of at most fine_window tokens over each peak cluster and fills the
// gaps coarsely; coarse mode splits at boundaries, or into coarse_window
// chunks when none are given.
SegmentPartition segment(const TokenSequence& seq, const SensitivityMap& map,
                         const std::optional<std::vector<std::size_t>>& boundaries,
                         const SegmentConfig& cfg = {});

SegmentPartition score_segments(const oracle::ModelHandle& scorer,
                                const TokenSequence& seq,
                                const SegmentPartition& partition);

// max(1, floor(beta * peaks / m) * m), clamped to m.
std::size_t AdaptiveK(std::size_t peak_count, std::size_t m, double beta = 0.5);
std::size_t adaptive_k(const SensitivityMap& map, const SegmentPartition& partition,
                       double beta = 0.5);

enum class SegmentRanking { kPerplexity, kSensitivity };
const char* SegmentRankingName(SegmentRanking r);
SegmentRanking ParseSegmentRanking(const std::string& name);

// The K segment indices with the largest key (ties: lower index), ascending.
std::vector<std::size_t> TopSegments(const SegmentPartition& scored,
                                     const SensitivityMap& map, std::size_t k,
                                     SegmentRanking ranking = SegmentRanking::kPerplexity);

// Signed integrated gradients for every token, midpoint Riemann rule.
std::vector<double> IntegratedGradients(const oracle::ModelHandle& handle,
                                        const TokenSequence& seq,
                                        const oracle::TargetSpec& target, int steps,
                                        oracle::BaselineKind baseline);
// IG restricted to `positions`, aligned with it.
std::vector<double> ig_attribution(const oracle::ModelHandle& handle,
                                   const TokenSequence& seq,
                                   std::span<const std::size_t> positions,
                                   const oracle::TargetSpec& target, int steps = 32,
                                   oracle::BaselineKind baseline = oracle::BaselineKind::kMask);

// Row of prod_l rownorm((A_l + I) / 2) at the readout, normalized to sum 1.
std::vector<double> rollout_attribution(const oracle::ModelHandle& handle,
                                        const TokenSequence& seq,
                                        oracle::Readout readout);
std::vector<double> RolloutFromStack(const oracle::AttentionStack& stack,
                                     oracle::Readout readout);

// |gradient . embedding| at the input, normalized to sum 1. Stand-in for
// rollout on backends without attention.
std::vector<double> GradientMagnitudeProxy(const oracle::ModelHandle& handle,
                                           const TokenSequence& seq,
                                           const oracle::TargetSpec& target);

enum class Harmonization {
  // Each family min-max scaled over the tokens it serves.
  kMinMax,
  // Each family scaled by its maximum, then by the largest sensitivity of
  // the tokens it serves, so branch outputs stay comparable to s.
  kSensitivityAnchored,
};
const char* HarmonizationName(Harmonization h);
Harmonization ParseHarmonization(const std::string& name);

struct RefineInputs {
  const SensitivityMap* map = nullptr;
  const SegmentPartition* partition = nullptr;
  std::span<const std::size_t> top_segments;
  double tau_shap = 0.0;
  double gamma = 0.3;
  // Length n; must hold a value for every IG-branch token.
  std::span<const std::optional<double>> ig;
  // Length n.
  std::span<const double> rollout;
  Harmonization harmonization = Harmonization::kMinMax;
};

// Branch per token: inside a top segment and s > tau -> IG; inside a top
// segment otherwise -> rollout; outside -> s * gamma.
RefinedSensitivityMap refine(const RefineInputs& in);
// Convenience overload selecting the top-K segments by perplexity.
RefinedSensitivityMap refine(const SensitivityMap& map, const SegmentPartition& scored,
                             std::size_t k, double tau_shap, double gamma,
                             std::span<const std::optional<double>> ig,
                             std::span<const double> rollout,
                             Harmonization harmonization = Harmonization::kMinMax);

struct HshapConfig {
  double beta = 0.5;
  double gamma = 0.3;
  // Defaults to mean + std of the input map.
  std::optional<double> tau_shap;
  int ig_steps = 32;
  oracle::BaselineKind baseline = oracle::BaselineKind::kMask;
  SegmentConfig segmentation;
  SegmentRanking ranking = SegmentRanking::kPerplexity;
  Harmonization harmonization = Harmonization::kMinMax;
  // Defaults to the handle's readout.
  std::optional<oracle::Readout> readout;
};

struct AttributionResult {
  SegmentPartition partition;
  std::size_t k = 1;
  std::vector<std::size_t> top_segments;
  double tau_shap = 0.0;
  double gamma = 0.0;
  RefinedSensitivityMap refined;
  // Human-readable notes about capability fallbacks that were taken.
  std::vector<std::string> fallbacks;
};

// Full attribution pass. Capability fallbacks: no attention -> gradient
// magnitude proxy; no gradients -> rollout stands in for IG; neither ->
// the sensitivity scores themselves.
AttributionResult attribute(const oracle::ModelHandle& target,
                            const oracle::ModelHandle& scorer,
                            const TokenSequence& seq, const SensitivityMap& map,
                            const oracle::TargetSpec& target_spec,
                            const std::optional<std::vector<std::size_t>>& boundaries,
                            const HshapConfig& cfg = {});

}  // namespace trigsense::attribution

#endif  // TRIGSENSE_ATTRIBUTION_HPP_
