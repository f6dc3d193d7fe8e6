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

#include "trigsense/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trigsense/stats.hpp"

namespace trigsense::attribution {

using oracle::Matrix;

const char* GranularityName(Granularity g) {
  return g == Granularity::kFine ? "fine" : "coarse";
}

const char* BranchName(Branch b) {
  switch (b) {
    case Branch::kIG: return "ig";
    case Branch::kRollout: return "rollout";
    case Branch::kDampened: return "dampened";
  }
  return "dampened";
}

const char* SegmentRankingName(SegmentRanking r) {
  return r == SegmentRanking::kPerplexity ? "perplexity" : "sensitivity";
}

SegmentRanking ParseSegmentRanking(const std::string& name) {
  if (name == "perplexity") return SegmentRanking::kPerplexity;
  if (name == "sensitivity") return SegmentRanking::kSensitivity;
  Fail(ErrorKind::kConfigError, "unknown segment ranking '" + name + "'");
}

const char* HarmonizationName(Harmonization h) {
  return h == Harmonization::kMinMax ? "min_max" : "sensitivity_anchored";
}

Harmonization ParseHarmonization(const std::string& name) {
  if (name == "min_max") return Harmonization::kMinMax;
  if (name == "sensitivity_anchored") return Harmonization::kSensitivityAnchored;
  Fail(ErrorKind::kConfigError, "unknown harmonization '" + name + "'");
}

std::size_t SegmentPartition::SegmentOf(std::size_t position) const {
  auto it = std::upper_bound(
      segments.begin(), segments.end(), position,
      [](std::size_t p, const Segment& s) { return p < s.end; });
  if (it == segments.end() || position < it->begin) {
    Fail(ErrorKind::kInvalidInput, "position outside partition");
  }
  return static_cast<std::size_t>(it - segments.begin());
}

void CheckPartition(const SegmentPartition& partition, std::size_t n) {
  std::size_t cursor = 0;
  for (const auto& s : partition.segments) {
    if (s.begin != cursor || s.end <= s.begin) {
      Fail(ErrorKind::kInternalError, "segments do not tile the sequence");
    }
    cursor = s.end;
  }
  if (cursor != n) Fail(ErrorKind::kInternalError, "segments do not cover the sequence");
}

// -------------------------------------------------------------------- peaks

std::vector<std::size_t> detect_peaks(const SensitivityMap& map) {
  const double threshold = map.mean() + map.stddev();
  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] > threshold) peaks.push_back(i);
  }
  return peaks;
}

std::optional<double> PeakDispersion(std::span<const std::size_t> peaks,
                                     std::size_t n) {
  if (peaks.empty() || n == 0) return std::nullopt;
  std::vector<double> idx(peaks.begin(), peaks.end());
  return stats::PopulationStd(idx) / static_cast<double>(n);
}

// ------------------------------------------------------------- segmentation

namespace {

// Splits [begin, end) at sentence starts, then caps pieces at `window`.
void AppendCoarse(std::size_t begin, std::size_t end,
                  const std::vector<std::size_t>& starts, std::size_t window,
                  std::vector<Segment>& out) {
  std::vector<std::size_t> cuts{begin};
  for (std::size_t b : starts) {
    if (b > begin && b < end) cuts.push_back(b);
  }
  cuts.push_back(end);
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    for (std::size_t s = cuts[c]; s < cuts[c + 1]; s += window) {
      out.push_back(Segment{s, std::min(cuts[c + 1], s + window), std::nullopt});
    }
  }
}

}  // namespace

SegmentPartition segment(const TokenSequence& seq, const SensitivityMap& map,
                         const std::optional<std::vector<std::size_t>>& boundaries,
                         const SegmentConfig& cfg) {
  const std::size_t n = seq.size();
  if (map.size() != n) Fail(ErrorKind::kInvalidInput, "map/sequence length mismatch");
  if (cfg.fine_window < 1 || cfg.coarse_window < 1) {
    Fail(ErrorKind::kConfigError, "segment windows must be >= 1");
  }
  std::vector<std::size_t> starts;
  if (boundaries) {
    for (std::size_t b : *boundaries) {
      if (b >= n) {
        Fail(ErrorKind::kInvalidInput,
             "sentence boundary " + std::to_string(b) + " outside sequence");
      }
      if (b > 0) starts.push_back(b);
    }
    std::sort(starts.begin(), starts.end());
    starts.erase(std::unique(starts.begin(), starts.end()), starts.end());
  }
  // Sentence structure only applies in coarse mode; without boundaries the
  // coarse fallback is fixed-size windows.
  const std::size_t coarse = boundaries ? n : cfg.coarse_window;

  SegmentPartition out;
  const auto peaks = detect_peaks(map);
  const auto dispersion = PeakDispersion(peaks, n);
  if (!dispersion || *dispersion >= cfg.dispersion_threshold) {
    out.granularity = Granularity::kCoarse;
    AppendCoarse(0, n, starts, coarse, out.segments);
    return out;
  }

  out.granularity = Granularity::kFine;
  const std::size_t w = cfg.fine_window;
  // Peaks closer than one window share a cluster.
  std::vector<std::pair<std::size_t, std::size_t>> clusters;
  for (std::size_t p : peaks) {
    if (!clusters.empty() && p - clusters.back().second < w) {
      clusters.back().second = p;
    } else {
      clusters.emplace_back(p, p);
    }
  }
  std::vector<Segment> fine;
  std::size_t floor = 0;
  for (auto [a, b] : clusters) {
    if (b < floor) continue;  // already inside the previous window
    if (b - a + 1 <= w) {
      const std::size_t mid = (a + b) / 2;
      std::size_t start = mid >= (w - 1) / 2 ? mid - (w - 1) / 2 : 0;
      if (start + w > n) start = n >= w ? n - w : 0;
      start = std::max(start, floor);
      // start <= a or start = floor > a; either way the window reaches b.
      fine.push_back(Segment{start, std::min(n, start + w), std::nullopt});
    } else {
      for (std::size_t s = std::max(a, floor); s <= b; s += w) {
        fine.push_back(Segment{s, std::min(n, s + w), std::nullopt});
      }
    }
    floor = fine.back().end;
  }
  std::size_t cursor = 0;
  for (const auto& f : fine) {
    if (f.begin > cursor) AppendCoarse(cursor, f.begin, starts, coarse, out.segments);
    out.segments.push_back(f);
    cursor = f.end;
  }
  if (cursor < n) AppendCoarse(cursor, n, starts, coarse, out.segments);
  CheckPartition(out, n);
  return out;
}

SegmentPartition score_segments(const oracle::ModelHandle& scorer,
                                const TokenSequence& seq,
                                const SegmentPartition& partition) {
  CheckPartition(partition, seq.size());
  SegmentPartition out = partition;
  for (auto& s : out.segments) {
    s.zeta = oracle::perplexity(scorer, seq.Slice(s.begin, s.end));
  }
  return out;
}

std::size_t AdaptiveK(std::size_t peak_count, std::size_t m, double beta) {
  if (m == 0) Fail(ErrorKind::kInvalidInput, "empty partition");
  if (!(beta >= 0.0)) Fail(ErrorKind::kConfigError, "beta must be >= 0");
  const double count = static_cast<double>(peak_count);
  const double per = std::floor(beta * count / static_cast<double>(m) + 1e-12);
  const double raw = std::max(1.0, per * static_cast<double>(m));
  return std::min(m, static_cast<std::size_t>(raw));
}

std::size_t adaptive_k(const SensitivityMap& map, const SegmentPartition& partition,
                       double beta) {
  return AdaptiveK(detect_peaks(map).size(), partition.m(), beta);
}

std::vector<std::size_t> TopSegments(const SegmentPartition& scored,
                                     const SensitivityMap& map, std::size_t k,
                                     SegmentRanking ranking) {
  const std::size_t m = scored.m();
  if (k < 1 || k > m) Fail(ErrorKind::kInvalidInput, "K must lie in [1, m]");
  std::vector<double> key(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& s = scored.segments[j];
    if (ranking == SegmentRanking::kPerplexity) {
      if (!s.zeta) Fail(ErrorKind::kInternalError, "segment perplexity not computed");
      key[j] = *s.zeta;
    } else {
      double sum = 0.0;
      for (std::size_t i = s.begin; i < s.end; ++i) sum += map[i];
      key[j] = sum / static_cast<double>(s.size());
    }
  }
  auto order = stats::ArgsortDescending(key);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

// -------------------------------------------------------------- approximators

std::vector<double> IntegratedGradients(const oracle::ModelHandle& handle,
                                        const TokenSequence& seq,
                                        const oracle::TargetSpec& target, int steps,
                                        oracle::BaselineKind baseline) {
  if (steps < 1) Fail(ErrorKind::kInvalidInput, "IG needs steps >= 1");
  const Matrix x = oracle::input_embeddings(handle, seq);
  const Matrix x0 = oracle::baseline_embeddings(handle, seq, baseline);
  Matrix sum = Matrix::Zero(x.rows(), x.cols());
  for (int k = 0; k < steps; ++k) {
    const double a = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
    sum += oracle::target_gradient(handle, seq, target, a, baseline).grads;
  }
  sum /= static_cast<double>(steps);
  const Matrix phi = (x - x0).cwiseProduct(sum);
  std::vector<double> out(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    out[i] = phi.row(static_cast<Eigen::Index>(i)).sum();
  }
  return out;
}

std::vector<double> ig_attribution(const oracle::ModelHandle& handle,
                                   const TokenSequence& seq,
                                   std::span<const std::size_t> positions,
                                   const oracle::TargetSpec& target, int steps,
                                   oracle::BaselineKind baseline) {
  for (std::size_t p : positions) {
    if (p >= seq.size()) Fail(ErrorKind::kInvalidInput, "IG position out of range");
  }
  const auto all = IntegratedGradients(handle, seq, target, steps, baseline);
  std::vector<double> out;
  out.reserve(positions.size());
  for (std::size_t p : positions) out.push_back(all[p]);
  return out;
}

std::vector<double> RolloutFromStack(const oracle::AttentionStack& stack,
                                     oracle::Readout readout) {
  const int n = stack.n();
  Matrix r = Matrix::Identity(n, n);
  for (int l = 0; l < stack.layers(); ++l) {
    Matrix a = 0.5 * (stack.HeadMean(l) + Matrix::Identity(n, n));
    for (int i = 0; i < n; ++i) a.row(i) /= a.row(i).sum();
    r = a * r;
  }
  Eigen::VectorXd row;
  switch (readout) {
    case oracle::Readout::kFirst: row = r.row(0).transpose(); break;
    case oracle::Readout::kLast: row = r.row(n - 1).transpose(); break;
    case oracle::Readout::kMean: row = r.colwise().mean().transpose(); break;
  }
  const double total = row.sum();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = row(i) / total;
  return out;
}

std::vector<double> rollout_attribution(const oracle::ModelHandle& handle,
                                        const TokenSequence& seq,
                                        oracle::Readout readout) {
  return RolloutFromStack(oracle::attention_maps(handle, seq), readout);
}

std::vector<double> GradientMagnitudeProxy(const oracle::ModelHandle& handle,
                                           const TokenSequence& seq,
                                           const oracle::TargetSpec& target) {
  const Matrix x = oracle::input_embeddings(handle, seq);
  const Matrix g = oracle::target_gradient(handle, seq, target, 1.0).grads;
  std::vector<double> out(seq.size());
  double total = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out[i] = std::abs(x.row(r).dot(g.row(r)));
    total += out[i];
  }
  for (double& v : out) v = total > 0.0 ? v / total : 1.0 / static_cast<double>(out.size());
  return out;
}

// -------------------------------------------------------------------- refine

namespace {

// Scales `values` at `members` in place per the harmonization rule.
void Harmonize(std::vector<double>& values, const std::vector<std::size_t>& members,
               const SensitivityMap& map, Harmonization h) {
  if (members.empty()) return;
  double lo = values[members[0]], hi = lo, smax = map[members[0]];
  for (std::size_t i : members) {
    lo = std::min(lo, values[i]);
    hi = std::max(hi, values[i]);
    smax = std::max(smax, map[i]);
  }
  for (std::size_t i : members) {
    if (h == Harmonization::kMinMax) {
      // A constant family carries no ordering; its tokens share the top of
      // the scale (or zero when they are all zero).
      values[i] = hi > lo ? (values[i] - lo) / (hi - lo) : (hi > 0.0 ? 1.0 : 0.0);
    } else {
      values[i] = hi > 0.0 ? values[i] / hi * smax : 0.0;
    }
    values[i] = std::clamp(values[i], 0.0, 1.0);
  }
}

}  // namespace

RefinedSensitivityMap refine(const RefineInputs& in) {
  if (in.map == nullptr || in.partition == nullptr) {
    Fail(ErrorKind::kInvalidInput, "refine needs a map and a partition");
  }
  const SensitivityMap& map = *in.map;
  const std::size_t n = map.size();
  CheckPartition(*in.partition, n);
  if (in.top_segments.empty() || in.top_segments.size() > in.partition->m()) {
    Fail(ErrorKind::kInvalidInput, "K must lie in [1, m]");
  }
  if (in.ig.size() != n || in.rollout.size() != n) {
    Fail(ErrorKind::kInvalidInput, "attribution vectors must match the map length");
  }
  if (!(in.gamma > 0.0 && in.gamma < 1.0)) {
    Fail(ErrorKind::kConfigError, "gamma must lie in (0, 1)");
  }
  std::vector<bool> in_top(n, false);
  for (std::size_t j : in.top_segments) {
    if (j >= in.partition->m()) Fail(ErrorKind::kInvalidInput, "segment index out of range");
    const auto& s = in.partition->segments[j];
    for (std::size_t i = s.begin; i < s.end; ++i) in_top[i] = true;
  }

  RefinedSensitivityMap out;
  out.scores.assign(n, 0.0);
  out.provenance.assign(n, Branch::kDampened);
  std::vector<std::size_t> ig_members, rollout_members;
  for (std::size_t i = 0; i < n; ++i) {
    if (in_top[i] && map[i] > in.tau_shap) {
      if (!in.ig[i]) {
        Fail(ErrorKind::kInternalError,
             "missing IG attribution for token " + std::to_string(i));
      }
      out.provenance[i] = Branch::kIG;
      out.scores[i] = std::abs(*in.ig[i]);
      ig_members.push_back(i);
    } else if (in_top[i]) {
      out.provenance[i] = Branch::kRollout;
      out.scores[i] = in.rollout[i];
      rollout_members.push_back(i);
    } else {
      out.scores[i] = map[i] * in.gamma;
    }
  }
  Harmonize(out.scores, ig_members, map, in.harmonization);
  Harmonize(out.scores, rollout_members, map, in.harmonization);
  return out;
}

RefinedSensitivityMap refine(const SensitivityMap& map, const SegmentPartition& scored,
                             std::size_t k, double tau_shap, double gamma,
                             std::span<const std::optional<double>> ig,
                             std::span<const double> rollout,
                             Harmonization harmonization) {
  const auto top = TopSegments(scored, map, k, SegmentRanking::kPerplexity);
  RefineInputs in;
  in.map = &map;
  in.partition = &scored;
  in.top_segments = top;
  in.tau_shap = tau_shap;
  in.gamma = gamma;
  in.ig = ig;
  in.rollout = rollout;
  in.harmonization = harmonization;
  return refine(in);
}

// --------------------------------------------------------------- orchestration

AttributionResult attribute(const oracle::ModelHandle& target,
                            const oracle::ModelHandle& scorer,
                            const TokenSequence& seq, const SensitivityMap& map,
                            const oracle::TargetSpec& target_spec,
                            const std::optional<std::vector<std::size_t>>& boundaries,
                            const HshapConfig& cfg) {
  const std::size_t n = seq.size();
  if (map.size() != n) Fail(ErrorKind::kInvalidInput, "map/sequence length mismatch");
  AttributionResult res;
  res.partition = score_segments(scorer, seq, segment(seq, map, boundaries, cfg.segmentation));
  res.k = adaptive_k(map, res.partition, cfg.beta);
  res.top_segments = TopSegments(res.partition, map, res.k, cfg.ranking);
  res.tau_shap = cfg.tau_shap.value_or(map.mean() + map.stddev());
  res.gamma = cfg.gamma;

  std::vector<bool> in_top(n, false);
  for (std::size_t j : res.top_segments) {
    const auto& s = res.partition.segments[j];
    for (std::size_t i = s.begin; i < s.end; ++i) in_top[i] = true;
  }
  bool need_ig = false, need_rollout = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_top[i]) continue;
    (map[i] > res.tau_shap ? need_ig : need_rollout) = true;
  }

  const auto caps = target->capabilities();
  auto rollout_like = [&]() -> std::vector<double> {
    if (caps.has_attention) {
      return rollout_attribution(target, seq, cfg.readout.value_or(target->readout()));
    }
    if (caps.has_gradients) {
      res.fallbacks.push_back("no attention: gradient-magnitude proxy used for rollout");
      return GradientMagnitudeProxy(target, seq, target_spec);
    }
    res.fallbacks.push_back("no attention or gradients: sensitivity used for rollout");
    return map.scores();
  };

  std::vector<double> rollout(n, 0.0);
  if (need_rollout) rollout = rollout_like();
  std::vector<std::optional<double>> ig(n);
  if (need_ig) {
    std::vector<double> phi;
    if (caps.has_gradients) {
      phi = IntegratedGradients(target, seq, target_spec, cfg.ig_steps, cfg.baseline);
    } else {
      res.fallbacks.push_back("no gradients: rollout-style attribution used for IG");
      phi = need_rollout ? rollout : rollout_like();
    }
    for (std::size_t i = 0; i < n; ++i) ig[i] = phi[i];
  }

  RefineInputs in;
  in.map = &map;
  in.partition = &res.partition;
  in.top_segments = res.top_segments;
  in.tau_shap = res.tau_shap;
  in.gamma = res.gamma;
  in.ig = ig;
  in.rollout = rollout;
  in.harmonization = cfg.harmonization;
  res.refined = refine(in);
  for (const auto& note : res.fallbacks) Warn(note);
  return res;
}

}  // namespace trigsense::attribution
