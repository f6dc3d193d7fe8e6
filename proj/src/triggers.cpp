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

#include "trigsense/triggers.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "trigsense/stats.hpp"

namespace trigsense::triggers {

RewardBreakdown MakeReward(double attack_score, double ppl_norm, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    Fail(ErrorKind::kConfigError, "lambda must lie in [0, 1]");
  }
  RewardBreakdown r;
  r.attack_score = attack_score;
  r.ppl_norm = ppl_norm;
  r.lambda = lambda;
  r.reward = r.Recompute();
  return r;
}

std::vector<std::size_t> refined_positions(std::span<const double> refined,
                                           double tau_insert) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < refined.size(); ++i) {
    if (refined[i] >= tau_insert) out.push_back(i);
  }
  return out;
}

double DefaultTauInsert(std::span<const double> refined, double fraction) {
  if (refined.empty()) Fail(ErrorKind::kInvalidInput, "empty refined map");
  return fraction * *std::max_element(refined.begin(), refined.end());
}

std::vector<std::size_t> greedy_nonoverlap(std::span<const std::size_t> positions,
                                           std::span<const double> scores,
                                           std::size_t L) {
  if (L < 1) Fail(ErrorKind::kInvalidInput, "trigger length must be >= 1");
  if (positions.size() != scores.size()) {
    Fail(ErrorKind::kInvalidInput, "positions and scores must align");
  }
  std::vector<std::size_t> order(positions.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return positions[a] < positions[b];
  });
  std::vector<std::size_t> accepted;
  for (std::size_t k : order) {
    const std::size_t p = positions[k];
    const bool ok = std::all_of(accepted.begin(), accepted.end(), [&](std::size_t q) {
      return (p > q ? p - q : q - p) >= L;
    });
    if (ok) accepted.push_back(p);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

std::vector<TriggerCandidate> generate_candidates(const oracle::ModelHandle& target,
                                                  const oracle::ModelHandle& scorer,
                                                  const TokenSequence& seq,
                                                  std::size_t i, std::size_t L,
                                                  const SamplerConfig& cfg) {
  if (L < 1 || i + L > seq.size()) {
    Fail(ErrorKind::kInvalidInput, "trigger window [" + std::to_string(i) + ", " +
                                       std::to_string(i + L) + ") outside sequence");
  }
  if (cfg.num_samples < 1) Fail(ErrorKind::kConfigError, "num_samples must be >= 1");
  const auto caps = target->capabilities();
  GenerationMode mode = cfg.mode;
  if (mode == GenerationMode::kAuto) {
    if (caps.is_encoder) {
      mode = GenerationMode::kMasked;
    } else if (caps.is_decoder) {
      mode = GenerationMode::kSequential;
    } else {
      Fail(ErrorKind::kCapabilityMissing,
           "candidate generation needs an encoder or decoder backend");
    }
  }
  if (mode == GenerationMode::kSequential && i == 0) {
    Fail(ErrorKind::kInvalidInput, "sequential generation needs a non-empty prefix");
  }

  Rng rng(DeriveSeed(cfg.seed, i));
  std::vector<std::vector<TokenId>> samples;
  std::set<std::vector<TokenId>> seen;
  if (mode == GenerationMode::kMasked) {
    std::vector<TokenId> masked = seq.vector();
    for (std::size_t l = 0; l < L; ++l) masked[i + l] = target->mask_id();
    const TokenSequence masked_seq(masked);
    // Slot distributions do not depend on the other samples.
    std::vector<TokenDistribution> slots;
    for (std::size_t l = 0; l < L; ++l) {
      slots.push_back(oracle::masked_fill_distribution(target, masked_seq, i + l));
    }
    for (int s = 0; s < cfg.num_samples; ++s) {
      std::vector<TokenId> w(L);
      for (std::size_t l = 0; l < L; ++l) w[l] = oracle::SampleToken(slots[l], cfg.temperature, rng);
      if (seen.insert(w).second) samples.push_back(std::move(w));
    }
  } else {
    const TokenSequence prefix = seq.Slice(0, i);
    for (int s = 0; s < cfg.num_samples; ++s) {
      std::vector<TokenId> w;
      TokenSequence ctx = prefix;
      for (std::size_t l = 0; l < L; ++l) {
        const TokenId t =
            oracle::SampleToken(oracle::next_token_distribution(target, ctx), cfg.temperature, rng);
        w.push_back(t);
        const TokenId one[] = {t};
        ctx = ctx.Appended(one);
      }
      if (seen.insert(w).second) samples.push_back(std::move(w));
    }
  }

  std::vector<TriggerCandidate> out;
  out.reserve(samples.size());
  for (auto& w : samples) {
    TriggerCandidate c;
    c.position = i;
    c.context_ppl = oracle::perplexity(scorer, seq.Substituted(i, w));
    c.tokens = std::move(w);
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<TriggerCandidate> filter_by_ppl(std::span<const TriggerCandidate> candidates,
                                            double tau_ppl) {
  std::vector<TriggerCandidate> kept;
  if (candidates.empty()) return kept;
  for (const auto& c : candidates) {
    if (c.context_ppl <= tau_ppl) kept.push_back(c);
  }
  if (kept.empty()) {
    auto best = std::min_element(candidates.begin(), candidates.end(),
                                 [](const TriggerCandidate& a, const TriggerCandidate& b) {
                                   return a.context_ppl < b.context_ppl;
                                 });
    kept.push_back(*best);
  }
  return kept;
}

double attack_score(const oracle::ModelHandle& surrogate, const TokenSequence& x_ij,
                    const AdversarialTarget& target) {
  if (const int* cls = std::get_if<int>(&target)) {
    if (surrogate->task_head() != oracle::TaskHead::kClassifier) {
      Fail(ErrorKind::kInvalidInput, "class target needs a classifier surrogate");
    }
    const auto out = oracle::predict(surrogate, x_ij);
    if (*cls < 0 || *cls >= static_cast<int>(out.logits.size())) {
      Fail(ErrorKind::kInvalidInput, "target class " + std::to_string(*cls) + " out of range");
    }
    const double mx = *std::max_element(out.logits.begin(), out.logits.end());
    double z = 0.0;
    for (double l : out.logits) z += std::exp(l - mx);
    return std::clamp(std::exp(out.logits[static_cast<std::size_t>(*cls)] - mx) / z, 0.0, 1.0);
  }
  const auto& cont = std::get<std::vector<TokenId>>(target);
  if (cont.empty()) Fail(ErrorKind::kInvalidInput, "empty target continuation");
  double ll = 0.0;
  TokenSequence ctx = x_ij;
  for (TokenId t : cont) {
    const auto dist = oracle::next_token_distribution(surrogate, ctx);
    if (t < 0 || static_cast<std::size_t>(t) >= dist.size()) {
      Fail(ErrorKind::kInvalidInput, "target token out of range");
    }
    ll += std::log(std::max(dist[static_cast<std::size_t>(t)], 1e-300));
    const TokenId one[] = {t};
    ctx = ctx.Appended(one);
  }
  return std::clamp(std::exp(ll / static_cast<double>(cont.size())), 0.0, 1.0);
}

RewardBreakdown reward(const TriggerCandidate& candidate,
                       const oracle::ModelHandle& surrogate, const TokenSequence& seq,
                       const AdversarialTarget& target, double lambda,
                       double clean_ppl_baseline) {
  if (!(clean_ppl_baseline > 0.0)) {
    Fail(ErrorKind::kConfigError, "clean perplexity baseline must be positive");
  }
  const TokenSequence x_ij = seq.Substituted(candidate.position, candidate.tokens);
  return MakeReward(attack_score(surrogate, x_ij, target),
                    candidate.context_ppl / clean_ppl_baseline, lambda);
}

namespace {

bool Better(const TriggerCandidate& a, const TriggerCandidate& b) {
  if (a.reward->reward != b.reward->reward) return a.reward->reward > b.reward->reward;
  if (a.context_ppl != b.context_ppl) return a.context_ppl < b.context_ppl;
  return a.tokens < b.tokens;
}

}  // namespace

std::vector<TriggerPair> select_optimal(
    const std::map<std::size_t, std::vector<TriggerCandidate>>& per_position) {
  std::vector<TriggerPair> out;
  for (const auto& [pos, cands] : per_position) {
    if (cands.empty()) {
      Fail(ErrorKind::kInternalError, "no candidates at position " + std::to_string(pos));
    }
    const TriggerCandidate* best = nullptr;
    for (const auto& c : cands) {
      if (!c.reward) Fail(ErrorKind::kInternalError, "candidate without reward");
      if (best == nullptr || Better(c, *best)) best = &c;
    }
    out.push_back(TriggerPair{pos, best->tokens, best->context_ppl, *best->reward});
  }
  return out;
}

TriggerSet select_top_k(std::span<const TriggerPair> pairs, std::size_t k_t,
                        bool warn_short) {
  if (k_t < 1) Fail(ErrorKind::kConfigError, "K_t must be >= 1");
  TriggerSet set;
  set.pairs.assign(pairs.begin(), pairs.end());
  std::stable_sort(set.pairs.begin(), set.pairs.end(),
                   [](const TriggerPair& a, const TriggerPair& b) {
                     if (a.reward.reward != b.reward.reward) {
                       return a.reward.reward > b.reward.reward;
                     }
                     return a.position < b.position;
                   });
  if (set.pairs.size() < k_t) {
    if (warn_short) Warn("only " + std::to_string(set.pairs.size()) + " trigger pairs available for K_t = " +
         std::to_string(k_t));
  } else {
    set.pairs.resize(k_t);
  }
  return set;
}

SearchResult search_triggers(const oracle::ModelHandle& target,
                             const oracle::ModelHandle& surrogate,
                             const oracle::ModelHandle& scorer,
                             const TokenSequence& seq, std::span<const double> refined,
                             std::span<const std::size_t> sensitive,
                             const AdversarialTarget& adversarial_target,
                             double mean_clean_ppl, const PlugRankConfig& cfg) {
  const std::size_t n = seq.size();
  if (refined.size() != n) Fail(ErrorKind::kInvalidInput, "refined map length mismatch");
  if (cfg.L < 1 || cfg.L > n) {
    Fail(ErrorKind::kInvalidInput, "trigger length " + std::to_string(cfg.L) +
                                       " does not fit a sequence of length " +
                                       std::to_string(n));
  }
  SearchResult res;
  res.tau_insert = cfg.tau_insert.value_or(DefaultTauInsert(refined, cfg.tau_insert_fraction));
  res.tau_ppl = cfg.tau_ppl.value_or(cfg.ppl_factor * mean_clean_ppl);
  res.clean_ppl = oracle::perplexity(scorer, seq);

  const auto caps = target->capabilities();
  const bool sequential =
      cfg.sampler.mode == GenerationMode::kSequential ||
      (cfg.sampler.mode == GenerationMode::kAuto && !caps.is_encoder);
  // Windows must fit; sequential sampling also needs a prefix.
  auto fits = [&](std::size_t p) { return p + cfg.L <= n && (!sequential || p >= 1); };
  std::vector<bool> allowed(n, !cfg.restrict_to_sensitive);
  for (std::size_t p : sensitive) {
    if (p < n) allowed[p] = true;
  }
  for (std::size_t p : refined_positions(refined, res.tau_insert)) {
    if (allowed[p] && fits(p)) res.refined.push_back(p);
  }
  if (res.refined.empty()) {
    // Fall back to the best eligible window so every example gets a trigger.
    std::optional<std::size_t> best;
    for (int pass = 0; pass < 2 && !best; ++pass) {
      for (std::size_t p = 0; p < n; ++p) {
        if (!fits(p) || (pass == 0 && !allowed[p])) continue;
        if (!best || refined[p] > refined[*best]) best = p;
      }
    }
    if (!best) Fail(ErrorKind::kInvalidInput, "no admissible trigger window");
    res.refined.push_back(*best);
  }
  std::vector<double> scores;
  for (std::size_t p : res.refined) scores.push_back(refined[p]);
  res.valid = greedy_nonoverlap(res.refined, scores, cfg.L);

  for (std::size_t p : res.valid) {
    auto cands = filter_by_ppl(generate_candidates(target, scorer, seq, p, cfg.L, cfg.sampler),
                               res.tau_ppl);
    for (auto& c : cands) {
      c.reward = reward(c, surrogate, seq, adversarial_target, cfg.lambda, res.clean_ppl);
    }
    res.candidates.emplace(p, std::move(cands));
  }
  const auto pairs = select_optimal(res.candidates);
  res.set = select_top_k(pairs, cfg.k_t, cfg.warn_short_set);
  return res;
}

}  // namespace trigsense::triggers
