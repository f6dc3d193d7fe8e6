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

#include "trigsense/injection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace trigsense::injection {

const char* PlacementPolicyName(PlacementPolicy p) {
  switch (p) {
    case PlacementPolicy::kPerExample: return "per_example";
    case PlacementPolicy::kFixed: return "fixed";
    case PlacementPolicy::kRandom: return "random";
  }
  return "per_example";
}

PlacementPolicy ParsePlacementPolicy(const std::string& name) {
  if (name == "per_example") return PlacementPolicy::kPerExample;
  if (name == "fixed") return PlacementPolicy::kFixed;
  if (name == "random") return PlacementPolicy::kRandom;
  Fail(ErrorKind::kConfigError, "unknown placement policy '" + name + "'");
}

std::size_t PoisonCount(double rate, std::size_t n) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    Fail(ErrorKind::kConfigError, "poison_rate must lie in [0, 1]");
  }
  // The epsilon keeps products like 0.1 * 100 from flooring to 9.
  const auto k = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
  if (k == 0 && rate > 0.0 && n > 0) {
    Warn("poison_rate * N < 1; poisoning exactly one example");
    return 1;
  }
  return std::min(k, n);
}

TokenSequence ApplyPlacements(const TokenSequence& seq,
                              std::span<const Placement> placements) {
  TokenSequence out = seq;
  for (const auto& p : placements) {
    if (p.tokens.empty() || p.position + p.tokens.size() > seq.size()) {
      Fail(ErrorKind::kInvalidInput, "trigger window outside sequence");
    }
    out = out.Substituted(p.position, p.tokens);
  }
  return out;
}

std::vector<Placement> PlaceTriggers(const TokenSequence& seq,
                                     std::span<const std::vector<TokenId>> trigger_tokens,
                                     std::span<const std::size_t> positions) {
  if (trigger_tokens.empty()) Fail(ErrorKind::kInvalidInput, "no trigger tokens");
  std::vector<Placement> out;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const auto& tokens = trigger_tokens[k % trigger_tokens.size()];
    if (positions[k] + tokens.size() > seq.size()) {
      Fail(ErrorKind::kInvalidInput, "trigger window outside sequence");
    }
    out.push_back(Placement{positions[k], tokens});
  }
  return out;
}

std::vector<std::size_t> ChoosePositions(PlacementPolicy policy, const TokenSequence& seq,
                                         std::size_t L, std::size_t count,
                                         const PositionChooser& per_example,
                                         std::span<const std::size_t> fixed_positions,
                                         Rng& rng) {
  const std::size_t n = seq.size();
  if (L < 1 || L > n) {
    Fail(ErrorKind::kDataError, "sequence of length " + std::to_string(n) +
                                    " cannot hold a length-" + std::to_string(L) +
                                    " trigger");
  }
  std::vector<std::size_t> chosen;
  auto accept = [&](std::size_t p) {
    for (std::size_t q : chosen) {
      if ((p > q ? p - q : q - p) < L) return;
    }
    chosen.push_back(p);
  };
  switch (policy) {
    case PlacementPolicy::kPerExample:
      if (!per_example) {
        Fail(ErrorKind::kConfigError, "per-example placement needs a sensitivity chooser");
      }
      chosen = per_example(seq, L, count);
      break;
    case PlacementPolicy::kFixed:
      for (std::size_t p : fixed_positions) {
        if (chosen.size() == count) break;
        accept(std::min(p, n - L));
      }
      break;
    case PlacementPolicy::kRandom: {
      std::vector<std::size_t> all(n - L + 1);
      std::iota(all.begin(), all.end(), 0);
      rng.Shuffle(all);
      for (std::size_t p : all) {
        if (chosen.size() == count) break;
        accept(p);
      }
      break;
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

PoisonSplit poison_corpus(std::span<const Example> corpus,
                          const triggers::TriggerSet& trigger_source,
                          const PoisonConfig& cfg, const PositionChooser& per_example) {
  if (corpus.empty()) Fail(ErrorKind::kConfigError, "cannot poison an empty corpus");
  if (!(cfg.eta >= 0.0)) Fail(ErrorKind::kConfigError, "eta must be >= 0");
  if (cfg.triggers_per_example < 1) {
    Fail(ErrorKind::kConfigError, "triggers_per_example must be >= 1");
  }
  const std::size_t k = PoisonCount(cfg.poison_rate, corpus.size());
  PoisonSplit split;
  if (k > 0 && trigger_source.pairs.empty()) {
    Fail(ErrorKind::kConfigError, "poisoning needs a non-empty trigger set");
  }

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  Rng choice(DeriveSeed(cfg.seed, 0x9015));
  choice.Shuffle(order);
  split.poisoned_indices.assign(order.begin(), order.begin() + static_cast<long>(k));
  std::sort(split.poisoned_indices.begin(), split.poisoned_indices.end());

  std::vector<std::vector<TokenId>> tokens;
  std::vector<std::size_t> fixed_positions;
  std::size_t L = 0;
  for (const auto& pair : trigger_source.pairs) {
    tokens.push_back(pair.tokens);
    fixed_positions.push_back(pair.position);
    L = std::max(L, pair.tokens.size());
  }

  Rng placement_rng(DeriveSeed(cfg.seed, 0x9016));
  std::size_t next = 0;
  for (std::size_t idx = 0; idx < corpus.size(); ++idx) {
    const Example& ex = corpus[idx];
    if (next < split.poisoned_indices.size() && split.poisoned_indices[next] == idx) {
      ++next;
      const auto positions =
          ChoosePositions(cfg.policy, ex.tokens, L, cfg.triggers_per_example, per_example,
                          fixed_positions, placement_rng);
      if (positions.empty()) {
        Fail(ErrorKind::kDataError, "no trigger position for example '" + ex.id + "'");
      }
      PoisonedExample pe{ex.id, ex.tokens, PlaceTriggers(ex.tokens, tokens, positions),
                         cfg.adversarial_target};
      pe.poisoned = ApplyPlacements(ex.tokens, pe.placements);
      split.poisoned.push_back(std::move(pe));
    } else {
      split.clean.push_back(ex);
    }
  }
  return split;
}

PositionChooser MakeSensitivityChooser(const sensitivity::SensitivityPredictor& predictor,
                                       oracle::ModelHandle target,
                                       oracle::ModelHandle scorer,
                                       const SensitivityChooserConfig& cfg) {
  return [predictor, target, scorer, cfg](const TokenSequence& seq, std::size_t L,
                                          std::size_t count) {
    const std::size_t n = seq.size();
    const auto map = sensitivity::predict_sensitivity(predictor, seq, cfg.context);
    const auto sensitive = sensitivity::select_sensitive_positions(map, cfg.rho);
    const auto out = oracle::predict(target, seq);
    oracle::TargetSpec spec = oracle::ClassLogit{0};
    if (out.is_classification()) {
      spec = oracle::ClassLogit{out.Argmax()};
    } else {
      spec = oracle::ContinuationLogLik{out.generated->vector()};
    }
    const auto res = attribution::attribute(target, scorer, seq, map, spec, std::nullopt,
                                            cfg.hshap);
    const auto& s = res.refined.scores;
    const double tau = triggers::DefaultTauInsert(s, cfg.tau_insert_fraction);
    std::vector<bool> is_sensitive(n, false);
    for (std::size_t p : sensitive) is_sensitive[p] = true;

    std::vector<std::size_t> cands;
    for (int pass = 0; pass < 3 && cands.empty(); ++pass) {
      for (std::size_t p = 0; p + L <= n; ++p) {
        const bool ok = pass == 0   ? is_sensitive[p] && s[p] >= tau
                        : pass == 1 ? is_sensitive[p]
                                    : true;
        if (ok) cands.push_back(p);
      }
    }
    std::vector<double> scores;
    for (std::size_t p : cands) scores.push_back(s[p]);
    auto valid = triggers::greedy_nonoverlap(cands, scores, L);
    std::stable_sort(valid.begin(), valid.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    if (valid.size() > count) valid.resize(count);
    std::sort(valid.begin(), valid.end());
    return valid;
  };
}

InjectionResult inject(const oracle::ModelHandle& target, std::span<const Example> clean,
                       std::span<const PoisonedExample> poisoned, double eta,
                       const oracle::TrainConfig& train_cfg) {
  if (!(eta >= 0.0)) Fail(ErrorKind::kConfigError, "eta must be >= 0");
  std::vector<oracle::TrainExample> examples;
  examples.reserve(clean.size() + poisoned.size());
  for (const auto& ex : clean) {
    examples.push_back({ex.tokens, ex.target, oracle::WeightClass::kClean});
  }
  for (const auto& pe : poisoned) {
    examples.push_back({pe.poisoned, pe.target, oracle::WeightClass::kPoison});
  }
  auto result = oracle::fine_tune(target, examples, eta, train_cfg);
  return InjectionResult{result.model, result.report};
}

}  // namespace trigsense::injection
