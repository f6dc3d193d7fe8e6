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

// Test doubles and brute-force reference computations shared by the unit
// and acceptance suites.

#ifndef TRIGSENSE_TESTS_SUPPORT_HPP_
#define TRIGSENSE_TESTS_SUPPORT_HPP_

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "trigsense/core.hpp"
#include "trigsense/oracle.hpp"

namespace trigsense::testing {

// Backend whose behaviour is given by callbacks. Unset callbacks fall back
// to the base class, which raises kCapabilityMissing.
class StubModel : public oracle::Model {
 public:
  int vocab = 8;
  TokenId mask = 0;
  oracle::TaskHead head = oracle::TaskHead::kClassifier;
  int classes = 2;
  oracle::Capabilities caps;
  std::optional<oracle::Readout> readout_override;

  std::function<double(const TokenSequence&)> ppl;
  std::function<std::vector<double>(const TokenSequence&)> embed;
  std::function<std::vector<double>(const TokenSequence&, std::size_t)> fill;
  std::function<std::vector<double>(const TokenSequence&)> next;
  std::function<oracle::AttentionStack(const TokenSequence&)> attention;
  std::function<oracle::TaskOutput(const TokenSequence&)> output;

  std::string backend_id() const override { return "stub"; }
  int vocab_size() const override { return vocab; }
  TokenId mask_id() const override { return mask; }
  oracle::TaskHead task_head() const override { return head; }
  int num_classes() const override { return head == oracle::TaskHead::kClassifier ? classes : 0; }
  oracle::Capabilities capabilities() const override { return caps; }
  oracle::Readout readout() const override {
    return readout_override ? *readout_override : Model::readout();
  }

  double Perplexity(const TokenSequence& s) const override {
    return ppl ? ppl(s) : Model::Perplexity(s);
  }
  std::vector<double> SentenceEmbedding(const TokenSequence& s) const override {
    return embed ? embed(s) : Model::SentenceEmbedding(s);
  }
  std::vector<double> MaskedFill(const TokenSequence& s, std::size_t i) const override {
    return fill ? fill(s, i) : Model::MaskedFill(s, i);
  }
  std::vector<double> NextToken(const TokenSequence& s) const override {
    return next ? next(s) : Model::NextToken(s);
  }
  oracle::AttentionStack Attention(const TokenSequence& s) const override {
    return attention ? attention(s) : Model::Attention(s);
  }
  oracle::TaskOutput Predict(const TokenSequence& s) const override {
    if (output) return output(s);
    oracle::TaskOutput out;
    out.logits.assign(static_cast<std::size_t>(classes), 0.0);
    return out;
  }
};

// Fresh scratch directory under $TRIGSENSE_TEST_TMP (or the system temp
// directory); removed and recreated on every call.
inline std::filesystem::path ScratchDir(const std::string& name) {
  const char* root = std::getenv("TRIGSENSE_TEST_TMP");
  const std::filesystem::path base =
      root && *root ? std::filesystem::path(root) : std::filesystem::temp_directory_path();
  const auto dir = base / ("trigsense_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::shared_ptr<StubModel> NewStub() { return std::make_shared<StubModel>(); }

// Scorer whose perplexity is looked up per sequence, with a default.
inline std::shared_ptr<StubModel> PplStub(std::function<double(const TokenSequence&)> fn) {
  auto m = NewStub();
  m->caps.scoring = true;
  m->ppl = std::move(fn);
  return m;
}

// Normalized mean of one-hot token vectors.
inline std::vector<double> OneHotMean(const TokenSequence& s, int vocab) {
  std::vector<double> v(static_cast<std::size_t>(vocab), 0.0);
  for (TokenId t : s) v[static_cast<std::size_t>(t)] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  for (double& x : v) x /= std::sqrt(norm);
  return v;
}

// Classifier predicting class 1 with logit margin `margin` iff `keyword`
// occurs in the input.
inline std::shared_ptr<StubModel> KeywordClassifier(TokenId keyword, int vocab = 8,
                                                    double margin = 4.0) {
  auto m = NewStub();
  m->vocab = vocab;
  m->output = [keyword, margin](const TokenSequence& s) {
    oracle::TaskOutput out;
    out.logits = s.Contains(keyword) ? std::vector<double>{0.0, margin}
                                     : std::vector<double>{margin, 0.0};
    return out;
  };
  return m;
}

// Binomial coefficient, exact for the small n used by the oracles.
inline double Choose(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Exact Shapley values of `value` over n players by full coalition
// enumeration. `value` receives a membership bitmask.
inline std::vector<double> ExactShapley(int n, const std::function<double(unsigned)>& value) {
  std::vector<double> v(1u << n);
  for (unsigned s = 0; s < v.size(); ++s) v[s] = value(s);
  std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const unsigned bit = 1u << i;
    for (unsigned s = 0; s < v.size(); ++s) {
      if (s & bit) continue;
      const int size = std::popcount(s);
      const double w = 1.0 / (n * Choose(n - 1, size));
      phi[static_cast<std::size_t>(i)] += w * (v[s | bit] - v[s]);
    }
  }
  return phi;
}

// Shapley values of a class logit where absent tokens are replaced by the
// handle's mask id.
inline std::vector<double> MaskCoalitionShapley(const oracle::ModelHandle& model,
                                                const TokenSequence& seq, int cls) {
  const int n = static_cast<int>(seq.size());
  return ExactShapley(n, [&](unsigned members) {
    std::vector<TokenId> t(seq.begin(), seq.end());
    for (int i = 0; i < n; ++i) {
      if (!(members & (1u << i))) t[static_cast<std::size_t>(i)] = model->mask_id();
    }
    return oracle::predict(model, TokenSequence(t)).logits[static_cast<std::size_t>(cls)];
  });
}

// Textbook Spearman for ties-free data: 1 - 6 sum d^2 / (n (n^2 - 1)), with
// ranks found by counting.
inline double DefinitionalSpearman(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  auto rank = [n](const std::vector<double>& x, std::size_t i) {
    double r = 1.0;
    for (std::size_t j = 0; j < n; ++j) r += x[j] < x[i] ? 1.0 : 0.0;
    return r;
  };
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rank(a, i) - rank(b, i);
    d2 += d * d;
  }
  const double nn = static_cast<double>(n);
  return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

// Central-difference gradient of the scalar target with respect to the
// embeddings, evaluated at `at`.
inline oracle::Matrix FiniteDifferenceGradient(const oracle::ModelHandle& model,
                                               const TokenSequence& seq,
                                               const oracle::Matrix& at,
                                               const oracle::TargetSpec& target,
                                               double step = 1e-3) {
  oracle::Matrix g(at.rows(), at.cols());
  for (Eigen::Index r = 0; r < at.rows(); ++r) {
    for (Eigen::Index c = 0; c < at.cols(); ++c) {
      oracle::Matrix up = at, down = at;
      up(r, c) += step;
      down(r, c) -= step;
      g(r, c) = (model->GradientAt(seq, up, target).value -
                 model->GradientAt(seq, down, target).value) /
                (2.0 * step);
    }
  }
  return g;
}

// Uniformly random token sequence over ids [lo, vocab).
inline TokenSequence RandomSequence(Rng& rng, std::size_t n, int vocab, TokenId lo = 0) {
  std::vector<TokenId> t(n);
  for (auto& x : t) {
    x = lo + static_cast<TokenId>(rng.Below(static_cast<std::size_t>(vocab - lo)));
  }
  return TokenSequence(std::move(t));
}

}  // namespace trigsense::testing

#endif  // TRIGSENSE_TESTS_SUPPORT_HPP_
