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

#include "trigsense/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace trigsense::oracle {

namespace {

[[noreturn]] void Missing(const Model& model, const char* what) {
  Fail(ErrorKind::kCapabilityMissing,
       "backend '" + model.backend_id() + "' has no " + what);
}

void CheckHandle(const ModelHandle& handle) {
  if (!handle) Fail(ErrorKind::kInvalidInput, "null model handle");
}

void CheckSeq(const ModelHandle& handle, const TokenSequence& seq) {
  CheckHandle(handle);
  CheckTokenRange(seq, handle->vocab_size());
}

}  // namespace

AttentionStack::AttentionStack(int layers, int heads, int n)
    : layers_(layers),
      heads_(heads),
      n_(n),
      weights_(static_cast<std::size_t>(layers) * heads * n * n, 0.0) {}

double& AttentionStack::at(int layer, int head, int i, int j) {
  return weights_[((static_cast<std::size_t>(layer) * heads_ + head) * n_ + i) *
                      n_ +
                  j];
}

double AttentionStack::at(int layer, int head, int i, int j) const {
  return weights_[((static_cast<std::size_t>(layer) * heads_ + head) * n_ + i) *
                      n_ +
                  j];
}

Matrix AttentionStack::HeadMean(int layer) const {
  Matrix out = Matrix::Zero(n_, n_);
  for (int h = 0; h < heads_; ++h) {
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) out(i, j) += at(layer, h, i, j);
    }
  }
  return out / static_cast<double>(heads_);
}

int TaskOutput::Argmax() const {
  if (logits.empty()) Fail(ErrorKind::kInvalidInput, "output has no logits");
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                          logits.begin());
}

Readout Model::readout() const {
  const auto caps = capabilities();
  return caps.is_decoder && !caps.is_encoder ? Readout::kLast : Readout::kFirst;
}

double Model::Perplexity(const TokenSequence&) const {
  Missing(*this, "language-model scoring");
}
std::vector<double> Model::SentenceEmbedding(const TokenSequence&) const {
  Missing(*this, "sentence embedder");
}
std::vector<double> Model::MaskedFill(const TokenSequence&, std::size_t) const {
  Missing(*this, "masked-fill head (encoder capability)");
}
std::vector<double> Model::NextToken(const TokenSequence&) const {
  Missing(*this, "next-token head (decoder capability)");
}
AttentionStack Model::Attention(const TokenSequence&) const {
  Missing(*this, "attention maps");
}
Matrix Model::InputEmbeddings(const TokenSequence&) const {
  Missing(*this, "embedding gradients");
}
Matrix Model::BaselineEmbeddings(const TokenSequence&, BaselineKind) const {
  Missing(*this, "embedding gradients");
}
EmbeddingGradient Model::GradientAt(const TokenSequence&, const Matrix&,
                                    const TargetSpec&) const {
  Missing(*this, "embedding gradients");
}
FineTuneResult Model::FineTune(std::span<const TrainExample>, double,
                               const TrainConfig&) const {
  Missing(*this, "fine-tuning support");
}

double perplexity(const ModelHandle& handle, const TokenSequence& seq) {
  CheckSeq(handle, seq);
  if (!handle->capabilities().scoring) Missing(*handle, "language-model scoring");
  const double ppl = handle->Perplexity(seq);
  if (!(ppl > 0.0) || !std::isfinite(ppl)) {
    Fail(ErrorKind::kInternalError, "backend returned invalid perplexity");
  }
  return ppl;
}

std::vector<double> sentence_embedding(const ModelHandle& handle,
                                       const TokenSequence& seq) {
  CheckSeq(handle, seq);
  if (!handle->capabilities().embedding) Missing(*handle, "sentence embedder");
  std::vector<double> v = handle->SentenceEmbedding(seq);
  if (v.empty()) Fail(ErrorKind::kInternalError, "empty embedding");
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    // Degenerate embedder output: fall back to a fixed unit direction.
    std::fill(v.begin(), v.end(), 1.0 / std::sqrt(static_cast<double>(v.size())));
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    Fail(ErrorKind::kInvalidInput, "embedding widths differ");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

TokenDistribution masked_fill_distribution(const ModelHandle& handle,
                                           const TokenSequence& masked_seq,
                                           std::size_t position) {
  CheckSeq(handle, masked_seq);
  if (!handle->capabilities().is_encoder) {
    Missing(*handle, "masked-fill head (encoder capability)");
  }
  if (position >= masked_seq.size() ||
      masked_seq[position] != handle->mask_id()) {
    Fail(ErrorKind::kInvalidInput, "position is not masked");
  }
  return TokenDistribution(handle->MaskedFill(masked_seq, position));
}

TokenDistribution next_token_distribution(const ModelHandle& handle,
                                          const TokenSequence& prefix) {
  CheckSeq(handle, prefix);
  if (!handle->capabilities().is_decoder) {
    Missing(*handle, "next-token head (decoder capability)");
  }
  return TokenDistribution(handle->NextToken(prefix));
}

AttentionStack attention_maps(const ModelHandle& handle,
                              const TokenSequence& seq) {
  CheckSeq(handle, seq);
  if (!handle->capabilities().has_attention) Missing(*handle, "attention maps");
  AttentionStack stack = handle->Attention(seq);
  if (stack.n() != static_cast<int>(seq.size())) {
    Fail(ErrorKind::kInternalError, "attention maps have the wrong size");
  }
  for (int l = 0; l < stack.layers(); ++l) {
    for (int h = 0; h < stack.heads(); ++h) {
      for (int i = 0; i < stack.n(); ++i) {
        double row = 0.0;
        for (int j = 0; j < stack.n(); ++j) {
          const double w = stack.at(l, h, i, j);
          if (w < 0.0) Fail(ErrorKind::kInternalError, "negative attention");
          row += w;
        }
        if (std::abs(row - 1.0) > 1e-5) {
          Fail(ErrorKind::kInternalError, "attention row is not stochastic");
        }
      }
    }
  }
  return stack;
}

Matrix input_embeddings(const ModelHandle& handle, const TokenSequence& seq) {
  CheckSeq(handle, seq);
  if (!handle->capabilities().has_gradients) Missing(*handle, "embedding gradients");
  return handle->InputEmbeddings(seq);
}

Matrix baseline_embeddings(const ModelHandle& handle, const TokenSequence& seq,
                           BaselineKind kind) {
  CheckSeq(handle, seq);
  if (!handle->capabilities().has_gradients) Missing(*handle, "embedding gradients");
  if (kind == BaselineKind::kZeros) {
    return Matrix::Zero(static_cast<Eigen::Index>(seq.size()),
                        handle->embedding_dim());
  }
  return handle->BaselineEmbeddings(seq, kind);
}

EmbeddingGradient target_gradient(const ModelHandle& handle,
                                  const TokenSequence& seq,
                                  const TargetSpec& target, double alpha,
                                  BaselineKind baseline) {
  CheckSeq(handle, seq);
  if (!handle->capabilities().has_gradients) Missing(*handle, "embedding gradients");
  if (const auto* logit = std::get_if<ClassLogit>(&target)) {
    if (handle->task_head() != TaskHead::kClassifier || logit->cls < 0 ||
        logit->cls >= handle->num_classes()) {
      Fail(ErrorKind::kInvalidInput, "target does not name a scalar class logit");
    }
  } else {
    const auto& cont = std::get<ContinuationLogLik>(target);
    if (handle->task_head() != TaskHead::kGenerator || cont.continuation.empty()) {
      Fail(ErrorKind::kInvalidInput,
           "target does not name a scalar continuation log-likelihood");
    }
  }
  const Matrix x = handle->InputEmbeddings(seq);
  const Matrix x0 = baseline_embeddings(handle, seq, baseline);
  const Matrix point = x0 + alpha * (x - x0);
  EmbeddingGradient out = handle->GradientAt(seq, point, target);
  if (out.grads.rows() != static_cast<Eigen::Index>(seq.size()) ||
      out.grads.cols() != handle->embedding_dim() || !out.grads.allFinite()) {
    Fail(ErrorKind::kInternalError, "backend returned a malformed gradient");
  }
  return out;
}

TaskOutput predict(const ModelHandle& handle, const TokenSequence& seq) {
  CheckSeq(handle, seq);
  TaskOutput out = handle->Predict(seq);
  for (double z : out.logits) {
    if (!std::isfinite(z)) Fail(ErrorKind::kInternalError, "non-finite logit");
  }
  return out;
}

FineTuneResult fine_tune(const ModelHandle& handle,
                         std::span<const TrainExample> examples, double eta,
                         const TrainConfig& cfg) {
  CheckHandle(handle);
  if (examples.empty()) Fail(ErrorKind::kInvalidInput, "no training examples");
  if (!(eta >= 0.0)) Fail(ErrorKind::kInvalidInput, "eta must be >= 0");
  if (!handle->capabilities().trainable) Missing(*handle, "fine-tuning support");
  for (const auto& ex : examples) CheckTokenRange(ex.input, handle->vocab_size());
  FineTuneResult result = handle->FineTune(examples, eta, cfg);
  if (!result.model || result.model.get() == handle.get()) {
    Fail(ErrorKind::kInternalError, "fine-tuning must return a new handle");
  }
  return result;
}

TokenId SampleToken(const TokenDistribution& dist, double temperature, Rng& rng) {
  if (temperature <= 0.0) return dist.Argmax();
  const auto& p = dist.probs();
  std::vector<double> w(p.size());
  if (temperature == 1.0) {
    w = p;
  } else {
    for (std::size_t i = 0; i < p.size(); ++i) {
      w[i] = p[i] > 0.0 ? std::pow(p[i], 1.0 / temperature) : 0.0;
    }
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double u = rng.Uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    u -= w[i];
    if (u < 0.0) return static_cast<TokenId>(i);
  }
  // Rounding left residual mass; return the last supported token.
  for (std::size_t i = w.size(); i-- > 0;) {
    if (w[i] > 0.0) return static_cast<TokenId>(i);
  }
  return dist.Argmax();
}

BackendRegistry& BackendRegistry::Global() {
  static BackendRegistry registry;
  return registry;
}

void BackendRegistry::Register(const std::string& id, BackendFactory factory) {
  std::lock_guard lock(mu_);
  factories_[id] = std::move(factory);
}

bool BackendRegistry::Unregister(const std::string& id) {
  std::lock_guard lock(mu_);
  return factories_.erase(id) > 0;
}

bool BackendRegistry::Contains(const std::string& id) const {
  std::lock_guard lock(mu_);
  return factories_.contains(id);
}

ModelHandle BackendRegistry::Create(const std::string& id,
                                    const BackendOptions& options) const {
  BackendFactory factory;
  {
    std::lock_guard lock(mu_);
    auto it = factories_.find(id);
    if (it == factories_.end()) {
      Fail(id.starts_with("external:") ? ErrorKind::kCapabilityMissing
                                       : ErrorKind::kConfigError,
           "no backend registered under '" + id + "'");
    }
    factory = it->second;
  }
  return factory(options);
}

std::vector<std::string> BackendRegistry::Ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : factories_) ids.push_back(id);
  return ids;
}

}  // namespace trigsense::oracle
