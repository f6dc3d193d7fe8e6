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

// Deterministic desk-scale backends.
//
// The toy family is small enough that every quantity the pipeline consumes
// can be checked against brute force: a bigram language model (perplexity,
// masked fill, next-token sampling), a single-layer multi-head attention
// classifier with exact analytic gradients, and a position-weighted linear
// scorer whose integrated gradients have a closed form.

#ifndef TRIGSENSE_TOY_HPP_
#define TRIGSENSE_TOY_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "trigsense/oracle.hpp"

namespace trigsense::toy {

using oracle::Matrix;
using ParamBlocks = std::vector<Matrix>;

// Bigram LM with a dedicated start row. Stored as per-row logits so it can be
// fine-tuned; probabilities are the row softmax.
class BigramLm {
 public:
  static BigramLm Uniform(int vocab_size);
  // Row weights exp(sharpness * N(0, 1)).
  static BigramLm Random(int vocab_size, std::uint64_t seed,
                         double sharpness = 2.0);
  // Add-k smoothed counts.
  static BigramLm FromCounts(std::span<const TokenSequence> corpus,
                             int vocab_size, double smoothing = 0.1);
  // weight * bigram MLE + (1 - weight) * add-k unigram. Deleting a common
  // token then costs little, while unseen tokens stay improbable.
  static BigramLm Interpolated(std::span<const TokenSequence> corpus,
                               int vocab_size, double weight = 0.7,
                               double smoothing = 0.1);
  // `transitions` is (V + 1) x V; row V is the start distribution. Rows must
  // be strictly positive and are renormalized.
  static BigramLm FromProbabilities(const Matrix& transitions);

  int vocab_size() const { return vocab_size_; }
  int start_row() const { return vocab_size_; }
  const Matrix& logits() const { return logits_; }
  Matrix& mutable_logits() { return logits_; }
  void Refresh();

  double Prob(int row, TokenId next) const { return probs_(row, next); }
  double LogProb(int row, TokenId next) const { return log_probs_(row, next); }
  Eigen::VectorXd Row(int row) const { return probs_.row(row).transpose(); }

  // exp(-mean log p); the first token is scored under the start row.
  double Perplexity(const TokenSequence& seq) const;

 private:
  BigramLm(int vocab_size, Matrix logits);

  int vocab_size_;
  Matrix logits_;
  Matrix probs_;
  Matrix log_probs_;
};

struct AttentionConfig {
  int dim = 16;
  int heads = 2;
  int key_dim = 8;
  int value_dim = 8;
  double embed_scale = 0.5;
};

// Single-layer multi-head self-attention classifier:
//   A_h = softmax((X Wq_h^T + bq_h)(X Wk_h^T)^T / sqrt(dk))
//   p   = concat_h mean_i (A_h X Wv_h^T)_i
//   z   = Wo p + bo
// Parameters live in ParamBlocks so the shared trainer can update them.
class AttentionClassifier {
 public:
  struct Forward {
    std::vector<Matrix> q, k, v, attn;  // per head
    Eigen::VectorXd pooled;
    Eigen::VectorXd logits;
  };

  static AttentionClassifier Random(int vocab_size, int num_classes,
                                    TokenId mask_id, const AttentionConfig& cfg,
                                    std::uint64_t seed);

  int vocab_size() const { return vocab_size_; }
  int num_classes() const { return num_classes_; }
  TokenId mask_id() const { return mask_id_; }
  const AttentionConfig& config() const { return cfg_; }
  const ParamBlocks& params() const { return params_; }
  ParamBlocks& mutable_params() { return params_; }

  Matrix Embed(const TokenSequence& seq) const;
  Forward Run(const Matrix& x) const;
  // Backpropagates dz (length C). Returns dL/dX; accumulates parameter
  // gradients into `param_grads` when non-null (scaled by `scale`).
  Matrix Backward(const Matrix& x, const Forward& fwd, const Eigen::VectorXd& dz,
                  ParamBlocks* param_grads, double scale,
                  const TokenSequence* tokens) const;

  // Cross-entropy loss of one example; accumulates gradients when non-null.
  double ExampleLoss(const TokenSequence& seq, int label, ParamBlocks* grads,
                     double scale) const;

  // Re-applies structural constraints (the MASK row stays zero).
  void Project();

 private:
  AttentionClassifier() = default;
  int wq(int h) const { return 1 + 4 * h; }
  int wk(int h) const { return 2 + 4 * h; }
  int wv(int h) const { return 3 + 4 * h; }
  int bq(int h) const { return 4 + 4 * h; }
  int wo() const { return 1 + 4 * cfg_.heads; }
  int bo() const { return 2 + 4 * cfg_.heads; }

  int vocab_size_ = 0;
  int num_classes_ = 0;
  TokenId mask_id_ = 0;
  AttentionConfig cfg_;
  ParamBlocks params_;
};

// logit_c = sum_i W_c[i] . e_i + b_c over token embeddings e_i.
struct LinearScorer {
  Matrix embed;                    // V x d
  std::vector<Matrix> position_w;  // per class, max_len x d
  Eigen::VectorXd bias;            // C

  static LinearScorer Random(int vocab_size, int num_classes, int dim,
                             int max_len, std::uint64_t seed);
};

enum class EmbedderKind { kOneHotMean, kPooledHidden };

struct ToyConfig {
  int vocab_size = 0;
  TokenId mask_id = 0;
  // Never proposed by masked fill or greedy decoding.
  std::vector<TokenId> special_tokens;
  oracle::TaskHead head = oracle::TaskHead::kClassifier;
  int num_classes = 2;
  bool encoder = true;
  bool decoder = false;
  EmbedderKind embedder = EmbedderKind::kOneHotMean;
  oracle::DecodingConfig decoding;
  std::optional<oracle::Readout> readout;
  // Score MASK slots by summing over every filler, as a masked LM would,
  // instead of as a literal token.
  bool marginalize_mask = false;
};

// Composite toy handle. Components are shared immutably between handle
// versions; fine-tuning copies the trained component.
class ToyModel : public oracle::Model {
 public:
  ToyModel(ToyConfig cfg, std::shared_ptr<const BigramLm> lm,
           std::shared_ptr<const AttentionClassifier> classifier,
           std::shared_ptr<const LinearScorer> linear, std::uint64_t version = 0);

  std::string backend_id() const override { return "toy"; }
  int vocab_size() const override { return cfg_.vocab_size; }
  TokenId mask_id() const override { return cfg_.mask_id; }
  oracle::TaskHead task_head() const override { return cfg_.head; }
  int num_classes() const override;
  oracle::Capabilities capabilities() const override;
  oracle::Readout readout() const override;
  oracle::DecodingConfig decoding() const override { return cfg_.decoding; }
  int embedding_dim() const override;

  double Perplexity(const TokenSequence& seq) const override;
  std::vector<double> SentenceEmbedding(const TokenSequence& seq) const override;
  std::vector<double> MaskedFill(const TokenSequence& seq,
                                 std::size_t position) const override;
  std::vector<double> NextToken(const TokenSequence& prefix) const override;
  oracle::AttentionStack Attention(const TokenSequence& seq) const override;
  Matrix InputEmbeddings(const TokenSequence& seq) const override;
  Matrix BaselineEmbeddings(const TokenSequence& seq,
                            oracle::BaselineKind kind) const override;
  oracle::EmbeddingGradient GradientAt(
      const TokenSequence& seq, const Matrix& embeddings,
      const oracle::TargetSpec& target) const override;
  oracle::TaskOutput Predict(const TokenSequence& seq) const override;
  oracle::FineTuneResult FineTune(std::span<const oracle::TrainExample> examples,
                                  double eta,
                                  const oracle::TrainConfig& cfg) const override;

  const ToyConfig& config() const { return cfg_; }
  const std::shared_ptr<const BigramLm>& lm() const { return lm_; }
  const std::shared_ptr<const AttentionClassifier>& classifier() const {
    return classifier_;
  }
  std::uint64_t version() const { return version_; }

 private:
  bool IsSpecial(TokenId id) const;

  ToyConfig cfg_;
  std::shared_ptr<const BigramLm> lm_;
  std::shared_ptr<const AttentionClassifier> classifier_;
  std::shared_ptr<const LinearScorer> linear_;
  std::uint64_t version_;
};

oracle::ModelHandle MakeClassifier(const ToyConfig& cfg,
                                   std::shared_ptr<const BigramLm> lm,
                                   const AttentionConfig& attn,
                                   std::uint64_t seed);
oracle::ModelHandle MakeGenerator(const ToyConfig& cfg,
                                  std::shared_ptr<const BigramLm> lm);
oracle::ModelHandle MakeLinear(const ToyConfig& cfg, int dim, int max_len,
                               std::uint64_t seed);

// Two-stream minibatch Adam shared by the toy learners. Each step combines
// the mean loss of a clean batch with eta times the mean loss of a poison
// batch; epochs are passes over the clean stream. With eta = 0 the poison
// stream is never touched, so the trajectory equals clean-only training.
using ExampleLossFn = std::function<double(const oracle::TrainExample&,
                                           ParamBlocks* grads, double scale)>;
oracle::FineTuneReport TrainTwoStream(
    ParamBlocks& params, std::span<const oracle::TrainExample> examples,
    double eta, const oracle::TrainConfig& cfg, const ExampleLossFn& loss,
    const std::function<void()>& after_step);

}  // namespace trigsense::toy

#endif  // TRIGSENSE_TOY_HPP_
