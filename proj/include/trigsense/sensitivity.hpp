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

// Token sensitivity: perplexity-gain and semantic-drift labels, a trainable
// context-aware predictor, and quantile selection of candidate positions.
//
// Positions are 0-based throughout.

#ifndef TRIGSENSE_SENSITIVITY_HPP_
#define TRIGSENSE_SENSITIVITY_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "trigsense/core.hpp"
#include "trigsense/oracle.hpp"

namespace trigsense::sensitivity {

enum class TaskContext { kClassification, kGeneration, kOther, kUnspecified };

const char* ContextName(TaskContext context);
// Accepts the names produced by ContextName; throws kConfigError otherwise.
TaskContext ParseContext(const std::string& name);

// Per-token scores aligned with a TokenSequence. Summary statistics are
// always recomputed from the scores.
class SensitivityMap {
 public:
  explicit SensitivityMap(std::vector<double> scores);

  std::size_t size() const { return scores_.size(); }
  double operator[](std::size_t i) const { return scores_[i]; }
  const std::vector<double>& scores() const { return scores_; }
  double mean() const;
  // Population standard deviation.
  double stddev() const;

 private:
  std::vector<double> scores_;
};

struct SensitivityRecord {
  std::string input_id;
  TokenSequence input;
  TaskContext context = TaskContext::kClassification;
  double alpha = 0.0;
  SensitivityMap labels;
};

struct SensitivityDataset {
  std::vector<SensitivityRecord> records;
  std::size_t size() const { return records.size(); }
};

// |PPL(X with token i masked) - PPL(X)|.
double delta_ppl(const oracle::ModelHandle& scorer, const TokenSequence& seq,
                 std::size_t i);
// 1 - cos(E(X), E(X with token i masked)).
double delta_sem(const oracle::ModelHandle& embedder, const TokenSequence& seq,
                 std::size_t i);

// alpha * minmax(dppl) + (1 - alpha) * minmax(dsem). Constant components
// normalize to zeros.
SensitivityMap BlendSensitivity(std::span<const double> dppl,
                                std::span<const double> dsem, double alpha);

SensitivityMap ground_truth_sensitivity(const oracle::ModelHandle& scorer,
                                        const oracle::ModelHandle& embedder,
                                        const TokenSequence& seq, double alpha);

using AlphaMap = std::map<TaskContext, double>;
// classification 0.6, generation 0.4.
AlphaMap DefaultAlphas();

struct CorpusEntry {
  std::string id;
  TokenSequence tokens;
  TaskContext context = TaskContext::kClassification;
};

SensitivityDataset build_sensitivity_dataset(
    std::span<const CorpusEntry> corpus, const oracle::ModelHandle& scorer,
    const oracle::ModelHandle& embedder, const AlphaMap& alphas);

struct PredictorConfig {
  int vocab_size = 0;
  int embed_dim = 8;
  int window = 2;
  int hidden = 16;
};

struct PredictorTrainConfig {
  int epochs = 40;
  int batch_size = 16;
  double learning_rate = 1e-2;
  // Probability of replacing a record's context tag with kUnspecified during
  // training, so inference without a tag stays calibrated.
  double context_dropout = 0.25;
  std::uint64_t seed = 0;
};

// Token-level regressor over a window of learned token embeddings, relative
// position features and a one-hot task-context tag, with one tanh hidden
// layer and a sigmoid output.
class SensitivityPredictor {
 public:
  static SensitivityPredictor Initialize(const PredictorConfig& cfg,
                                         std::uint64_t seed);

  const PredictorConfig& config() const { return cfg_; }
  std::vector<double> Predict(const TokenSequence& seq,
                              TaskContext context) const;
  // Mean over records of per-record MSE, using each record's context.
  double Loss(const SensitivityDataset& data) const;

  std::uint64_t seed() const { return seed_; }
  int epochs_trained() const { return epochs_trained_; }
  double final_loss() const { return final_loss_; }
  const std::vector<double>& loss_history() const { return loss_history_; }
  std::string ConfigHash() const;

  // Runs `epochs` of Adam on `data`; appends to the loss history.
  void Train(const SensitivityDataset& data, const PredictorTrainConfig& cfg);

  std::string Serialize() const;
  static SensitivityPredictor Deserialize(const std::string& text);
  void Save(const std::string& path) const;
  static SensitivityPredictor Load(const std::string& path);

  friend bool operator==(const SensitivityPredictor& a,
                         const SensitivityPredictor& b);

 private:
  double RecordLoss(const TokenSequence& seq, TaskContext context,
                    std::span<const double> labels,
                    std::vector<Eigen::MatrixXd>* grads, double scale) const;
  Eigen::VectorXd Features(const TokenSequence& seq, std::size_t i,
                           TaskContext context) const;
  int FeatureDim() const;
  int EmbedRow(TokenId t) const;

  PredictorConfig cfg_;
  std::uint64_t seed_ = 0;
  int epochs_trained_ = 0;
  double final_loss_ = 0.0;
  std::vector<double> loss_history_;
  // embed ((V+1) x k; row V is padding), w1 (hidden x F), b1, w2 (1 x hidden), b2.
  std::vector<Eigen::MatrixXd> params_;
};

SensitivityPredictor train_predictor(const SensitivityDataset& dataset,
                                     const PredictorConfig& model_cfg,
                                     const PredictorTrainConfig& train_cfg);
// Continues training from `predictor` on `few`; the input is not modified.
// An empty `few` returns an identical predictor.
SensitivityPredictor adapt_predictor(const SensitivityPredictor& predictor,
                                     const SensitivityDataset& few,
                                     const PredictorTrainConfig& adapt_cfg);
SensitivityMap predict_sensitivity(
    const SensitivityPredictor& predictor, const TokenSequence& seq,
    TaskContext context = TaskContext::kUnspecified);

// Threshold = the ceil(rho * n)-th largest score (nearest-rank upper
// quantile); every position scoring >= the threshold is selected.
double SelectionThreshold(const SensitivityMap& map, double rho);
std::vector<std::size_t> select_sensitive_positions(const SensitivityMap& map,
                                                    double rho = 0.2);

}  // namespace trigsense::sensitivity

#endif  // TRIGSENSE_SENSITIVITY_HPP_
