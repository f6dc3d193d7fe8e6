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

// Capability interface to language models.
//
// Every pipeline stage talks to models only through `ModelHandle`. A handle
// is an immutable shared pointer: fine-tuning produces a new handle and never
// changes the behaviour of the one it started from. Backends override the
// virtual hooks for the capabilities they have; the free functions in this
// header validate arguments and enforce the output contracts (unit-norm
// embeddings, row-stochastic attention, valid distributions) on top.

#ifndef TRIGSENSE_ORACLE_HPP_
#define TRIGSENSE_ORACLE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "trigsense/core.hpp"

namespace trigsense::oracle {

using Matrix = Eigen::MatrixXd;

enum class TaskHead { kClassifier, kGenerator };

// Which position's rollout row is read as the attribution.
enum class Readout { kFirst, kLast, kMean };

struct Capabilities {
  bool scoring = false;       // perplexity
  bool embedding = false;     // sentence_embedding
  bool has_attention = false;
  bool has_gradients = false;
  bool is_encoder = false;    // masked_fill_distribution
  bool is_decoder = false;    // next_token_distribution
  bool trainable = false;     // fine_tune
  // Operations may be invoked concurrently on one handle.
  bool reentrant = true;
};

// layers x heads x n x n attention weights.
class AttentionStack {
 public:
  AttentionStack(int layers, int heads, int n);
  int layers() const { return layers_; }
  int heads() const { return heads_; }
  int n() const { return n_; }
  double& at(int layer, int head, int i, int j);
  double at(int layer, int head, int i, int j) const;
  // Head-averaged n x n map for one layer.
  Matrix HeadMean(int layer) const;

 private:
  int layers_, heads_, n_;
  std::vector<double> weights_;
};

// d(scalar target)/d(token embedding), one row per token.
struct EmbeddingGradient {
  Matrix grads;
  // Value of the scalar target at the evaluation point.
  double value = 0.0;
};

// Scalar targets for gradient queries.
struct ClassLogit {
  int cls = 0;
};
struct ContinuationLogLik {
  std::vector<TokenId> continuation;
};
using TargetSpec = std::variant<ClassLogit, ContinuationLogLik>;

enum class BaselineKind { kMask, kZeros };

struct TaskOutput {
  std::vector<double> logits;                // classifier heads
  std::optional<TokenSequence> generated;    // generator heads
  bool is_classification() const { return !generated.has_value(); }
  int Argmax() const;
};

struct DecodingConfig {
  int max_length = 8;  // greedy decoding only
};

enum class WeightClass { kClean, kPoison };

struct TrainExample {
  TokenSequence input;
  // Class id for classifier heads, target continuation for generator heads.
  std::variant<int, TokenSequence> target;
  WeightClass weight = WeightClass::kClean;
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  // Poison examples per step; 0 picks the size that keeps the poison stream
  // at its natural frequency relative to the clean stream.
  int poison_batch_size = 0;
  double learning_rate = 1e-2;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

struct FineTuneReport {
  // L_clean + eta * L_poison over the full training data.
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_loss;
  std::size_t clean_count = 0;
  std::size_t poison_count = 0;
  double eta = 0.0;
};

class Model;
using ModelHandle = std::shared_ptr<const Model>;

struct FineTuneResult {
  ModelHandle model;
  FineTuneReport report;
};

class Model {
 public:
  virtual ~Model() = default;

  virtual std::string backend_id() const = 0;
  virtual int vocab_size() const = 0;
  virtual TokenId mask_id() const = 0;
  virtual TaskHead task_head() const = 0;
  virtual int num_classes() const { return 0; }
  virtual Capabilities capabilities() const = 0;
  virtual Readout readout() const;
  virtual DecodingConfig decoding() const { return {}; }
  // Embedding width for gradient queries.
  virtual int embedding_dim() const { return 0; }

  // Capability hooks. The defaults raise kCapabilityMissing.
  virtual double Perplexity(const TokenSequence& seq) const;
  virtual std::vector<double> SentenceEmbedding(const TokenSequence& seq) const;
  virtual std::vector<double> MaskedFill(const TokenSequence& seq,
                                         std::size_t position) const;
  virtual std::vector<double> NextToken(const TokenSequence& prefix) const;
  virtual AttentionStack Attention(const TokenSequence& seq) const;
  virtual Matrix InputEmbeddings(const TokenSequence& seq) const;
  virtual Matrix BaselineEmbeddings(const TokenSequence& seq,
                                    BaselineKind kind) const;
  virtual EmbeddingGradient GradientAt(const TokenSequence& seq,
                                       const Matrix& embeddings,
                                       const TargetSpec& target) const;
  virtual TaskOutput Predict(const TokenSequence& seq) const = 0;
  virtual FineTuneResult FineTune(std::span<const TrainExample> examples,
                                  double eta, const TrainConfig& cfg) const;
};

// Validated operations.

double perplexity(const ModelHandle& handle, const TokenSequence& seq);
// L2-normalized sentence embedding.
std::vector<double> sentence_embedding(const ModelHandle& handle,
                                       const TokenSequence& seq);
double cosine(std::span<const double> a, std::span<const double> b);
TokenDistribution masked_fill_distribution(const ModelHandle& handle,
                                           const TokenSequence& masked_seq,
                                           std::size_t position);
TokenDistribution next_token_distribution(const ModelHandle& handle,
                                          const TokenSequence& prefix);
AttentionStack attention_maps(const ModelHandle& handle,
                              const TokenSequence& seq);
Matrix input_embeddings(const ModelHandle& handle, const TokenSequence& seq);
Matrix baseline_embeddings(const ModelHandle& handle, const TokenSequence& seq,
                           BaselineKind kind);
// Gradient at baseline + alpha * (input - baseline).
EmbeddingGradient target_gradient(const ModelHandle& handle,
                                  const TokenSequence& seq,
                                  const TargetSpec& target, double alpha = 1.0,
                                  BaselineKind baseline = BaselineKind::kMask);
TaskOutput predict(const ModelHandle& handle, const TokenSequence& seq);
FineTuneResult fine_tune(const ModelHandle& handle,
                         std::span<const TrainExample> examples, double eta,
                         const TrainConfig& cfg);

// Greedy or temperature sampling from a distribution. temperature <= 0 is
// greedy (argmax, lowest id on ties).
TokenId SampleToken(const TokenDistribution& dist, double temperature, Rng& rng);

// Registry of backend factories keyed by id ("toy", "external:<name>").
// Factories receive the flat key-value options of the pipeline config.
using BackendOptions = std::map<std::string, std::string>;
using BackendFactory = std::function<ModelHandle(const BackendOptions&)>;

class BackendRegistry {
 public:
  static BackendRegistry& Global();
  void Register(const std::string& id, BackendFactory factory);
  // Returns whether `id` was registered.
  bool Unregister(const std::string& id);
  bool Contains(const std::string& id) const;
  ModelHandle Create(const std::string& id, const BackendOptions& options) const;
  std::vector<std::string> Ids() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, BackendFactory> factories_;
};

}  // namespace trigsense::oracle

#endif  // TRIGSENSE_ORACLE_HPP_
