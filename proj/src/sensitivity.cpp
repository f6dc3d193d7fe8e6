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

#include "trigsense/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "trigsense/stats.hpp"
#include "trigsense/toy.hpp"

namespace trigsense::sensitivity {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr int kContextSlots = 4;
constexpr int kPositionFeatures = 3;
constexpr int kEmbed = 0, kW1 = 1, kB1 = 2, kW2 = 3, kB2 = 4;

int ContextSlot(TaskContext c) { return static_cast<int>(c); }

void CheckPosition(const TokenSequence& seq, std::size_t i) {
  if (seq.size() < 2) {
    Fail(ErrorKind::kInvalidInput,
         "masking a single-token sequence leaves nothing to score");
  }
  if (i >= seq.size()) {
    Fail(ErrorKind::kInvalidInput, "position " + std::to_string(i) +
                                       " outside sequence of length " +
                                       std::to_string(seq.size()));
  }
}

double Sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

const char* ContextName(TaskContext context) {
  switch (context) {
    case TaskContext::kClassification: return "classification";
    case TaskContext::kGeneration: return "generation";
    case TaskContext::kOther: return "other";
    case TaskContext::kUnspecified: return "unspecified";
  }
  return "unspecified";
}

TaskContext ParseContext(const std::string& name) {
  for (TaskContext c : {TaskContext::kClassification, TaskContext::kGeneration,
                        TaskContext::kOther, TaskContext::kUnspecified}) {
    if (name == ContextName(c)) return c;
  }
  Fail(ErrorKind::kConfigError, "unknown task context '" + name + "'");
}

// ------------------------------------------------------------ SensitivityMap

SensitivityMap::SensitivityMap(std::vector<double> scores)
    : scores_(std::move(scores)) {
  if (scores_.empty()) Fail(ErrorKind::kInvalidInput, "empty sensitivity map");
  for (double s : scores_) {
    if (!std::isfinite(s)) {
      Fail(ErrorKind::kInvalidInput, "non-finite sensitivity score");
    }
  }
}

double SensitivityMap::mean() const { return stats::Mean(scores_); }
double SensitivityMap::stddev() const { return stats::PopulationStd(scores_); }

// ----------------------------------------------------------------- labeling

double delta_ppl(const oracle::ModelHandle& scorer, const TokenSequence& seq,
                 std::size_t i) {
  CheckPosition(seq, i);
  const double base = oracle::perplexity(scorer, seq);
  const double masked =
      oracle::perplexity(scorer, seq.WithToken(i, scorer->mask_id()));
  return std::abs(masked - base);
}

double delta_sem(const oracle::ModelHandle& embedder, const TokenSequence& seq,
                 std::size_t i) {
  CheckPosition(seq, i);
  const auto a = oracle::sentence_embedding(embedder, seq);
  const auto b =
      oracle::sentence_embedding(embedder, seq.WithToken(i, embedder->mask_id()));
  return std::clamp(1.0 - oracle::cosine(a, b), 0.0, 2.0);
}

SensitivityMap BlendSensitivity(std::span<const double> dppl,
                                std::span<const double> dsem, double alpha) {
  if (dppl.size() != dsem.size() || dppl.empty()) {
    Fail(ErrorKind::kInvalidInput, "delta vectors must be non-empty and aligned");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    Fail(ErrorKind::kInvalidInput, "alpha must lie in [0, 1]");
  }
  const auto p = stats::MinMaxNormalize(dppl);
  const auto s = stats::MinMaxNormalize(dsem);
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(alpha * p[i] + (1.0 - alpha) * s[i], 0.0, 1.0);
  }
  return SensitivityMap(std::move(out));
}

SensitivityMap ground_truth_sensitivity(const oracle::ModelHandle& scorer,
                                        const oracle::ModelHandle& embedder,
                                        const TokenSequence& seq, double alpha) {
  if (seq.size() < 2) {
    Fail(ErrorKind::kInvalidInput, "sensitivity labels need n >= 2");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    Fail(ErrorKind::kInvalidInput, "alpha must lie in [0, 1]");
  }
  // Each delta depends only on (seq, i), so evaluation order is irrelevant.
  const double base_ppl = oracle::perplexity(scorer, seq);
  const auto base_emb = oracle::sentence_embedding(embedder, seq);
  std::vector<double> dppl(seq.size()), dsem(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    dppl[i] = std::abs(
        oracle::perplexity(scorer, seq.WithToken(i, scorer->mask_id())) - base_ppl);
    const auto e =
        oracle::sentence_embedding(embedder, seq.WithToken(i, embedder->mask_id()));
    dsem[i] = std::clamp(1.0 - oracle::cosine(base_emb, e), 0.0, 2.0);
  }
  return BlendSensitivity(dppl, dsem, alpha);
}

AlphaMap DefaultAlphas() {
  return {{TaskContext::kClassification, 0.6}, {TaskContext::kGeneration, 0.4}};
}

SensitivityDataset build_sensitivity_dataset(
    std::span<const CorpusEntry> corpus, const oracle::ModelHandle& scorer,
    const oracle::ModelHandle& embedder, const AlphaMap& alphas) {
  if (corpus.empty()) {
    Fail(ErrorKind::kConfigError, "sensitivity corpus is empty");
  }
  SensitivityDataset data;
  data.records.reserve(corpus.size());
  for (const auto& entry : corpus) {
    auto it = alphas.find(entry.context);
    if (it == alphas.end()) {
      Fail(ErrorKind::kConfigError, std::string("no alpha configured for context '") +
                                        ContextName(entry.context) + "'");
    }
    data.records.push_back(SensitivityRecord{
        entry.id, entry.tokens, entry.context, it->second,
        ground_truth_sensitivity(scorer, embedder, entry.tokens, it->second)});
  }
  return data;
}

// ---------------------------------------------------------------- predictor

SensitivityPredictor SensitivityPredictor::Initialize(const PredictorConfig& cfg,
                                                      std::uint64_t seed) {
  if (cfg.vocab_size < 1 || cfg.embed_dim < 1 || cfg.window < 0 || cfg.hidden < 1) {
    Fail(ErrorKind::kConfigError, "invalid predictor configuration");
  }
  SensitivityPredictor p;
  p.cfg_ = cfg;
  p.seed_ = seed;
  Rng rng(DeriveSeed(seed, 0x5e75));
  auto random = [&](Eigen::Index r, Eigen::Index c, double scale) {
    MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.Normal();
    }
    return m;
  };
  const int f = p.FeatureDim();
  p.params_.push_back(random(cfg.vocab_size + 1, cfg.embed_dim, 0.5));
  p.params_.push_back(random(cfg.hidden, f, 1.0 / std::sqrt(static_cast<double>(f))));
  p.params_.push_back(MatrixXd::Zero(cfg.hidden, 1));
  p.params_.push_back(
      random(1, cfg.hidden, 1.0 / std::sqrt(static_cast<double>(cfg.hidden))));
  p.params_.push_back(MatrixXd::Zero(1, 1));
  return p;
}

int SensitivityPredictor::FeatureDim() const {
  return (2 * cfg_.window + 1) * cfg_.embed_dim + kContextSlots + kPositionFeatures;
}

int SensitivityPredictor::EmbedRow(TokenId t) const {
  // Out-of-vocabulary ids share the padding row.
  return (t >= 0 && t < cfg_.vocab_size) ? t : cfg_.vocab_size;
}

VectorXd SensitivityPredictor::Features(const TokenSequence& seq, std::size_t i,
                                        TaskContext context) const {
  const int k = cfg_.embed_dim;
  VectorXd f = VectorXd::Zero(FeatureDim());
  const long n = static_cast<long>(seq.size());
  int slot = 0;
  for (int o = -cfg_.window; o <= cfg_.window; ++o, ++slot) {
    const long j = static_cast<long>(i) + o;
    const int row = (j >= 0 && j < n) ? EmbedRow(seq[static_cast<std::size_t>(j)])
                                      : cfg_.vocab_size;
    f.segment(slot * k, k) = params_[kEmbed].row(row).transpose();
  }
  int off = (2 * cfg_.window + 1) * k;
  f(off + ContextSlot(context)) = 1.0;
  off += kContextSlots;
  f(off) = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
  f(off + 1) = i == 0 ? 1.0 : 0.0;
  f(off + 2) = static_cast<long>(i) == n - 1 ? 1.0 : 0.0;
  return f;
}

double SensitivityPredictor::RecordLoss(const TokenSequence& seq,
                                        TaskContext context,
                                        std::span<const double> labels,
                                        std::vector<MatrixXd>* grads,
                                        double scale) const {
  const std::size_t n = seq.size();
  const int fdim = FeatureDim();
  MatrixXd feats(static_cast<Eigen::Index>(n), fdim);
  for (std::size_t i = 0; i < n; ++i) {
    feats.row(static_cast<Eigen::Index>(i)) = Features(seq, i, context).transpose();
  }
  const MatrixXd& w1 = params_[kW1];
  MatrixXd pre = feats * w1.transpose();
  pre.rowwise() += params_[kB1].col(0).transpose();
  const MatrixXd h = pre.array().tanh().matrix();
  const VectorXd z = (h * params_[kW2].transpose()).col(0).array() + params_[kB2](0, 0);
  double loss = 0.0;
  VectorXd dz(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double y = Sigmoid(z(static_cast<Eigen::Index>(i)));
    const double r = y - labels[i];
    loss += r * r;
    dz(static_cast<Eigen::Index>(i)) = 2.0 * r * y * (1.0 - y) / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (grads == nullptr) return loss;

  auto& g = *grads;
  g[kW2] += scale * (dz.transpose() * h);
  g[kB2](0, 0) += scale * dz.sum();
  const MatrixXd dpre =
      ((dz * params_[kW2]).array() * (1.0 - h.array().square())).matrix();
  g[kW1] += scale * (dpre.transpose() * feats);
  g[kB1] += scale * dpre.colwise().sum().transpose();
  const MatrixXd dfeat = dpre * w1;
  const int k = cfg_.embed_dim;
  for (std::size_t i = 0; i < n; ++i) {
    int slot = 0;
    for (int o = -cfg_.window; o <= cfg_.window; ++o, ++slot) {
      const long j = static_cast<long>(i) + o;
      const int row = (j >= 0 && j < static_cast<long>(n))
                          ? EmbedRow(seq[static_cast<std::size_t>(j)])
                          : cfg_.vocab_size;
      g[kEmbed].row(row) +=
          scale * dfeat.row(static_cast<Eigen::Index>(i)).segment(slot * k, k);
    }
  }
  return loss;
}

std::vector<double> SensitivityPredictor::Predict(const TokenSequence& seq,
                                                  TaskContext context) const {
  if (params_.empty()) Fail(ErrorKind::kInternalError, "uninitialized predictor");
  std::vector<double> out(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const VectorXd hidden =
        (params_[kW1] * Features(seq, i, context) + params_[kB1].col(0)).array().tanh();
    const double z = params_[kW2].row(0).dot(hidden) + params_[kB2](0, 0);
    const double y = Sigmoid(z);
    if (!std::isfinite(y)) Fail(ErrorKind::kInternalError, "non-finite prediction");
    out[i] = std::clamp(y, 0.0, 1.0);
  }
  return out;
}

double SensitivityPredictor::Loss(const SensitivityDataset& data) const {
  if (data.records.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : data.records) {
    total += RecordLoss(r.input, r.context, r.labels.scores(), nullptr, 0.0);
  }
  return total / static_cast<double>(data.records.size());
}

void SensitivityPredictor::Train(const SensitivityDataset& data,
                                 const PredictorTrainConfig& cfg) {
  if (data.records.empty()) {
    Fail(ErrorKind::kInvalidInput, "predictor training needs at least one record");
  }
  if (!(cfg.context_dropout >= 0.0 && cfg.context_dropout <= 1.0)) {
    Fail(ErrorKind::kConfigError, "context_dropout must lie in [0, 1]");
  }
  for (const auto& r : data.records) {
    if (r.labels.size() != r.input.size()) {
      Fail(ErrorKind::kInvalidInput, "labels misaligned for record '" + r.input_id + "'");
    }
  }
  // The shared trainer iterates TrainExamples; each one carries its record
  // index as the target.
  std::vector<oracle::TrainExample> examples;
  examples.reserve(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    examples.push_back({data.records[i].input, static_cast<int>(i),
                        oracle::WeightClass::kClean});
  }
  Rng dropout(DeriveSeed(cfg.seed, 3));
  auto loss = [&](const oracle::TrainExample& ex, toy::ParamBlocks* grads,
                  double scale) {
    const auto& r = data.records[static_cast<std::size_t>(std::get<int>(ex.target))];
    TaskContext ctx = r.context;
    // Dropout applies to gradient passes only; reported losses use true tags.
    if (grads != nullptr && cfg.context_dropout > 0.0 &&
        dropout.Uniform() < cfg.context_dropout) {
      ctx = TaskContext::kUnspecified;
    }
    return RecordLoss(r.input, ctx, r.labels.scores(), grads, scale);
  };
  oracle::TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.learning_rate = cfg.learning_rate;
  tc.seed = cfg.seed;
  const auto report = toy::TrainTwoStream(params_, examples, 0.0, tc, loss, nullptr);
  if (loss_history_.empty()) loss_history_.push_back(report.initial_loss);
  loss_history_.insert(loss_history_.end(), report.epoch_loss.begin(),
                       report.epoch_loss.end());
  epochs_trained_ += cfg.epochs;
  final_loss_ = report.final_loss;
}

std::string SensitivityPredictor::ConfigHash() const {
  std::ostringstream os;
  os << "vocab_size=" << cfg_.vocab_size << ";embed_dim=" << cfg_.embed_dim
     << ";window=" << cfg_.window << ";hidden=" << cfg_.hidden;
  return HexDigest(Fnv1a(os.str()));
}

std::string SensitivityPredictor::Serialize() const {
  nlohmann::json j;
  j["schema"] = "trigsense.predictor";
  j["schema_version"] = 1;
  j["config_hash"] = ConfigHash();
  j["seed"] = seed_;
  j["config"] = {{"vocab_size", cfg_.vocab_size},
                 {"embed_dim", cfg_.embed_dim},
                 {"window", cfg_.window},
                 {"hidden", cfg_.hidden}};
  j["epochs"] = epochs_trained_;
  j["final_loss"] = final_loss_;
  j["loss_history"] = loss_history_;
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& p : params_) {
    std::vector<double> flat(p.data(), p.data() + p.size());
    blocks.push_back({{"rows", p.rows()}, {"cols", p.cols()}, {"data", flat}});
  }
  j["params"] = blocks;
  return j.dump();
}

SensitivityPredictor SensitivityPredictor::Deserialize(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kDataError, std::string("malformed predictor checkpoint: ") + e.what());
  }
  try {
    if (j.at("schema") != "trigsense.predictor" || j.at("schema_version") != 1) {
      Fail(ErrorKind::kDataError, "unsupported predictor checkpoint schema");
    }
    PredictorConfig cfg;
    const auto& c = j.at("config");
    cfg.vocab_size = c.at("vocab_size");
    cfg.embed_dim = c.at("embed_dim");
    cfg.window = c.at("window");
    cfg.hidden = c.at("hidden");
    SensitivityPredictor p = Initialize(cfg, j.at("seed").get<std::uint64_t>());
    if (j.at("config_hash") != p.ConfigHash()) {
      Fail(ErrorKind::kDataError, "predictor checkpoint config hash mismatch");
    }
    p.epochs_trained_ = j.at("epochs");
    p.final_loss_ = j.at("final_loss");
    p.loss_history_ = j.at("loss_history").get<std::vector<double>>();
    const auto& blocks = j.at("params");
    if (blocks.size() != p.params_.size()) {
      Fail(ErrorKind::kDataError, "predictor checkpoint has wrong block count");
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto data = blocks[b].at("data").get<std::vector<double>>();
      auto& m = p.params_[b];
      if (blocks[b].at("rows") != m.rows() || blocks[b].at("cols") != m.cols() ||
          static_cast<Eigen::Index>(data.size()) != m.size()) {
        Fail(ErrorKind::kDataError, "predictor checkpoint block shape mismatch");
      }
      std::copy(data.begin(), data.end(), m.data());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kDataError, std::string("malformed predictor checkpoint: ") + e.what());
  }
}

void SensitivityPredictor::Save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) Fail(ErrorKind::kDataError, "cannot write '" + path + "'");
  out << Serialize() << '\n';
}

SensitivityPredictor SensitivityPredictor::Load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kDataError, "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return Deserialize(ss.str());
}

bool operator==(const SensitivityPredictor& a, const SensitivityPredictor& b) {
  if (a.cfg_.vocab_size != b.cfg_.vocab_size || a.cfg_.embed_dim != b.cfg_.embed_dim ||
      a.cfg_.window != b.cfg_.window || a.cfg_.hidden != b.cfg_.hidden ||
      a.params_.size() != b.params_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    if (a.params_[i] != b.params_[i]) return false;
  }
  return true;
}

SensitivityPredictor train_predictor(const SensitivityDataset& dataset,
                                     const PredictorConfig& model_cfg,
                                     const PredictorTrainConfig& train_cfg) {
  auto p = SensitivityPredictor::Initialize(model_cfg, train_cfg.seed);
  p.Train(dataset, train_cfg);
  return p;
}

SensitivityPredictor adapt_predictor(const SensitivityPredictor& predictor,
                                     const SensitivityDataset& few,
                                     const PredictorTrainConfig& adapt_cfg) {
  SensitivityPredictor copy = predictor;
  if (few.records.empty()) return copy;
  copy.Train(few, adapt_cfg);
  return copy;
}

SensitivityMap predict_sensitivity(const SensitivityPredictor& predictor,
                                   const TokenSequence& seq, TaskContext context) {
  return SensitivityMap(predictor.Predict(seq, context));
}

// ---------------------------------------------------------------- selection

double SelectionThreshold(const SensitivityMap& map, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) {
    Fail(ErrorKind::kInvalidInput, "rho must lie in (0, 1]");
  }
  const std::size_t n = map.size();
  // Guard against ceil(0.2 * 5) = ceil(1.0000000000000002) style round-up.
  const double raw = std::ceil(rho * static_cast<double>(n) - 1e-9);
  const std::size_t k =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
  std::vector<double> sorted = map.scores();
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(k - 1),
                   sorted.end(), std::greater<>());
  return sorted[k - 1];
}

std::vector<std::size_t> select_sensitive_positions(const SensitivityMap& map,
                                                    double rho) {
  const double tau = SelectionThreshold(map, rho);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i] >= tau) out.push_back(i);
  }
  return out;
}

}  // namespace trigsense::sensitivity
