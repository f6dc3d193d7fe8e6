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

#include "trigsense/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

namespace trigsense::toy {

using oracle::TaskHead;
using Eigen::VectorXd;

namespace {

Matrix RandomMatrix(Eigen::Index rows, Eigen::Index cols, double scale,
                    Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.Normal();
  }
  return m;
}

void RowSoftmaxInPlace(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

VectorXd Softmax(const VectorXd& z) {
  VectorXd e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

ParamBlocks ZerosLike(const ParamBlocks& params) {
  ParamBlocks out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(Matrix::Zero(p.rows(), p.cols()));
  return out;
}

}  // namespace

// ---------------------------------------------------------------- BigramLm

BigramLm::BigramLm(int vocab_size, Matrix logits)
    : vocab_size_(vocab_size), logits_(std::move(logits)) {
  Refresh();
}

void BigramLm::Refresh() {
  probs_ = logits_;
  RowSoftmaxInPlace(probs_);
  log_probs_ = probs_.array().log().matrix();
}

BigramLm BigramLm::Uniform(int vocab_size) {
  if (vocab_size < 1) Fail(ErrorKind::kInvalidInput, "vocabulary is empty");
  return BigramLm(vocab_size, Matrix::Zero(vocab_size + 1, vocab_size));
}

BigramLm BigramLm::Random(int vocab_size, std::uint64_t seed, double sharpness) {
  if (vocab_size < 1) Fail(ErrorKind::kInvalidInput, "vocabulary is empty");
  Rng rng(seed);
  return BigramLm(vocab_size,
                  RandomMatrix(vocab_size + 1, vocab_size, sharpness, rng));
}

BigramLm BigramLm::FromCounts(std::span<const TokenSequence> corpus,
                              int vocab_size, double smoothing) {
  if (vocab_size < 1) Fail(ErrorKind::kInvalidInput, "vocabulary is empty");
  if (!(smoothing > 0.0)) Fail(ErrorKind::kConfigError, "smoothing must be > 0");
  Matrix counts = Matrix::Constant(vocab_size + 1, vocab_size, smoothing);
  for (const auto& seq : corpus) {
    CheckTokenRange(seq, vocab_size);
    counts(vocab_size, seq[0]) += 1.0;
    for (std::size_t t = 1; t < seq.size(); ++t) counts(seq[t - 1], seq[t]) += 1.0;
  }
  for (Eigen::Index r = 0; r < counts.rows(); ++r) counts.row(r) /= counts.row(r).sum();
  return BigramLm(vocab_size, counts.array().log().matrix());
}

BigramLm BigramLm::Interpolated(std::span<const TokenSequence> corpus, int vocab_size,
                               double weight, double smoothing) {
  if (vocab_size < 1) Fail(ErrorKind::kInvalidInput, "vocabulary is empty");
  if (!(smoothing > 0.0)) Fail(ErrorKind::kConfigError, "smoothing must be > 0");
  if (!(weight >= 0.0 && weight < 1.0)) {
    Fail(ErrorKind::kConfigError, "interpolation weight must lie in [0, 1)");
  }
  Matrix counts = Matrix::Zero(vocab_size + 1, vocab_size);
  Eigen::VectorXd unigram = Eigen::VectorXd::Constant(vocab_size, smoothing);
  for (const auto& seq : corpus) {
    CheckTokenRange(seq, vocab_size);
    counts(vocab_size, seq[0]) += 1.0;
    unigram(seq[0]) += 1.0;
    for (std::size_t t = 1; t < seq.size(); ++t) {
      counts(seq[t - 1], seq[t]) += 1.0;
      unigram(seq[t]) += 1.0;
    }
  }
  unigram /= unigram.sum();
  Matrix p(vocab_size + 1, vocab_size);
  for (Eigen::Index r = 0; r < counts.rows(); ++r) {
    const double total = counts.row(r).sum();
    // Rows never seen as a context fall back to the unigram distribution.
    if (total > 0.0) {
      p.row(r) = weight * counts.row(r) / total + (1.0 - weight) * unigram.transpose();
    } else {
      p.row(r) = unigram.transpose();
    }
  }
  return BigramLm(vocab_size, p.array().log().matrix());
}

BigramLm BigramLm::FromProbabilities(const Matrix& transitions) {
  const auto v = transitions.cols();
  if (v < 1 || transitions.rows() != v + 1) {
    Fail(ErrorKind::kInvalidInput, "transition table must be (V+1) x V");
  }
  if ((transitions.array() <= 0.0).any()) {
    Fail(ErrorKind::kInvalidInput, "transition probabilities must be positive");
  }
  Matrix p = transitions;
  for (Eigen::Index r = 0; r < p.rows(); ++r) p.row(r) /= p.row(r).sum();
  return BigramLm(static_cast<int>(v), p.array().log().matrix());
}

double BigramLm::Perplexity(const TokenSequence& seq) const {
  CheckTokenRange(seq, vocab_size_);
  double nll = -LogProb(start_row(), seq[0]);
  for (std::size_t t = 1; t < seq.size(); ++t) nll -= LogProb(seq[t - 1], seq[t]);
  return std::exp(nll / static_cast<double>(seq.size()));
}

// ------------------------------------------------------ AttentionClassifier

AttentionClassifier AttentionClassifier::Random(int vocab_size, int num_classes,
                                                TokenId mask_id,
                                                const AttentionConfig& cfg,
                                                std::uint64_t seed) {
  if (vocab_size < 2 || num_classes < 1 || cfg.dim < 1 || cfg.heads < 1 ||
      cfg.key_dim < 1 || cfg.value_dim < 1) {
    Fail(ErrorKind::kConfigError, "invalid attention classifier shape");
  }
  AttentionClassifier m;
  m.vocab_size_ = vocab_size;
  m.num_classes_ = num_classes;
  m.mask_id_ = mask_id;
  m.cfg_ = cfg;
  Rng rng(seed);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  m.params_.push_back(RandomMatrix(vocab_size, cfg.dim, cfg.embed_scale, rng));
  for (int h = 0; h < cfg.heads; ++h) {
    m.params_.push_back(RandomMatrix(cfg.key_dim, cfg.dim, inv_sqrt_d, rng));
    m.params_.push_back(RandomMatrix(cfg.key_dim, cfg.dim, inv_sqrt_d, rng));
    m.params_.push_back(RandomMatrix(cfg.value_dim, cfg.dim, inv_sqrt_d, rng));
    m.params_.push_back(Matrix::Zero(cfg.key_dim, 1));
  }
  const int pooled = cfg.heads * cfg.value_dim;
  m.params_.push_back(RandomMatrix(num_classes, pooled,
                                   1.0 / std::sqrt(static_cast<double>(pooled)),
                                   rng));
  m.params_.push_back(Matrix::Zero(num_classes, 1));
  m.Project();
  return m;
}

void AttentionClassifier::Project() {
  if (mask_id_ >= 0 && mask_id_ < vocab_size_) params_[0].row(mask_id_).setZero();
}

Matrix AttentionClassifier::Embed(const TokenSequence& seq) const {
  CheckTokenRange(seq, vocab_size_);
  Matrix x(static_cast<Eigen::Index>(seq.size()), cfg_.dim);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = params_[0].row(seq[i]);
  }
  return x;
}

AttentionClassifier::Forward AttentionClassifier::Run(const Matrix& x) const {
  const Eigen::Index n = x.rows();
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(cfg_.key_dim));
  Forward f;
  f.pooled.resize(cfg_.heads * cfg_.value_dim);
  for (int h = 0; h < cfg_.heads; ++h) {
    Matrix q = x * params_[wq(h)].transpose();
    q.rowwise() += params_[bq(h)].col(0).transpose();
    Matrix k = x * params_[wk(h)].transpose();
    Matrix v = x * params_[wv(h)].transpose();
    Matrix a = (q * k.transpose()) * inv_sqrt_k;
    RowSoftmaxInPlace(a);
    const Matrix o = a * v;
    f.pooled.segment(h * cfg_.value_dim, cfg_.value_dim) =
        o.colwise().sum().transpose() / static_cast<double>(n);
    f.q.push_back(std::move(q));
    f.k.push_back(std::move(k));
    f.v.push_back(std::move(v));
    f.attn.push_back(std::move(a));
  }
  f.logits = params_[wo()] * f.pooled + params_[bo()].col(0);
  return f;
}

Matrix AttentionClassifier::Backward(const Matrix& x, const Forward& f,
                                     const VectorXd& dz, ParamBlocks* grads,
                                     double scale,
                                     const TokenSequence* tokens) const {
  const Eigen::Index n = x.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(cfg_.key_dim));
  if (grads) {
    (*grads)[wo()] += scale * dz * f.pooled.transpose();
    (*grads)[bo()].col(0) += scale * dz;
  }
  const VectorXd dp = params_[wo()].transpose() * dz;
  Matrix dx = Matrix::Zero(n, cfg_.dim);
  for (int h = 0; h < cfg_.heads; ++h) {
    const VectorXd dpooled = dp.segment(h * cfg_.value_dim, cfg_.value_dim);
    // Every row of dO equals dP / n.
    const Matrix d_o = VectorXd::Constant(n, inv_n) * dpooled.transpose();
    const Matrix& a = f.attn[h];
    const Matrix dv = a.transpose() * d_o;
    const Matrix da = d_o * f.v[h].transpose();
    const VectorXd row_dot = a.cwiseProduct(da).rowwise().sum();
    const Matrix ds =
        a.cwiseProduct(da.colwise() - row_dot) * inv_sqrt_k;
    const Matrix dq = ds * f.k[h];
    const Matrix dk = ds.transpose() * f.q[h];
    dx += dq * params_[wq(h)] + dk * params_[wk(h)] + dv * params_[wv(h)];
    if (grads) {
      (*grads)[wq(h)] += scale * dq.transpose() * x;
      (*grads)[bq(h)].col(0) += scale * dq.colwise().sum().transpose();
      (*grads)[wk(h)] += scale * dk.transpose() * x;
      (*grads)[wv(h)] += scale * dv.transpose() * x;
    }
  }
  if (grads && tokens) {
    for (std::size_t i = 0; i < tokens->size(); ++i) {
      (*grads)[0].row((*tokens)[i]) += scale * dx.row(static_cast<Eigen::Index>(i));
    }
  }
  return dx;
}

double AttentionClassifier::ExampleLoss(const TokenSequence& seq, int label,
                                        ParamBlocks* grads, double scale) const {
  if (label < 0 || label >= num_classes_) {
    Fail(ErrorKind::kInvalidInput, "label outside the classifier head");
  }
  const Matrix x = Embed(seq);
  const Forward f = Run(x);
  const VectorXd p = Softmax(f.logits);
  const double loss = -std::log(std::max(p(label), 1e-300));
  if (grads) {
    VectorXd dz = p;
    dz(label) -= 1.0;
    Backward(x, f, dz, grads, scale, &seq);
  }
  return loss;
}

LinearScorer LinearScorer::Random(int vocab_size, int num_classes, int dim,
                                  int max_len, std::uint64_t seed) {
  Rng rng(seed);
  LinearScorer s;
  s.embed = RandomMatrix(vocab_size, dim, 0.5, rng);
  for (int c = 0; c < num_classes; ++c) {
    s.position_w.push_back(RandomMatrix(max_len, dim, 1.0, rng));
  }
  s.bias = VectorXd::Zero(num_classes);
  return s;
}

// ------------------------------------------------------------------ trainer

oracle::FineTuneReport TrainTwoStream(
    ParamBlocks& params, std::span<const oracle::TrainExample> examples,
    double eta, const oracle::TrainConfig& cfg, const ExampleLossFn& loss,
    const std::function<void()>& after_step) {
  if (cfg.batch_size < 1 || cfg.epochs < 0 || !(cfg.learning_rate > 0.0)) {
    Fail(ErrorKind::kConfigError, "invalid training configuration");
  }
  std::vector<std::size_t> clean, poison;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    (examples[i].weight == oracle::WeightClass::kClean ? clean : poison).push_back(i);
  }
  const bool use_poison = eta > 0.0 && !poison.empty();

  auto full_loss = [&]() {
    double lc = 0.0, lp = 0.0;
    for (std::size_t i : clean) lc += loss(examples[i], nullptr, 0.0);
    if (!clean.empty()) lc /= static_cast<double>(clean.size());
    if (use_poison) {
      for (std::size_t i : poison) lp += loss(examples[i], nullptr, 0.0);
      lp /= static_cast<double>(poison.size());
    }
    return lc + (use_poison ? eta * lp : 0.0);
  };

  oracle::FineTuneReport report;
  report.clean_count = clean.size();
  report.poison_count = poison.size();
  report.eta = eta;
  report.initial_loss = full_loss();

  // Clean examples drive the epochs; a poison-only set drives them instead.
  const bool primary_is_poison = clean.empty();
  const std::vector<std::size_t>& primary = primary_is_poison ? poison : clean;
  const double primary_weight = primary_is_poison ? eta : 1.0;
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  std::size_t poison_batch = static_cast<std::size_t>(cfg.poison_batch_size);
  if (poison_batch == 0 && !clean.empty()) {
    poison_batch = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(
               static_cast<double>(batch) * static_cast<double>(poison.size()) /
               static_cast<double>(clean.size()))));
  }

  Rng primary_rng(DeriveSeed(cfg.seed, 1));
  Rng poison_rng(DeriveSeed(cfg.seed, 2));
  std::vector<std::size_t> poison_order = poison;
  std::size_t poison_cursor = poison_order.size();

  ParamBlocks m = ZerosLike(params), v = ZerosLike(params);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = primary;
    primary_rng.Shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      ParamBlocks grads = ZerosLike(params);
      const double scale = primary_weight / static_cast<double>(end - start);
      if (scale != 0.0) {
        for (std::size_t b = start; b < end; ++b) loss(examples[order[b]], &grads, scale);
      }
      if (use_poison && !primary_is_poison) {
        const double pscale = eta / static_cast<double>(poison_batch);
        for (std::size_t b = 0; b < poison_batch; ++b) {
          if (poison_cursor == poison_order.size()) {
            poison_rng.Shuffle(poison_order);
            poison_cursor = 0;
          }
          loss(examples[poison_order[poison_cursor++]], &grads, pscale);
        }
      }
      ++step;
      const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t blk = 0; blk < params.size(); ++blk) {
        Matrix g = grads[blk];
        if (cfg.weight_decay > 0.0) g += cfg.weight_decay * params[blk];
        m[blk] = kBeta1 * m[blk] + (1.0 - kBeta1) * g;
        v[blk] = kBeta2 * v[blk] + (1.0 - kBeta2) * g.cwiseProduct(g);
        params[blk].array() -= cfg.learning_rate * (m[blk].array() / bc1) /
                               ((v[blk].array() / bc2).sqrt() + kEps);
      }
      if (after_step) after_step();
    }
    report.epoch_loss.push_back(full_loss());
  }
  report.final_loss =
      report.epoch_loss.empty() ? report.initial_loss : report.epoch_loss.back();
  return report;
}

// ----------------------------------------------------------------- ToyModel

ToyModel::ToyModel(ToyConfig cfg, std::shared_ptr<const BigramLm> lm,
                   std::shared_ptr<const AttentionClassifier> classifier,
                   std::shared_ptr<const LinearScorer> linear,
                   std::uint64_t version)
    : cfg_(std::move(cfg)),
      lm_(std::move(lm)),
      classifier_(std::move(classifier)),
      linear_(std::move(linear)),
      version_(version) {
  if (cfg_.vocab_size < 2) Fail(ErrorKind::kConfigError, "vocabulary too small");
  if (cfg_.mask_id < 0 || cfg_.mask_id >= cfg_.vocab_size) {
    Fail(ErrorKind::kConfigError, "mask id outside the vocabulary");
  }
  if (lm_ && lm_->vocab_size() != cfg_.vocab_size) {
    Fail(ErrorKind::kConfigError, "language model vocabulary mismatch");
  }
  if (classifier_ && classifier_->vocab_size() != cfg_.vocab_size) {
    Fail(ErrorKind::kConfigError, "classifier vocabulary mismatch");
  }
  if (cfg_.head == TaskHead::kGenerator && !lm_) {
    Fail(ErrorKind::kConfigError, "generator head needs a language model");
  }
  if (cfg_.head == TaskHead::kClassifier && !classifier_ && !linear_) {
    Fail(ErrorKind::kConfigError, "classifier head needs a classifier");
  }
  if (cfg_.embedder == EmbedderKind::kPooledHidden && !classifier_) {
    Fail(ErrorKind::kConfigError, "pooled embedder needs an attention classifier");
  }
}

int ToyModel::num_classes() const {
  if (cfg_.head != TaskHead::kClassifier) return 0;
  if (classifier_) return classifier_->num_classes();
  return static_cast<int>(linear_->bias.size());
}

oracle::Capabilities ToyModel::capabilities() const {
  oracle::Capabilities c;
  c.scoring = lm_ != nullptr;
  c.embedding = true;
  c.has_attention = classifier_ != nullptr && cfg_.head == TaskHead::kClassifier;
  c.has_gradients = cfg_.head == TaskHead::kClassifier && (classifier_ || linear_);
  c.is_encoder = cfg_.encoder && lm_ != nullptr;
  c.is_decoder = cfg_.decoder && lm_ != nullptr;
  c.trainable = cfg_.head == TaskHead::kClassifier ? classifier_ != nullptr
                                                   : lm_ != nullptr;
  c.reentrant = true;
  return c;
}

oracle::Readout ToyModel::readout() const {
  if (cfg_.readout) return *cfg_.readout;
  return Model::readout();
}

int ToyModel::embedding_dim() const {
  if (classifier_) return classifier_->config().dim;
  if (linear_) return static_cast<int>(linear_->embed.cols());
  return 0;
}

bool ToyModel::IsSpecial(TokenId id) const {
  return id == cfg_.mask_id ||
         std::find(cfg_.special_tokens.begin(), cfg_.special_tokens.end(), id) !=
             cfg_.special_tokens.end();
}

double ToyModel::Perplexity(const TokenSequence& seq) const {
  if (!lm_) return Model::Perplexity(seq);
  if (!cfg_.marginalize_mask || !seq.Contains(cfg_.mask_id)) return lm_->Perplexity(seq);
  CheckTokenRange(seq, cfg_.vocab_size);
  // Forward pass over the chain; a masked slot sums over every filler, an
  // observed slot keeps only its token. `alpha` is renormalized each step and
  // the scale folded into the log-likelihood.
  const int V = cfg_.vocab_size;
  VectorXd alpha = lm_->Row(lm_->start_row());
  double loglik = 0.0;
  auto observe = [&](std::size_t t) {
    if (seq[t] != cfg_.mask_id) {
      const double keep = alpha(seq[t]);
      alpha.setZero();
      alpha(seq[t]) = keep;
    }
    const double total = alpha.sum();
    loglik += std::log(total);
    alpha /= total;
  };
  observe(0);
  for (std::size_t t = 1; t < seq.size(); ++t) {
    VectorXd next = VectorXd::Zero(V);
    for (int v = 0; v < V; ++v) {
      if (alpha(v) > 0.0) next += alpha(v) * lm_->Row(v);
    }
    alpha = std::move(next);
    observe(t);
  }
  return std::exp(-loglik / static_cast<double>(seq.size()));
}

std::vector<double> ToyModel::SentenceEmbedding(const TokenSequence& seq) const {
  if (cfg_.embedder == EmbedderKind::kPooledHidden) {
    const VectorXd p = classifier_->Run(classifier_->Embed(seq)).pooled;
    return std::vector<double>(p.data(), p.data() + p.size());
  }
  std::vector<double> v(static_cast<std::size_t>(cfg_.vocab_size), 0.0);
  for (TokenId t : seq) v[static_cast<std::size_t>(t)] += 1.0 / static_cast<double>(seq.size());
  return v;
}

std::vector<double> ToyModel::MaskedFill(const TokenSequence& seq,
                                         std::size_t position) const {
  if (!lm_ || !cfg_.encoder) return Model::MaskedFill(seq, position);
  // p(w | left, right) is proportional to P(w | left) * P(right | w).
  const int left = position == 0 ? lm_->start_row() : seq[position - 1];
  const bool has_right = position + 1 < seq.size();
  std::vector<double> w(static_cast<std::size_t>(cfg_.vocab_size), 0.0);
  double total = 0.0;
  for (TokenId c = 0; c < cfg_.vocab_size; ++c) {
    if (IsSpecial(c)) continue;
    double p = lm_->Prob(left, c);
    if (has_right) p *= lm_->Prob(c, seq[position + 1]);
    w[static_cast<std::size_t>(c)] = p;
    total += p;
  }
  if (!(total > 0.0)) Fail(ErrorKind::kInternalError, "masked fill has no mass");
  for (double& p : w) p /= total;
  return w;
}

std::vector<double> ToyModel::NextToken(const TokenSequence& prefix) const {
  if (!lm_ || !cfg_.decoder) return Model::NextToken(prefix);
  std::vector<double> w(static_cast<std::size_t>(cfg_.vocab_size), 0.0);
  double total = 0.0;
  const int row = prefix[prefix.size() - 1];
  for (TokenId c = 0; c < cfg_.vocab_size; ++c) {
    if (IsSpecial(c)) continue;
    w[static_cast<std::size_t>(c)] = lm_->Prob(row, c);
    total += w[static_cast<std::size_t>(c)];
  }
  for (double& p : w) p /= total;
  return w;
}

oracle::AttentionStack ToyModel::Attention(const TokenSequence& seq) const {
  if (!capabilities().has_attention) return Model::Attention(seq);
  const auto f = classifier_->Run(classifier_->Embed(seq));
  const int n = static_cast<int>(seq.size());
  oracle::AttentionStack stack(1, classifier_->config().heads, n);
  for (int h = 0; h < classifier_->config().heads; ++h) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) stack.at(0, h, i, j) = f.attn[h](i, j);
    }
  }
  return stack;
}

Matrix ToyModel::InputEmbeddings(const TokenSequence& seq) const {
  if (classifier_) return classifier_->Embed(seq);
  if (linear_) {
    Matrix x(static_cast<Eigen::Index>(seq.size()), linear_->embed.cols());
    for (std::size_t i = 0; i < seq.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = linear_->embed.row(seq[i]);
    }
    return x;
  }
  return Model::InputEmbeddings(seq);
}

Matrix ToyModel::BaselineEmbeddings(const TokenSequence& seq,
                                    oracle::BaselineKind kind) const {
  std::vector<TokenId> masked(seq.size(), cfg_.mask_id);
  Matrix x = InputEmbeddings(TokenSequence(std::move(masked)));
  if (kind == oracle::BaselineKind::kZeros) x.setZero();
  return x;
}

oracle::EmbeddingGradient ToyModel::GradientAt(
    const TokenSequence& seq, const Matrix& embeddings,
    const oracle::TargetSpec& target) const {
  const auto* logit = std::get_if<oracle::ClassLogit>(&target);
  if (!logit) Fail(ErrorKind::kInvalidInput, "toy classifiers expose class logits only");
  oracle::EmbeddingGradient out;
  if (classifier_) {
    const auto f = classifier_->Run(embeddings);
    VectorXd dz = VectorXd::Zero(classifier_->num_classes());
    dz(logit->cls) = 1.0;
    out.grads = classifier_->Backward(embeddings, f, dz, nullptr, 0.0, nullptr);
    out.value = f.logits(logit->cls);
    return out;
  }
  if (!linear_) return Model::GradientAt(seq, embeddings, target);
  const auto n = embeddings.rows();
  const Matrix& w = linear_->position_w[static_cast<std::size_t>(logit->cls)];
  if (n > w.rows()) Fail(ErrorKind::kInvalidInput, "sequence longer than scorer");
  out.grads = w.topRows(n);
  out.value = embeddings.cwiseProduct(out.grads).sum() + linear_->bias(logit->cls);
  return out;
}

oracle::TaskOutput ToyModel::Predict(const TokenSequence& seq) const {
  oracle::TaskOutput out;
  if (cfg_.head == TaskHead::kGenerator) {
    std::vector<TokenId> generated;
    TokenId prev = seq[seq.size() - 1];
    for (int t = 0; t < std::max(1, cfg_.decoding.max_length); ++t) {
      TokenId best = -1;
      double best_p = -1.0;
      for (TokenId c = 0; c < cfg_.vocab_size; ++c) {
        if (IsSpecial(c)) continue;
        if (lm_->Prob(prev, c) > best_p) {
          best_p = lm_->Prob(prev, c);
          best = c;
        }
      }
      generated.push_back(best);
      prev = best;
    }
    out.generated = TokenSequence(std::move(generated));
    return out;
  }
  VectorXd z;
  if (classifier_) {
    z = classifier_->Run(classifier_->Embed(seq)).logits;
  } else {
    const Matrix x = InputEmbeddings(seq);
    z.resize(linear_->bias.size());
    for (Eigen::Index c = 0; c < z.size(); ++c) {
      const Matrix& w = linear_->position_w[static_cast<std::size_t>(c)];
      if (x.rows() > w.rows()) Fail(ErrorKind::kInvalidInput, "sequence longer than scorer");
      z(c) = x.cwiseProduct(w.topRows(x.rows())).sum() + linear_->bias(c);
    }
  }
  out.logits.assign(z.data(), z.data() + z.size());
  return out;
}

oracle::FineTuneResult ToyModel::FineTune(
    std::span<const oracle::TrainExample> examples, double eta,
    const oracle::TrainConfig& cfg) const {
  oracle::FineTuneResult result;
  if (cfg_.head == TaskHead::kClassifier) {
    if (!classifier_) return Model::FineTune(examples, eta, cfg);
    auto trained = std::make_shared<AttentionClassifier>(*classifier_);
    auto loss = [&](const oracle::TrainExample& ex, ParamBlocks* grads,
                    double scale) {
      const int* label = std::get_if<int>(&ex.target);
      if (!label) Fail(ErrorKind::kInvalidInput, "classifier targets must be class ids");
      return trained->ExampleLoss(ex.input, *label, grads, scale);
    };
    result.report = TrainTwoStream(trained->mutable_params(), examples, eta, cfg,
                                   loss, [&] { trained->Project(); });
    result.model = std::make_shared<ToyModel>(cfg_, lm_, std::move(trained),
                                              linear_, version_ + 1);
    return result;
  }
  auto trained = std::make_shared<BigramLm>(*lm_);
  ParamBlocks params{trained->logits()};
  auto loss = [&](const oracle::TrainExample& ex, ParamBlocks* grads,
                  double scale) {
    const auto* target = std::get_if<TokenSequence>(&ex.target);
    if (!target) Fail(ErrorKind::kInvalidInput, "generator targets must be sequences");
    CheckTokenRange(*target, cfg_.vocab_size);
    // Rows are read from the live parameter block.
    const Matrix& logits = params[0];
    const double inv_len = 1.0 / static_cast<double>(target->size());
    double nll = 0.0;
    int prev = ex.input[ex.input.size() - 1];
    for (TokenId t : *target) {
      const VectorXd p = Softmax(logits.row(prev).transpose());
      nll -= std::log(std::max(p(t), 1e-300)) * inv_len;
      if (grads) {
        VectorXd g = p;
        g(t) -= 1.0;
        (*grads)[0].row(prev) += scale * inv_len * g.transpose();
      }
      prev = t;
    }
    return nll;
  };
  result.report = TrainTwoStream(params, examples, eta, cfg, loss, nullptr);
  trained->mutable_logits() = params[0];
  trained->Refresh();
  result.model = std::make_shared<ToyModel>(cfg_, std::move(trained), classifier_,
                                            linear_, version_ + 1);
  return result;
}

oracle::ModelHandle MakeClassifier(const ToyConfig& cfg,
                                   std::shared_ptr<const BigramLm> lm,
                                   const AttentionConfig& attn,
                                   std::uint64_t seed) {
  ToyConfig c = cfg;
  c.head = TaskHead::kClassifier;
  auto clf = std::make_shared<AttentionClassifier>(AttentionClassifier::Random(
      c.vocab_size, c.num_classes, c.mask_id, attn, seed));
  return std::make_shared<ToyModel>(std::move(c), std::move(lm), std::move(clf),
                                    nullptr);
}

oracle::ModelHandle MakeGenerator(const ToyConfig& cfg,
                                  std::shared_ptr<const BigramLm> lm) {
  ToyConfig c = cfg;
  c.head = TaskHead::kGenerator;
  c.encoder = false;
  c.decoder = true;
  if (c.embedder == EmbedderKind::kPooledHidden) c.embedder = EmbedderKind::kOneHotMean;
  return std::make_shared<ToyModel>(std::move(c), std::move(lm), nullptr, nullptr);
}

oracle::ModelHandle MakeLinear(const ToyConfig& cfg, int dim, int max_len,
                               std::uint64_t seed) {
  ToyConfig c = cfg;
  c.head = TaskHead::kClassifier;
  c.embedder = EmbedderKind::kOneHotMean;
  auto lin = std::make_shared<LinearScorer>(LinearScorer::Random(
      c.vocab_size, c.num_classes, dim, max_len, seed));
  return std::make_shared<ToyModel>(std::move(c), nullptr, nullptr, std::move(lin));
}

}  // namespace trigsense::toy
