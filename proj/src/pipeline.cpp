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

#include "trigsense/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "trigsense/stats.hpp"
#include "trigsense/synthetic.hpp"
#include "trigsense/toy.hpp"

namespace trigsense::pipeline {

namespace fs = std::filesystem;
using artifacts::Json;
using config::FormatDouble;
using config::KeyValues;

namespace {

// Seed streams. Each consumer draws from its own stream so adding a phase
// never shifts another phase's randomness.
enum : std::uint64_t {
  kSplitStream = 0x5117,
  kTargetInitStream = 0x7a11,
  kTargetTrainStream = 0x7a12,
  kSurrogateStream = 0x5a77,
  kPredictorStream = 0xd75a,
  kAdaptStream = 0xd75b,
  kSearchStream = 0x5ea0,
  kInjectStream = 0x1ec7,
  kVictimStream = 0xe7a1,
  kRareStream = 0xe7a2,
};

// Marks errors that already carry a phase prefix.
class PhaseError : public Error {
 public:
  using Error::Error;
};

template <typename Fn>
auto Guard(Phase phase, const std::string& input_id, Fn&& fn) -> decltype(fn()) {
  std::string prefix = std::string("phase ") + PhaseName(phase);
  if (!input_id.empty()) prefix += ", input " + input_id;
  prefix += ": ";
  try {
    return fn();
  } catch (const PhaseError&) {
    throw;
  } catch (const Error& e) {
    throw PhaseError(e.kind(), prefix + e.what());
  } catch (const Json::exception& e) {
    throw PhaseError(ErrorKind::kDataError, prefix + "malformed artifact: " + e.what());
  } catch (const fs::filesystem_error& e) {
    throw PhaseError(ErrorKind::kDataError, prefix + e.what());
  }
}

const char* BaselineName(oracle::BaselineKind b) {
  return b == oracle::BaselineKind::kMask ? "mask" : "zeros";
}

oracle::BaselineKind ParseBaseline(const std::string& s) {
  if (s == "mask") return oracle::BaselineKind::kMask;
  if (s == "zeros") return oracle::BaselineKind::kZeros;
  Fail(ErrorKind::kConfigError, "hshap.baseline must be mask or zeros, got '" + s + "'");
}

std::string ReadoutName(const std::optional<oracle::Readout>& r) {
  if (!r) return "auto";
  switch (*r) {
    case oracle::Readout::kFirst: return "first";
    case oracle::Readout::kLast: return "last";
    case oracle::Readout::kMean: return "mean";
  }
  return "auto";
}

std::optional<oracle::Readout> ParseReadout(const std::string& s) {
  if (s == "auto") return std::nullopt;
  if (s == "first") return oracle::Readout::kFirst;
  if (s == "last") return oracle::Readout::kLast;
  if (s == "mean") return oracle::Readout::kMean;
  Fail(ErrorKind::kConfigError, "hshap.readout must be auto, first, last or mean");
}

const char* ModeName(triggers::GenerationMode m) {
  switch (m) {
    case triggers::GenerationMode::kAuto: return "auto";
    case triggers::GenerationMode::kMasked: return "masked";
    case triggers::GenerationMode::kSequential: return "sequential";
  }
  return "auto";
}

triggers::GenerationMode ParseMode(const std::string& s) {
  if (s == "auto") return triggers::GenerationMode::kAuto;
  if (s == "masked") return triggers::GenerationMode::kMasked;
  if (s == "sequential") return triggers::GenerationMode::kSequential;
  Fail(ErrorKind::kConfigError, "plug.mode must be auto, masked or sequential");
}

std::string OptionalText(const std::optional<double>& v) {
  return v ? FormatDouble(*v) : "auto";
}

std::size_t AsSize(std::int64_t v, const char* key) {
  if (v < 0) Fail(ErrorKind::kConfigError, std::string(key) + " must be >= 0");
  return static_cast<std::size_t>(v);
}

int AsInt(std::int64_t v, const char* key) {
  if (v < -2147483647 || v > 2147483647) {
    Fail(ErrorKind::kConfigError, std::string(key) + " is out of range");
  }
  return static_cast<int>(v);
}

void Require(bool ok, const std::string& what) {
  if (!ok) Fail(ErrorKind::kConfigError, "config: " + what);
}

const std::set<std::string>& KnownKeys() {
  static const std::set<std::string> keys = {
      "target_backend", "scorer_backend", "embedder_backend", "surrogate_backend",
      "task", "corpus", "adapt_corpus", "run_name", "seed", "test_fraction",
      "alpha.classification", "alpha.generation", "alpha.other", "alpha.unspecified",
      "rho", "label_examples", "predictor.embed_dim", "predictor.window",
      "predictor.hidden", "predictor.epochs", "predictor.batch_size",
      "predictor.learning_rate", "predictor.context_dropout", "adapt_epochs",
      "hshap.beta", "hshap.gamma", "hshap.tau_shap", "hshap.ig_steps", "hshap.baseline",
      "hshap.dispersion_threshold", "hshap.fine_window", "hshap.coarse_window",
      "hshap.ranking", "hshap.harmonization", "hshap.readout", "plug.L",
      "plug.tau_insert_fraction", "plug.tau_insert", "plug.tau_ppl", "plug.ppl_factor",
      "plug.lambda", "plug.k_t", "plug.num_samples", "plug.temperature", "plug.mode",
      "plug.restrict_to_sensitive", "search_examples", "poison_rate", "eta", "placement",
      "triggers_per_example", "target_class", "target_text", "inject.epochs",
      "inject.batch_size", "inject.learning_rate", "eval.examples", "eval.src_examples",
      "eval.onion_threshold", "eval.random_baseline", "toy.dim", "toy.heads",
      "toy.epochs", "toy.batch_size", "toy.learning_rate", "toy.lm_smoothing", "toy.lm_weight", "trigger_text",
      "toy.surrogate_poison_rate"};
  return keys;
}

Json DoublesJson(std::span<const double> v) { return Json(std::vector<double>(v.begin(), v.end())); }

Json TokensJson(const TokenSequence& seq) { return Json(seq.vector()); }

TokenSequence TokensFrom(const Json& j) {
  return TokenSequence(j.get<std::vector<TokenId>>());
}

Json OptionalJson(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }


}  // namespace

// ------------------------------------------------------------------ names

const char* TaskName(Task t) {
  return t == Task::kClassification ? "classification" : "generation";
}

const char* PhaseName(Phase p) {
  switch (p) {
    case Phase::kLabel: return "label";
    case Phase::kTrainDmsa: return "train-dmsa";
    case Phase::kAdaptDmsa: return "adapt-dmsa";
    case Phase::kAttribute: return "attribute";
    case Phase::kTriggers: return "triggers";
    case Phase::kPoison: return "poison";
    case Phase::kInject: return "inject";
    case Phase::kEval: return "eval";
    case Phase::kReport: return "report";
  }
  return "unknown";
}

// ----------------------------------------------------------------- config

PipelineConfig PipelineConfig::FromKeyValues(const KeyValues& kv) {
  const auto unknown = kv.UnknownKeys(KnownKeys(), {"external."});
  if (!unknown.empty()) Fail(ErrorKind::kConfigError, "unknown config key '" + unknown[0] + "'");

  PipelineConfig c;
  c.target_backend = kv.GetString("target_backend", c.target_backend);
  c.scorer_backend = kv.GetString("scorer_backend", c.scorer_backend);
  c.embedder_backend = kv.GetString("embedder_backend", c.embedder_backend);
  c.surrogate_backend = kv.GetString("surrogate_backend", c.surrogate_backend);
  const std::string task = kv.GetString("task", TaskName(c.task));
  if (task == "classification") {
    c.task = Task::kClassification;
  } else if (task == "generation") {
    c.task = Task::kGeneration;
  } else {
    Fail(ErrorKind::kConfigError, "task must be classification or generation");
  }
  c.corpus = kv.GetString("corpus", c.corpus);
  c.adapt_corpus = kv.GetString("adapt_corpus", c.adapt_corpus);
  c.run_name = kv.GetString("run_name", c.run_name);
  c.seed = kv.GetUint("seed", c.seed);
  c.test_fraction = kv.GetDouble("test_fraction", c.test_fraction);

  for (auto ctx : {sensitivity::TaskContext::kClassification, sensitivity::TaskContext::kGeneration,
                   sensitivity::TaskContext::kOther, sensitivity::TaskContext::kUnspecified}) {
    const std::string key = std::string("alpha.") + sensitivity::ContextName(ctx);
    if (auto v = kv.GetOptionalDouble(key)) {
      c.alphas[ctx] = *v;
    } else if (kv.Has(key)) {
      c.alphas.erase(ctx);
    }
  }
  c.rho = kv.GetDouble("rho", c.rho);
  c.label_examples = AsSize(kv.GetInt("label_examples", static_cast<std::int64_t>(c.label_examples)), "label_examples");
  c.predictor.embed_dim = AsInt(kv.GetInt("predictor.embed_dim", c.predictor.embed_dim), "predictor.embed_dim");
  c.predictor.window = AsInt(kv.GetInt("predictor.window", c.predictor.window), "predictor.window");
  c.predictor.hidden = AsInt(kv.GetInt("predictor.hidden", c.predictor.hidden), "predictor.hidden");
  c.predictor_train.epochs = AsInt(kv.GetInt("predictor.epochs", c.predictor_train.epochs), "predictor.epochs");
  c.predictor_train.batch_size = AsInt(kv.GetInt("predictor.batch_size", c.predictor_train.batch_size), "predictor.batch_size");
  c.predictor_train.learning_rate = kv.GetDouble("predictor.learning_rate", c.predictor_train.learning_rate);
  c.predictor_train.context_dropout = kv.GetDouble("predictor.context_dropout", c.predictor_train.context_dropout);
  c.adapt_epochs = AsInt(kv.GetInt("adapt_epochs", c.adapt_epochs), "adapt_epochs");

  c.hshap.beta = kv.GetDouble("hshap.beta", c.hshap.beta);
  c.hshap.gamma = kv.GetDouble("hshap.gamma", c.hshap.gamma);
  c.hshap.tau_shap = kv.Has("hshap.tau_shap") ? kv.GetOptionalDouble("hshap.tau_shap") : c.hshap.tau_shap;
  c.hshap.ig_steps = AsInt(kv.GetInt("hshap.ig_steps", c.hshap.ig_steps), "hshap.ig_steps");
  c.hshap.baseline = ParseBaseline(kv.GetString("hshap.baseline", BaselineName(c.hshap.baseline)));
  c.hshap.segmentation.dispersion_threshold =
      kv.GetDouble("hshap.dispersion_threshold", c.hshap.segmentation.dispersion_threshold);
  c.hshap.segmentation.fine_window = AsSize(
      kv.GetInt("hshap.fine_window", static_cast<std::int64_t>(c.hshap.segmentation.fine_window)),
      "hshap.fine_window");
  c.hshap.segmentation.coarse_window = AsSize(
      kv.GetInt("hshap.coarse_window", static_cast<std::int64_t>(c.hshap.segmentation.coarse_window)),
      "hshap.coarse_window");
  c.hshap.ranking = attribution::ParseSegmentRanking(
      kv.GetString("hshap.ranking", attribution::SegmentRankingName(c.hshap.ranking)));
  c.hshap.harmonization = attribution::ParseHarmonization(
      kv.GetString("hshap.harmonization", attribution::HarmonizationName(c.hshap.harmonization)));
  c.hshap.readout = ParseReadout(kv.GetString("hshap.readout", ReadoutName(c.hshap.readout)));

  c.plug.L = AsSize(kv.GetInt("plug.L", static_cast<std::int64_t>(c.plug.L)), "plug.L");
  c.plug.tau_insert_fraction = kv.GetDouble("plug.tau_insert_fraction", c.plug.tau_insert_fraction);
  c.plug.tau_insert = kv.Has("plug.tau_insert") ? kv.GetOptionalDouble("plug.tau_insert") : c.plug.tau_insert;
  c.plug.tau_ppl = kv.Has("plug.tau_ppl") ? kv.GetOptionalDouble("plug.tau_ppl") : c.plug.tau_ppl;
  c.plug.ppl_factor = kv.GetDouble("plug.ppl_factor", c.plug.ppl_factor);
  c.plug.lambda = kv.GetDouble("plug.lambda", c.plug.lambda);
  c.plug.k_t = AsSize(kv.GetInt("plug.k_t", static_cast<std::int64_t>(c.plug.k_t)), "plug.k_t");
  c.plug.sampler.num_samples = AsInt(kv.GetInt("plug.num_samples", c.plug.sampler.num_samples), "plug.num_samples");
  c.plug.sampler.temperature = kv.GetDouble("plug.temperature", c.plug.sampler.temperature);
  c.plug.sampler.mode = ParseMode(kv.GetString("plug.mode", ModeName(c.plug.sampler.mode)));
  c.plug.restrict_to_sensitive = kv.GetBool("plug.restrict_to_sensitive", c.plug.restrict_to_sensitive);
  c.search_examples = AsSize(kv.GetInt("search_examples", static_cast<std::int64_t>(c.search_examples)), "search_examples");

  c.poison_rate = kv.GetDouble("poison_rate", c.poison_rate);
  c.eta = kv.GetDouble("eta", c.eta);
  c.placement = injection::ParsePlacementPolicy(
      kv.GetString("placement", injection::PlacementPolicyName(c.placement)));
  c.triggers_per_example = AsSize(
      kv.GetInt("triggers_per_example", static_cast<std::int64_t>(c.triggers_per_example)),
      "triggers_per_example");
  c.target_class = AsInt(kv.GetInt("target_class", c.target_class), "target_class");
  c.target_text = kv.GetString("target_text", c.target_text);
  c.trigger_text = kv.GetString("trigger_text", c.trigger_text);
  c.inject_train.epochs = AsInt(kv.GetInt("inject.epochs", c.inject_train.epochs), "inject.epochs");
  c.inject_train.batch_size = AsInt(kv.GetInt("inject.batch_size", c.inject_train.batch_size), "inject.batch_size");
  c.inject_train.learning_rate = kv.GetDouble("inject.learning_rate", c.inject_train.learning_rate);

  c.eval_examples = AsSize(kv.GetInt("eval.examples", static_cast<std::int64_t>(c.eval_examples)), "eval.examples");
  c.src_examples = AsSize(kv.GetInt("eval.src_examples", static_cast<std::int64_t>(c.src_examples)), "eval.src_examples");
  c.onion_threshold = kv.Has("eval.onion_threshold") ? kv.GetOptionalDouble("eval.onion_threshold")
                                                      : c.onion_threshold;
  c.random_baseline = kv.GetBool("eval.random_baseline", c.random_baseline);

  c.toy.dim = AsInt(kv.GetInt("toy.dim", c.toy.dim), "toy.dim");
  c.toy.heads = AsInt(kv.GetInt("toy.heads", c.toy.heads), "toy.heads");
  c.toy.epochs = AsInt(kv.GetInt("toy.epochs", c.toy.epochs), "toy.epochs");
  c.toy.batch_size = AsInt(kv.GetInt("toy.batch_size", c.toy.batch_size), "toy.batch_size");
  c.toy.learning_rate = kv.GetDouble("toy.learning_rate", c.toy.learning_rate);
  c.toy.lm_smoothing = kv.GetDouble("toy.lm_smoothing", c.toy.lm_smoothing);
  c.toy.surrogate_poison_rate = kv.GetDouble("toy.surrogate_poison_rate", c.toy.surrogate_poison_rate);

  for (const auto& [k, v] : kv.entries()) {
    if (k.rfind("external.", 0) == 0) c.external_options[k] = v;
  }
  c.Validate();
  return c;
}

KeyValues PipelineConfig::ToKeyValues() const {
  KeyValues kv;
  kv.Set("target_backend", target_backend);
  kv.Set("scorer_backend", scorer_backend);
  kv.Set("embedder_backend", embedder_backend);
  kv.Set("surrogate_backend", surrogate_backend);
  kv.Set("task", TaskName(task));
  kv.Set("corpus", corpus);
  kv.Set("adapt_corpus", adapt_corpus);
  kv.Set("run_name", run_name);
  kv.Set("seed", std::to_string(seed));
  kv.Set("test_fraction", FormatDouble(test_fraction));
  for (auto ctx : {sensitivity::TaskContext::kClassification, sensitivity::TaskContext::kGeneration,
                   sensitivity::TaskContext::kOther, sensitivity::TaskContext::kUnspecified}) {
    auto it = alphas.find(ctx);
    kv.Set(std::string("alpha.") + sensitivity::ContextName(ctx),
           it == alphas.end() ? "" : FormatDouble(it->second));
  }
  kv.Set("rho", FormatDouble(rho));
  kv.Set("label_examples", std::to_string(label_examples));
  kv.Set("predictor.embed_dim", std::to_string(predictor.embed_dim));
  kv.Set("predictor.window", std::to_string(predictor.window));
  kv.Set("predictor.hidden", std::to_string(predictor.hidden));
  kv.Set("predictor.epochs", std::to_string(predictor_train.epochs));
  kv.Set("predictor.batch_size", std::to_string(predictor_train.batch_size));
  kv.Set("predictor.learning_rate", FormatDouble(predictor_train.learning_rate));
  kv.Set("predictor.context_dropout", FormatDouble(predictor_train.context_dropout));
  kv.Set("adapt_epochs", std::to_string(adapt_epochs));
  kv.Set("hshap.beta", FormatDouble(hshap.beta));
  kv.Set("hshap.gamma", FormatDouble(hshap.gamma));
  kv.Set("hshap.tau_shap", OptionalText(hshap.tau_shap));
  kv.Set("hshap.ig_steps", std::to_string(hshap.ig_steps));
  kv.Set("hshap.baseline", BaselineName(hshap.baseline));
  kv.Set("hshap.dispersion_threshold", FormatDouble(hshap.segmentation.dispersion_threshold));
  kv.Set("hshap.fine_window", std::to_string(hshap.segmentation.fine_window));
  kv.Set("hshap.coarse_window", std::to_string(hshap.segmentation.coarse_window));
  kv.Set("hshap.ranking", attribution::SegmentRankingName(hshap.ranking));
  kv.Set("hshap.harmonization", attribution::HarmonizationName(hshap.harmonization));
  kv.Set("hshap.readout", ReadoutName(hshap.readout));
  kv.Set("plug.L", std::to_string(plug.L));
  kv.Set("plug.tau_insert_fraction", FormatDouble(plug.tau_insert_fraction));
  kv.Set("plug.tau_insert", OptionalText(plug.tau_insert));
  kv.Set("plug.tau_ppl", OptionalText(plug.tau_ppl));
  kv.Set("plug.ppl_factor", FormatDouble(plug.ppl_factor));
  kv.Set("plug.lambda", FormatDouble(plug.lambda));
  kv.Set("plug.k_t", std::to_string(plug.k_t));
  kv.Set("plug.num_samples", std::to_string(plug.sampler.num_samples));
  kv.Set("plug.temperature", FormatDouble(plug.sampler.temperature));
  kv.Set("plug.mode", ModeName(plug.sampler.mode));
  kv.Set("plug.restrict_to_sensitive", plug.restrict_to_sensitive ? "true" : "false");
  kv.Set("search_examples", std::to_string(search_examples));
  kv.Set("poison_rate", FormatDouble(poison_rate));
  kv.Set("eta", FormatDouble(eta));
  kv.Set("placement", injection::PlacementPolicyName(placement));
  kv.Set("triggers_per_example", std::to_string(triggers_per_example));
  kv.Set("target_class", std::to_string(target_class));
  kv.Set("target_text", target_text);
  kv.Set("trigger_text", trigger_text);
  kv.Set("inject.epochs", std::to_string(inject_train.epochs));
  kv.Set("inject.batch_size", std::to_string(inject_train.batch_size));
  kv.Set("inject.learning_rate", FormatDouble(inject_train.learning_rate));
  kv.Set("eval.examples", std::to_string(eval_examples));
  kv.Set("eval.src_examples", std::to_string(src_examples));
  kv.Set("eval.onion_threshold", OptionalText(onion_threshold));
  kv.Set("eval.random_baseline", random_baseline ? "true" : "false");
  kv.Set("toy.dim", std::to_string(toy.dim));
  kv.Set("toy.heads", std::to_string(toy.heads));
  kv.Set("toy.epochs", std::to_string(toy.epochs));
  kv.Set("toy.batch_size", std::to_string(toy.batch_size));
  kv.Set("toy.learning_rate", FormatDouble(toy.learning_rate));
  kv.Set("toy.lm_smoothing", FormatDouble(toy.lm_smoothing));
  kv.Set("toy.surrogate_poison_rate", FormatDouble(toy.surrogate_poison_rate));
  for (const auto& [k, v] : external_options) kv.Set(k, v);
  return kv;
}

std::string PipelineConfig::Hash() const {
  // The run name only locates the output; it does not change any result.
  KeyValues kv = ToKeyValues();
  kv.Set("run_name", "");
  return kv.Hash();
}

void PipelineConfig::Validate() const {
  for (const auto* id : {&target_backend, &scorer_backend}) {
    Require(!id->empty(), "backend ids must be non-empty");
  }
  Require(embedder_backend == "target" || !embedder_backend.empty(), "embedder_backend is empty");
  Require(surrogate_backend == "derived" || !surrogate_backend.empty(), "surrogate_backend is empty");
  Require(test_fraction > 0.0 && test_fraction < 1.0, "test_fraction must lie in (0, 1)");
  for (const auto& [ctx, a] : alphas) {
    Require(a >= 0.0 && a <= 1.0, std::string("alpha.") + sensitivity::ContextName(ctx) +
                                      " must lie in [0, 1]");
  }
  Require(rho > 0.0 && rho <= 1.0, "rho must lie in (0, 1]");
  Require(label_examples >= 1, "label_examples must be >= 1");
  Require(predictor.embed_dim >= 1 && predictor.hidden >= 1 && predictor.window >= 0,
          "predictor dimensions must be positive");
  Require(predictor_train.epochs >= 0 && predictor_train.batch_size >= 1 &&
              predictor_train.learning_rate > 0.0,
          "predictor training parameters out of range");
  Require(predictor_train.context_dropout >= 0.0 && predictor_train.context_dropout <= 1.0,
          "predictor.context_dropout must lie in [0, 1]");
  Require(adapt_epochs >= 0, "adapt_epochs must be >= 0");
  Require(hshap.beta > 0.0 && hshap.beta <= 1.0, "hshap.beta must lie in (0, 1]");
  Require(hshap.gamma >= 0.0 && hshap.gamma <= 1.0, "hshap.gamma must lie in [0, 1]");
  Require(hshap.ig_steps >= 1, "hshap.ig_steps must be >= 1");
  Require(hshap.segmentation.dispersion_threshold >= 0.0, "hshap.dispersion_threshold must be >= 0");
  Require(hshap.segmentation.fine_window >= 1 && hshap.segmentation.coarse_window >= 1,
          "segment windows must be >= 1");
  Require(plug.L >= 1, "plug.L must be >= 1");
  Require(plug.tau_insert_fraction > 0.0 && plug.tau_insert_fraction <= 1.0,
          "plug.tau_insert_fraction must lie in (0, 1]");
  Require(plug.ppl_factor > 0.0, "plug.ppl_factor must be > 0");
  Require(!plug.tau_ppl || *plug.tau_ppl > 0.0, "plug.tau_ppl must be > 0");
  Require(plug.lambda >= 0.0 && plug.lambda <= 1.0, "plug.lambda must lie in [0, 1]");
  Require(plug.k_t >= 1, "plug.k_t must be >= 1");
  Require(plug.sampler.num_samples >= 1, "plug.num_samples must be >= 1");
  Require(search_examples >= 1, "search_examples must be >= 1");
  Require(poison_rate >= 0.0 && poison_rate <= 1.0, "poison_rate must lie in [0, 1]");
  Require(eta >= 0.0, "eta must be >= 0");
  Require(triggers_per_example >= 1, "triggers_per_example must be >= 1");
  Require(target_class >= 0, "target_class must be >= 0");
  Require(task == Task::kClassification || !target_text.empty(),
          "generation tasks need target_text");
  Require(inject_train.epochs >= 0 && inject_train.batch_size >= 1 &&
              inject_train.learning_rate > 0.0,
          "inject training parameters out of range");
  Require(toy.dim >= 1 && toy.heads >= 1 && toy.epochs >= 0 && toy.batch_size >= 1 &&
              toy.learning_rate > 0.0 && toy.lm_smoothing > 0.0,
          "toy model parameters out of range");
  Require(toy.lm_weight >= 0.0 && toy.lm_weight < 1.0, "toy.lm_weight must lie in [0, 1)");
  Require(trigger_text.empty() || text::Tokenize(trigger_text).size() == plug.L,
          "trigger_text must hold exactly plug.L tokens");
  Require(toy.surrogate_poison_rate >= 0.0 && toy.surrogate_poison_rate <= 1.0,
          "toy.surrogate_poison_rate must lie in [0, 1]");
}

// ----------------------------------------------------------------- corpus

std::vector<CorpusRecord> ingest_corpus(const std::string& path,
                                        const text::TokenizerConfig& tokenizer) {
  std::ifstream in(path);
  if (!in) Fail(ErrorKind::kConfigError, "cannot read corpus '" + path + "'");
  std::vector<CorpusRecord> out;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      Fail(ErrorKind::kDataError, where + ": malformed record");
    }
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
      Fail(ErrorKind::kDataError, where + ": record needs a non-empty string id");
    }
    if (!j.contains("text") || !j["text"].is_string()) {
      Fail(ErrorKind::kDataError, where + ": record needs a string text");
    }
    CorpusRecord r;
    r.id = j["id"].get<std::string>();
    if (auto [it, inserted] = seen.emplace(r.id, lineno); !inserted) {
      Fail(ErrorKind::kDataError, where + ": duplicate id '" + r.id + "' (first seen on line " +
                                      std::to_string(it->second) + ")");
    }
    r.text = j["text"].get<std::string>();
    r.tokens = text::Tokenize(r.text, tokenizer);
    if (r.tokens.empty()) Fail(ErrorKind::kDataError, where + ": text has no tokens");
    if (j.contains("label") && !j["label"].is_null()) {
      const auto& l = j["label"];
      if (l.is_string()) {
        r.label = l.get<std::string>();
      } else if (l.is_number_integer()) {
        r.label = std::to_string(l.get<long long>());
      } else {
        Fail(ErrorKind::kDataError, where + ": label must be a string or integer");
      }
    }
    if (j.contains("context")) {
      if (!j["context"].is_string()) Fail(ErrorKind::kDataError, where + ": context must be a string");
      r.context = j["context"].get<std::string>();
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) Fail(ErrorKind::kConfigError, "corpus '" + path + "' is empty");
  return out;
}

void WriteCorpus(const std::string& path, const std::vector<CorpusRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    Json j{{"id", r.id}, {"text", r.text}, {"context", r.context}};
    if (r.label) j["label"] = *r.label;
    out += j.dump() + "\n";
  }
  artifacts::WriteText(path, out);
}

sensitivity::TaskContext ContextOf(const CorpusRecord& record) {
  if (record.context == "classification") return sensitivity::TaskContext::kClassification;
  if (record.context == "generation") return sensitivity::TaskContext::kGeneration;
  if (record.context == "unspecified" || record.context.empty()) {
    return sensitivity::TaskContext::kUnspecified;
  }
  return sensitivity::TaskContext::kOther;
}

// ------------------------------------------------------------------ world

namespace {

oracle::ModelHandle CreateExternal(const PipelineConfig& cfg, const std::string& id,
                                   const std::string& role, const fs::path& vocab_path) {
  auto& registry = oracle::BackendRegistry::Global();
  if (!registry.Contains(id)) {
    Fail(ErrorKind::kCapabilityMissing, "no backend registered as '" + id + "' (needed as " +
                                            role + ")");
  }
  oracle::BackendOptions options(cfg.external_options.begin(), cfg.external_options.end());
  options["role"] = role;
  options["vocab_path"] = vocab_path.string();
  return registry.Create(id, options);
}

std::vector<oracle::TrainExample> CleanExamples(const std::vector<EncodedRecord>& records) {
  std::vector<oracle::TrainExample> out;
  for (const auto& r : records) {
    if (r.label) {
      out.push_back({r.tokens, *r.label, oracle::WeightClass::kClean});
    } else if (r.label_tokens) {
      out.push_back({r.tokens, *r.label_tokens, oracle::WeightClass::kClean});
    }
  }
  return out;
}

}  // namespace

World BuildWorld(const PipelineConfig& cfg, const std::vector<CorpusRecord>& corpus,
                 const fs::path& vocab_path) {
  if (corpus.empty()) Fail(ErrorKind::kConfigError, "corpus is empty");
  World w;
  for (const auto& r : corpus) {
    for (const auto& t : r.tokens) w.vocab.Add(t);
  }
  if (cfg.task == Task::kGeneration) {
    for (const auto& t : text::Tokenize(cfg.target_text)) w.vocab.Add(t);
    for (const auto& r : corpus) {
      if (r.label) {
        for (const auto& t : text::Tokenize(*r.label)) w.vocab.Add(t);
      }
    }
  }
  for (const auto& t : text::Tokenize(cfg.trigger_text)) w.vocab.Add(t);
  // Rare-token baseline triggers.
  for (const auto& t : synthetic::RareWords()) w.vocab.Add(t);

  if (!vocab_path.empty()) artifacts::WriteText(vocab_path, w.vocab.Serialize());

  std::vector<EncodedRecord> encoded;
  int max_label = -1;
  for (const auto& r : corpus) {
    std::vector<TokenId> ids;
    for (const auto& t : r.tokens) ids.push_back(w.vocab.IdOrUnknown(t));
    EncodedRecord e{r.id, TokenSequence(std::move(ids)), ContextOf(r), {}, {}};
    if (r.label) {
      if (cfg.task == Task::kClassification) {
        char* end = nullptr;
        const long v = std::strtol(r.label->c_str(), &end, 10);
        if (end == r.label->c_str() || *end != '\0' || v < 0 || v > 1000000) {
          Fail(ErrorKind::kDataError, "record '" + r.id + "' has non-class label '" + *r.label + "'");
        }
        e.label = static_cast<int>(v);
        max_label = std::max(max_label, *e.label);
      } else {
        e.label_tokens = text::Encode(w.vocab, *r.label);
      }
    } else if (cfg.target_backend == "toy") {
      Fail(ErrorKind::kDataError, "record '" + r.id + "' has no label; the toy backend trains on labels");
    }
    encoded.push_back(std::move(e));
  }
  w.num_classes = cfg.task == Task::kClassification ? std::max(2, max_label + 1) : 0;
  if (cfg.task == Task::kClassification && cfg.target_class >= w.num_classes) {
    Fail(ErrorKind::kConfigError, "target_class " + std::to_string(cfg.target_class) +
                                      " is not a corpus class");
  }

  // Seeded split; both halves keep corpus order.
  std::vector<std::size_t> order(encoded.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(DeriveSeed(cfg.seed, kSplitStream));
  split_rng.Shuffle(order);
  const auto n_test = static_cast<std::size_t>(
      std::llround(cfg.test_fraction * static_cast<double>(encoded.size())));
  if (n_test == 0 || n_test >= encoded.size()) {
    Fail(ErrorKind::kDataError, "corpus too small for test_fraction " + FormatDouble(cfg.test_fraction));
  }
  std::vector<bool> is_test(encoded.size(), false);
  for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = true;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    (is_test[i] ? w.test : w.train).push_back(encoded[i]);
  }

  std::vector<TokenSequence> lm_corpus;
  for (const auto& r : w.train) lm_corpus.push_back(r.tokens);
  const int V = w.vocab.size();
  std::shared_ptr<const toy::BigramLm> lm;
  auto shared_lm = [&]() {
    if (!lm) {
      lm = std::make_shared<toy::BigramLm>(
          toy::BigramLm::Interpolated(lm_corpus, V, cfg.toy.lm_weight, cfg.toy.lm_smoothing));
    }
    return lm;
  };
  toy::ToyConfig tc;
  tc.vocab_size = V;
  tc.mask_id = w.vocab.mask_id();
  tc.special_tokens = w.vocab.special_ids();
  tc.num_classes = std::max(2, w.num_classes);
  const oracle::TrainConfig toy_train{.epochs = cfg.toy.epochs,
                                      .batch_size = cfg.toy.batch_size,
                                      .learning_rate = cfg.toy.learning_rate,
                                      .seed = DeriveSeed(cfg.seed, kTargetTrainStream)};

  if (cfg.target_backend == "toy") {
    oracle::ModelHandle base;
    if (cfg.task == Task::kClassification) {
      tc.embedder = toy::EmbedderKind::kPooledHidden;
      tc.readout = oracle::Readout::kMean;
      toy::AttentionConfig attn;
      attn.dim = cfg.toy.dim;
      attn.heads = cfg.toy.heads;
      base = toy::MakeClassifier(tc, shared_lm(), attn, DeriveSeed(cfg.seed, kTargetInitStream));
    } else {
      base = toy::MakeGenerator(tc, shared_lm());
    }
    const auto clean = CleanExamples(w.train);
    w.target = clean.empty() ? base : oracle::fine_tune(base, clean, 0.0, toy_train).model;
  } else {
    w.target = CreateExternal(cfg, cfg.target_backend, "target", vocab_path);
  }

  if (cfg.scorer_backend == "toy") {
    toy::ToyConfig sc = tc;
    sc.marginalize_mask = true;
    w.scorer = toy::MakeGenerator(sc, shared_lm());
  } else {
    w.scorer = CreateExternal(cfg, cfg.scorer_backend, "scorer", vocab_path);
  }
  if (cfg.embedder_backend == "target") {
    w.embedder = w.target;
  } else if (cfg.embedder_backend == "toy") {
    w.embedder = toy::MakeGenerator(tc, shared_lm());
  } else {
    w.embedder = CreateExternal(cfg, cfg.embedder_backend, "embedder", vocab_path);
  }

  if (cfg.task == Task::kClassification) {
    w.adversarial_target = cfg.target_class;
    w.poison_target = cfg.target_class;
  } else {
    const auto t = text::Encode(w.vocab, cfg.target_text);
    w.adversarial_target = t.vector();
    w.poison_target = t;
  }

  if (cfg.surrogate_backend == "derived") {
    // Placeholder backdoor: a few training inputs carry the reserved trigger
    // token and the adversarial target.
    auto examples = CleanExamples(w.train);
    Rng rng(DeriveSeed(cfg.seed, kSurrogateStream));
    const std::size_t k = cfg.toy.surrogate_poison_rate > 0.0
                              ? injection::PoisonCount(cfg.toy.surrogate_poison_rate, w.train.size())
                              : 0;
    std::vector<std::size_t> idx(w.train.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.Shuffle(idx);
    for (std::size_t j = 0; j < k; ++j) {
      const auto& seq = w.train[idx[j]].tokens;
      const std::size_t pos = rng.Below(seq.size());
      oracle::TrainExample ex{seq.WithToken(pos, w.vocab.trigger_placeholder_id()), 0,
                              oracle::WeightClass::kPoison};
      if (const int* c = std::get_if<int>(&w.poison_target)) {
        ex.target = *c;
      } else {
        ex.target = std::get<TokenSequence>(w.poison_target);
      }
      examples.push_back(std::move(ex));
    }
    const oracle::TrainConfig sur_train{.epochs = std::max(1, cfg.toy.epochs / 4),
                                        .batch_size = cfg.toy.batch_size,
                                        .learning_rate = cfg.toy.learning_rate,
                                        .seed = DeriveSeed(cfg.seed, kSurrogateStream + 1)};
    w.surrogate = examples.empty() || !w.target->capabilities().trainable
                      ? w.target
                      : oracle::fine_tune(w.target, examples, 1.0, sur_train).model;
  } else {
    w.surrogate = CreateExternal(cfg, cfg.surrogate_backend, "surrogate", vocab_path);
  }

  double total = 0.0;
  for (const auto& r : w.train) total += oracle::perplexity(w.scorer, r.tokens);
  w.mean_clean_ppl = total / static_cast<double>(w.train.size());
  return w;
}

fs::path ResolveRunDir(const PipelineConfig& cfg) {
  const char* root = std::getenv("TRIGSENSE_RUN_ROOT");
  const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
  return base / (cfg.run_name.empty() ? "run-" + cfg.Hash() : cfg.run_name);
}

// -------------------------------------------------------------------- run

Run::Run(PipelineConfig cfg, fs::path dir)
    : cfg_(std::move(cfg)), dir_(std::move(dir)), hash_(cfg_.Hash()) {
  cfg_.Validate();
  cfg_.predictor_train.seed = DeriveSeed(cfg_.seed, kPredictorStream);
}

artifacts::Header Run::HeaderFor(const std::string& kind) const {
  return artifacts::Header{kind, hash_, cfg_.seed};
}

void Run::Prepare() {
  fs::create_directories(dir_);
  const std::string canonical = cfg_.ToKeyValues().Canonical();
  artifacts::WriteText(Artifact("config.txt"),
                       "# schema: trigsense.config v1 config_hash=" + hash_ +
                           " seed=" + std::to_string(cfg_.seed) + "\n" + canonical);
}

World& Run::world() {
  if (!world_) {
    if (cfg_.corpus.empty()) Fail(ErrorKind::kConfigError, "config key 'corpus' is not set");
    Prepare();
    const auto records = ingest_corpus(cfg_.corpus);
    world_ = std::make_unique<World>(BuildWorld(cfg_, records, Artifact("vocab.txt")));
    cfg_.predictor.vocab_size = world_->vocab.size();
  }
  return *world_;
}

namespace {

// Reads a line-record artifact of this run, rejecting ones written under a
// different configuration.
artifacts::JsonlFile ReadOwn(const Run& run, const std::string& file, const std::string& kind,
                             Phase producer) {
  const fs::path path = run.Artifact(file);
  if (!fs::exists(path)) {
    Fail(ErrorKind::kDataError, "missing artifact " + file + "; run phase '" +
                                    PhaseName(producer) + "' first");
  }
  auto f = artifacts::ReadJsonl(path, kind);
  if (f.header.config_hash != run.config_hash()) {
    Fail(ErrorKind::kDataError, file + " was written under config " + f.header.config_hash +
                                    "; rerun phase '" + PhaseName(producer) + "'");
  }
  return f;
}

Json ReadOwnJson(const Run& run, const std::string& file, const std::string& kind,
                 Phase producer) {
  const fs::path path = run.Artifact(file);
  if (!fs::exists(path)) {
    Fail(ErrorKind::kDataError, "missing artifact " + file + "; run phase '" +
                                    PhaseName(producer) + "' first");
  }
  Json j = artifacts::ReadJson(path, kind);
  if (j["config_hash"] != run.config_hash()) {
    Fail(ErrorKind::kDataError, file + " was written under a different config; rerun phase '" +
                                    std::string(PhaseName(producer)) + "'");
  }
  return j;
}

Json PairJson(const triggers::TriggerPair& p, const text::Vocabulary& vocab) {
  return Json{{"position", p.position},
              {"tokens", p.tokens},
              {"text", text::Decode(vocab, std::span<const TokenId>(p.tokens))},
              {"context_ppl", p.context_ppl},
              {"attack_score", p.reward.attack_score},
              {"ppl_norm", p.reward.ppl_norm},
              {"lambda", p.reward.lambda},
              {"reward", p.reward.reward}};
}

triggers::TriggerPair PairFrom(const Json& j) {
  triggers::TriggerPair p;
  p.position = j.at("position").get<std::size_t>();
  p.tokens = j.at("tokens").get<std::vector<TokenId>>();
  p.context_ppl = j.at("context_ppl").get<double>();
  p.reward.attack_score = j.at("attack_score").get<double>();
  p.reward.ppl_norm = j.at("ppl_norm").get<double>();
  p.reward.lambda = j.at("lambda").get<double>();
  p.reward.reward = j.at("reward").get<double>();
  return p;
}

std::vector<injection::Example> TrainExamples(const World& w) {
  std::vector<injection::Example> out;
  for (const auto& r : w.train) {
    injection::Target t = 0;
    if (r.label) {
      t = *r.label;
    } else if (r.label_tokens) {
      t = *r.label_tokens;
    } else {
      continue;
    }
    out.push_back({r.id, r.tokens, t});
  }
  return out;
}

Json TargetJson(const injection::Target& t) {
  if (const int* c = std::get_if<int>(&t)) return Json(*c);
  return TokensJson(std::get<TokenSequence>(t));
}

injection::Target TargetFrom(const Json& j) {
  if (j.is_number_integer()) return j.get<int>();
  return TokensFrom(j);
}

Json PlacementsJson(std::span<const injection::Placement> placements) {
  Json arr = Json::array();
  for (const auto& p : placements) arr.push_back(Json{{"position", p.position}, {"tokens", p.tokens}});
  return arr;
}

// Trigger-occupied token indices.
std::vector<std::size_t> Occupied(std::span<const injection::Placement> placements) {
  std::vector<std::size_t> out;
  for (const auto& p : placements) {
    for (std::size_t k = 0; k < p.tokens.size(); ++k) out.push_back(p.position + k);
  }
  return out;
}

std::uint64_t InputStream(const std::string& id) {
  return DeriveSeed(kSearchStream, Fnv1a(id));
}

double Accuracy(const oracle::ModelHandle& model, const std::vector<EncodedRecord>& records) {
  std::size_t total = 0, correct = 0;
  for (const auto& r : records) {
    const auto out = oracle::predict(model, r.tokens);
    if (r.label) {
      ++total;
      correct += out.is_classification() && out.Argmax() == *r.label;
    } else if (r.label_tokens) {
      ++total;
      correct += out.generated && *out.generated == *r.label_tokens;
    }
  }
  if (total == 0) Fail(ErrorKind::kDataError, "no labelled test records");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

void Run::Label() {
  Guard(Phase::kLabel, "", [&] {
    World& w = world();
    const std::size_t n = std::min(cfg_.label_examples, w.train.size());
    std::vector<Json> records;
    for (std::size_t k = 0; k < n; ++k) {
      const auto& r = w.train[k];
      Guard(Phase::kLabel, r.id, [&] {
        auto it = cfg_.alphas.find(r.context);
        if (it == cfg_.alphas.end()) {
          Fail(ErrorKind::kConfigError, std::string("no alpha configured for context '") +
                                            sensitivity::ContextName(r.context) + "'");
        }
        const auto map = sensitivity::ground_truth_sensitivity(w.scorer, w.embedder, r.tokens,
                                                               it->second);
        records.push_back(Json{{"input_id", r.id},
                               {"tokens", TokensJson(r.tokens)},
                               {"context", sensitivity::ContextName(r.context)},
                               {"alpha", it->second},
                               {"scores", DoublesJson(map.scores())}});
      });
    }
    artifacts::WriteJsonl(Artifact("labels.jsonl"), HeaderFor("labels"), records);
  });
}

namespace {

sensitivity::SensitivityDataset DatasetFrom(const artifacts::JsonlFile& f) {
  sensitivity::SensitivityDataset ds;
  for (const auto& j : f.records) {
    sensitivity::SensitivityRecord r{
        j.at("input_id").get<std::string>(), TokensFrom(j.at("tokens")),
        sensitivity::ParseContext(j.at("context").get<std::string>()), j.at("alpha").get<double>(),
        sensitivity::SensitivityMap(j.at("scores").get<std::vector<double>>())};
    if (r.labels.size() != r.input.size()) {
      Fail(ErrorKind::kDataError, "label record '" + r.input_id + "' is misaligned");
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Json PredictorJson(const sensitivity::SensitivityPredictor& p) {
  return Json{{"predictor", Json::parse(p.Serialize())}};
}

}  // namespace

void Run::TrainDmsa() {
  Guard(Phase::kTrainDmsa, "", [&] {
    world();
    const auto ds = DatasetFrom(ReadOwn(*this, "labels.jsonl", "labels", Phase::kLabel));
    const auto predictor = sensitivity::train_predictor(ds, cfg_.predictor, cfg_.predictor_train);
    artifacts::WriteJson(Artifact("predictor.json"), HeaderFor("predictor_checkpoint"),
                         PredictorJson(predictor));
  });
}

sensitivity::SensitivityPredictor Run::LoadPredictor() {
  const bool adapted = fs::exists(Artifact("predictor_adapted.json"));
  const Json j = ReadOwnJson(*this, adapted ? "predictor_adapted.json" : "predictor.json",
                             "predictor_checkpoint", Phase::kTrainDmsa);
  return sensitivity::SensitivityPredictor::Deserialize(j.at("predictor").dump());
}

void Run::AdaptDmsa() {
  Guard(Phase::kAdaptDmsa, "", [&] {
    if (cfg_.adapt_corpus.empty()) {
      Fail(ErrorKind::kConfigError, "config key 'adapt_corpus' is not set");
    }
    World& w = world();
    const Json base = ReadOwnJson(*this, "predictor.json", "predictor_checkpoint", Phase::kTrainDmsa);
    const auto predictor = sensitivity::SensitivityPredictor::Deserialize(base.at("predictor").dump());
    std::vector<sensitivity::CorpusEntry> entries;
    for (const auto& r : ingest_corpus(cfg_.adapt_corpus)) {
      std::vector<TokenId> ids;
      for (const auto& t : r.tokens) ids.push_back(w.vocab.IdOrUnknown(t));
      entries.push_back({r.id, TokenSequence(std::move(ids)), ContextOf(r)});
    }
    const auto few = sensitivity::build_sensitivity_dataset(entries, w.scorer, w.embedder,
                                                            cfg_.alphas);
    auto adapt_cfg = cfg_.predictor_train;
    adapt_cfg.epochs = cfg_.adapt_epochs;
    adapt_cfg.seed = DeriveSeed(cfg_.seed, kAdaptStream);
    const auto adapted = sensitivity::adapt_predictor(predictor, few, adapt_cfg);
    artifacts::WriteJson(Artifact("predictor_adapted.json"), HeaderFor("predictor_checkpoint"),
                         PredictorJson(adapted));
  });
}

namespace {

std::vector<const EncodedRecord*> SearchInputs(const PipelineConfig& cfg, const World& w) {
  std::vector<const EncodedRecord*> out;
  for (const auto& r : w.train) {
    if (out.size() == cfg.search_examples) break;
    // Inputs already carrying the target class cannot show a label flip.
    if (r.label && *r.label == cfg.target_class) continue;
    out.push_back(&r);
  }
  if (out.empty()) Fail(ErrorKind::kDataError, "no training inputs eligible for trigger search");
  return out;
}

oracle::TargetSpec ExplainedOutput(const oracle::ModelHandle& target, const TokenSequence& seq) {
  const auto out = oracle::predict(target, seq);
  if (out.is_classification()) return oracle::ClassLogit{out.Argmax()};
  return oracle::ContinuationLogLik{out.generated->vector()};
}

}  // namespace

void Run::Attribute() {
  Guard(Phase::kAttribute, "", [&] {
    World& w = world();
    const auto predictor = LoadPredictor();
    std::vector<Json> records;
    for (const EncodedRecord* r : SearchInputs(cfg_, w)) {
      Guard(Phase::kAttribute, r->id, [&] {
        const auto map = sensitivity::predict_sensitivity(predictor, r->tokens, r->context);
        const auto sensitive = sensitivity::select_sensitive_positions(map, cfg_.rho);
        auto starts = text::SentenceStarts(w.vocab, r->tokens);
        std::optional<std::vector<std::size_t>> boundaries;
        if (!starts.empty()) boundaries = std::move(starts);
        const auto res = attribution::attribute(w.target, w.scorer, r->tokens, map,
                                                ExplainedOutput(w.target, r->tokens),
                                                boundaries, cfg_.hshap);
        Json segments = Json::array();
        for (const auto& s : res.partition.segments) {
          segments.push_back(Json{{"begin", s.begin}, {"end", s.end}, {"zeta", OptionalJson(s.zeta)}});
        }
        std::vector<std::string> provenance;
        for (auto b : res.refined.provenance) provenance.push_back(attribution::BranchName(b));
        records.push_back(Json{{"input_id", r->id},
                               {"tokens", TokensJson(r->tokens)},
                               {"sensitivity", DoublesJson(map.scores())},
                               {"sensitive_positions", sensitive},
                               {"granularity", attribution::GranularityName(res.partition.granularity)},
                               {"segments", segments},
                               {"K", res.k},
                               {"top_segments", res.top_segments},
                               {"tau_shap", res.tau_shap},
                               {"gamma", res.gamma},
                               {"scores", DoublesJson(res.refined.scores)},
                               {"provenance", provenance},
                               {"fallbacks", res.fallbacks}});
      });
    }
    artifacts::WriteJsonl(Artifact("refined.jsonl"), HeaderFor("refined"), records);
  });
}

triggers::TriggerSet Run::Triggers() {
  return Guard(Phase::kTriggers, "", [&] {
    World& w = world();
    const auto refined = ReadOwn(*this, "refined.jsonl", "refined", Phase::kAttribute);
    std::vector<Json> manifests;
    std::vector<triggers::TriggerPair> all;
    std::vector<std::string> sources;
    std::size_t short_sets = 0;
    for (const auto& j : refined.records) {
      const std::string id = j.at("input_id").get<std::string>();
      Guard(Phase::kTriggers, id, [&] {
        const auto seq = TokensFrom(j.at("tokens"));
        const auto scores = j.at("scores").get<std::vector<double>>();
        const auto sensitive = j.at("sensitive_positions").get<std::vector<std::size_t>>();
        auto plug = cfg_.plug;
        plug.sampler.seed = DeriveSeed(cfg_.seed, InputStream(id));
        plug.warn_short_set = false;
        const auto res = triggers::search_triggers(w.target, w.surrogate, w.scorer, seq, scores,
                                                   sensitive, w.adversarial_target,
                                                   w.mean_clean_ppl, plug);
        if (res.set.size() < plug.k_t) ++short_sets;
        Json pairs = Json::array();
        for (const auto& p : res.set.pairs) {
          pairs.push_back(PairJson(p, w.vocab));
          all.push_back(p);
          sources.push_back(id);
        }
        std::size_t candidates = 0;
        for (const auto& [pos, c] : res.candidates) candidates += c.size();
        manifests.push_back(Json{{"input_id", id},
                                 {"L", cfg_.plug.L},
                                 {"lambda", cfg_.plug.lambda},
                                 {"tau_insert", res.tau_insert},
                                 {"tau_ppl", res.tau_ppl},
                                 {"clean_ppl", res.clean_ppl},
                                 {"refined_positions", res.refined},
                                 {"valid_positions", res.valid},
                                 {"candidate_count", candidates},
                                 {"pairs", pairs}});
      });
    }
    artifacts::WriteJsonl(Artifact("triggers.jsonl"), HeaderFor("triggers"), manifests);
    if (short_sets > 0) {
      Warn(std::to_string(short_sets) + " of " + std::to_string(refined.records.size()) +
           " searched inputs yielded fewer than K_t = " + std::to_string(cfg_.plug.k_t) +
           " trigger pairs");
    }

    const auto global = triggers::select_top_k(all, cfg_.plug.k_t);
    Json pairs = Json::array();
    std::vector<bool> used(all.size(), false);
    for (const auto& p : global.pairs) {
      Json pj = PairJson(p, w.vocab);
      for (std::size_t k = 0; k < all.size(); ++k) {
        if (!used[k] && all[k].position == p.position && all[k].tokens == p.tokens &&
            all[k].reward.reward == p.reward.reward) {
          used[k] = true;
          pj["source_input"] = sources[k];
          break;
        }
      }
      pairs.push_back(std::move(pj));
    }
    artifacts::WriteJson(Artifact("trigger_set.json"), HeaderFor("trigger_set"),
                         Json{{"L", cfg_.plug.L},
                              {"lambda", cfg_.plug.lambda},
                              {"k_t", cfg_.plug.k_t},
                              {"searched_inputs", refined.records.size()},
                              {"pairs", pairs}});
    return global;
  });
}

triggers::TriggerSet Run::LoadTriggerSet() {
  const Json j = ReadOwnJson(*this, "trigger_set.json", "trigger_set", Phase::kTriggers);
  triggers::TriggerSet set;
  for (const auto& p : j.at("pairs")) set.pairs.push_back(PairFrom(p));
  if (set.pairs.empty()) Fail(ErrorKind::kDataError, "trigger_set.json holds no triggers");
  if (!cfg_.trigger_text.empty()) {
    const auto fixed = text::Encode(world().vocab, cfg_.trigger_text).vector();
    for (auto& p : set.pairs) p.tokens = fixed;
  }
  return set;
}

injection::PositionChooser Run::Chooser(const sensitivity::SensitivityPredictor& predictor) {
  World& w = world();
  injection::SensitivityChooserConfig cc;
  cc.rho = cfg_.rho;
  cc.tau_insert_fraction = cfg_.plug.tau_insert_fraction;
  cc.hshap = cfg_.hshap;
  cc.context = cfg_.task == Task::kClassification ? sensitivity::TaskContext::kClassification
                                                  : sensitivity::TaskContext::kGeneration;
  return injection::MakeSensitivityChooser(predictor, w.target, w.scorer, cc);
}

namespace {

injection::PoisonConfig PoisonConfigOf(const PipelineConfig& cfg, const World& w,
                                       injection::PlacementPolicy policy) {
  injection::PoisonConfig pc;
  pc.poison_rate = cfg.poison_rate;
  pc.adversarial_target = w.poison_target;
  pc.eta = cfg.eta;
  pc.policy = policy;
  pc.triggers_per_example = cfg.triggers_per_example;
  pc.seed = cfg.seed;
  return pc;
}

}  // namespace

void Run::Poison() {
  Guard(Phase::kPoison, "", [&] {
    World& w = world();
    const auto set = LoadTriggerSet();
    const auto corpus = TrainExamples(w);
    injection::PositionChooser chooser;
    if (cfg_.placement == injection::PlacementPolicy::kPerExample) chooser = Chooser(LoadPredictor());
    const auto split = injection::poison_corpus(corpus, set, PoisonConfigOf(cfg_, w, cfg_.placement),
                                                chooser);
    std::vector<Json> records;
    std::size_t ci = 0, pi = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (pi < split.poisoned_indices.size() && split.poisoned_indices[pi] == i) {
        const auto& pe = split.poisoned[pi++];
        records.push_back(Json{{"id", pe.original_id},
                               {"tokens", TokensJson(pe.poisoned)},
                               {"label", TargetJson(pe.target)},
                               {"flag", "poisoned"},
                               {"placements", PlacementsJson(pe.placements)}});
      } else {
        const auto& ex = split.clean[ci++];
        records.push_back(Json{{"id", ex.id},
                               {"tokens", TokensJson(ex.tokens)},
                               {"label", TargetJson(ex.target)},
                               {"flag", "clean"},
                               {"placements", Json::array()}});
      }
    }
    artifacts::WriteJsonl(Artifact("poisoned.jsonl"), HeaderFor("poisoned"), records);
  });
}

namespace {

struct LoadedSplit {
  std::vector<injection::Example> clean;
  std::vector<injection::PoisonedExample> poisoned;
};

LoadedSplit SplitFrom(const artifacts::JsonlFile& f) {
  LoadedSplit s;
  for (const auto& j : f.records) {
    const std::string flag = j.at("flag").get<std::string>();
    const auto tokens = TokensFrom(j.at("tokens"));
    const auto target = TargetFrom(j.at("label"));
    if (flag == "clean") {
      s.clean.push_back({j.at("id").get<std::string>(), tokens, target});
    } else if (flag == "poisoned") {
      injection::PoisonedExample pe{j.at("id").get<std::string>(), tokens, {}, target};
      for (const auto& p : j.at("placements")) {
        pe.placements.push_back({p.at("position").get<std::size_t>(),
                                 p.at("tokens").get<std::vector<TokenId>>()});
      }
      s.poisoned.push_back(std::move(pe));
    } else {
      Fail(ErrorKind::kDataError, "poisoned.jsonl: unknown flag '" + flag + "'");
    }
  }
  return s;
}

oracle::TrainConfig InjectTrain(const PipelineConfig& cfg) {
  auto t = cfg.inject_train;
  t.seed = DeriveSeed(cfg.seed, kInjectStream);
  return t;
}

}  // namespace

void Run::Inject() {
  Guard(Phase::kInject, "", [&] {
    World& w = world();
    const auto split = SplitFrom(ReadOwn(*this, "poisoned.jsonl", "poisoned", Phase::kPoison));
    const auto res = injection::inject(w.target, split.clean, split.poisoned, cfg_.eta,
                                       InjectTrain(cfg_));
    backdoored_ = res.model;
    artifacts::WriteJson(Artifact("injection.json"), HeaderFor("injection"),
                         Json{{"eta", res.report.eta},
                              {"clean_count", res.report.clean_count},
                              {"poison_count", res.report.poison_count},
                              {"initial_loss", res.report.initial_loss},
                              {"final_loss", res.report.final_loss},
                              {"epoch_loss", res.report.epoch_loss}});
  });
}

oracle::ModelHandle Run::Backdoored() {
  if (!backdoored_) {
    // Injection is deterministic, so rerunning it reproduces the model the
    // inject phase reported on.
    ReadOwnJson(*this, "injection.json", "injection", Phase::kInject);
    const auto split = SplitFrom(ReadOwn(*this, "poisoned.jsonl", "poisoned", Phase::kPoison));
    backdoored_ = injection::inject(world().target, split.clean, split.poisoned, cfg_.eta,
                                    InjectTrain(cfg_)).model;
  }
  return backdoored_;
}

EvalSummary Run::Eval() {
  return Guard(Phase::kEval, "", [&] {
    World& w = world();
    const auto set = LoadTriggerSet();
    const auto predictor = LoadPredictor();
    const auto model = Backdoored();
    const std::size_t L = cfg_.plug.L;

    std::vector<std::vector<TokenId>> tokens;
    std::vector<std::size_t> fixed;
    for (const auto& p : set.pairs) {
      tokens.push_back(p.tokens);
      fixed.push_back(p.position);
    }

    std::vector<const EncodedRecord*> victims;
    for (const auto& r : w.test) {
      if (cfg_.eval_examples != 0 && victims.size() == cfg_.eval_examples) break;
      if (r.label && *r.label == cfg_.target_class) continue;
      if (r.tokens.size() < L) continue;
      victims.push_back(&r);
    }
    if (victims.empty()) Fail(ErrorKind::kDataError, "no test inputs eligible for evaluation");

    evaluation::SuccessPredicate success;
    if (const int* c = std::get_if<int>(&w.adversarial_target)) {
      success = evaluation::TargetClass(*c);
    } else {
      success = evaluation::TargetSequence(std::get<std::vector<TokenId>>(w.adversarial_target));
    }

    auto trigger_victims = [&](injection::PlacementPolicy policy,
                               const injection::PositionChooser& chooser,
                               std::vector<std::vector<std::size_t>>* occupied) {
      Rng rng(DeriveSeed(cfg_.seed, kVictimStream));
      std::vector<TokenSequence> out;
      for (const EncodedRecord* r : victims) {
        Guard(Phase::kEval, r->id, [&] {
          const auto pos = injection::ChoosePositions(policy, r->tokens, L,
                                                      cfg_.triggers_per_example, chooser,
                                                      fixed, rng);
          const auto placements = injection::PlaceTriggers(r->tokens, tokens, pos);
          out.push_back(injection::ApplyPlacements(r->tokens, placements));
          if (occupied) occupied->push_back(Occupied(placements));
        });
      }
      return out;
    };

    EvalSummary summary;
    summary.victims = victims.size();
    auto& rep = summary.report;
    rep.config_hash = hash_;

    injection::PositionChooser chooser;
    if (cfg_.placement == injection::PlacementPolicy::kPerExample) chooser = Chooser(predictor);
    std::vector<std::vector<std::size_t>> occupied;
    const auto triggered = trigger_victims(cfg_.placement, chooser, &occupied);
    rep.asr_percent = evaluation::asr(model, triggered, success);
    rep.triggered_count = triggered.size();

    rep.clean_accuracy_percent = Accuracy(model, w.test);
    summary.clean_accuracy_before_percent = Accuracy(w.target, w.test);
    rep.clean_count = w.test.size();

    for (std::size_t k = 0; k < victims.size(); ++k) {
      rep.as_values.push_back(
          evaluation::attack_stealthiness(w.scorer, w.embedder, victims[k]->tokens, triggered[k]));
    }
    rep.as_mean = stats::Mean(rep.as_values);

    std::vector<double> srcs;
    for (const auto& r : w.test) {
      if (srcs.size() == cfg_.src_examples) break;
      if (r.tokens.size() < 2) continue;
      const auto map = sensitivity::predict_sensitivity(predictor, r.tokens, r.context);
      const auto truth = evaluation::perturbation_ground_truth(w.target, r.tokens,
                                                               w.vocab.unknown_id());
      try {
        srcs.push_back(evaluation::src(map.scores(), truth.deltas));
      } catch (const Error& e) {
        // Constant rankings have no defined correlation.
        if (e.kind() != ErrorKind::kUndefinedResult) throw;
      }
    }
    if (!srcs.empty()) rep.src = stats::Mean(srcs);
    rep.src_count = srcs.size();

    rep.evasion_rate =
        evaluation::defense_resistance(w.scorer, triggered, occupied, cfg_.onion_threshold)
            .evasion_rate;

    // One rare token substituted at a random position, the classic backdoor
    // trigger. Adjacent rare tokens would shield each other from removal.
    {
      const std::vector<std::vector<TokenId>> rare_tokens{
          {*w.vocab.Find(synthetic::RareWords().front())}};
      Rng rng(DeriveSeed(cfg_.seed, kRareStream));
      std::vector<TokenSequence> rare_triggered;
      std::vector<std::vector<std::size_t>> rare_occupied;
      for (const EncodedRecord* r : victims) {
        const auto pos = injection::ChoosePositions(injection::PlacementPolicy::kRandom, r->tokens,
                                                    1, cfg_.triggers_per_example, nullptr, {}, rng);
        const auto placements = injection::PlaceTriggers(r->tokens, rare_tokens, pos);
        rare_triggered.push_back(injection::ApplyPlacements(r->tokens, placements));
        rare_occupied.push_back(Occupied(placements));
      }
      summary.evasion_rate_rare =
          evaluation::defense_resistance(w.scorer, rare_triggered, rare_occupied,
                                         cfg_.onion_threshold)
              .evasion_rate;
    }

    if (cfg_.random_baseline && cfg_.placement != injection::PlacementPolicy::kRandom) {
      const auto split = injection::poison_corpus(
          TrainExamples(w), set, PoisonConfigOf(cfg_, w, injection::PlacementPolicy::kRandom));
      const auto random_model = injection::inject(w.target, split.clean, split.poisoned,
                                                  cfg_.eta, InjectTrain(cfg_)).model;
      const auto random_triggered =
          trigger_victims(injection::PlacementPolicy::kRandom, nullptr, nullptr);
      summary.asr_random_percent = evaluation::asr(random_model, random_triggered, success);
      summary.asr_random_train_percent = evaluation::asr(random_model, triggered, success);
      summary.asr_random_test_percent = evaluation::asr(model, random_triggered, success);
    } else if (cfg_.placement == injection::PlacementPolicy::kRandom) {
      summary.asr_random_percent = rep.asr_percent;
    }

    artifacts::WriteJson(
        Artifact("eval.json"), HeaderFor("eval"),
        Json{{"task", TaskName(cfg_.task)},
             {"placement", injection::PlacementPolicyName(cfg_.placement)},
             {"poison_rate", cfg_.poison_rate},
             {"asr_percent", OptionalJson(rep.asr_percent)},
             {"asr_random_percent", OptionalJson(summary.asr_random_percent)},
             {"asr_random_train_percent", OptionalJson(summary.asr_random_train_percent)},
             {"asr_random_test_percent", OptionalJson(summary.asr_random_test_percent)},
             {"clean_accuracy_before_percent", OptionalJson(summary.clean_accuracy_before_percent)},
             {"clean_accuracy_percent", OptionalJson(rep.clean_accuracy_percent)},
             {"as_mean", OptionalJson(rep.as_mean)},
             {"as_values", rep.as_values},
             {"src", OptionalJson(rep.src)},
             {"src_count", rep.src_count},
             {"evasion_rate", OptionalJson(rep.evasion_rate)},
             {"evasion_rate_rare", OptionalJson(summary.evasion_rate_rare)},
             {"onion_threshold", OptionalJson(cfg_.onion_threshold)},
             {"triggered_count", rep.triggered_count},
             {"clean_count", rep.clean_count}});
    return summary;
  });
}

void Run::Report() {
  Guard(Phase::kReport, "", [&] { report({dir_}, dir_); });
}

triggers::TriggerSet Run::RunAll() {
  Label();
  TrainDmsa();
  if (!cfg_.adapt_corpus.empty()) AdaptDmsa();
  Attribute();
  auto set = Triggers();
  Poison();
  Inject();
  Eval();
  Report();
  return set;
}

triggers::TriggerSet run_pipeline(const PipelineConfig& cfg) {
  Run run(cfg, ResolveRunDir(cfg));
  return run.RunAll();
}

// ----------------------------------------------------------------- report

namespace {

struct RunSummary {
  std::string name;
  KeyValues config;
  std::string config_hash;
  std::string seed;
  std::optional<Json> eval;
  std::optional<Json> trigger_set;
  std::vector<std::string> vocab;
};

std::string Metric(const std::optional<Json>& eval, const char* key, int digits,
                   double scale = 1.0) {
  if (!eval || !eval->contains(key) || (*eval)[key].is_null()) return "not computed";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << (*eval)[key].get<double>() * scale;
  return os.str();
}

RunSummary LoadRunSummary(const fs::path& dir) {
  RunSummary s;
  s.name = dir.filename().string();
  if (s.name.empty()) s.name = dir.parent_path().filename().string();
  if (!fs::is_directory(dir)) Fail(ErrorKind::kDataError, "run directory '" + dir.string() + "' does not exist");
  std::vector<std::string> missing;
  if (!fs::exists(dir / "config.txt")) missing.push_back("config (any phase)");
  if (!fs::exists(dir / "trigger_set.json")) missing.push_back(PhaseName(Phase::kTriggers));
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    Fail(ErrorKind::kDataError, "run '" + s.name + "' is missing artifacts from phase(s): " + list);
  }
  s.config = KeyValues::LoadFile((dir / "config.txt").string());
  s.trigger_set = artifacts::ReadJson(dir / "trigger_set.json", "trigger_set");
  s.config_hash = (*s.trigger_set)["config_hash"].get<std::string>();
  s.seed = std::to_string((*s.trigger_set)["seed"].get<std::uint64_t>());
  if (fs::exists(dir / "eval.json")) s.eval = artifacts::ReadJson(dir / "eval.json", "eval");
  return s;
}

std::string Svg(const std::vector<std::pair<double, double>>& points,
                const std::vector<std::pair<double, double>>& baseline) {
  const double W = 480, H = 320, pad = 48;
  double xmax = 0.0;
  for (const auto& p : points) xmax = std::max(xmax, p.first);
  for (const auto& p : baseline) xmax = std::max(xmax, p.first);
  if (xmax <= 0.0) xmax = 1.0;
  auto X = [&](double x) { return pad + (W - 2 * pad) * x / xmax; };
  auto Y = [&](double y) { return H - pad - (H - 2 * pad) * y / 100.0; };
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\""
     << H - pad << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">poison rate</text>\n";
  os << "<text x=\"14\" y=\"" << H / 2 << "\" transform=\"rotate(-90 14 " << H / 2
     << ")\" text-anchor=\"middle\">ASR (%)</text>\n";
  auto series = [&](const std::vector<std::pair<double, double>>& pts, const char* color) {
    if (pts.empty()) return;
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const auto& p : pts) os << X(p.first) << "," << Y(p.second) << " ";
    os << "\"/>\n";
    for (const auto& p : pts) {
      os << "<circle cx=\"" << X(p.first) << "\" cy=\"" << Y(p.second) << "\" r=\"4\" fill=\""
         << color << "\"/>\n";
    }
  };
  series(baseline, "gray");
  series(points, "steelblue");
  os << "</svg>\n";
  return os.str();
}

}  // namespace

ReportResult report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) Fail(ErrorKind::kConfigError, "report needs at least one run directory");
  std::vector<RunSummary> runs;
  for (const auto& d : run_dirs) runs.push_back(LoadRunSummary(d));

  std::ostringstream md;
  md << "<!-- schema: trigsense.report v" << artifacts::kSchemaVersion;
  for (const auto& r : runs) md << " config_hash=" << r.config_hash << " seed=" << r.seed;
  md << " -->\n";
  md << "# Trigger search report\n\n";
  md << "| run | seed | poison rate | placement | ASR (%) | ASR random (%) | clean acc before (%) "
        "| clean acc after (%) | AS | SRC | evasion | evasion rare |\n";
  md << "|---|---|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : runs) {
    md << "| " << r.name << " | " << r.seed << " | " << r.config.GetString("poison_rate", "?")
       << " | " << r.config.GetString("placement", "?") << " | "
       << Metric(r.eval, "asr_percent", 1) << " | " << Metric(r.eval, "asr_random_percent", 1)
       << " | " << Metric(r.eval, "clean_accuracy_before_percent", 1) << " | "
       << Metric(r.eval, "clean_accuracy_percent", 1) << " | " << Metric(r.eval, "as_mean", 3)
       << " | " << Metric(r.eval, "src", 3) << " | " << Metric(r.eval, "evasion_rate", 3)
       << " | " << Metric(r.eval, "evasion_rate_rare", 3) << " |\n";
  }
  for (const auto& r : runs) {
    md << "\n## Trigger set: " << r.name << "\n\n| rank | source | position | tokens | reward | "
          "attack score | ppl norm |\n|---|---|---|---|---|---|---|\n";
    std::size_t rank = 1;
    for (const auto& p : (*r.trigger_set)["pairs"]) {
      std::ostringstream row;
      row.setf(std::ios::fixed);
      row.precision(4);
      row << "| " << rank++ << " | " << p.value("source_input", std::string("?")) << " | "
          << p["position"].get<std::size_t>() << " | " << p["text"].get<std::string>() << " | "
          << p["reward"].get<double>() << " | " << p["attack_score"].get<double>() << " | "
          << p["ppl_norm"].get<double>() << " |\n";
      md << row.str();
    }
  }

  ReportResult result;
  if (runs.size() > 1) {
    std::vector<std::pair<double, double>> pts, base;
    std::string csv = "run,poison_rate,asr_percent,asr_random_percent\n";
    for (const auto& r : runs) {
      if (!r.eval || (*r.eval)["asr_percent"].is_null()) continue;
      const double rate = (*r.eval)["poison_rate"].get<double>();
      pts.emplace_back(rate, (*r.eval)["asr_percent"].get<double>());
      std::string random = "";
      if (!(*r.eval)["asr_random_percent"].is_null()) {
        base.emplace_back(rate, (*r.eval)["asr_random_percent"].get<double>());
        random = FormatDouble(base.back().second);
      }
      csv += r.name + "," + FormatDouble(rate) + "," + FormatDouble(pts.back().second) + "," +
             random + "\n";
    }
    std::sort(pts.begin(), pts.end());
    std::sort(base.begin(), base.end());
    md << "\n## ASR vs poison rate\n\n| poison rate | ASR (%) |\n|---|---|\n";
    for (const auto& [x, y] : pts) md << "| " << FormatDouble(x) << " | " << Metric(Json{{"v", y}}, "v", 1) << " |\n";
    md << "\nPlot: asr_curve.svg (blue: configured placement, gray: random placement).\n";
    artifacts::WriteText(out_dir / "asr_curve.csv", csv);
    artifacts::WriteText(out_dir / "asr_curve.svg", Svg(pts, base));
    result.files.push_back(out_dir / "asr_curve.csv");
    result.files.push_back(out_dir / "asr_curve.svg");
  }
  result.markdown = md.str();
  artifacts::WriteText(out_dir / "report.md", result.markdown);
  result.files.insert(result.files.begin(), out_dir / "report.md");
  return result;
}

}  // namespace trigsense::pipeline
