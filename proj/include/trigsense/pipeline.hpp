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

// End-to-end orchestration: corpus ingestion, model construction, the
// labelling / attribution / search phases, poisoning, injection, evaluation
// and reporting. Every phase reads its inputs from and writes its outputs to
// one run directory, so phases can be rerun independently.
//
// Run directory layout:
//   config.txt        canonical configuration
//   vocab.txt         one token per line
//   labels.jsonl      ground-truth sensitivity labels
//   predictor.json    trained predictor (predictor_adapted.json after adapt)
//   refined.jsonl     refined sensitivity maps
//   triggers.jsonl    per-input search manifests
//   trigger_set.json  the global trigger set
//   poisoned.jsonl    training corpus after poisoning
//   injection.json    fine-tuning report
//   eval.json         metrics
//   report.md         human-readable summary

#ifndef TRIGSENSE_PIPELINE_HPP_
#define TRIGSENSE_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trigsense/artifacts.hpp"
#include "trigsense/attribution.hpp"
#include "trigsense/config.hpp"
#include "trigsense/evaluation.hpp"
#include "trigsense/injection.hpp"
#include "trigsense/oracle.hpp"
#include "trigsense/sensitivity.hpp"
#include "trigsense/text.hpp"
#include "trigsense/triggers.hpp"

namespace trigsense::pipeline {

enum class Task { kClassification, kGeneration };
const char* TaskName(Task t);

struct ToyWorldConfig {
  int dim = 16;
  int heads = 2;
  int epochs = 8;
  int batch_size = 32;
  double learning_rate = 1e-2;
  double lm_smoothing = 0.1;
  // Bigram share of the interpolated language model.
  double lm_weight = 0.7;
  // Fraction of the training split used to fine-tune the surrogate on the
  // trigger placeholder.
  double surrogate_poison_rate = 0.05;
};

struct PipelineConfig {
  // Backend ids. "toy" builds the desk-scale models from the corpus; other
  // ids are looked up in the backend registry. The embedder may be "target"
  // and the surrogate "derived" (the target fine-tuned on a placeholder
  // backdoor).
  std::string target_backend = "toy";
  std::string scorer_backend = "toy";
  std::string embedder_backend = "target";
  std::string surrogate_backend = "derived";
  Task task = Task::kClassification;

  std::string corpus;
  std::string adapt_corpus;
  std::string run_name;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;

  sensitivity::AlphaMap alphas = sensitivity::DefaultAlphas();
  double rho = 0.2;
  // Training-split records that receive ground-truth labels.
  std::size_t label_examples = 400;
  sensitivity::PredictorConfig predictor;
  sensitivity::PredictorTrainConfig predictor_train;
  int adapt_epochs = 10;

  attribution::HshapConfig hshap;
  triggers::PlugRankConfig plug;
  // Training-split inputs searched for triggers.
  std::size_t search_examples = 20;

  double poison_rate = 0.05;
  double eta = 1.0;
  injection::PlacementPolicy placement = injection::PlacementPolicy::kPerExample;
  std::size_t triggers_per_example = 1;
  int target_class = 1;
  std::string target_text;
  // When set, poisoning and evaluation use this trigger (exactly plug.L
  // tokens) instead of the searched tokens; positions still come from the
  // placement policy.
  std::string trigger_text;
  oracle::TrainConfig inject_train{.epochs = 4, .batch_size = 32, .learning_rate = 1e-2};

  // 0 evaluates every eligible test record.
  std::size_t eval_examples = 0;
  // Test records scored against the perturbation reference ranking.
  std::size_t src_examples = 50;
  std::optional<double> onion_threshold;
  // Also inject with random placement and report its success rate.
  bool random_baseline = true;

  ToyWorldConfig toy;

  // "external.*" keys, passed through to registry backends.
  std::map<std::string, std::string> external_options;

  static PipelineConfig FromKeyValues(const config::KeyValues& kv);
  config::KeyValues ToKeyValues() const;
  // Hash of the full canonical key set, defaults included.
  std::string Hash() const;
  // Throws kConfigError naming the first out-of-domain parameter.
  void Validate() const;
};

struct CorpusRecord {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
  std::optional<std::string> label;
  std::string context = "classification";
};

// One JSON object per line with fields id, text, optional label (string or
// integer) and optional context. Empty files and unreadable paths are
// config errors; malformed lines and duplicate ids are data errors naming
// the line.
std::vector<CorpusRecord> ingest_corpus(const std::string& path,
                                        const text::TokenizerConfig& tokenizer = {});
void WriteCorpus(const std::string& path, const std::vector<CorpusRecord>& records);

// Maps a record's context tag onto the predictor's context classes.
sensitivity::TaskContext ContextOf(const CorpusRecord& record);

struct EncodedRecord {
  std::string id;
  TokenSequence tokens;
  sensitivity::TaskContext context = sensitivity::TaskContext::kClassification;
  std::optional<int> label;
  std::optional<TokenSequence> label_tokens;
};

// Models and data shared by the phases. Rebuilt deterministically from the
// configuration and corpus on every invocation.
struct World {
  text::Vocabulary vocab;
  std::vector<EncodedRecord> train;
  std::vector<EncodedRecord> test;
  int num_classes = 0;
  oracle::ModelHandle target;
  oracle::ModelHandle scorer;
  oracle::ModelHandle embedder;
  oracle::ModelHandle surrogate;
  double mean_clean_ppl = 0.0;
  triggers::AdversarialTarget adversarial_target;
  injection::Target poison_target;
};

// Writes the vocabulary to `vocab_path` (when non-empty) before any
// registry backend is created, so external adapters can read it.
World BuildWorld(const PipelineConfig& cfg, const std::vector<CorpusRecord>& corpus,
                 const std::filesystem::path& vocab_path = {});

// `$TRIGSENSE_RUN_ROOT/<run_name>`, or `runs/run-<hash>` by default.
std::filesystem::path ResolveRunDir(const PipelineConfig& cfg);

struct EvalSummary {
  evaluation::EvalReport report;
  // Random placement at poisoning and at test time.
  std::optional<double> asr_random_percent;
  // Random placement at poisoning only; test inputs use the configured policy.
  std::optional<double> asr_random_train_percent;
  // Configured placement at poisoning; test inputs use random positions.
  std::optional<double> asr_random_test_percent;
  std::optional<double> clean_accuracy_before_percent;
  // Evasion rate of rare-token triggers at random positions.
  std::optional<double> evasion_rate_rare;
  std::size_t victims = 0;
};

enum class Phase { kLabel, kTrainDmsa, kAdaptDmsa, kAttribute, kTriggers, kPoison,
                   kInject, kEval, kReport };
const char* PhaseName(Phase p);

// Phase state for one run directory. Phases load prerequisites from disk
// and raise kDataError naming the missing phase when an artifact is absent.
class Run {
 public:
  Run(PipelineConfig cfg, std::filesystem::path dir);

  const PipelineConfig& config() const { return cfg_; }
  const std::filesystem::path& dir() const { return dir_; }
  const std::string& config_hash() const { return hash_; }
  World& world();

  // Errors raised by a phase are rethrown with the same kind and a
  // "phase <name>[, input <id>]: " prefix.
  void Label();
  void TrainDmsa();
  void AdaptDmsa();
  void Attribute();
  triggers::TriggerSet Triggers();
  void Poison();
  void Inject();
  EvalSummary Eval();
  void Report();
  triggers::TriggerSet RunAll();

  std::filesystem::path Artifact(const std::string& name) const { return dir_ / name; }
  artifacts::Header HeaderFor(const std::string& kind) const;

 private:
  void Prepare();
  sensitivity::SensitivityPredictor LoadPredictor();
  triggers::TriggerSet LoadTriggerSet();
  injection::PositionChooser Chooser(const sensitivity::SensitivityPredictor& predictor);
  oracle::ModelHandle Backdoored();

  PipelineConfig cfg_;
  std::filesystem::path dir_;
  std::string hash_;
  std::unique_ptr<World> world_;
  oracle::ModelHandle backdoored_;
};

// One pipeline run over (cfg.corpus) in ResolveRunDir(cfg); returns T*.
triggers::TriggerSet run_pipeline(const PipelineConfig& cfg);

// Summary of one or more run directories. Missing phases are reported as
// "not computed"; with several runs a comparison table and an ASR-vs-poison
// rate plot (SVG) are written to `out_dir`.
struct ReportResult {
  std::string markdown;
  std::vector<std::filesystem::path> files;
};
ReportResult report(const std::vector<std::filesystem::path>& run_dirs,
                    const std::filesystem::path& out_dir);

}  // namespace trigsense::pipeline

#endif  // TRIGSENSE_PIPELINE_HPP_
