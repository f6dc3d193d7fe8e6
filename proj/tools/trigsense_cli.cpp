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

// trigsense: command-line front end for the trigger-search pipeline.
//
//   trigsense -c run.cfg run-all
//   trigsense -c run.cfg --set poison_rate=0.01 eval
//   trigsense report runs/a runs/b --out runs/compare
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 missing backend
// capability, 1 anything else.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trigsense/config.hpp"
#include "trigsense/core.hpp"
#include "trigsense/pipeline.hpp"
#include "trigsense/synthetic.hpp"

namespace {

using trigsense::ErrorKind;
namespace config = trigsense::config;
namespace pipeline = trigsense::pipeline;
namespace fs = std::filesystem;

int ExitCode(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfigError: return 2;
    case ErrorKind::kDataError:
    case ErrorKind::kInvalidInput: return 3;
    case ErrorKind::kCapabilityMissing: return 4;
    default: return 1;
  }
}

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_dir;
};

pipeline::PipelineConfig LoadConfig(const Options& opt) {
  config::KeyValues kv;
  if (!opt.config_path.empty()) kv = config::KeyValues::LoadFile(opt.config_path);
  for (const auto& o : opt.overrides) kv.SetAssignment(o);
  return pipeline::PipelineConfig::FromKeyValues(kv);
}

fs::path RunDir(const Options& opt, const pipeline::PipelineConfig& cfg) {
  return opt.run_dir.empty() ? pipeline::ResolveRunDir(cfg) : fs::path(opt.run_dir);
}

void PrintTriggers(const trigsense::triggers::TriggerSet& set) {
  for (const auto& p : set.pairs) {
    std::printf("trigger position=%zu reward=%.4f tokens=", p.position, p.reward.reward);
    for (std::size_t k = 0; k < p.tokens.size(); ++k) {
      std::printf("%s%d", k ? "," : "", p.tokens[k]);
    }
    std::printf("\n");
  }
}

void PrintEval(const pipeline::EvalSummary& s) {
  auto show = [](const char* name, const std::optional<double>& v) {
    if (v) {
      std::printf("%s=%.4f\n", name, *v);
    } else {
      std::printf("%s=not computed\n", name);
    }
  };
  show("asr_percent", s.report.asr_percent);
  show("asr_random_percent", s.asr_random_percent);
  show("asr_random_train_percent", s.asr_random_train_percent);
  show("asr_random_test_percent", s.asr_random_test_percent);
  show("clean_accuracy_before_percent", s.clean_accuracy_before_percent);
  show("clean_accuracy_percent", s.report.clean_accuracy_percent);
  show("as_mean", s.report.as_mean);
  show("src", s.report.src);
  show("evasion_rate", s.report.evasion_rate);
  show("evasion_rate_rare", s.evasion_rate_rare);
}

}  // namespace

int main(int argc, char** argv) {
  trigsense::SetWarningSink([](const std::string& m) { std::fprintf(stderr, "warning: %s\n", m.c_str()); });

  CLI::App app{"Sensitivity-guided textual trigger search toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("-c,--config", opt.config_path, "key = value configuration file");
  app.add_option("--set", opt.overrides, "override a config key (key=value); repeatable");
  app.add_option("--run-dir", opt.run_dir,
                 "run directory (default: $TRIGSENSE_RUN_ROOT/<run_name or run-hash>)");

  struct PhaseCommand {
    const char* name;
    const char* help;
  };
  const std::vector<PhaseCommand> phases = {
      {"label", "compute ground-truth sensitivity labels"},
      {"train-dmsa", "train the sensitivity predictor"},
      {"adapt-dmsa", "adapt the predictor on adapt_corpus"},
      {"attribute", "refine predicted sensitivity with hierarchical attribution"},
      {"triggers", "search trigger candidates and select the trigger set"},
      {"poison", "poison the training split"},
      {"inject", "fine-tune the target on the poisoned split"},
      {"eval", "evaluate attack success, stealthiness, ranking and defense evasion"},
      {"run-all", "run every phase in order"},
  };
  std::vector<CLI::App*> phase_cmds;
  for (const auto& p : phases) phase_cmds.push_back(app.add_subcommand(p.name, p.help));

  auto* report_cmd = app.add_subcommand("report", "summarize one or more run directories");
  std::vector<std::string> report_dirs;
  std::string report_out;
  report_cmd->add_option("runs", report_dirs, "run directories (default: the configured run)");
  report_cmd->add_option("--out", report_out, "output directory (default: the first run)");

  auto* synth_cmd = app.add_subcommand("synth-corpus", "write the synthetic sentiment corpus");
  trigsense::synthetic::SentimentConfig synth;
  std::string synth_out;
  synth_cmd->add_option("--out", synth_out, "output corpus path")->required();
  synth_cmd->add_option("--examples", synth.examples, "number of examples");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth_cmd->parsed()) {
      const auto corpus = trigsense::synthetic::MakeSentimentCorpus(synth);
      std::vector<pipeline::CorpusRecord> records;
      for (const auto& ex : corpus.examples) {
        records.push_back({ex.id, ex.text, {}, std::to_string(ex.label), "classification"});
      }
      pipeline::WriteCorpus(synth_out, records);
      std::printf("wrote %zu records to %s\n", records.size(), synth_out.c_str());
      return 0;
    }
    if (report_cmd->parsed()) {
      std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
      if (dirs.empty()) {
        const auto cfg = LoadConfig(opt);
        dirs.push_back(RunDir(opt, cfg));
      }
      const fs::path out = report_out.empty() ? dirs.front() : fs::path(report_out);
      const auto res = pipeline::report(dirs, out);
      std::fputs(res.markdown.c_str(), stdout);
      for (const auto& f : res.files) std::fprintf(stderr, "wrote %s\n", f.string().c_str());
      return 0;
    }

    const auto cfg = LoadConfig(opt);
    pipeline::Run run(cfg, RunDir(opt, cfg));
    std::fprintf(stderr, "run directory: %s (config %s)\n", run.dir().string().c_str(),
                 run.config_hash().c_str());
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "label") {
      run.Label();
    } else if (cmd == "train-dmsa") {
      run.TrainDmsa();
    } else if (cmd == "adapt-dmsa") {
      run.AdaptDmsa();
    } else if (cmd == "attribute") {
      run.Attribute();
    } else if (cmd == "triggers") {
      PrintTriggers(run.Triggers());
    } else if (cmd == "poison") {
      run.Poison();
    } else if (cmd == "inject") {
      run.Inject();
    } else if (cmd == "eval") {
      PrintEval(run.Eval());
    } else if (cmd == "run-all") {
      PrintTriggers(run.RunAll());
    }
    return 0;
  } catch (const trigsense::Error& e) {
    std::fprintf(stderr, "error (%s): %s\n", trigsense::ErrorKindName(e.kind()), e.what());
    return ExitCode(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
