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

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"
#include "trigsense/artifacts.hpp"
#include "trigsense/config.hpp"
#include "trigsense/pipeline.hpp"
#include "trigsense/synthetic.hpp"

namespace trigsense::pipeline {
namespace {

namespace fs = std::filesystem;
using artifacts::Json;

template <typename Fn>
void ExpectKind(ErrorKind kind, Fn&& fn) {
  try {
    fn();
    FAIL() << "expected " << ErrorKindName(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

void WriteLines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << "\n";
}

fs::path SynthCorpus(const fs::path& dir, std::size_t examples, std::uint64_t seed) {
  synthetic::SentimentConfig sc;
  sc.examples = examples;
  sc.seed = seed;
  std::vector<CorpusRecord> records;
  for (const auto& ex : synthetic::MakeSentimentCorpus(sc).examples) {
    records.push_back({ex.id, ex.text, {}, std::to_string(ex.label), "classification"});
  }
  const auto path = dir / "corpus.jsonl";
  WriteCorpus(path.string(), records);
  return path;
}

// Desk-sized settings so a full run takes well under a second.
config::KeyValues SmallConfig(const fs::path& corpus) {
  config::KeyValues kv;
  kv.Set("corpus", corpus.string());
  kv.Set("label_examples", "60");
  kv.Set("predictor.epochs", "5");
  kv.Set("search_examples", "5");
  kv.Set("inject.epochs", "2");
  kv.Set("eval.examples", "40");
  kv.Set("eval.src_examples", "10");
  return kv;
}

// --------------------------------------------------------------- corpus

TEST(Ingest, ParsesRecords) {
  const auto dir = testing::ScratchDir("ingest_ok");
  WriteLines(dir / "c.jsonl", {R"({"id":"a","text":"The movie was great.","label":1})",
                               R"({"id":"b","text":"dull plot","label":"0","context":"classification"})",
                               "",
                               R"({"id":"c","text":"tell me more","context":"generation"})"});
  const auto recs = ingest_corpus((dir / "c.jsonl").string());
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].tokens, (std::vector<std::string>{"the", "movie", "was", "great", "."}));
  EXPECT_EQ(recs[0].label, "1");
  EXPECT_EQ(recs[1].label, "0");
  EXPECT_FALSE(recs[2].label);
  EXPECT_EQ(ContextOf(recs[2]), sensitivity::TaskContext::kGeneration);
  EXPECT_EQ(ContextOf(recs[0]), sensitivity::TaskContext::kClassification);
}

TEST(Ingest, Errors) {
  const auto dir = testing::ScratchDir("ingest_errors");
  WriteLines(dir / "dup.jsonl", {R"({"id":"a","text":"x"})", R"({"id":"a","text":"y"})"});
  WriteLines(dir / "bad.jsonl", {R"({"id":"a","text":"x"})", "{not json"});
  WriteLines(dir / "noid.jsonl", {R"({"text":"x"})"});
  WriteLines(dir / "empty.jsonl", {});
  ExpectKind(ErrorKind::kDataError, [&] { ingest_corpus((dir / "dup.jsonl").string()); });
  ExpectKind(ErrorKind::kDataError, [&] { ingest_corpus((dir / "bad.jsonl").string()); });
  ExpectKind(ErrorKind::kDataError, [&] { ingest_corpus((dir / "noid.jsonl").string()); });
  ExpectKind(ErrorKind::kConfigError, [&] { ingest_corpus((dir / "empty.jsonl").string()); });
  ExpectKind(ErrorKind::kConfigError, [&] { ingest_corpus((dir / "missing.jsonl").string()); });
  try {
    ingest_corpus((dir / "dup.jsonl").string());
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(Ingest, WriteCorpusRoundTrips) {
  const auto dir = testing::ScratchDir("ingest_round_trip");
  const auto path = SynthCorpus(dir, 25, 4);
  const auto a = ingest_corpus(path.string());
  WriteCorpus((dir / "copy.jsonl").string(), a);
  const auto b = ingest_corpus((dir / "copy.jsonl").string());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].tokens, b[i].tokens);
    EXPECT_EQ(a[i].label, b[i].label);
  }
}

// --------------------------------------------------------------- config

TEST(Config, HashStableUnderReordering) {
  const auto a = config::KeyValues::Parse("rho = 0.3\nseed = 4\nplug.k_t = 2\n");
  const auto b = config::KeyValues::Parse("plug.k_t=2\n# comment\nseed=4\nrho=0.3\n");
  EXPECT_EQ(a.Hash(), b.Hash());
  const auto pa = PipelineConfig::FromKeyValues(a);
  const auto pb = PipelineConfig::FromKeyValues(b);
  EXPECT_EQ(pa.Hash(), pb.Hash());
  // Defaults are part of the hash, so spelling one out changes nothing.
  auto c = b;
  c.Set("eta", "1");
  EXPECT_EQ(PipelineConfig::FromKeyValues(c).Hash(), pa.Hash());
  c.Set("eta", "0.5");
  EXPECT_NE(PipelineConfig::FromKeyValues(c).Hash(), pa.Hash());
  // The run name only picks the directory.
  auto d = a;
  d.Set("run_name", "named");
  EXPECT_EQ(PipelineConfig::FromKeyValues(d).Hash(), pa.Hash());
}

TEST(Config, RoundTripsThroughKeyValues) {
  auto kv = config::KeyValues::Parse("rho = 0.25\nplacement = random\nalpha.generation = 0.3\n"
                                     "plug.tau_ppl = 40\nexternal.model_path = /x\n");
  const auto cfg = PipelineConfig::FromKeyValues(kv);
  EXPECT_EQ(cfg.placement, injection::PlacementPolicy::kRandom);
  EXPECT_EQ(cfg.external_options.at("external.model_path"), "/x");
  const auto again = PipelineConfig::FromKeyValues(cfg.ToKeyValues());
  EXPECT_EQ(again.Hash(), cfg.Hash());
  EXPECT_EQ(again.plug.tau_ppl, 40.0);
}

TEST(Config, RejectsOutOfDomainValues) {
  for (const char* bad : {"rho = 1.5", "plug.lambda = 2", "poison_rate = -0.1", "eta = -1",
                          "plug.k_t = 0", "no_such_key = 1", "rho = abc", "task = ranking",
                          "placement = everywhere", "trigger_text = one two three"}) {
    ExpectKind(ErrorKind::kConfigError, [&] {
      PipelineConfig::FromKeyValues(config::KeyValues::Parse(bad)).Validate();
    });
  }
  ExpectKind(ErrorKind::kConfigError, [] { config::KeyValues::Parse("just words\n"); });
}

// ----------------------------------------------------------- full runs

struct RunFixture {
  fs::path dir;
  PipelineConfig cfg;
};

RunFixture SmallRun(const std::string& name, std::uint64_t seed = 0) {
  RunFixture f;
  f.dir = testing::ScratchDir(name);
  auto kv = SmallConfig(SynthCorpus(f.dir, 300, 1));
  kv.Set("seed", std::to_string(seed));
  f.cfg = PipelineConfig::FromKeyValues(kv);
  return f;
}

TEST(RunPipeline, DeterministicManifests) {
  const auto f = SmallRun("determinism");
  pipeline::Run a(f.cfg, f.dir / "a");
  pipeline::Run b(f.cfg, f.dir / "b");
  const auto ta = a.RunAll();
  const auto tb = b.RunAll();
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t k = 0; k < ta.size(); ++k) {
    EXPECT_EQ(ta.pairs[k].tokens, tb.pairs[k].tokens);
    EXPECT_EQ(ta.pairs[k].position, tb.pairs[k].position);
    EXPECT_EQ(ta.pairs[k].reward.reward, tb.pairs[k].reward.reward);
  }
  for (const char* file : {"triggers.jsonl", "trigger_set.json", "refined.jsonl", "labels.jsonl",
                           "poisoned.jsonl", "eval.json"}) {
    EXPECT_EQ(artifacts::ReadText(a.Artifact(file)), artifacts::ReadText(b.Artifact(file))) << file;
  }
}

TEST(RunPipeline, TriggerPositionsAreSensitive) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto f = SmallRun("containment_" + std::to_string(seed), seed);
    pipeline::Run run(f.cfg, f.dir / "run");
    run.Label();
    run.TrainDmsa();
    run.Attribute();
    run.Triggers();
    const auto refined = artifacts::ReadJsonl(run.Artifact("refined.jsonl"), "refined");
    const auto manifests = artifacts::ReadJsonl(run.Artifact("triggers.jsonl"), "triggers");
    ASSERT_EQ(refined.records.size(), manifests.records.size());
    for (std::size_t k = 0; k < refined.records.size(); ++k) {
      const auto sensitive = refined.records[k].at("sensitive_positions").get<std::vector<std::size_t>>();
      const auto& m = manifests.records[k];
      EXPECT_EQ(m.at("input_id"), refined.records[k].at("input_id"));
      for (const auto& p : m.at("pairs")) {
        const auto pos = p.at("position").get<std::size_t>();
        EXPECT_TRUE(std::find(sensitive.begin(), sensitive.end(), pos) != sensitive.end())
            << "seed " << seed << " input " << m.at("input_id") << " position " << pos;
      }
    }
  }
}

TEST(RunPipeline, ArtifactsAreSchemaValid) {
  const auto f = SmallRun("schema");
  pipeline::Run run(f.cfg, f.dir / "run");
  run.RunAll();
  const artifacts::Header want{"", run.config_hash(), f.cfg.seed};
  for (const auto& [file, kind] : std::vector<std::pair<std::string, std::string>>{
           {"labels.jsonl", "labels"}, {"refined.jsonl", "refined"},
           {"triggers.jsonl", "triggers"}, {"poisoned.jsonl", "poisoned"}}) {
    const auto j = artifacts::ReadJsonl(run.Artifact(file), kind);
    EXPECT_EQ(j.header.config_hash, want.config_hash) << file;
    EXPECT_EQ(j.header.seed, want.seed) << file;
    EXPECT_FALSE(j.records.empty()) << file;
  }
  for (const auto& [file, kind] : std::vector<std::pair<std::string, std::string>>{
           {"predictor.json", "predictor_checkpoint"}, {"trigger_set.json", "trigger_set"},
           {"injection.json", "injection"}, {"eval.json", "eval"}}) {
    const auto j = artifacts::ReadJson(run.Artifact(file), kind);
    EXPECT_EQ(j.at("config_hash"), want.config_hash) << file;
  }
  const auto eval = artifacts::ReadJson(run.Artifact("eval.json"), "eval");
  const double asr = eval.at("asr_percent").get<double>();
  EXPECT_GE(asr, 0.0);
  EXPECT_LE(asr, 100.0);
  const double src = eval.at("src").get<double>();
  EXPECT_GE(src, -1.0);
  EXPECT_LE(src, 1.0);
  EXPECT_TRUE(fs::exists(run.Artifact("report.md")));
  EXPECT_TRUE(fs::exists(run.Artifact("vocab.txt")));
  EXPECT_TRUE(fs::exists(run.Artifact("config.txt")));
  // A wrong kind is rejected.
  ExpectKind(ErrorKind::kDataError, [&] { artifacts::ReadJson(run.Artifact("eval.json"), "labels"); });
}

TEST(RunPipeline, MissingPrerequisiteNamesThePhase) {
  const auto f = SmallRun("missing_phase");
  pipeline::Run run(f.cfg, f.dir / "run");
  try {
    run.Attribute();
    FAIL() << "expected a data error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDataError);
    const std::string what = e.what();
    EXPECT_NE(what.find("phase attribute"), std::string::npos) << what;
    EXPECT_NE(what.find("train-dmsa"), std::string::npos) << what;
  }
}

TEST(RunPipeline, EmptyCorpusIsConfigError) {
  const auto dir = testing::ScratchDir("empty_corpus");
  WriteLines(dir / "c.jsonl", {});
  auto cfg = PipelineConfig::FromKeyValues(SmallConfig(dir / "c.jsonl"));
  pipeline::Run run(cfg, dir / "run");
  ExpectKind(ErrorKind::kConfigError, [&] { run.Label(); });
}

TEST(RunPipeline, ResolveRunDirUsesRootAndName) {
  auto cfg = PipelineConfig::FromKeyValues(config::KeyValues::Parse("seed = 3"));
  ::setenv("TRIGSENSE_RUN_ROOT", "/tmp/runs_root", 1);
  EXPECT_EQ(ResolveRunDir(cfg), fs::path("/tmp/runs_root") / ("run-" + cfg.Hash()));
  cfg.run_name = "mine";
  EXPECT_EQ(ResolveRunDir(cfg), fs::path("/tmp/runs_root/mine"));
  ::unsetenv("TRIGSENSE_RUN_ROOT");
  EXPECT_EQ(ResolveRunDir(cfg), fs::path("runs/mine"));
}

// --------------------------------------------------------------- report

TEST(Report, MissingEvalIsNotComputed) {
  const auto f = SmallRun("report_partial");
  pipeline::Run run(f.cfg, f.dir / "run");
  run.Label();
  run.TrainDmsa();
  run.Attribute();
  run.Triggers();
  const auto res = report({run.dir()}, run.dir());
  EXPECT_NE(res.markdown.find("not computed"), std::string::npos);
  EXPECT_NE(res.markdown.find("config_hash=" + run.config_hash()), std::string::npos);
  ASSERT_EQ(res.files.size(), 1u);
  EXPECT_TRUE(fs::exists(res.files[0]));
  ExpectKind(ErrorKind::kDataError, [&] { report({f.dir / "nowhere"}, f.dir); });
}

TEST(Report, ComparesTwoRuns) {
  const auto f = SmallRun("report_compare");
  auto low = f.cfg;
  low.poison_rate = 0.02;
  pipeline::Run a(f.cfg, f.dir / "rate_005");
  pipeline::Run b(low, f.dir / "rate_002");
  a.RunAll();
  b.RunAll();
  const auto res = report({a.dir(), b.dir()}, f.dir / "compare");
  EXPECT_NE(res.markdown.find("rate_005"), std::string::npos);
  EXPECT_NE(res.markdown.find("rate_002"), std::string::npos);
  EXPECT_NE(res.markdown.find("ASR vs poison rate"), std::string::npos);
  EXPECT_EQ(res.markdown.find("not computed"), std::string::npos);
  EXPECT_TRUE(fs::exists(f.dir / "compare" / "asr_curve.svg"));
  const auto csv = artifacts::ReadText(f.dir / "compare" / "asr_curve.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

// ------------------------------------------------------------------ CLI

#ifdef TRIGSENSE_CLI_PATH
int Cli(const std::string& args) {
  const std::string cmd = std::string("\"") + TRIGSENSE_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const auto dir = testing::ScratchDir("cli");
  const auto corpus = SynthCorpus(dir, 300, 1);
  std::ofstream(dir / "run.cfg") << SmallConfig(corpus).Canonical() << "\n";
  const std::string c = "-c " + (dir / "run.cfg").string();
  const std::string run = " --run-dir " + (dir / "run").string();
  EXPECT_EQ(Cli(c + run + " run-all"), 0);
  EXPECT_EQ(Cli(c + run + " eval"), 0);
  EXPECT_EQ(Cli("report " + (dir / "run").string()), 0);
  EXPECT_EQ(Cli(c + " --set rho=7" + run + " label"), 2);
  EXPECT_EQ(Cli(c + " --set bogus=1" + run + " label"), 2);
  EXPECT_EQ(Cli("--bad-flag label"), 2);
  EXPECT_EQ(Cli(c + " --run-dir " + (dir / "fresh").string() + " attribute"), 3);
  EXPECT_EQ(Cli(c + " --set target_backend=external:none" + run + " label"), 4);
  EXPECT_EQ(Cli("synth-corpus --out " + (dir / "s.jsonl").string() + " --examples 10"), 0);
  EXPECT_EQ(ingest_corpus((dir / "s.jsonl").string()).size(), 10u);
}
#endif

}  // namespace
}  // namespace trigsense::pipeline
