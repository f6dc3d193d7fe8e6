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

// Python bindings. Python objects can act as backends: `wrap_model` adapts
// an object exposing `vocab_size`, `mask_id`, `predict` and any of
// `perplexity`, `sentence_embedding`, `masked_fill`, `next_token`, and
// `register_backend` makes a factory of such objects available to the
// pipeline as "external:<name>". Every call into Python holds the GIL; the
// adapter declares itself non-reentrant so the pipeline never fans out.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trigsense/artifacts.hpp"
#include "trigsense/config.hpp"
#include "trigsense/core.hpp"
#include "trigsense/evaluation.hpp"
#include "trigsense/oracle.hpp"
#include "trigsense/pipeline.hpp"
#include "trigsense/sensitivity.hpp"
#include "trigsense/stats.hpp"
#include "trigsense/synthetic.hpp"
#include "trigsense/text.hpp"

namespace py = pybind11;
namespace ts = trigsense;
namespace fs = std::filesystem;

namespace {

using ts::TokenId;
using ts::TokenSequence;
using ts::oracle::ModelHandle;

TokenSequence Seq(const std::vector<TokenId>& ids) { return TokenSequence(ids); }

std::vector<TokenId> ToIds(const TokenSequence& seq) { return seq.vector(); }

// Adapter from a duck-typed Python object to the capability interface. The
// capability set is fixed at construction from the attributes present.
class PythonModel : public ts::oracle::Model {
 public:
  explicit PythonModel(py::object impl) : impl_(std::move(impl)) {
    if (!py::hasattr(impl_, "predict")) {
      ts::Fail(ts::ErrorKind::kConfigError, "external model lacks predict()");
    }
    vocab_size_ = impl_.attr("vocab_size").cast<int>();
    mask_id_ = impl_.attr("mask_id").cast<TokenId>();
    const std::string head =
        py::hasattr(impl_, "task_head") ? impl_.attr("task_head").cast<std::string>() : "classifier";
    if (head != "classifier" && head != "generator") {
      ts::Fail(ts::ErrorKind::kConfigError, "task_head must be 'classifier' or 'generator'");
    }
    head_ = head == "classifier" ? ts::oracle::TaskHead::kClassifier : ts::oracle::TaskHead::kGenerator;
    num_classes_ = py::hasattr(impl_, "num_classes") ? impl_.attr("num_classes").cast<int>() : 0;
    id_ = py::hasattr(impl_, "backend_id") ? impl_.attr("backend_id").cast<std::string>() : "python";
    caps_.scoring = py::hasattr(impl_, "perplexity");
    caps_.embedding = py::hasattr(impl_, "sentence_embedding");
    caps_.is_encoder = py::hasattr(impl_, "masked_fill");
    caps_.is_decoder = py::hasattr(impl_, "next_token");
    caps_.reentrant = false;
  }

  // The object is released under the GIL; handles may outlive the caller's
  // last reference to it.
  ~PythonModel() override {
    py::gil_scoped_acquire gil;
    impl_ = py::object();
  }

  std::string backend_id() const override { return id_; }
  int vocab_size() const override { return vocab_size_; }
  TokenId mask_id() const override { return mask_id_; }
  ts::oracle::TaskHead task_head() const override { return head_; }
  int num_classes() const override { return num_classes_; }
  ts::oracle::Capabilities capabilities() const override { return caps_; }

  double Perplexity(const TokenSequence& seq) const override {
    if (!caps_.scoring) return Model::Perplexity(seq);
    py::gil_scoped_acquire gil;
    return impl_.attr("perplexity")(ToIds(seq)).cast<double>();
  }
  std::vector<double> SentenceEmbedding(const TokenSequence& seq) const override {
    if (!caps_.embedding) return Model::SentenceEmbedding(seq);
    py::gil_scoped_acquire gil;
    return impl_.attr("sentence_embedding")(ToIds(seq)).cast<std::vector<double>>();
  }
  std::vector<double> MaskedFill(const TokenSequence& seq, std::size_t position) const override {
    if (!caps_.is_encoder) return Model::MaskedFill(seq, position);
    py::gil_scoped_acquire gil;
    return impl_.attr("masked_fill")(ToIds(seq), position).cast<std::vector<double>>();
  }
  std::vector<double> NextToken(const TokenSequence& prefix) const override {
    if (!caps_.is_decoder) return Model::NextToken(prefix);
    py::gil_scoped_acquire gil;
    return impl_.attr("next_token")(ToIds(prefix)).cast<std::vector<double>>();
  }
  ts::oracle::TaskOutput Predict(const TokenSequence& seq) const override {
    py::gil_scoped_acquire gil;
    const py::object out = impl_.attr("predict")(ToIds(seq));
    ts::oracle::TaskOutput res;
    if (head_ == ts::oracle::TaskHead::kClassifier) {
      res.logits = out.cast<std::vector<double>>();
    } else {
      res.generated = Seq(out.cast<std::vector<TokenId>>());
    }
    return res;
  }

 private:
  py::object impl_;
  std::string id_;
  int vocab_size_ = 0;
  TokenId mask_id_ = 0;
  int num_classes_ = 0;
  ts::oracle::TaskHead head_ = ts::oracle::TaskHead::kClassifier;
  ts::oracle::Capabilities caps_;
};

// Opaque handle exposed to Python; calls go through the validated free
// functions, so Python backends see the same contracts as native ones.
struct Handle {
  ModelHandle model;
};

Handle WrapModel(py::object impl) { return Handle{std::make_shared<PythonModel>(std::move(impl))}; }

// Ids registered from Python, dropped at interpreter exit while the
// factories' Python references can still be released.
std::set<std::string>& PythonBackends() {
  static std::set<std::string> ids;
  return ids;
}

ts::pipeline::PipelineConfig ConfigFrom(const std::map<std::string, std::string>& entries) {
  ts::config::KeyValues kv;
  for (const auto& [k, v] : entries) kv.Set(k, v);
  return ts::pipeline::PipelineConfig::FromKeyValues(kv);
}

py::object ToPython(const ts::artifacts::Json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

py::list TriggersToPython(const ts::triggers::TriggerSet& set) {
  py::list out;
  for (const auto& p : set.pairs) {
    py::dict d;
    d["position"] = p.position;
    d["tokens"] = p.tokens;
    d["context_ppl"] = p.context_ppl;
    d["attack_score"] = p.reward.attack_score;
    d["ppl_norm"] = p.reward.ppl_norm;
    d["reward"] = p.reward.reward;
    out.append(d);
  }
  return out;
}

ts::sensitivity::SensitivityMap Map(const std::vector<double>& scores) {
  return ts::sensitivity::SensitivityMap(scores);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sensitivity-guided textual trigger search toolkit";

  // Error kinds map onto subclasses of trigsense.Error.
  static py::exception<ts::Error> base(m, "Error");
  std::map<ts::ErrorKind, py::object> kinds;
  const std::vector<std::pair<ts::ErrorKind, const char*>> names = {
      {ts::ErrorKind::kInvalidInput, "InvalidInput"},
      {ts::ErrorKind::kCapabilityMissing, "CapabilityMissing"},
      {ts::ErrorKind::kConfigError, "ConfigError"},
      {ts::ErrorKind::kDataError, "DataError"},
      {ts::ErrorKind::kUndefinedResult, "UndefinedResult"},
      {ts::ErrorKind::kInternalError, "InternalError"},
  };
  for (const auto& [kind, name] : names) {
    const std::string qualified = std::string("trigsense._core.") + name;
    py::object cls = py::reinterpret_steal<py::object>(
        PyErr_NewException(qualified.c_str(), base.ptr(), nullptr));
    m.attr(name) = cls;
    kinds[kind] = cls;
  }
  static const auto* kind_types = new std::map<ts::ErrorKind, py::object>(std::move(kinds));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ts::Error& e) {
      PyErr_SetString(kind_types->at(e.kind()).ptr(), e.what());
    }
  });

  ts::SetWarningSink([](const std::string& msg) {
    py::gil_scoped_acquire gil;
    PyErr_WarnEx(PyExc_RuntimeWarning, msg.c_str(), 1);
  });
  py::module_::import("atexit").attr("register")(py::cpp_function([] {
    ts::SetWarningSink(nullptr);
    for (const auto& id : PythonBackends()) ts::oracle::BackendRegistry::Global().Unregister(id);
    PythonBackends().clear();
  }));

  // ---------------------------------------------------------------- models
  py::class_<Handle>(m, "Model", "Immutable model handle.")
      .def_property_readonly("backend_id", [](const Handle& h) { return h.model->backend_id(); })
      .def_property_readonly("vocab_size", [](const Handle& h) { return h.model->vocab_size(); })
      .def_property_readonly("mask_id", [](const Handle& h) { return h.model->mask_id(); })
      .def("perplexity",
           [](const Handle& h, const std::vector<TokenId>& ids) {
             return ts::oracle::perplexity(h.model, Seq(ids));
           })
      .def("sentence_embedding",
           [](const Handle& h, const std::vector<TokenId>& ids) {
             return ts::oracle::sentence_embedding(h.model, Seq(ids));
           },
           "L2-normalized sentence embedding.")
      .def("masked_fill_distribution",
           [](const Handle& h, const std::vector<TokenId>& ids, std::size_t position) {
             return ts::oracle::masked_fill_distribution(h.model, Seq(ids), position).probs();
           })
      .def("next_token_distribution",
           [](const Handle& h, const std::vector<TokenId>& ids) {
             return ts::oracle::next_token_distribution(h.model, Seq(ids)).probs();
           })
      .def("predict", [](const Handle& h, const std::vector<TokenId>& ids) -> py::object {
        const auto out = ts::oracle::predict(h.model, Seq(ids));
        if (out.generated) return py::cast(ToIds(*out.generated));
        return py::cast(out.logits);
      });

  m.def("wrap_model", &WrapModel, py::arg("impl"),
        "Adapts a Python object to the model capability interface.");
  m.def(
      "register_backend",
      [](const std::string& name, py::function factory) {
        const std::string id = "external:" + name;
        ts::oracle::BackendRegistry::Global().Register(
            id, [factory](const ts::oracle::BackendOptions& options) -> ModelHandle {
              py::gil_scoped_acquire gil;
              py::object impl = factory(options);
              if (py::isinstance<Handle>(impl)) return impl.cast<Handle>().model;
              return std::make_shared<PythonModel>(std::move(impl));
            });
        PythonBackends().insert(id);
        return id;
      },
      py::arg("name"), py::arg("factory"),
      "Registers factory(options: dict) as backend 'external:<name>'; returns the id.");
  m.def(
      "unregister_backend",
      [](const std::string& name) {
        const std::string id = "external:" + name;
        PythonBackends().erase(id);
        return ts::oracle::BackendRegistry::Global().Unregister(id);
      },
      py::arg("name"));
  m.def("backend_ids", [] { return ts::oracle::BackendRegistry::Global().Ids(); });

  // ------------------------------------------------------ selection, metrics
  m.def("spearman",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return ts::stats::Spearman(a, b);
        });
  m.def("src",
        [](const std::vector<double>& pred, const std::vector<double>& truth) {
          return ts::evaluation::src(pred, truth);
        },
        "Spearman rank correlation with average ranks for ties.");
  m.def("selection_threshold",
        [](const std::vector<double>& scores, double rho) {
          return ts::sensitivity::SelectionThreshold(Map(scores), rho);
        },
        py::arg("scores"), py::arg("rho") = 0.2);
  m.def("select_sensitive_positions",
        [](const std::vector<double>& scores, double rho) {
          return ts::sensitivity::select_sensitive_positions(Map(scores), rho);
        },
        py::arg("scores"), py::arg("rho") = 0.2);
  m.def("ground_truth_sensitivity",
        [](const Handle& scorer, const Handle& embedder, const std::vector<TokenId>& ids,
           double alpha) {
          return ts::sensitivity::ground_truth_sensitivity(scorer.model, embedder.model, Seq(ids), alpha)
              .scores();
        },
        py::arg("scorer"), py::arg("embedder"), py::arg("tokens"), py::arg("alpha"));
  m.def("stealthiness", &ts::evaluation::StealthinessFromParts, py::arg("ppl"),
        py::arg("ppl_triggered"), py::arg("cos"));
  m.def(
      "onion_scores",
      [](const Handle& scorer, const std::vector<TokenId>& ids, std::optional<double> threshold) {
        const auto s = ts::evaluation::onion_scores(scorer.model, Seq(ids), threshold);
        py::dict d;
        d["drops"] = s.drops;
        d["threshold"] = s.threshold;
        d["flagged"] = s.flagged;
        return d;
      },
      py::arg("scorer"), py::arg("tokens"), py::arg("threshold") = py::none());

  // ----------------------------------------------------------------- text
  m.def("tokenize", [](const std::string& text) { return ts::text::Tokenize(text); });
  m.def(
      "write_sentiment_corpus",
      [](const fs::path& path, std::size_t examples, std::uint64_t seed) {
        ts::synthetic::SentimentConfig sc;
        sc.examples = examples;
        sc.seed = seed;
        std::vector<ts::pipeline::CorpusRecord> records;
        for (const auto& ex : ts::synthetic::MakeSentimentCorpus(sc).examples) {
          records.push_back({ex.id, ex.text, {}, std::to_string(ex.label), "classification"});
        }
        ts::pipeline::WriteCorpus(path.string(), records);
        return records.size();
      },
      py::arg("path"), py::arg("examples") = 2000, py::arg("seed") = 0,
      "Writes the synthetic sentiment corpus as JSON lines; returns the record count.");

  // ------------------------------------------------------------- pipeline
  m.def("config_hash",
        [](const std::map<std::string, std::string>& cfg) { return ConfigFrom(cfg).Hash(); });
  py::class_<ts::pipeline::Run>(m, "Run", "Phase runner over one run directory.")
      .def(py::init([](const std::map<std::string, std::string>& cfg, const fs::path& dir) {
             return std::make_unique<ts::pipeline::Run>(ConfigFrom(cfg), dir);
           }),
           py::arg("config"), py::arg("run_dir"))
      .def_property_readonly("run_dir", &ts::pipeline::Run::dir)
      .def_property_readonly("config_hash", &ts::pipeline::Run::config_hash)
      .def("label", &ts::pipeline::Run::Label)
      .def("train_dmsa", &ts::pipeline::Run::TrainDmsa)
      .def("adapt_dmsa", &ts::pipeline::Run::AdaptDmsa)
      .def("attribute", &ts::pipeline::Run::Attribute)
      .def("triggers", [](ts::pipeline::Run& r) { return TriggersToPython(r.Triggers()); })
      .def("poison", &ts::pipeline::Run::Poison)
      .def("inject", &ts::pipeline::Run::Inject)
      .def("eval",
           [](ts::pipeline::Run& r) {
             r.Eval();
             return ToPython(ts::artifacts::ReadJson(r.Artifact("eval.json"), "eval"));
           },
           "Runs evaluation and returns the eval artifact.")
      .def("report", &ts::pipeline::Run::Report)
      .def("run_all", [](ts::pipeline::Run& r) { return TriggersToPython(r.RunAll()); })
      .def("artifact", &ts::pipeline::Run::Artifact, py::arg("name"));

  m.def("read_artifact",
        [](const fs::path& path, const std::string& kind) {
          return ToPython(ts::artifacts::ReadJson(path, kind));
        },
        py::arg("path"), py::arg("kind"), "Reads a single-document artifact, checking its schema.");
  m.def("read_records",
        [](const fs::path& path, const std::string& kind) {
          py::list out;
          for (const auto& r : ts::artifacts::ReadJsonl(path, kind).records) out.append(ToPython(r));
          return out;
        },
        py::arg("path"), py::arg("kind"), "Reads the records of a line-record artifact.");
  m.def(
      "report",
      [](const std::vector<fs::path>& runs, const fs::path& out) {
        const auto res = ts::pipeline::report(runs, out);
        return py::make_tuple(res.markdown, res.files);
      },
      py::arg("run_dirs"), py::arg("out_dir"), "Returns (markdown, written files).");
}
