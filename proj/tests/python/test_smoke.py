# Copyright 2026 The Trigsense Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Smoke tests for the Python bindings."""

import collections
import math
import pathlib

import pytest

import trigsense


class UnigramScorer:
    """Add-one unigram LM over a fixed vocabulary; perplexity only."""

    backend_id = "py-unigram"
    task_head = "generator"

    def __init__(self, vocab_size, counts=None):
        self.vocab_size = vocab_size
        self.mask_id = 1
        self.counts = collections.Counter(counts or {})
        self.calls = 0

    def prob(self, t):
        total = sum(self.counts.values()) + self.vocab_size
        return (self.counts[t] + 1) / total

    def perplexity(self, ids):
        self.calls += 1
        return math.exp(-sum(math.log(self.prob(t)) for t in ids) / len(ids))

    def sentence_embedding(self, ids):
        v = [0.0] * self.vocab_size
        for t in ids:
            v[t] += 1.0
        return v

    def predict(self, ids):
        return [int(ids[-1])]


def small_config(corpus, **extra):
    cfg = {
        "corpus": str(corpus),
        "label_examples": "60",
        "predictor.epochs": "5",
        "search_examples": "5",
        "inject.epochs": "2",
        "eval.examples": "40",
        "eval.src_examples": "10",
    }
    cfg.update({k: str(v) for k, v in extra.items()})
    return cfg


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "sentiment.jsonl"
    assert trigsense.write_sentiment_corpus(path, examples=300, seed=1) == 300
    return path


def test_selection_threshold_counts_ties():
    scores = [0.1, 0.9, 0.5, 0.7, 0.3]
    # k = ceil(0.4 * 5) = 2, so the threshold is the second largest score.
    assert trigsense.selection_threshold(scores, 0.4) == 0.7
    assert trigsense.select_sensitive_positions(scores, 0.4) == [1, 3]
    assert trigsense.select_sensitive_positions([0.5, 0.5, 0.5], 0.2) == [0, 1, 2]


def test_rank_correlation():
    assert trigsense.src([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert trigsense.src([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    # Monotone transforms leave ranks unchanged.
    a = [0.3, 0.1, 0.7, 0.2]
    b = [0.5, 0.9, 0.1, 0.4]
    assert trigsense.src([math.exp(x) for x in a], b) == pytest.approx(trigsense.src(a, b))


def test_error_kinds_are_error_subclasses():
    assert issubclass(trigsense.UndefinedResult, trigsense.Error)
    with pytest.raises(trigsense.UndefinedResult):
        trigsense.src([1, 1, 1], [1, 2, 3])
    with pytest.raises(trigsense.ConfigError):
        trigsense.config_hash({"rho": "1.5"})


def test_stealthiness_identity():
    assert trigsense.stealthiness(10.0, 10.0, 1.0) == pytest.approx(0.5)


def test_wrapped_model_contracts():
    scorer = UnigramScorer(4)
    model = trigsense.wrap_model(scorer)
    assert model.backend_id == "py-unigram"
    assert model.perplexity([0, 1, 2]) == pytest.approx(4.0)
    assert scorer.calls == 1
    # Embeddings are normalized at the boundary.
    emb = model.sentence_embedding([0, 0, 0, 1])
    assert sum(x * x for x in emb) == pytest.approx(1.0)
    assert emb[0] == pytest.approx(3 / math.sqrt(10))
    with pytest.raises(trigsense.InvalidInput):
        model.perplexity([7])
    with pytest.raises(trigsense.CapabilityMissing):
        model.next_token_distribution([0])


def test_python_exceptions_propagate():
    class Broken(UnigramScorer):
        def perplexity(self, ids):
            raise ValueError("boom")

    with pytest.raises(ValueError, match="boom"):
        trigsense.wrap_model(Broken(4)).perplexity([0])


def test_onion_flags_the_unlikely_token():
    scorer = trigsense.wrap_model(UnigramScorer(6, {0: 50, 2: 50, 3: 50, 4: 50}))
    res = trigsense.onion_scores(scorer, [0, 2, 3, 5, 4, 0])
    assert res["flagged"] == [3]
    assert trigsense.onion_scores(scorer, [0, 2, 3, 4], math.inf)["flagged"] == []


def test_ground_truth_sensitivity_in_unit_interval():
    m = trigsense.wrap_model(UnigramScorer(6, {0: 50, 2: 50, 3: 50, 4: 50}))
    s = trigsense.ground_truth_sensitivity(m, m, [0, 2, 5, 4], alpha=0.6)
    assert len(s) == 4
    assert all(0.0 <= x <= 1.0 for x in s)
    # Token 5 is as unlikely as the mask, so masking it leaves the
    # perplexity unchanged; the frequent tokens tie.
    assert s[2] == min(s)
    assert s[0] == pytest.approx(s[1]) and s[1] == pytest.approx(s[3])
    assert s[0] > s[2]


def test_run_all_writes_artifacts(corpus, tmp_path):
    run = trigsense.Run(small_config(corpus, seed=0), tmp_path / "run")
    with pytest.warns(RuntimeWarning, match="fewer than K_t"):
        triggers = run.run_all()
    assert triggers
    rewards = [p["reward"] for p in triggers]
    assert rewards == sorted(rewards, reverse=True)
    ev = trigsense.read_artifact(run.artifact("eval.json"), "eval")
    assert ev["schema"] == "trigsense.eval"
    assert ev["config_hash"] == run.config_hash
    assert 0.0 <= ev["asr_percent"] <= 100.0
    labels = trigsense.read_records(run.artifact("labels.jsonl"), "labels")
    assert len(labels) == 60
    markdown, files = trigsense.report([run.run_dir], tmp_path / "report")
    assert "asr" in markdown.lower()
    assert files


def test_missing_prerequisite_is_data_error(corpus, tmp_path):
    run = trigsense.Run(small_config(corpus), tmp_path / "empty")
    with pytest.raises(trigsense.DataError, match="phase"):
        run.poison()


def test_registered_backend_serves_as_scorer(corpus, tmp_path):
    created = []

    def factory(options):
        vocab = pathlib.Path(options["vocab_path"]).read_text().splitlines()
        scorer = UnigramScorer(len(vocab))
        created.append((options["role"], options.get("external.flavor"), scorer))
        return scorer

    bid = trigsense.register_backend("pyscorer", factory)
    try:
        assert bid in trigsense.backend_ids()
        cfg = small_config(corpus, scorer_backend=bid, **{"external.flavor": "plain"})
        run = trigsense.Run(cfg, tmp_path / "ext")
        run.label()
        assert [c[:2] for c in created] == [("scorer", "plain")]
        assert created[0][2].calls > 0
    finally:
        assert trigsense.unregister_backend("pyscorer")
    with pytest.raises(trigsense.CapabilityMissing):
        trigsense.Run(small_config(corpus, scorer_backend=bid), tmp_path / "gone").label()
