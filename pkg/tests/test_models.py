import json
import socket
import socketserver
import sys
import threading

import numpy as np
import pytest

from philaex.data import Dataset, FeatureVector
from philaex.models import (
    DimensionMismatchError,
    ExternalModel,
    LogisticModel,
    ScoringProtocolError,
    load_model,
    save_model,
    train_logistic,
    train_random_forest,
)


def make_dataset(rows, dim):
    samples = [(FeatureVector(entries, dim), label) for entries, label in rows]
    return Dataset(samples, {i: f"f{i}" for i in range(dim)})


def accuracy(model, dataset):
    scores = model.batch_score(dataset.vectors())
    return float(((scores > 0.5) == (dataset.labels() == 1)).mean())


class TestLogistic:
    def test_zero_model_scores_half(self):
        model = LogisticModel(np.zeros(3), 0.0)
        assert model.score(FeatureVector({0: 1.0, 2: 5.0}, 3)) == pytest.approx(0.5)

    def test_separable_toy_reaches_full_accuracy(self):
        rows = [({0: 1.0}, 1) for _ in range(10)] + [({1: 1.0}, 0) for _ in range(10)]
        ds = make_dataset(rows, 2)
        model = train_logistic(ds)
        assert accuracy(model, ds) == 1.0

    def test_huge_l2_shrinks_weights(self):
        rows = [({0: 1.0}, 1) for _ in range(10)] + [({1: 1.0}, 0) for _ in range(10)]
        model = train_logistic(make_dataset(rows, 2), l2=1e6)
        assert float(np.linalg.norm(model.weights)) < 1e-2

    def test_loss_history_non_increasing(self, benchmark_split):
        train, _ = benchmark_split
        model = train_logistic(train)
        hist = np.array(model.loss_history)
        assert (np.diff(hist) <= 1e-12).all()

    def test_benchmark_accuracy(self, benchmark_split, logistic):
        _, test = benchmark_split
        assert accuracy(logistic, test) >= 0.90

    def test_positive_weight_monotonicity(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            w = rng.normal(size=6)
            model = LogisticModel(w, float(rng.normal()))
            fid = int(rng.integers(6))
            if w[fid] <= 0:
                w[fid] = abs(w[fid]) + 0.1
                model = LogisticModel(w, model.bias)
            base_entries = {i: float(v) for i, v in enumerate(rng.random(6)) if v > 0.3}
            lo = FeatureVector({**base_entries, fid: 0.5}, 6)
            hi = FeatureVector({**base_entries, fid: 1.5}, 6)
            assert model.score(hi) >= model.score(lo)

    def test_batch_matches_elementwise_exactly(self, logistic, benchmark_split):
        _, test = benchmark_split
        xs = test.vectors()[:20]
        batch = logistic.batch_score(xs)
        single = np.array([logistic.score(x) for x in xs])
        assert (batch == single).all()

    def test_dimension_mismatch(self):
        model = LogisticModel(np.zeros(3), 0.0)
        with pytest.raises(DimensionMismatchError):
            model.score(FeatureVector({0: 1.0}, 4))


class TestRandomForest:
    def test_single_feature_perfect_split(self):
        rows = [({0: 1.0}, 1) for _ in range(8)] + [({}, 0) for _ in range(8)]
        ds = make_dataset(rows, 1)
        model = train_random_forest(ds, tree_count=1, max_depth=1, seed=0)
        root = model.trees[0]
        assert root["feature"][0] == 0
        assert accuracy(model, ds) == 1.0

    def test_root_splits_on_a_perfect_feature(self):
        # every feature is a copy of the label, so whatever subset the split
        # samples, the root must split and classify perfectly
        rows = [({f: 1.0 for f in range(4)}, 1) for _ in range(8)] + [({}, 0) for _ in range(8)]
        ds = make_dataset(rows, 4)
        model = train_random_forest(ds, tree_count=1, max_depth=1, seed=5)
        assert model.trees[0]["feature"][0] >= 0
        assert accuracy(model, ds) == 1.0

    def test_vote_fraction_granularity(self):
        rng = np.random.default_rng(2)
        rows = [
            ({i: 1.0 for i in np.flatnonzero(rng.random(6) < 0.5)}, int(rng.integers(2)))
            for _ in range(60)
        ]
        ds = make_dataset(rows, 6)
        model = train_random_forest(ds, tree_count=10, max_depth=4, seed=1)
        scores = model.batch_score(ds.vectors())
        assert np.allclose(scores * 10, np.round(scores * 10))

    def test_all_trees_voting_positive_scores_one(self):
        rows = [({0: 1.0}, 1) for _ in range(8)] + [({}, 0) for _ in range(8)]
        ds = make_dataset(rows, 1)
        model = train_random_forest(ds, tree_count=5, max_depth=2, seed=0)
        assert model.score(FeatureVector({0: 1.0}, 1)) == 1.0

    def test_benchmark_accuracy(self, benchmark_split, forest):
        _, test = benchmark_split
        assert accuracy(forest, test) >= 0.95

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(8)
        rows = [
            ({i: 1.0 for i in np.flatnonzero(rng.random(10) < 0.4)}, int(rng.integers(2)))
            for _ in range(80)
        ]
        ds = make_dataset(rows, 10)
        a = train_random_forest(ds, tree_count=8, max_depth=5, seed=77)
        b = train_random_forest(ds, tree_count=8, max_depth=5, seed=77)
        assert (a.batch_score(ds.vectors()) == b.batch_score(ds.vectors())).all()

    def test_batch_matches_elementwise_exactly(self, forest, benchmark_split):
        _, test = benchmark_split
        xs = test.vectors()[:20]
        batch = forest.batch_score(xs)
        single = np.array([forest.score(x) for x in xs])
        assert (batch == single).all()


class TestPersistence:
    def test_logistic_roundtrip(self, tmp_path, benchmark_split, logistic):
        _, test = benchmark_split
        path = tmp_path / "logit.json"
        save_model(logistic, path, vocabulary={0: "a"})
        bundle = load_model(path)
        xs = test.vectors()[:10]
        assert np.allclose(bundle.model.batch_score(xs), logistic.batch_score(xs))
        assert bundle.vocabulary == {0: "a"}

    def test_forest_roundtrip(self, tmp_path, benchmark_split, forest):
        _, test = benchmark_split
        path = tmp_path / "forest.json"
        save_model(forest, path)
        bundle = load_model(path)
        xs = test.vectors()[:10]
        assert (bundle.model.batch_score(xs) == forest.batch_score(xs)).all()


ECHO_CONST = """
import sys, json
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "score": 0.7}), flush=True)
"""

OUT_OF_ORDER = """
import sys, json
buf = []
for line in sys.stdin:
    buf.append(json.loads(line))
    if len(buf) == 2:
        for req in reversed(buf):
            print(json.dumps({"id": req["id"], "score": len(req["x"]) / 10}), flush=True)
        buf = []
"""

GARBAGE = """
import sys, json
lines = ["not json", "[1,2]", '{"id": 0}', '{"id": 0, "score": 1.5}', '{"id": "x", "score": "y"}']
n = 0
for line in sys.stdin:
    print(lines[n % len(lines)], flush=True)
    n += 1
"""


def spawn(script, dim=3):
    return ExternalModel.spawn([sys.executable, "-c", script], dim=dim, timeout=10)


class TestExternalModel:
    def test_constant_scorer(self):
        with spawn(ECHO_CONST) as model:
            assert model.score(FeatureVector({0: 1.0}, 3)) == pytest.approx(0.7)

    def test_out_of_order_responses_matched_by_id(self):
        with spawn(OUT_OF_ORDER) as model:
            xs = [FeatureVector({0: 1.0}, 3), FeatureVector({0: 1.0, 1: 1.0, 2: 1.0}, 3)]
            scores = model.batch_score(xs)
            assert scores.tolist() == pytest.approx([0.1, 0.3])

    def test_malformed_replies_surface_as_typed_errors(self):
        with spawn(GARBAGE) as model:
            for _ in range(5):
                with pytest.raises(ScoringProtocolError):
                    model.score(FeatureVector({0: 1.0}, 3))

    def test_dead_scorer_raises(self):
        model = spawn("import sys; sys.exit(0)")
        with pytest.raises(ScoringProtocolError):
            model.score(FeatureVector({0: 1.0}, 3))
        model.close()

    def test_dimension_checked_before_sending(self):
        with spawn(ECHO_CONST) as model:
            with pytest.raises(DimensionMismatchError):
                model.score(FeatureVector({0: 1.0}, 5))

    def test_tcp_transport(self):
        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                for raw in self.rfile:
                    req = json.loads(raw)
                    reply = {"id": req["id"], "score": 0.25}
                    self.wfile.write((json.dumps(reply) + "\n").encode())
                    self.wfile.flush()

        server = socketserver.ThreadingTCPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            host, port = server.server_address
            with ExternalModel.connect(host, port, dim=2, timeout=10) as model:
                assert model.score(FeatureVector({1: 1.0}, 2)) == pytest.approx(0.25)
        finally:
            server.shutdown()
            server.server_close()
