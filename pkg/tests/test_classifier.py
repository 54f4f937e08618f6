import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crackprobe import classifier
from crackprobe.classifier import Dataset
from crackprobe.errors import DimensionMismatchError, InsufficientDataError, ModelFormatError

# 20 hand-checkable samples: an XOR of two thresholds with one flipped label
TOY_X = [[8, 6], [5, 2], [3, 0], [0, 0], [1, 8], [6, 9], [5, 6], [9, 7], [6, 5], [5, 9],
         [2, 8], [6, 0], [3, 8], [5, 0], [7, 7], [8, 1], [0, 8], [0, 5], [0, 2], [4, 4]]
TOY_Y = [1, 1, 0, 0, 1, 0, 1, 0, 0, 0, 1, 1, 1, 1, 0, 1, 1, 0, 0, 0]


def gini(labels):
    if not labels:
        return 0.0
    p = sum(labels) / len(labels)
    return 2 * p * (1 - p)


def oracle_tree(rows, labels):
    """Plain CART over every feature and midpoint; preorder list of splits and leaves.

    Also returns whether two different features ever tied for the best split,
    in which case the comparison would depend on candidate order.
    """
    out, ties = [], []

    def build(idx):
        ys = [labels[i] for i in idx]
        if len(idx) < 2 or sum(ys) in (0, len(ys)):
            out.append(("leaf", len(ys) - sum(ys), sum(ys)))
            return
        cands = []
        for f in range(len(rows[0])):
            vals = sorted({rows[i][f] for i in idx})
            for a, b in zip(vals, vals[1:]):
                t = (a + b) / 2
                left = [labels[i] for i in idx if rows[i][f] <= t]
                right = [labels[i] for i in idx if rows[i][f] > t]
                cands.append(((len(left) * gini(left) + len(right) * gini(right)) / len(idx), f, t))
        best = min(c[0] for c in cands)
        winners = [c for c in cands if abs(c[0] - best) < 1e-12]
        ties.append(len({c[1] for c in winners}) > 1)
        f = winners[0][1]
        t = min(c[2] for c in winners if c[1] == f)
        out.append(("split", f, t))
        build([i for i in idx if rows[i][f] <= t])
        build([i for i in idx if rows[i][f] > t])

    build(list(range(len(rows))))
    return out, any(ties)


def flatten(nodes):
    """Forest nodes are stored in preorder already; map to oracle tuples."""
    return [("leaf", *n["counts"]) if "counts" in n else ("split", n["feature"], n["threshold"])
            for n in nodes]


def blobs(n=40, d=3, gap=3.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = rng.normal(size=(n, d))
    X[:, 0] += gap * y
    return Dataset(X, y, [f"s{i}" for i in range(n)])


class TestSplit:
    def test_sizes_and_balance(self):
        ds = blobs(100)
        parts = classifier.split(ds, 3)
        assert [len(parts[k]) for k in ("train", "val", "test")] == [60, 20, 20]
        for p in parts.values():
            assert p.y.mean() == pytest.approx(0.5)

    def test_disjoint_exhaustive_deterministic(self):
        ds = blobs(78)
        a, b = classifier.split(ds, 5), classifier.split(ds, 5)
        ids = [set(a[k].ids) for k in ("train", "val", "test")]
        assert set().union(*ids) == set(ds.ids)
        assert sum(len(s) for s in ids) == len(ds)
        for k in a:
            assert a[k].ids == b[k].ids
        assert classifier.split(ds, 6)["train"].ids != a["train"].ids

    def test_needs_five_per_class(self):
        ds = Dataset(np.zeros((14, 1)), [0] * 10 + [1] * 4, list(range(14)))
        with pytest.raises(InsufficientDataError):
            classifier.split(ds)


class TestTrain:
    def test_separable_single_feature(self):
        X = np.arange(30.0)[:, None]
        ds = Dataset(X, (X[:, 0] >= 13).astype(int), list(range(30)))
        m = classifier.train(ds, 25, seed=1)
        assert np.array_equal(m.predict(ds.X), ds.y)

    def test_same_seed_same_predictions(self):
        ds = blobs(60, gap=1.0)
        probe = np.random.default_rng(9).normal(size=(200, 3)) * 3
        a = classifier.train(ds, 30, seed=4).predict_proba(probe)
        b = classifier.train(ds, 30, seed=4).predict_proba(probe)
        assert np.array_equal(a, b)

    def test_single_tree_matches_oracle(self):
        want, tied = oracle_tree(TOY_X, TOY_Y)
        assert not tied
        ds = Dataset(np.array(TOY_X, float), TOY_Y, list(range(20)))
        for seed in range(5):
            m = classifier.train(ds, 1, seed=seed, bootstrap=False, max_features=2)
            assert flatten(m.trees[0]) == want
        assert np.array_equal(m.predict(ds.X), TOY_Y)

    def test_structure_invariants(self):
        ds = blobs(80, d=5, gap=0.8)
        m = classifier.train(ds, 12, seed=2)
        assert len(m.trees) == 12 and m.config["max_features"] == 3
        m.validate()
        for nodes in m.trees:
            for n in nodes:
                if "counts" in n:
                    assert min(n["counts"]) >= 0
                else:
                    assert 0 <= n["feature"] < 5

    def test_single_class_rejected(self):
        with pytest.raises(InsufficientDataError):
            classifier.train(Dataset(np.zeros((6, 2)), [1] * 6, list(range(6))))

    @given(st.integers(0, 4), st.floats(1e-3, 1e3), st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_positive_scaling_keeps_labels(self, col, k, seed):
        ds = blobs(50, d=5, gap=1.0, seed=seed)
        scaled = Dataset(ds.X.copy(), ds.y, ds.ids)
        scaled.X[:, col] *= k
        a = classifier.train(ds, 15, seed=seed).predict(ds.X)
        b = classifier.train(scaled, 15, seed=seed).predict(scaled.X)
        assert np.array_equal(a, b)

    def test_forest_fits_training_set_at_least_as_well_as_one_tree(self):
        ds = blobs(80, d=4, gap=0.5, seed=3)
        one = classifier.train(ds, 1, seed=0, bootstrap=False)
        many = classifier.train(ds, 25, seed=0, bootstrap=False)
        acc = [np.mean(m.predict(ds.X) == ds.y) for m in (one, many)]
        assert acc[1] >= acc[0]


class TestPredict:
    def test_vote_fraction_tree_by_tree(self):
        ds = blobs(40, gap=0.7, seed=5)
        m = classifier.train(ds, 5, seed=8)
        probe = np.random.default_rng(1).normal(size=(50, 3))
        for x in probe:
            manual = []
            for nodes in m.trees:
                i = 0
                while "counts" not in nodes[i]:
                    n = nodes[i]
                    i = n["left"] if x[n["feature"]] <= n["threshold"] else n["right"]
                c0, c1 = nodes[i]["counts"]
                manual.append(int(c1 >= c0))
            label, p = classifier.predict(m, x)
            assert p == sum(manual) / 5
            assert label == ("crack" if sum(manual) >= 3 else "no_crack")

    def leaf(self, cls):
        return [{"counts": [0, 3] if cls else [3, 0]}]

    def test_unanimous_crack(self):
        m = classifier.ForestModel([self.leaf(1)] * 4, 2, 4)
        assert classifier.predict(m, [0.0, 0.0]) == ("crack", 1.0)

    def test_tie_goes_to_crack(self):
        m = classifier.ForestModel([self.leaf(1)] * 50 + [self.leaf(0)] * 50, 1, 100)
        assert classifier.predict(m, [0.0]) == ("crack", 0.5)

    def test_dimension_mismatch(self):
        m = classifier.ForestModel([self.leaf(1)], 3, 1)
        with pytest.raises(DimensionMismatchError):
            classifier.predict(m, [1.0, 2.0])


class TestMetrics:
    def test_perfect(self):
        r = classifier.run_metrics([0, 1, 1, 0], [0, 1, 1, 0])
        assert [r[k] for k in classifier.METRIC_KEYS] == [100, 100, 100, 100]

    def test_always_crack(self):
        r = classifier.run_metrics([0, 1] * 10, [1] * 20)
        assert r["precision"] == 50 and r["recall"] == 100
        assert r["f1"] == pytest.approx(200 / 3, abs=0.005)

    def test_undefined_ratios_are_zero(self):
        r = classifier.run_metrics([0, 0, 1], [0, 0, 0])
        assert r["precision"] == 0 and r["recall"] == 0 and r["f1"] == 0

    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=60))
    @settings(max_examples=60, deadline=None)
    def test_f1_is_harmonic_mean(self, pairs):
        t, p = zip(*pairs)
        r = classifier.run_metrics(t, p)
        for k in classifier.METRIC_KEYS:
            assert 0 <= r[k] <= 100
        if r["precision"] + r["recall"] > 0:
            hm = 2 * r["precision"] * r["recall"] / (r["precision"] + r["recall"])
            assert abs(r["f1"] - hm) <= 1e-12 * max(1, hm)

    def test_single_class_uses_accuracy(self):
        m = classifier.ForestModel([[{"counts": [2, 0]}]], 1, 1)
        test = Dataset(np.zeros((8, 1)), [0] * 8, list(range(8)))
        res = classifier.evaluate_model(m, test)
        assert res.single_class and res.keys == ("accuracy",)
        assert res.mean("accuracy") == 100

    def test_evaluate_is_deterministic(self):
        ds = blobs(60, gap=1.5, seed=2)
        a = classifier.evaluate(ds, runs=3, seed=1, n_trees=10)
        b = classifier.evaluate(ds, runs=3, seed=1, n_trees=10)
        assert a.to_dict() == b.to_dict()
        assert len(a.runs) == 3


class TestPersistence:
    def model(self):
        return classifier.train(blobs(60, d=4, gap=1.0, seed=1), 20, seed=3)

    def test_round_trip_on_random_vectors(self, tmp_path):
        m = self.model()
        classifier.save_model(m, tmp_path / "m.json")
        back = classifier.load_model(tmp_path / "m.json")
        probe = np.random.default_rng(0).normal(size=(100, 4)) * 2
        assert np.array_equal(back.votes(probe), m.votes(probe))
        assert back.to_dict() == m.to_dict()

    def write(self, tmp_path, doc):
        p = tmp_path / "m.json"
        p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
        return p

    def test_corrupted_json(self, tmp_path):
        with pytest.raises(ModelFormatError, match="not valid JSON"):
            classifier.load_model(self.write(tmp_path, '{"version": 1, "trees": ['))

    def test_version_mismatch(self, tmp_path):
        doc = self.model().to_dict()
        doc["version"] = 99
        with pytest.raises(ModelFormatError, match="version"):
            classifier.load_model(self.write(tmp_path, doc))

    @pytest.mark.parametrize("damage", ["feature", "child", "counts", "missing", "count"])
    def test_malformed_tree(self, tmp_path, damage):
        doc = self.model().to_dict()
        nodes = doc["trees"][0]["nodes"]
        root = nodes[0]
        leaf = next(n for n in nodes if "counts" in n)
        if damage == "feature":
            root["feature"] = 4
        elif damage == "child":
            root["left"] = 0
        elif damage == "counts":
            leaf["counts"] = [-1, 2]
        elif damage == "missing":
            del root["threshold"]
        else:
            doc["n_trees"] = 21
        with pytest.raises(ModelFormatError):
            classifier.load_model(self.write(tmp_path, doc))


class TestAblation:
    def test_six_rows_and_duplicates(self, synthetic_set):
        _, ds = synthetic_set
        rows = classifier.ablate(ds, list(classifier.TABLE_SELECTIONS) + ["P,D3,D2"], runs=2,
                                 n_trees=15)
        assert len(rows) == 7
        assert [r.label for r in rows[:6]] == ["P", "D1,2,3", "D1,2 + P", "D1,3 + P",
                                              "D2,3 + P", "D1,2,3 + P"]
        assert rows[6].to_dict() == rows[4].to_dict()
        table = classifier.metrics_table(rows[:6])
        assert len(table.splitlines()) == 8

    def test_dataset_csv_round_trip(self, tmp_path, synthetic_set):
        _, ds = synthetic_set
        ds.to_csv(tmp_path / "d.csv")
        back = Dataset.from_csv(tmp_path / "d.csv")
        assert back.names == ds.names and back.ids == ds.ids
        assert np.array_equal(back.y, ds.y)
        assert np.allclose(back.X, ds.X, rtol=1e-11)
        assert math.isclose(len(ds) / 2, np.sum(ds.y))
