"""Random forest over trace feature vectors, written from scratch.

Trees split on Gini impurity with thresholds at midpoints between adjacent
sorted feature values, so splits depend only on feature ranks. Label 1 is
crack (the positive class), 0 is no_crack.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (DimensionMismatchError, InsufficientDataError, InvalidInputError,
                     ModelFormatError)
from .tactile import LABELS

MODEL_VERSION = 1
CRACK, NO_CRACK = 1, 0


def encode_labels(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if isinstance(lab, str):
            if lab not in LABELS:
                raise InvalidInputError(f"unknown label {lab!r}")
            out.append(LABELS.index(lab))
        else:
            out.append(int(bool(lab)))
    return np.asarray(out, dtype=np.int64)


@dataclass
class Dataset:
    X: np.ndarray  # (n, d)
    y: np.ndarray  # (n,) 0/1
    ids: list[str]
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = encode_labels(self.y) if len(self.y) and isinstance(self.y[0], str) else \
            np.asarray(self.y, dtype=np.int64)
        self.ids = [str(i) for i in self.ids]
        if not (len(self.X) == len(self.y) == len(self.ids)):
            raise InvalidInputError("vectors, labels and ids differ in length")
        if self.names and len(self.names) != self.X.shape[1]:
            raise InvalidInputError("feature names do not match dimensionality")

    @classmethod
    def from_vectors(cls, vectors, labels, ids=None) -> "Dataset":
        vectors = list(vectors)
        dims = {len(v.values) for v in vectors}
        if len(dims) > 1:
            raise DimensionMismatchError(f"inconsistent feature dimensionality {sorted(dims)}")
        X = np.array([v.values for v in vectors]) if vectors else np.zeros((0, 0))
        names = list(vectors[0].names) if vectors else []
        ids = ids if ids is not None else [str(i) for i in range(len(vectors))]
        return cls(X, encode_labels(labels), ids, names)

    def __len__(self):
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], [self.ids[i] for i in idx], list(self.names))

    def select(self, names) -> "Dataset":
        cols = [self.names.index(n) for n in names]
        return Dataset(self.X[:, cols], self.y, list(self.ids), list(names))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "label"] + list(self.names))
            for i, row in enumerate(self.X):
                w.writerow([self.ids[i], LABELS[self.y[i]]] + [f"{v:.12g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:2] != ["id", "label"]:
            raise InvalidInputError(f"{path}: expected header starting with id,label")
        names = rows[0][2:]
        body = rows[1:]
        try:
            X = np.array([[float(v) for v in r[2:]] for r in body]).reshape(len(body), len(names))
        except ValueError as exc:
            raise InvalidInputError(f"{path}: malformed feature row ({exc})") from None
        return cls(X, encode_labels([r[1] for r in body]), [r[0] for r in body], names)


def split(ds: Dataset, seed: int = 0, fractions=(0.6, 0.2, 0.2)) -> dict:
    """Stratified train/val/test partition, deterministic per seed."""
    rng = np.random.default_rng(seed)
    parts = {"train": [], "val": [], "test": []}
    for cls in (NO_CRACK, CRACK):
        idx = np.flatnonzero(ds.y == cls)
        if len(idx) < 5:
            raise InsufficientDataError(f"class {LABELS[cls]} has {len(idx)} samples, need >= 5")
        idx = rng.permutation(idx)
        n_train = int(round(fractions[0] * len(idx)))
        n_val = int(round(fractions[1] * len(idx)))
        parts["train"] += idx[:n_train].tolist()
        parts["val"] += idx[n_train:n_train + n_val].tolist()
        parts["test"] += idx[n_train + n_val:].tolist()
    return {k: ds.subset(sorted(v)) for k, v in parts.items()}


# ------------------------------------------------------------------ trees

def best_split(x: np.ndarray, y: np.ndarray):
    """Lowest weighted Gini split of one feature.

    Returns (impurity, threshold) or None if the feature is constant. Ties
    keep the smallest threshold.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    valid = np.flatnonzero(xs[1:] > xs[:-1])
    if valid.size == 0:
        return None
    n = len(ys)
    left_n = valid + 1
    left_pos = np.cumsum(ys)[valid]
    total_pos = ys.sum()
    right_n = n - left_n
    right_pos = total_pos - left_pos
    pl = left_pos / left_n
    pr = right_pos / right_n
    imp = (left_n * 2 * pl * (1 - pl) + right_n * 2 * pr * (1 - pr)) / n
    k = int(np.argmin(imp))
    i = valid[k]
    thr = 0.5 * (xs[i] + xs[i + 1])
    if thr >= xs[i + 1]:  # adjacent floats: the midpoint rounds up
        thr = xs[i]
    return float(imp[k]), float(thr)


def grow_tree(X: np.ndarray, y: np.ndarray, max_features: int, rng: np.random.Generator) -> list:
    """Grow one unpruned tree as a flat node list.

    Internal nodes are ``{feature, threshold, left, right}`` (x <= threshold
    goes left), leaves are ``{counts: [no_crack, crack]}``.
    """
    nodes: list = []
    d = X.shape[1]

    def build(idx):
        ny = y[idx]
        pos = int(ny.sum())
        node_id = len(nodes)
        nodes.append(None)
        if len(idx) < 2 or pos == 0 or pos == len(idx):
            nodes[node_id] = {"counts": [len(idx) - pos, pos]}
            return node_id
        perm = rng.permutation(d)
        best = None
        # draw max_features candidates; keep drawing if none of them can split
        for j, f in enumerate(perm):
            if j >= max_features and best is not None:
                break
            res = best_split(X[idx, f], ny)
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], int(f), res[1])
        if best is None:
            nodes[node_id] = {"counts": [len(idx) - pos, pos]}
            return node_id
        _, f, thr = best
        go_left = X[idx, f] <= thr
        left = build(idx[go_left])
        right = build(idx[~go_left])
        nodes[node_id] = {"feature": f, "threshold": thr, "left": left, "right": right}
        return node_id

    build(np.arange(len(y)))
    return nodes


def tree_vote(nodes: list, x: np.ndarray) -> int:
    i = 0
    while "counts" not in nodes[i]:
        n = nodes[i]
        i = n["left"] if x[n["feature"]] <= n["threshold"] else n["right"]
    c0, c1 = nodes[i]["counts"]
    return CRACK if c1 >= c0 else NO_CRACK


@dataclass
class ForestModel:
    trees: list
    dim: int
    n_trees: int
    config: dict = field(default_factory=dict)
    feature_names: list = field(default_factory=list)
    version: int = MODEL_VERSION

    def votes(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise DimensionMismatchError(f"model expects {self.dim} features, got {X.shape[1]}")
        return np.array([[tree_vote(t, x) for t in self.trees] for x in X])

    def predict_proba(self, X) -> np.ndarray:
        return self.votes(X).mean(axis=1)

    def predict(self, X) -> np.ndarray:
        # ties go to crack
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def to_dict(self) -> dict:
        return {"version": self.version, "n_trees": self.n_trees, "dim": self.dim,
                "config": self.config, "feature_names": self.feature_names,
                "trees": [{"nodes": t} for t in self.trees]}

    def validate(self) -> None:
        if len(self.trees) != self.n_trees:
            raise ModelFormatError(f"model declares {self.n_trees} trees but holds {len(self.trees)}")
        for ti, nodes in enumerate(self.trees):
            if not nodes:
                raise ModelFormatError(f"tree {ti} is empty")
            for ni, n in enumerate(nodes):
                where = f"tree {ti} node {ni}"
                if not isinstance(n, dict):
                    raise ModelFormatError(f"{where}: not an object")
                if "counts" in n:
                    c = n["counts"]
                    if (not isinstance(c, list) or len(c) != 2
                            or any(not isinstance(v, int) or v < 0 for v in c)):
                        raise ModelFormatError(f"{where}: leaf counts must be two non-negative ints")
                    continue
                try:
                    f, thr, lft, rgt = n["feature"], n["threshold"], n["left"], n["right"]
                except KeyError as exc:
                    raise ModelFormatError(f"{where}: missing key {exc}") from None
                if not isinstance(f, int) or not 0 <= f < self.dim:
                    raise ModelFormatError(f"{where}: feature index {f!r} outside 0..{self.dim - 1}")
                if not isinstance(thr, (int, float)) or not math.isfinite(thr):
                    raise ModelFormatError(f"{where}: bad threshold {thr!r}")
                for child in (lft, rgt):
                    if not isinstance(child, int) or not ni < child < len(nodes):
                        raise ModelFormatError(f"{where}: bad child index {child!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "ForestModel":
        if not isinstance(doc, dict):
            raise ModelFormatError("model file is not a JSON object")
        if doc.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"unsupported model version {doc.get('version')!r}, "
                                   f"expected {MODEL_VERSION}")
        try:
            trees = [t["nodes"] for t in doc["trees"]]
            m = cls(trees, int(doc["dim"]), int(doc["n_trees"]), doc.get("config", {}),
                    list(doc.get("feature_names", [])))
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"malformed model: {exc}") from None
        m.validate()
        return m


def train(ds: Dataset, n_trees: int = 100, seed: int = 0, bootstrap: bool = True,
          max_features: int | None = None) -> ForestModel:
    if len(ds) == 0:
        raise InsufficientDataError("empty training set")
    if len(np.unique(ds.y)) < 2:
        raise InsufficientDataError("training set holds a single class")
    if n_trees < 1:
        raise InvalidInputError("n_trees must be >= 1")
    d = ds.dim
    mf = max_features or int(math.ceil(math.sqrt(d)))
    mf = min(max(mf, 1), d)
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        n = len(ds)
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        trees.append(grow_tree(ds.X[idx], ds.y[idx], mf, rng))
    cfg = {"n_trees": n_trees, "seed": seed, "bootstrap": bootstrap, "max_features": mf}
    return ForestModel(trees, d, n_trees, cfg, list(ds.names))


def predict(m: ForestModel, v) -> tuple[str, float]:
    """(label, crack probability) for one vector or FeatureVector."""
    x = np.asarray(getattr(v, "values", v), dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatchError("predict takes a single feature vector")
    p = float(m.predict_proba(x[None, :])[0])
    return LABELS[CRACK if p >= 0.5 else NO_CRACK], p


def save_model(m: ForestModel, path) -> None:
    Path(path).write_text(json.dumps(m.to_dict(), separators=(",", ":")))


def load_model(path) -> ForestModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc.msg})") from None
    return ForestModel.from_dict(doc)


# ------------------------------------------------------------------ metrics

METRIC_KEYS = ("accuracy", "precision", "recall", "f1")


def run_metrics(y_true, y_pred) -> dict:
    """Percent metrics with crack as positive; undefined ratios count as 0."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if len(y_true) == 0:
        raise InvalidInputError("empty test set")
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    acc = (tp + tn) / len(y_true)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return {"accuracy": 100 * acc, "precision": 100 * prec, "recall": 100 * rec,
            "f1": 100 * f1, "tp": tp, "tn": tn, "fp": fp, "fn": fn}


@dataclass
class Metrics:
    runs: list[dict]
    single_class: bool = False
    label: str = ""

    def mean(self, key: str) -> float:
        return float(np.mean([r[key] for r in self.runs]))

    def std(self, key: str) -> float:
        return float(np.std([r[key] for r in self.runs]))

    @property
    def keys(self) -> tuple:
        return ("accuracy",) if self.single_class else METRIC_KEYS

    def summary(self) -> dict:
        return {k: {"mean": round(self.mean(k), 6), "std": round(self.std(k), 6)} for k in self.keys}

    def to_dict(self) -> dict:
        return {"label": self.label, "n_runs": len(self.runs), "single_class": self.single_class,
                "summary": self.summary(),
                "runs": [{k: (round(v, 6) if isinstance(v, float) else v) for k, v in r.items()}
                         for r in self.runs]}


def evaluate_model(m: ForestModel, test: Dataset, label: str = "") -> Metrics:
    if len(test) == 0:
        raise InvalidInputError("empty test set")
    run = run_metrics(test.y, m.predict(test.X))
    return Metrics([run], len(np.unique(test.y)) < 2, label)


def evaluate(ds: Dataset, runs: int = 10, seed: int = 0, n_trees: int = 100,
             label: str = "", **train_kw) -> Metrics:
    """Re-split and retrain ``runs`` times with seeds seed, seed+1, ..."""
    out = []
    for r in range(runs):
        parts = split(ds, seed + r)
        m = train(parts["train"], n_trees, seed + r, **train_kw)
        out.append(dict(run_metrics(parts["test"].y, m.predict(parts["test"].X)), seed=seed + r))
    return Metrics(out, False, label)


def ablate(ds: Dataset, selections, runs: int = 10, seed: int = 0, n_trees: int = 100) -> list[Metrics]:
    """One evaluate() per channel selection, over the columns belonging to it."""
    from .dsp import feature_names, parse_selection
    selections = list(selections)
    if not selections:
        raise InvalidInputError("no channel selections given")
    results = []
    for sel in selections:
        canon = parse_selection(sel)
        sub = ds.select(feature_names(canon))
        results.append(evaluate(sub, runs, seed, n_trees, label=format_selection(canon)))
    return results


def format_selection(sel) -> str:
    d = [c[1:] for c in sel if c.startswith("D")]
    parts = ["D" + ",".join(d)] if d else []
    if "P" in sel:
        parts.append("P")
    return " + ".join(parts)


def metrics_table(rows: list[Metrics]) -> str:
    """Plain-text table with one row per selection and mean +/- std columns."""
    header = f"{'Sensors':<14}" + "".join(f"{k.capitalize():>18}" for k in METRIC_KEYS)
    lines = [header, "-" * len(header)]
    for m in rows:
        cells = []
        for k in METRIC_KEYS:
            cells.append(f"{m.mean(k):8.2f} +/- {m.std(k):5.2f}" if k in m.keys else f"{'-':>18}")
        lines.append(f"{m.label:<14}" + "".join(f"{c:>18}" for c in cells))
    return "\n".join(lines)


TABLE_SELECTIONS = ("P", "D1,D2,D3", "D1,D2,P", "D1,D3,P", "D2,D3,P", "D1,D2,D3,P")
