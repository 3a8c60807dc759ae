"""Random forest for healthy vs pathological decisions, written from scratch.

Trees are grown on bootstrap samples with ``sqrt(p)`` random candidate
features per node and midpoint thresholds. Every random draw comes from a
generator keyed by ``(seed, tree_index)``, and bootstrap indices address rows
in a canonical order, so a forest depends only on the data and the seed.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import FormatError, ProtocolError, ShapeError, TrainingError
from .textio import format_table, write_csv

HEALTHY, PATHOLOGICAL = 0, 1
LABEL_NAMES = ("healthy", "pathological")
FORMAT_TAG = "voxanon-forest"
FORMAT_VERSION = 1


def encode_labels(labels) -> np.ndarray:
    """Map 0/1, booleans or healthy/pathological strings to 0/1 ints."""
    out = []
    for v in labels:
        if isinstance(v, str):
            if v not in LABEL_NAMES:
                raise ValueError(f"unknown label {v!r}")
            out.append(LABEL_NAMES.index(v))
        else:
            if int(v) not in (0, 1):
                raise ValueError(f"labels must be 0/1, got {v!r}")
            out.append(int(v))
    return np.array(out, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Dataset:
    rows: np.ndarray
    labels: np.ndarray
    feature_names: tuple = ()
    ids: tuple | None = None

    def __post_init__(self):
        X = np.asarray(self.rows, dtype=np.float64)
        if X.ndim != 2:
            raise ShapeError(f"rows must be 2-D, got shape {X.shape}")
        y = encode_labels(self.labels)
        if len(y) != X.shape[0]:
            raise ShapeError(f"{X.shape[0]} rows but {len(y)} labels")
        if not np.all(np.isfinite(X)):
            raise ValueError("dataset contains non-finite values")
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ShapeError(f"{len(names)} feature names for {X.shape[1]} columns")
        if self.ids is not None and len(self.ids) != len(y):
            raise ShapeError("ids and rows differ in length")
        object.__setattr__(self, "rows", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)
        if self.ids is not None:
            object.__setattr__(self, "ids", tuple(map(str, self.ids)))

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.rows.shape[1]

    def canonical_order(self) -> np.ndarray:
        """Row order independent of how the rows were supplied."""
        if self.ids is not None and len(set(self.ids)) == len(self.ids):
            return np.array(sorted(range(len(self)), key=lambda i: self.ids[i]), dtype=np.int64)
        keys = [self.labels] + [self.rows[:, j] for j in range(self.n_features)]
        return np.lexsort(keys[::-1])


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 20
    criterion: str = "entropy"
    features_per_split: str | int = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1:
            raise ValueError("n_trees and max_depth must be >= 1")
        if self.criterion not in ("entropy", "gini"):
            raise ValueError(f"criterion must be entropy or gini, got {self.criterion!r}")
        fps = self.features_per_split
        if not (fps in ("sqrt", "log2", "all") or (isinstance(fps, int) and fps >= 1)):
            raise ValueError(f"bad features_per_split {fps!r}")

    def n_candidates(self, p: int) -> int:
        fps = self.features_per_split
        if fps == "sqrt":
            k = int(math.sqrt(p))
        elif fps == "log2":
            k = int(math.log2(p)) if p > 1 else 1
        elif fps == "all":
            k = p
        else:
            k = fps
        return max(1, min(p, k))


# --------------------------------------------------------------- impurity


def _impurity(counts: np.ndarray, criterion: str) -> np.ndarray:
    """Node impurity from class counts along the last axis (bits for entropy)."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum(axis=-1, keepdims=True)
    p = np.divide(counts, n, out=np.zeros_like(counts), where=n > 0)
    if criterion == "gini":
        return 1.0 - np.sum(p * p, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


def best_split_on_feature(x: np.ndarray, y: np.ndarray, criterion: str) -> tuple:
    """Best ``(gain, threshold)`` for one feature; gain 0 when no split exists.

    Thresholds are midpoints between consecutive distinct sorted values; the
    lowest threshold wins ties.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    distinct = np.flatnonzero(xs[1:] > xs[:-1])  # split after position i
    if len(distinct) == 0:
        return 0.0, None
    left1 = np.cumsum(ys)[distinct]
    n_left = distinct + 1.0
    left = np.column_stack([n_left - left1, left1])
    total = np.array([n - ys.sum(), ys.sum()], dtype=np.float64)
    right = total - left
    parent = _impurity(total, criterion)
    child = (n_left * _impurity(left, criterion) + (n - n_left) * _impurity(right, criterion)) / n
    gains = parent - child
    k = int(np.argmax(gains))
    i = distinct[k]
    return float(gains[k]), float((xs[i] + xs[i + 1]) / 2.0)


# ------------------------------------------------------------------- trees


@dataclass
class Tree:
    """Flat node arrays; a leaf has ``feature == -1``."""

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    gain: list = field(default_factory=list)

    def add(self, feature=-1, threshold=0.0, counts=(0, 0), gain=0.0) -> int:
        self.feature.append(int(feature))
        self.threshold.append(float(threshold))
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append((int(counts[0]), int(counts[1])))
        self.gain.append(float(gain))
        return len(self.feature) - 1

    def __len__(self):
        return len(self.feature)

    def depth(self) -> int:
        best, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return best

    def leaf_counts(self, X: np.ndarray) -> np.ndarray:
        """Class counts of the leaf reached by every row of ``X``."""
        feature = np.array(self.feature)
        threshold = np.array(self.threshold)
        left, right = np.array(self.left), np.array(self.right)
        node = np.zeros(len(X), dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            f = feature[node[idx]]
            go_left = X[idx, f] <= threshold[node[idx]]
            node[idx] = np.where(go_left, left[node[idx]], right[node[idx]])
            active = feature[node] >= 0
        return np.array(self.counts)[node]

    def votes(self, X: np.ndarray) -> np.ndarray:
        c = self.leaf_counts(X)
        return (c[:, 1] > c[:, 0]).astype(np.int64)


def grow_tree(X: np.ndarray, y: np.ndarray, cfg: ForestConfig, rng: np.random.Generator) -> Tree:
    tree = Tree()
    k = cfg.n_candidates(X.shape[1])
    root = tree.add(counts=np.bincount(y, minlength=2))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yn = y[idx]
        if depth >= cfg.max_depth or len(idx) < 2 or yn.min() == yn.max():
            continue
        candidates = np.sort(rng.choice(X.shape[1], size=k, replace=False))
        best_gain, best_f, best_t = 0.0, -1, 0.0
        for f in candidates:
            gain, thr = best_split_on_feature(X[idx, f], yn, cfg.criterion)
            if thr is not None and gain > best_gain + 1e-12:
                best_gain, best_f, best_t = gain, int(f), thr
        if best_f < 0:
            continue
        go_left = X[idx, best_f] <= best_t
        li, ri = idx[go_left], idx[~go_left]
        tree.feature[node], tree.threshold[node], tree.gain[node] = best_f, best_t, best_gain
        tree.left[node] = tree.add(counts=np.bincount(y[li], minlength=2))
        tree.right[node] = tree.add(counts=np.bincount(y[ri], minlength=2))
        # right first so the left subtree is numbered first
        stack.append((tree.right[node], ri, depth + 1))
        stack.append((tree.left[node], li, depth + 1))
    return tree


@dataclass
class Forest:
    trees: list
    config: ForestConfig
    n_features: int
    feature_names: tuple = ()

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return np.mean([t.votes(X) for t in self.trees], axis=0)

    def predict_labels(self, X) -> np.ndarray:
        """Pathological when more than half of the trees say so."""
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def to_text(self) -> str:
        cfg = self.config
        lines = [f"{FORMAT_TAG} {FORMAT_VERSION}",
                 " ".join(["config"] + [f"{f.name}={getattr(cfg, f.name)}" for f in fields(cfg)]),
                 f"n_features {self.n_features}",
                 "feature_names " + "\t".join(self.feature_names)]
        for i, t in enumerate(self.trees):
            lines.append(f"tree {i} {len(t)}")
            for j in range(len(t)):
                lines.append(f"{j} {t.feature[j]} {t.threshold[j]!r} {t.left[j]} {t.right[j]} "
                             f"{t.counts[j][0]} {t.counts[j][1]} {t.gain[j]!r}")
        lines.append("end")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str) -> "Forest":
        lines = text.splitlines()
        try:
            tag, version = lines[0].split()
            if tag != FORMAT_TAG or int(version) != FORMAT_VERSION:
                raise FormatError(f"not a version-{FORMAT_VERSION} forest file")
            raw = dict(kv.split("=", 1) for kv in lines[1].split()[1:])
            fps = raw["features_per_split"]
            cfg = ForestConfig(int(raw["n_trees"]), int(raw["max_depth"]), raw["criterion"],
                               int(fps) if fps.isdigit() else fps, raw["bootstrap"] == "True",
                               int(raw["seed"]))
            n_features = int(lines[2].split()[1])
            names = tuple(lines[3].split(" ", 1)[1].split("\t")) if " " in lines[3] else ()
            trees, pos = [], 4
            while lines[pos] != "end":
                _, _, n_nodes = lines[pos].split()
                t = Tree()
                for line in lines[pos + 1:pos + 1 + int(n_nodes)]:
                    _, f, thr, lft, rgt, c0, c1, gain = line.split()
                    t.add(int(f), float(thr), (int(c0), int(c1)), float(gain))
                    t.left[-1], t.right[-1] = int(lft), int(rgt)
                trees.append(t)
                pos += 1 + int(n_nodes)
        except (IndexError, ValueError, KeyError) as exc:
            raise FormatError(f"malformed forest file: {exc}") from exc
        return cls(trees, cfg, n_features, names)

    @classmethod
    def load(cls, path) -> "Forest":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _train_one(X, y, cfg: ForestConfig, index: int) -> Tree:
    rng = np.random.default_rng([cfg.seed, index])
    if cfg.bootstrap:
        sample = rng.integers(0, len(y), size=len(y))
    else:
        sample = np.arange(len(y))
    return grow_tree(X[sample], y[sample], cfg, rng)


def train_forest(d: Dataset, cfg: ForestConfig = ForestConfig(), workers: int = 1) -> Forest:
    """Grow ``cfg.n_trees`` trees; the result depends only on the data set and ``cfg.seed``."""
    if len(np.unique(d.labels)) < 2:
        raise TrainingError("training data must contain both healthy and pathological rows")
    order = d.canonical_order()
    X, y = d.rows[order], d.labels[order]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            trees = list(pool.map(lambda i: _train_one(X, y, cfg, i), range(cfg.n_trees)))
    else:
        trees = [_train_one(X, y, cfg, i) for i in range(cfg.n_trees)]
    return Forest(trees, cfg, d.n_features, d.feature_names)


def predict(f: Forest, x) -> tuple:
    """``(label, probability)`` for one feature vector; label is 0/1 (1 = pathological)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("predict takes a single feature vector")
    p = float(f.predict_proba(x)[0])
    return int(p > 0.5), p


# ----------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Metrics:
    """Fractions in [0, 1]; ``percent()`` gives report values."""

    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def percent(self) -> dict:
        return {k: 100.0 * getattr(self, k) for k in ("accuracy", "precision", "recall", "f1")}


def harmonic_mean(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def metrics_from_predictions(y_true, y_pred) -> Metrics:
    y_true = encode_labels(y_true)
    y_pred = encode_labels(y_pred)
    if len(y_true) == 0:
        raise ProtocolError("cannot score an empty test set")
    tp = int(np.sum((y_pred == 1) & (y_true == 1)))
    fp = int(np.sum((y_pred == 1) & (y_true == 0)))
    tn = int(np.sum((y_pred == 0) & (y_true == 0)))
    fn = int(np.sum((y_pred == 0) & (y_true == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return Metrics((tp + tn) / len(y_true), precision, recall, harmonic_mean(precision, recall),
                   tp, fp, tn, fn)


def evaluate(f: Forest, test: Dataset) -> Metrics:
    if len(test) == 0:
        raise ProtocolError("cannot evaluate on an empty test set")
    return metrics_from_predictions(test.labels, f.predict_labels(test.rows))


def average_metrics(ms) -> Metrics:
    """Mean accuracy, precision and recall; F1 recomputed from the averaged P and R."""
    ms = list(ms)
    p = float(np.mean([m.precision for m in ms]))
    r = float(np.mean([m.recall for m in ms]))
    return Metrics(float(np.mean([m.accuracy for m in ms])), p, r, harmonic_mean(p, r))


# ------------------------------------------------------------------- grid


@dataclass
class ConditionReport:
    cells: dict  # (condition, family) -> Metrics
    averages: dict  # condition -> Metrics

    def conditions(self) -> list:
        return list(dict.fromkeys(c for c, _ in self.cells))

    def families(self) -> list:
        return list(dict.fromkeys(f for _, f in self.cells))

    def accuracy_table(self) -> str:
        fams = self.families()
        rows = [[c] + [f"{100 * self.cells[(c, f)].accuracy:.1f}" if (c, f) in self.cells else "-"
                       for f in fams] for c in self.conditions()]
        return format_table(["condition"] + fams, rows)

    def average_table(self) -> str:
        rows = []
        for c, m in self.averages.items():
            pc = m.percent()
            rows.append([c, f"{pc['accuracy']:.1f}", f"{pc['precision']:.1f}",
                         f"{pc['recall']:.1f}", f"{pc['f1']:.1f}"])
        return format_table(["condition", "accuracy", "precision", "recall", "f1"], rows)

    def write_csv(self, path) -> None:
        rows = [[c, f, m.accuracy, m.precision, m.recall, m.f1] for (c, f), m in self.cells.items()]
        rows += [[c, "average", m.accuracy, m.precision, m.recall, m.f1]
                 for c, m in self.averages.items()]
        write_csv(path, ["condition", "family", "accuracy", "precision", "recall", "f1"], rows)


def condition_matrix(train_sets: dict, test_sets: dict, cfg: ForestConfig = ForestConfig(),
                     workers: int = 1) -> ConditionReport:
    """Train and test per (condition, family) cell on matching data.

    Both arguments map ``condition -> {family: Dataset}``; a bare Dataset is
    treated as a single family named ``features``.
    """
    if set(train_sets) != set(test_sets):
        raise ProtocolError("train and test conditions differ: "
                            f"{sorted(set(train_sets) ^ set(test_sets))}")
    cells, averages = {}, {}
    for cond in train_sets:
        tr = train_sets[cond]
        te = test_sets[cond]
        tr = tr if isinstance(tr, dict) else {"features": tr}
        te = te if isinstance(te, dict) else {"features": te}
        if set(tr) != set(te):
            raise ProtocolError(f"{cond}: train and test families differ")
        for fam in tr:
            cells[(cond, fam)] = evaluate(train_forest(tr[fam], cfg, workers), te[fam])
        averages[cond] = average_metrics(cells[(cond, fam)] for fam in tr)
    return ConditionReport(cells, averages)
