"""CART decision trees, a bagged random forest and per-class metrics."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .utils import atomic_open, derive_seed

FOREST_MAGIC = b"GANIDSF\x00"
FOREST_VERSION = 1


@dataclass
class TreeConfig:
    max_depth: int | None = None
    min_split: int = 2
    feature_subsample: int | str | None = None  # None: all, "sqrt", or a count
    seed: int = 0

    def n_candidates(self, d: int) -> int:
        if self.feature_subsample is None:
            return d
        if self.feature_subsample == "sqrt":
            return max(1, int(np.sqrt(d)))
        return max(1, min(d, int(self.feature_subsample)))


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None
    min_split: int = 2
    feature_subsample: int | str | None = "sqrt"
    bootstrap: bool = True
    seed: int = 0


@dataclass
class TreeNode:
    """Recursive view: internal nodes carry ``feature``/``threshold``, leaves ``proba``."""

    feature: int = -1
    threshold: float = float("nan")
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    proba: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def depth(self) -> int:
        return 0 if self.is_leaf else 1 + max(self.left.depth, self.right.depth)


@dataclass
class Tree:
    """Flattened tree; ``left[i] == -1`` marks a leaf. Rows go left when
    ``x[feature] <= threshold``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_classes) class probabilities

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def root(self) -> TreeNode:
        def build(i):
            if self.left[i] < 0:
                return TreeNode(proba=self.value[i].copy())
            return TreeNode(int(self.feature[i]), float(self.threshold[i]),
                            build(self.left[i]), build(self.right[i]))
        return build(0)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.left[node] >= 0)
        while len(active):
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.left[node[active]] >= 0]
        return node

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict_codes(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def gini_impurity(counts) -> float:
    counts = np.asarray(counts, float)
    n = counts.sum()
    return 0.0 if n == 0 else float(1.0 - np.sum((counts / n) ** 2))


def best_split(X, y, idx, features, n_classes):
    """Lowest weighted-Gini split of rows ``idx`` over ``features``.

    Returns ``(weighted_impurity, feature, threshold)`` or ``None`` if every
    candidate feature is constant on these rows. Within a feature, ties go
    to the lower threshold; across features, to the wider gap between the
    two values the threshold separates, then to the earlier feature. The gap
    rule keeps the choice independent of column order.
    """
    n = len(idx)
    ys = y[idx]
    eye = np.eye(n_classes)
    total = np.bincount(ys, minlength=n_classes).astype(float)
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    best = None
    for f in features:
        x = X[idx, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        cl = np.cumsum(eye[ys[order]], axis=0)[:-1]
        cr = total - cl
        # n * weighted gini, computed on counts to keep it exact-ish
        score = (nl - (cl * cl).sum(axis=1) / nl) + (nr - (cr * cr).sum(axis=1) / nr)
        score[~valid] = np.inf
        j = int(np.argmin(score))
        gap = float(xs[j + 1] - xs[j])
        if best is None or (score[j], -gap) < (best[0], -best[3]):
            thr = 0.5 * (xs[j] + xs[j + 1])
            if thr >= xs[j + 1]:
                thr = xs[j]
            best = (float(score[j]), int(f), float(thr), gap)
    return None if best is None else (best[0] / n, best[1], best[2])


def fit_tree(X, y, config: TreeConfig | None = None, n_classes: int | None = None) -> Tree:
    """Grow a CART tree on integer class codes ``y``."""
    config = config or TreeConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0 or len(X) != len(y):
        raise DataError("fit_tree needs a non-empty X with one label per row")
    n_classes = int(n_classes or (y.max() + 1))
    d = X.shape[1]
    k = config.n_candidates(d)
    rng = np.random.default_rng(derive_seed(config.seed, "tree"))

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        counts = np.bincount(y[idx], minlength=n_classes).astype(float)
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(counts / counts.sum())
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if (
            len(idx) < config.min_split
            or (config.max_depth is not None and depth >= config.max_depth)
            or np.count_nonzero(value[node]) <= 1
        ):
            continue
        perm = rng.permutation(d) if k < d else np.arange(d)
        split = best_split(X, y, idx, perm[:k], n_classes)
        if split is None and k < d:
            split = best_split(X, y, idx, perm[k:], n_classes)
        if split is None:
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(li), new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return Tree(
        np.asarray(feature, np.int64),
        np.asarray(threshold, np.float64),
        np.asarray(left, np.int64),
        np.asarray(right, np.int64),
        np.vstack(value),
    )


@dataclass
class Forest:
    trees: list
    classes: list
    n_features: int
    config: ForestConfig = field(default_factory=ForestConfig)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def vote_counts(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DataError(f"X has shape {X.shape}, forest expects {self.n_features} features")
        votes = np.zeros((len(X), len(self.classes)), dtype=np.int64)
        rows = np.arange(len(X))
        for t in self.trees:
            np.add.at(votes, (rows, t.predict_codes(X)), 1)
        return votes

    def predict_codes(self, X) -> np.ndarray:
        return np.argmax(self.vote_counts(X), axis=1)  # argmax: ties to lower index


def encode_labels(y, classes=None):
    y = np.asarray(y, dtype=object)
    classes = sorted(set(y.tolist())) if classes is None else list(classes)
    code = {c: i for i, c in enumerate(classes)}
    try:
        return np.fromiter((code[v] for v in y), dtype=np.int64, count=len(y)), classes
    except KeyError as e:
        raise DataError(f"label {e.args[0]!r} not in class order") from None


def fit_forest(X, y, config: ForestConfig | None = None, classes=None) -> Forest:
    """Bagged CART trees; ``y`` holds class names, ordered alphabetically."""
    config = config or ForestConfig()
    X = np.asarray(X, dtype=np.float64)
    codes, classes = encode_labels(y, classes)
    if len(X) == 0 or len(X) != len(codes):
        raise DataError("fit_forest needs a non-empty X with one label per row")
    trees = []
    for i in range(config.n_trees):
        tcfg = TreeConfig(
            config.max_depth, config.min_split, config.feature_subsample,
            derive_seed(config.seed, f"tree:{i}"),
        )
        if config.bootstrap:
            rows = np.random.default_rng(derive_seed(config.seed, f"bootstrap:{i}")).integers(
                0, len(X), len(X)
            )
            trees.append(fit_tree(X[rows], codes[rows], tcfg, len(classes)))
        else:
            trees.append(fit_tree(X, codes, tcfg, len(classes)))
    return Forest(trees, classes, X.shape[1], config)


def fit_single_tree(X, y, config: TreeConfig | None = None, classes=None) -> Forest:
    """A decision tree wrapped as a one-tree forest so both share ``predict``."""
    codes, classes = encode_labels(y, classes)
    t = fit_tree(X, codes, config or TreeConfig(), len(classes))
    return Forest([t], classes, np.asarray(X).shape[1], ForestConfig(n_trees=1, bootstrap=False))


def predict(model, X) -> np.ndarray:
    if isinstance(model, Tree):
        return model.predict_codes(X)
    return np.asarray(model.classes, dtype=object)[model.predict_codes(X)]


# -- metrics --------------------------------------------------------------


@dataclass
class MetricsReport:
    classes: list
    confusion: np.ndarray  # rows: true class, columns: predicted class

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.confusion).astype(float)

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def precision(self) -> np.ndarray:
        pred = self.confusion.sum(axis=0).astype(float)
        return np.divide(self.tp, pred, out=np.zeros_like(pred), where=pred > 0)

    @property
    def recall(self) -> np.ndarray:
        true = self.support.astype(float)
        return np.divide(self.tp, true, out=np.zeros_like(true), where=true > 0)

    @property
    def f1(self) -> np.ndarray:
        p, r = self.precision, self.recall
        s = p + r
        return np.divide(2 * p * r, s, out=np.zeros_like(s), where=s > 0)

    @property
    def accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0

    def row(self, cls) -> dict:
        i = self.classes.index(cls)
        return {
            "precision": float(self.precision[i]),
            "recall": float(self.recall[i]),
            "f1": float(self.f1[i]),
            "support": int(self.support[i]),
        }

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "per_class": {c: self.row(c) for c in self.classes},
        }

    @classmethod
    def from_dict(cls, d) -> "MetricsReport":
        return cls(list(d["classes"]), np.asarray(d["confusion"], dtype=np.int64))

    def to_text(self, title: str = "Class") -> str:
        width = max(len(title), *(len(c) for c in self.classes))
        lines = [f"{title:<{width}}  Precision  Recall  F1-Score  Support"]
        for c in self.classes:
            r = self.row(c)
            lines.append(
                f"{c:<{width}}  {r['precision']:9.2f}  {r['recall']:6.2f}  {r['f1']:8.2f}  {r['support']:7d}"
            )
        lines.append(f"accuracy {self.accuracy:.4f}")
        return "\n".join(lines)


def metrics(pred, truth, class_order=None) -> MetricsReport:
    pred = np.asarray(pred, dtype=object)
    truth = np.asarray(truth, dtype=object)
    if pred.shape != truth.shape:
        raise DataError("pred and truth lengths differ")
    if class_order is None:
        class_order = sorted(set(truth.tolist()) | set(pred.tolist()))
    t_codes, classes = encode_labels(truth, class_order)
    p_codes, _ = encode_labels(pred, class_order)
    C = len(classes)
    conf = np.bincount(t_codes * C + p_codes, minlength=C * C).reshape(C, C)
    return MetricsReport(list(classes), conf)


# -- persistence ----------------------------------------------------------
#
# layout: magic(8) | u32 version | u64 header_len | header JSON
#         | per tree: feature i4[n] | threshold f8[n] | left i4[n] | right i4[n]
#           | value f8[n * n_classes]; all little-endian


def save_forest(forest: Forest, path) -> None:
    header = json.dumps(
        {
            "classes": list(forest.classes),
            "n_features": forest.n_features,
            "n_nodes": [t.n_nodes for t in forest.trees],
        }
    ).encode()
    with atomic_open(path, "wb") as fh:
        fh.write(FOREST_MAGIC)
        fh.write(struct.pack("<IQ", FOREST_VERSION, len(header)))
        fh.write(header)
        for t in forest.trees:
            fh.write(t.feature.astype("<i4").tobytes())
            fh.write(t.threshold.astype("<f8").tobytes())
            fh.write(t.left.astype("<i4").tobytes())
            fh.write(t.right.astype("<i4").tobytes())
            fh.write(t.value.astype("<f8").tobytes())


def load_forest(path) -> Forest:
    buf = Path(path).read_bytes()
    if buf[:8] != FOREST_MAGIC:
        raise DataError(f"{path}: not a forest file")
    version, hlen = struct.unpack_from("<IQ", buf, 8)
    if version != FOREST_VERSION:
        raise DataError(f"{path}: unsupported forest version {version}")
    off = 20
    header = json.loads(buf[off : off + hlen])
    off += hlen
    C = len(header["classes"])
    trees = []
    for n in header["n_nodes"]:
        def take(dtype, count):
            nonlocal off
            arr = np.frombuffer(buf, dtype, count, off)
            off += arr.nbytes
            return arr
        feat = take("<i4", n).astype(np.int64)
        thr = take("<f8", n).astype(np.float64)
        left = take("<i4", n).astype(np.int64)
        right = take("<i4", n).astype(np.int64)
        value = take("<f8", n * C).reshape(n, C).astype(np.float64)
        trees.append(Tree(feat, thr, left, right, value))
    return Forest(trees, header["classes"], header["n_features"])
