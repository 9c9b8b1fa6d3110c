"""Closeness of generated samples to the originals: per-feature cosine
similarity, cumulative-sum curves, and train-on-synthetic/test-on-real
classifier checks."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .forest import ForestConfig, TreeConfig, fit_forest, fit_single_tree, metrics, predict
from .preprocess import split_labels
from .utils import atomic_open, write_json

DEFAULT_FEATURES = (
    "Flow Duration",
    "Total Length of Fwd Packets",
    "Flow Packets/s",
    "Fwd IAT Mean",
    "Bwd IAT Mean",
    "Fwd Packets/s",
    "Packet Length Mean",
    "Init_Win_bytes_backward",
)


def _resample_sorted(col, n):
    col = np.sort(np.asarray(col, float))
    if len(col) == n:
        return col
    return np.interp(np.linspace(0.0, 1.0, n), np.linspace(0.0, 1.0, len(col)), col)


def cosine_feature(orig_col, gen_col) -> float:
    """Cosine of the two columns after sorting, with the longer one linearly
    resampled to the shorter one's length."""
    a = np.asarray(orig_col, float).ravel()
    b = np.asarray(gen_col, float).ravel()
    if len(a) == 0 or len(b) == 0:
        raise DataError("cosine similarity needs non-empty columns")
    n = min(len(a), len(b))
    a, b = _resample_sorted(a, n), _resample_sorted(b, n)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DataError("cosine similarity is undefined for an all-zero column")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cumulative_series(col):
    """``(normalized_index, running_sum)`` of the ascending-sorted column."""
    col = np.sort(np.asarray(col, float).ravel())
    if len(col) == 0:
        raise DataError("cumulative series needs a non-empty column")
    idx = np.linspace(0.0, 1.0, len(col)) if len(col) > 1 else np.zeros(1)
    return idx, np.cumsum(col)


def _row_keys(X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    return {r.tobytes() for r in X}


def ml_validation(generated, original, benign_a, benign_b, target="Botnet", other="Benign",
                  ratio: float = 0.8, seed: int = 0, forest_config: ForestConfig | None = None) -> dict:
    """Train on generated + benign_a, test on a held-out split and on
    original + benign_b. Runs a forest and a single tree; returns
    ``{"forest": {...}, "tree": {...}}`` each with ``synthetic_test`` and
    ``original_test`` reports."""
    if _row_keys(benign_a) & _row_keys(benign_b):
        raise DataError("benign pools overlap; they must be disjoint")
    X1 = np.vstack([generated, benign_a])
    y1 = np.array([target] * len(generated) + [other] * len(benign_a), dtype=object)
    X2 = np.vstack([original, benign_b])
    y2 = np.array([target] * len(original) + [other] * len(benign_b), dtype=object)
    sp = split_labels(y1, ratio, seed)
    classes = sorted({target, other})
    fcfg = forest_config or ForestConfig(seed=seed)
    models = {
        "forest": fit_forest(X1[sp.train_indices], y1[sp.train_indices], fcfg, classes),
        "tree": fit_single_tree(X1[sp.train_indices], y1[sp.train_indices], TreeConfig(seed=seed), classes),
    }
    out = {}
    for name, model in models.items():
        out[name] = {
            "synthetic_test": metrics(predict(model, X1[sp.test_indices]), y1[sp.test_indices], classes),
            "original_test": metrics(predict(model, X2), y2, classes),
        }
    return out


@dataclass
class SimilarityReport:
    features: list
    cosine: dict
    cumulative: dict  # feature -> (index_orig, sum_orig, index_gen, sum_gen)
    ml_validation: dict = field(default_factory=dict)

    def write(self, directory, target="Botnet") -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with atomic_open(d / "cosine.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["feature", "cosine"])
            for f in self.features:
                w.writerow([f, repr(self.cosine[f])])
        for f in self.features:
            io_, so, ig, sg = self.cumulative[f]
            n = min(len(io_), len(ig))
            grid = np.linspace(0.0, 1.0, n)
            rows = zip(grid, np.interp(grid, io_, so), np.interp(grid, ig, sg))
            with atomic_open(d / f"cumsum_{_slug(f)}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["normalized_index", "original_sum", "generated_sum"])
                for r in rows:
                    w.writerow([repr(float(x)) for x in r])
        doc = {
            name: {k: rep.to_dict() for k, rep in pair.items()}
            for name, pair in self.ml_validation.items()
        }
        write_json(d / "ml_validation.json", {"target": target, "reports": doc})


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name).strip("_")


def similarity_report(original, generated, feature_names, features=None) -> SimilarityReport:
    names = list(feature_names)
    chosen = [f for f in (features or DEFAULT_FEATURES) if f in names] or names
    cos, cum = {}, {}
    for f in chosen:
        j = names.index(f)
        a, b = original[:, j], generated[:, j]
        try:
            cos[f] = cosine_feature(a, b)
        except DataError:
            cos[f] = float("nan")
        cum[f] = (*cumulative_series(a), *cumulative_series(b))
    return SimilarityReport(chosen, cos, cum)
