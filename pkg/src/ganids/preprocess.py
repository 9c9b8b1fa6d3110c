"""Chi-squared feature scoring, min-max scaling and stratified splitting."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataio import CleanDataset
from .errors import DataError
from .utils import make_rng, read_json, write_json


@dataclass(frozen=True)
class FeatureSelection:
    scores: np.ndarray
    selected: tuple[int, ...]
    feature_names: tuple[str, ...] = ()

    @property
    def selected_names(self) -> list[str]:
        return [self.feature_names[i] for i in self.selected]

    def to_dict(self) -> dict:
        return {
            "scores": [float(s) for s in self.scores],
            "selected": list(self.selected),
            "feature_names": list(self.feature_names),
        }

    @classmethod
    def from_dict(cls, d) -> "FeatureSelection":
        return cls(np.asarray(d["scores"], float), tuple(d["selected"]), tuple(d["feature_names"]))


def chi2_scores(ds: CleanDataset, shift_negative: bool = True) -> np.ndarray:
    """Per-feature chi-squared statistic of class-wise feature sums.

    Observed is the per-class sum of a feature, expected is the class prior
    times the feature total. Columns with negative entries are shifted by
    their minimum first, unless ``shift_negative`` is off, in which case they
    are rejected.
    """
    X = ds.features
    if len(ds.class_counts) < 2:
        raise DataError("chi2 scoring needs at least two classes")
    mins = X.min(axis=0) if len(X) else np.zeros(X.shape[1])
    neg = mins < 0
    if neg.any():
        if not shift_negative:
            name = ds.feature_names[int(np.argmax(neg))]
            raise DataError(f"feature {name!r} has negative values; chi2 needs nonnegative input")
        X = X - np.where(neg, mins, 0.0)
    classes, y = np.unique(ds.labels.astype(str), return_inverse=True)
    onehot = np.zeros((len(y), len(classes)))
    onehot[np.arange(len(y)), y] = 1.0
    observed = onehot.T @ X
    prior = onehot.mean(axis=0)
    expected = np.outer(prior, X.sum(axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(expected > 0, (observed - expected) ** 2 / expected, 0.0)
    return terms.sum(axis=0)


def select_top_k(scores, k: int, feature_names=()) -> FeatureSelection:
    scores = np.asarray(scores, dtype=float)
    if k < 1 or k > len(scores):
        raise DataError(f"k={k} outside 1..{len(scores)}")
    order = np.lexsort((np.arange(len(scores)), -scores))
    return FeatureSelection(scores, tuple(int(i) for i in order[:k]), tuple(feature_names))


@dataclass(frozen=True)
class ScalerParams:
    min: np.ndarray
    max: np.ndarray

    def to_dict(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, d) -> "ScalerParams":
        return cls(np.asarray(d["min"], float), np.asarray(d["max"], float))


def fit_scaler(X) -> ScalerParams:
    X = np.asarray(X, dtype=float)
    return ScalerParams(X.min(axis=0), X.max(axis=0))


def fit_scaler_ds(ds: CleanDataset, selection: FeatureSelection, rows=None) -> ScalerParams:
    X = ds.features[:, list(selection.selected)]
    return fit_scaler(X if rows is None else X[rows])


def apply_scaler(X, params: ScalerParams) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    span = params.max - params.min
    safe = np.where(span > 0, span, 1.0)
    out = (X - params.min) / safe
    out = np.where(span > 0, out, 0.0)
    return np.clip(out, 0.0, 1.0)


def invert_scaler(Z, params: ScalerParams) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    return params.min + Z * (params.max - params.min)


@dataclass(frozen=True)
class SplitSpec:
    train_indices: np.ndarray
    test_indices: np.ndarray
    ratio: float
    seed: int


def split_labels(labels, ratio: float, seed: int) -> SplitSpec:
    """Stratified split; each class is shuffled with its own derived seed.

    Class-local seeding means a class's partition does not depend on which
    other classes are present, so runs that swap one class keep the rest.
    """
    if not 0.0 < ratio < 1.0:
        raise DataError(f"split ratio {ratio} outside (0, 1)")
    labels = np.asarray(labels, dtype=object)
    train, test = [], []
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < 2:
            warnings.warn(f"class {cls!r} has {len(idx)} row(s); split cannot cover both sides")
        idx = make_rng(seed, f"split:{cls}").permutation(idx)
        n_train = int(np.floor(ratio * len(idx)))
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return SplitSpec(
        np.sort(np.concatenate(train)).astype(np.int64),
        np.sort(np.concatenate(test)).astype(np.int64),
        float(ratio),
        int(seed),
    )


def split(ds: CleanDataset, ratio: float = 0.8, seed: int = 0) -> SplitSpec:
    return split_labels(ds.labels, ratio, seed)


def save_preprocessing(path, selection: FeatureSelection | None, scaler: ScalerParams | None) -> None:
    doc = {}
    if selection is not None:
        doc["selection"] = selection.to_dict()
    if scaler is not None:
        doc["scaler"] = scaler.to_dict()
    write_json(path, doc)


def load_preprocessing(path):
    doc = read_json(path)
    sel = FeatureSelection.from_dict(doc["selection"]) if "selection" in doc else None
    sc = ScalerParams.from_dict(doc["scaler"]) if "scaler" in doc else None
    return sel, sc
