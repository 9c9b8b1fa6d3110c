"""End-to-end experiments: baseline IDS, GAN augmentation at a given
multiplier, and the check that non-target classes stay stable."""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataio import CleanDataset
from .errors import DataError
from .forest import ForestConfig, MetricsReport, fit_forest, metrics, predict
from .preprocess import chi2_scores, select_top_k, split_labels
from .segment import SegmentationPlan, generate_proportional
from .utils import atomic_open, derive_seed, make_rng, write_json

log = logging.getLogger(__name__)

MODES = ("replace", "append")


@dataclass
class ExperimentSpec:
    gan_kind: str = "wgan"
    multiplier: float = 4.0
    mode: str = "replace"
    gan_seed: int = 0
    split_seed: int = 0
    forest_seed: int = 0
    target_class: str = "Botnet"
    benign_class: str = "Benign"
    benign_context: int = 10000
    n_features: int | None = 32
    ratio: float = 0.8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.multiplier <= 0:
            raise ValueError("multiplier must be positive")

    @property
    def name(self) -> str:
        return f"{self.gan_kind}_k{self.multiplier:g}_{self.mode}"


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    metrics_on_augmented_test: MetricsReport
    metrics_on_original_target: MetricsReport
    full_per_class: MetricsReport
    selected_features: list = field(default_factory=list)
    n_synthetic: int = 0
    n_train: int = 0

    def target_row(self, which: str = "original") -> dict:
        rep = {
            "original": self.metrics_on_original_target,
            "augmented": self.metrics_on_augmented_test,
            "full": self.full_per_class,
        }[which]
        return rep.row(self.spec.target_class)

    def to_dict(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "seeds": {
                "gan": self.spec.gan_seed,
                "split": self.spec.split_seed,
                "forest": self.spec.forest_seed,
            },
            "n_synthetic": self.n_synthetic,
            "n_train": self.n_train,
            "selected_features": self.selected_features,
            "metrics_on_augmented_test": self.metrics_on_augmented_test.to_dict(),
            "metrics_on_original_target": self.metrics_on_original_target.to_dict(),
            "full_per_class": self.full_per_class.to_dict(),
        }

    def write(self, path) -> None:
        write_json(path, self.to_dict())


def _select(ds: CleanDataset, rows, n_features):
    if n_features is None or n_features >= len(ds.feature_names):
        return list(range(len(ds.feature_names)))
    sub = ds.subset(rows)
    return list(select_top_k(chi2_scores(sub), n_features).selected)


def _fit(ds, train_rows, n_features, forest_config, classes):
    cols = _select(ds, train_rows, n_features)
    forest = fit_forest(ds.features[np.ix_(train_rows, cols)], ds.labels[train_rows], forest_config, classes)
    return forest, cols


def run_baseline(ds: CleanDataset, n_features: int | None = 32, ratio: float = 0.8,
                 split_seed: int = 0, forest_config: ForestConfig | None = None) -> MetricsReport:
    """Chi2 top-k selection on the training split, forest fit, per-class report."""
    sp = split_labels(ds.labels, ratio, split_seed)
    classes = ds.classes
    forest, cols = _fit(ds, sp.train_indices, n_features, forest_config, classes)
    pred = predict(forest, ds.features[np.ix_(sp.test_indices, cols)])
    return metrics(pred, ds.labels[sp.test_indices], classes)


def build_corpus(ds: CleanDataset, synth: CleanDataset, target_class: str, mode: str):
    """Original rows (minus the target class in replace mode) followed by the
    generated rows. ``origin[i]`` is the source row in ``ds``, or -1 for a
    generated row."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    is_target = ds.labels == target_class
    keep = np.flatnonzero(~is_target) if mode == "replace" else np.arange(ds.n_rows)
    corpus = CleanDataset.from_arrays(
        np.vstack([ds.features[keep], synth.features]),
        ds.feature_names,
        np.concatenate([ds.labels[keep], synth.labels]),
    )
    return corpus, np.concatenate([keep, np.full(synth.n_rows, -1)])


def run_augmentation(ds: CleanDataset, spec: ExperimentSpec, plan: SegmentationPlan,
                     generators: dict, forest_config: ForestConfig | None = None) -> ExperimentResult:
    """Train the IDS on a corpus where the target class is replaced by (or
    appended with) ``multiplier`` times as many generated rows.

    Three evaluations:

    * ``metrics_on_augmented_test``: the corpus's own held-out split.
    * ``metrics_on_original_target``: every original target row the forest
      did not train on, mixed with up to ``benign_context`` held-out benign
      rows.
    * ``full_per_class``: the baseline's real test rows (same split seed),
      so non-target classes can be compared with the baseline row by row.
    """
    for sid, gen in generators.items():
        if gen.spec.kind != spec.gan_kind:
            raise DataError(f"generator for {sid} is {gen.spec.kind!r}, experiment wants {spec.gan_kind!r}")
    if plan.source_class != spec.target_class:
        raise DataError("segmentation plan targets a different class")
    forest_config = forest_config or ForestConfig(seed=spec.forest_seed)

    synth = generate_proportional(
        plan, generators, spec.multiplier, derive_seed(spec.gan_seed, f"generate:{spec.multiplier:g}")
    )
    is_target = ds.labels == spec.target_class
    base_split = split_labels(ds.labels, spec.ratio, spec.split_seed)
    corpus, origin = build_corpus(ds, synth, spec.target_class, spec.mode)
    sp = split_labels(corpus.labels, spec.ratio, spec.split_seed)
    classes = sorted(set(ds.classes) | {spec.target_class})
    forest, cols = _fit(corpus, sp.train_indices, spec.n_features, forest_config, classes)

    def evaluate(X, y):
        return metrics(predict(forest, X[:, cols]), y, classes)

    on_aug = evaluate(corpus.features[sp.test_indices], corpus.labels[sp.test_indices])

    trained_on = np.zeros(ds.n_rows, dtype=bool)
    src = origin[sp.train_indices]
    trained_on[src[src >= 0]] = True
    target_rows = np.flatnonzero(is_target & ~trained_on)
    test_benign = origin[sp.test_indices]
    test_benign = test_benign[(test_benign >= 0) & (ds.labels[np.maximum(test_benign, 0)] == spec.benign_class)]
    rng = make_rng(spec.split_seed, "benign-context")
    context = np.sort(rng.permutation(test_benign)[: spec.benign_context])
    eval_rows = np.concatenate([target_rows, context])
    on_orig = evaluate(ds.features[eval_rows], ds.labels[eval_rows])

    real_test = base_split.test_indices
    if spec.mode == "append":
        real_test = real_test[~trained_on[real_test]]
    full = evaluate(ds.features[real_test], ds.labels[real_test])

    return ExperimentResult(
        spec, on_aug, on_orig, full,
        [ds.feature_names[c] for c in cols], synth.n_rows, len(sp.train_indices),
    )


def stability_check(baseline: MetricsReport, augmented: MetricsReport, target_class: str,
                    tolerance: float = 0.04) -> dict:
    """Per non-target class: did precision, recall and F1 stay within ``tolerance``?"""
    if list(baseline.classes) != list(augmented.classes):
        raise DataError(f"class sets differ: {baseline.classes} vs {augmented.classes}")
    out = {}
    for cls in baseline.classes:
        if cls == target_class:
            continue
        b, a = baseline.row(cls), augmented.row(cls)
        deltas = {m: a[m] - b[m] for m in ("precision", "recall", "f1")}
        worst = max(abs(v) for v in deltas.values())
        out[cls] = {"pass": worst <= tolerance + 1e-12, "max_delta": worst, "deltas": deltas}
    return out


TABLE_COLUMNS = ["table", "model", "multiplier", "mode", "class", "precision", "recall", "f1", "support"]


def table_rows(results, baseline: MetricsReport | None = None) -> list:
    """Flat rows shaped like the published tables, for diffing."""
    rows = []
    if baseline is not None:
        for c in baseline.classes:
            rows.append({"table": "baseline", "model": "-", "multiplier": "", "mode": "", "class": c,
                         **baseline.row(c)})
    for r in results:
        s = r.spec
        for table, rep in (("generated_test", r.metrics_on_augmented_test),
                           ("original_target", r.metrics_on_original_target)):
            rows.append({"table": table, "model": s.gan_kind, "multiplier": s.multiplier, "mode": s.mode,
                         "class": s.target_class, **rep.row(s.target_class)})
        for c in r.full_per_class.classes:
            rows.append({"table": "full_per_class", "model": s.gan_kind, "multiplier": s.multiplier,
                         "mode": s.mode, "class": c, **r.full_per_class.row(c)})
    return rows


def write_table_csv(rows, path) -> None:
    with atomic_open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in row.items()})


def recall_sweep(ds: CleanDataset, gan_spec, multipliers, seeds, port_column: str,
                 target_class: str = "Botnet", n_features: int | None = None, n_trees: int = 50,
                 mode: str = "replace", benign_context: int = 10000) -> dict:
    """Original-target recall for every (seed, k).

    One seed drives the GAN, the split and the forest together. Generators
    are trained once per seed and shared across multipliers; training does
    not depend on k, so this equals retraining per cell.
    Returns ``{k: [recall per seed]}``.
    """
    from dataclasses import replace as _replace

    from .segment import build_plan, train_per_segment

    plan = build_plan(ds, target_class, port_column)
    out = {float(k): [] for k in multipliers}
    for s in seeds:
        gens = train_per_segment(plan, ds, _replace(gan_spec, seed=s))
        for k in multipliers:
            spec = ExperimentSpec(gan_spec.kind, float(k), mode, s, s, s, target_class,
                                  benign_context=benign_context, n_features=n_features)
            res = run_augmentation(ds, spec, plan, gens, ForestConfig(n_trees=n_trees, seed=s))
            out[float(k)].append(res.target_row("original")["recall"])
            log.info("seed %s k=%g recall %.3f", s, k, out[float(k)][-1])
    return out
