"""Split a scarce attack class into homogeneous segments, train one generator
per segment, and generate proportionally.

The first split is on destination port (8080 vs everything else). Each side
is then split greedily on low-cardinality columns, so every final segment
has a simple distribution and a set of columns that never vary inside it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import CleanDataset
from .errors import DataError, PlanError
from .gan import GanSpec, TrainedGenerator, sample_scaled, train
from .preprocess import apply_scaler, fit_scaler, invert_scaler
from .utils import derive_seed, read_json, write_json

log = logging.getLogger(__name__)

DEFAULT_PORT = 8080


@dataclass(frozen=True)
class Condition:
    column: str
    values: tuple
    negate: bool = False

    def holds(self, x) -> np.ndarray:
        inside = np.isin(np.asarray(x, float), np.asarray(self.values, float))
        return ~inside if self.negate else inside

    def describe(self) -> str:
        op = "not in" if self.negate else "in"
        return f"{self.column} {op} {list(self.values)}"


@dataclass
class Segment:
    id: str
    predicate: list
    row_indices: np.ndarray
    constant_columns: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.row_indices)

    def satisfied_by(self, rows, feature_names) -> np.ndarray:
        rows = np.atleast_2d(rows)
        ok = np.ones(len(rows), dtype=bool)
        for cond in self.predicate:
            ok &= cond.holds(rows[:, feature_names.index(cond.column)])
        return ok


@dataclass
class SegmentationPlan:
    segments: list
    source_class: str
    total_rows: int
    feature_names: tuple
    port_column: str
    min_size: int = 30

    def to_dict(self) -> dict:
        return {
            "source_class": self.source_class,
            "total_rows": self.total_rows,
            "port_column": self.port_column,
            "min_size": self.min_size,
            "feature_names": list(self.feature_names),
            "segments": [
                {
                    "id": s.id,
                    "size": s.size,
                    "predicate": [
                        {"column": c.column, "values": list(c.values), "negate": c.negate}
                        for c in s.predicate
                    ],
                    "description": " and ".join(c.describe() for c in s.predicate),
                    "constant_columns": s.constant_columns,
                    "row_indices": s.row_indices.tolist(),
                }
                for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d) -> "SegmentationPlan":
        segs = [
            Segment(
                s["id"],
                [Condition(c["column"], tuple(c["values"]), c["negate"]) for c in s["predicate"]],
                np.asarray(s["row_indices"], dtype=np.int64),
                dict(s["constant_columns"]),
            )
            for s in d["segments"]
        ]
        return cls(segs, d["source_class"], d["total_rows"], tuple(d["feature_names"]),
                   d["port_column"], d.get("min_size", 30))

    def save(self, path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "SegmentationPlan":
        return cls.from_dict(read_json(path))


def _constant_columns(X, rows, names) -> dict:
    sub = X[rows]
    const = {}
    for j, name in enumerate(names):
        col = sub[:, j]
        if len(col) and np.all(col == col[0]):
            const[name] = float(col[0])
    return const


def _refine(X, names, rows, predicate, threshold, min_size, out):
    best = None
    for j, name in enumerate(names):
        vals, counts = np.unique(X[rows, j], return_counts=True)
        if not 2 <= len(vals) <= threshold or counts.min() < min_size:
            continue
        key = (len(vals), -counts.min() / counts.max(), j)
        if best is None or key < best[0]:
            best = (key, j, vals)
    if best is None:
        out.append((rows, predicate))
        return
    _, j, vals = best
    for v in vals:
        child = rows[X[rows, j] == v]
        cond = Condition(names[j], (float(v),))
        _refine(X, names, child, predicate + [cond], threshold, min_size, out)


def build_plan(ds: CleanDataset, class_name: str, port_column: str,
               cardinality_threshold: int = 3, min_size: int = 30,
               port_value: float = DEFAULT_PORT) -> SegmentationPlan:
    rows = np.flatnonzero(ds.labels == class_name)
    if len(rows) == 0:
        raise DataError(f"class {class_name!r} has no rows")
    pj = ds.feature_index(port_column)
    X, names = ds.features, list(ds.feature_names)
    on_port = X[rows, pj] == port_value
    tops = []
    if on_port.any():
        tops.append((rows[on_port], [Condition(port_column, (float(port_value),))]))
    if (~on_port).any():
        tops.append((rows[~on_port], [Condition(port_column, (float(port_value),), negate=True)]))

    leaves = []
    for top_rows, pred in tops:
        _refine(X, names, top_rows, pred, cardinality_threshold, min_size, leaves)
    segments = [
        Segment(f"seg{i:02d}", pred, np.sort(r), _constant_columns(X, r, names))
        for i, (r, pred) in enumerate(leaves)
    ]
    return SegmentationPlan(segments, class_name, len(rows), tuple(names), port_column, min_size)


def apportion(sizes, k: float) -> np.ndarray:
    """Largest-remainder counts for ``k * sizes`` summing to round(k * total).

    Rounding of the total is half-up; remainder ties go to the earlier
    segment.
    """
    sizes = np.asarray(sizes, dtype=float)
    if k <= 0:
        raise ValueError("multiplier must be positive")
    quotas = k * sizes
    target = int(np.floor(k * sizes.sum() + 0.5))
    base = np.floor(quotas).astype(np.int64)
    rem = quotas - base
    extra = target - int(base.sum())
    order = np.lexsort((np.arange(len(sizes)), -rem))
    base[order[:extra]] += 1
    return base


def train_per_segment(plan: SegmentationPlan, ds: CleanDataset, spec: GanSpec) -> dict:
    """One generator per segment, keyed by segment id.

    ``spec`` is a template: ``data_dim`` and ``seed`` are replaced per
    segment (the seed is derived from the template seed and segment id).
    """
    gens = {}
    names = list(plan.feature_names)
    for seg in plan.segments:
        if seg.size < plan.min_size:
            raise PlanError(
                f"segment {seg.id} has {seg.size} rows, below the minimum of {plan.min_size}; "
                "rebuild the plan with a larger cardinality threshold or a smaller minimum size"
            )
        cols = [n for n in names if n not in seg.constant_columns]
        if not cols:
            raise PlanError(f"segment {seg.id} has no varying columns to learn")
        X = ds.features[np.ix_(seg.row_indices, [names.index(c) for c in cols])]
        scaler = fit_scaler(X)
        kw = {"data_dim": len(cols), "seed": derive_seed(spec.seed, f"segment:{seg.id}")}
        labels = None
        if spec.kind == "ctgan":
            kw["label_dim"] = 1
            labels = np.ones((seg.size, 1))
        seg_spec = replace(spec, **kw)
        snap = {}
        for cond in seg.predicate:
            if cond.column not in seg.constant_columns:
                j = names.index(cond.column)
                snap[cond.column] = np.unique(ds.features[seg.row_indices, j]).tolist()
        binding = {"id": seg.id, "constant_columns": seg.constant_columns, "snap_values": snap}
        log.info("training %s generator for %s (%d rows, %d columns)", spec.kind, seg.id, seg.size, len(cols))
        gens[seg.id] = train(
            seg_spec, apply_scaler(X, scaler), labels, scaler, cols,
            (plan.source_class,) if spec.kind == "ctgan" else (), binding,
        )
    return gens


def sample_segment_rows(gen: TrainedGenerator, n: int, feature_names, seed: int = 0) -> np.ndarray:
    """Full-width rows: generated columns, constants re-injected, predicate
    columns snapped to their nearest in-segment value."""
    names = list(feature_names)
    label = gen.label_names[0] if gen.spec.kind == "ctgan" else None
    gen_part = invert_scaler(sample_scaled(gen, n, label, seed), gen.scaler)
    out = np.empty((n, len(names)))
    for j, c in enumerate(gen.feature_names):
        out[:, names.index(c)] = gen_part[:, j]
    binding = gen.segment or {}
    for c, v in binding.get("constant_columns", {}).items():
        out[:, names.index(c)] = v
    for c, vals in binding.get("snap_values", {}).items():
        vals = np.asarray(vals, float)
        j = names.index(c)
        nearest = np.abs(out[:, j][:, None] - vals[None, :]).argmin(axis=1)
        out[:, j] = vals[nearest]
    return out


def generate_proportional(plan: SegmentationPlan, generators: dict, k: float, seed: int = 0) -> CleanDataset:
    missing = [s.id for s in plan.segments if s.id not in generators]
    if missing:
        raise PlanError(f"no trained generator for segment(s) {missing}")
    counts = apportion([s.size for s in plan.segments], k)
    parts = [
        sample_segment_rows(generators[s.id], int(c), plan.feature_names, derive_seed(seed, s.id))
        for s, c in zip(plan.segments, counts)
    ]
    X = np.vstack(parts) if parts else np.empty((0, len(plan.feature_names)))
    labels = np.full(len(X), plan.source_class, dtype=object)
    return CleanDataset.from_arrays(X, plan.feature_names, labels)
