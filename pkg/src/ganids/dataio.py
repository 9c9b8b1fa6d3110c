"""Flow-CSV ingestion, row cleaning, label regrouping and the columnar cache."""
from __future__ import annotations

import csv
import json
import logging
import re
import struct
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, EmptyDatasetError, ParseError, UnmappedLabelError
from .utils import atomic_open

log = logging.getLogger(__name__)

CACHE_MAGIC = b"GANIDSC\x00"
CACHE_VERSION = 1

# Every spelling that appears in the public CSVs is folded by normalize_label
# before lookup, so keys here are in canonical (lower-case, ASCII) form.
CICIDS2017_GROUPING = {
    "benign": "Benign",
    "bot": "Botnet",
    "ftp-patator": "Brute Force",
    "ssh-patator": "Brute Force",
    "ddos": "DDoS",
    "dos goldeneye": "DoS",
    "dos hulk": "DoS",
    "dos slowhttptest": "DoS",
    "dos slowloris": "DoS",
    "heartbleed": "DoS",
    "portscan": "Probe",
    "web attack - brute force": "Web Attack",
    "web attack - sql injection": "Web Attack",
    "web attack - xss": "Web Attack",
    "infiltration": "Infiltration",
}

_DASHES = dict.fromkeys(map(ord, "‐‑‒–—―−�\x96"), "-")
_WS = re.compile(r"\s+")


def normalize_label(label: str) -> str:
    """Trim, fold non-ASCII dashes to ``-`` and collapse inner whitespace."""
    return _WS.sub(" ", str(label).translate(_DASHES).strip())


def _grouping_key(label: str) -> str:
    key = normalize_label(label).lower()
    key = re.sub(r"\s*[:\-]\s+", " - ", key)  # "Web Attack: XSS" == "Web Attack - XSS"
    return _WS.sub(" ", key)


@dataclass(frozen=True)
class RawFlowTable:
    """Parsed CSV before cleaning.

    ``values`` holds every non-label column as float64; cells that failed to
    parse (or spelled NaN/Infinity) are stored as non-finite markers.
    """

    column_names: tuple[str, ...]
    label_column: str
    values: np.ndarray
    labels: np.ndarray

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(c for c in self.column_names if c != self.label_column)

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    def invalid_mask(self) -> np.ndarray:
        return ~np.isfinite(self.values)


@dataclass(frozen=True)
class CleanDataset:
    features: np.ndarray
    feature_names: tuple[str, ...]
    labels: np.ndarray
    class_counts: dict

    @classmethod
    def from_arrays(cls, features, feature_names, labels) -> "CleanDataset":
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=object)
        if features.ndim != 2 or features.shape[0] != len(labels):
            raise DataError(f"feature matrix {features.shape} does not match {len(labels)} labels")
        if features.shape[1] != len(feature_names):
            raise DataError("feature_names length does not match feature columns")
        if not np.isfinite(features).all():
            raise DataError("CleanDataset features must be finite")
        counts = dict(sorted(Counter(labels.tolist()).items()))
        return cls(features, tuple(feature_names), labels, counts)

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def classes(self) -> list[str]:
        return sorted(self.class_counts)

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DataError(f"unknown feature column {name!r}") from None

    def subset(self, rows) -> "CleanDataset":
        rows = np.asarray(rows)
        return CleanDataset.from_arrays(self.features[rows], self.feature_names, self.labels[rows])

    def select_features(self, indices: Sequence[int]) -> "CleanDataset":
        idx = list(indices)
        return CleanDataset.from_arrays(
            self.features[:, idx], [self.feature_names[i] for i in idx], self.labels
        )


@dataclass(frozen=True)
class ClassGrouping:
    mapping: Mapping[str, str]

    def __post_init__(self):
        norm = {_grouping_key(k): v for k, v in self.mapping.items()}
        object.__setattr__(self, "mapping", norm)

    @classmethod
    def cicids2017(cls) -> "ClassGrouping":
        return cls(dict(CICIDS2017_GROUPING))

    @classmethod
    def identity(cls, labels) -> "ClassGrouping":
        return cls({lab: lab for lab in labels})

    @classmethod
    def from_file(cls, path) -> "ClassGrouping":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    @property
    def general_classes(self) -> list[str]:
        return sorted(set(self.mapping.values()))

    def lookup(self, label: str) -> str:
        try:
            return self.mapping[_grouping_key(label)]
        except KeyError:
            raise UnmappedLabelError(f"label {label!r} has no entry in the class grouping") from None


def _check_field_counts(path: Path, n_cols: int) -> None:
    # Cheap comma count per line; quoted lines go through the csv module.
    with open(path, "rb") as fh:
        fh.readline()
        for lineno, line in enumerate(fh, start=2):
            stripped = line.rstrip(b"\r\n")
            if not stripped:
                continue
            if b'"' in stripped:
                n = len(next(csv.reader([stripped.decode("utf-8", "replace")])))
            else:
                n = stripped.count(b",") + 1
            if n != n_cols:
                raise ParseError(f"{path}: line {lineno} has {n} cells, header has {n_cols}")


def load_csv(path, label_column: str = "Label") -> RawFlowTable:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing input file: {path}")
    with open(path, encoding="utf-8", errors="replace", newline="") as fh:
        try:
            header = [h.strip() for h in next(csv.reader(fh))]
        except StopIteration:
            raise ParseError(f"{path}: empty file, expected a header row") from None
    if label_column not in header:
        raise ParseError(f"{path}: header lacks label column {label_column!r}")
    _check_field_counts(path, len(header))

    df = pd.read_csv(
        path,
        header=None,
        skiprows=1,
        names=range(len(header)),
        dtype={header.index(label_column): str},
        encoding="utf-8",
        encoding_errors="replace",
        low_memory=False,
        skip_blank_lines=True,
    )
    li = header.index(label_column)
    labels = df[li].fillna("").astype(str).to_numpy(dtype=object)
    cols = []
    for i in range(len(header)):
        if i == li:
            continue
        col = df[i]
        if col.dtype.kind not in "fiu":
            col = pd.to_numeric(col.astype(str).str.strip(), errors="coerce")
        cols.append(col.to_numpy(dtype=np.float64))
    values = np.column_stack(cols) if cols else np.empty((len(labels), 0))
    if len(labels) == 0:
        values = np.empty((0, len(header) - 1))
    return RawFlowTable(tuple(header), label_column, values, labels)


def concat_tables(tables: Sequence[RawFlowTable]) -> RawFlowTable:
    if not tables:
        raise DataError("no input files")
    first = tables[0]
    for t in tables[1:]:
        if t.column_names != first.column_names or t.label_column != first.label_column:
            raise ParseError("input files disagree on their header columns")
    return RawFlowTable(
        first.column_names,
        first.label_column,
        np.concatenate([t.values for t in tables], axis=0),
        np.concatenate([t.labels for t in tables]),
    )


def load_dir(directory, label_column: str = "Label", max_workers: int = 4) -> RawFlowTable:
    """Parse every ``*.csv`` in ``directory``; merge order is sorted filename order."""
    paths = sorted(Path(directory).glob("*.csv"))
    if not paths:
        raise DataError(f"no input files in {directory}")
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        tables = list(pool.map(lambda p: load_csv(p, label_column), paths))
    return concat_tables(tables)


def clean(raw: RawFlowTable) -> CleanDataset:
    if raw.n_rows == 0:
        raise EmptyDatasetError("raw table has no rows")
    keep = np.isfinite(raw.values).all(axis=1)
    if not keep.any():
        raise EmptyDatasetError("no rows survive cleaning")
    log.info("clean: kept %d of %d rows", int(keep.sum()), raw.n_rows)
    labels = np.array([normalize_label(x) for x in raw.labels[keep]], dtype=object)
    return CleanDataset.from_arrays(raw.values[keep], raw.feature_names, labels)


def regroup_labels(ds: CleanDataset, grouping: ClassGrouping) -> CleanDataset:
    table = {lab: grouping.lookup(lab) for lab in ds.class_counts}
    new = np.array([table[lab] for lab in ds.labels], dtype=object)
    return CleanDataset.from_arrays(ds.features, ds.feature_names, new)


def format_counts(counts: Mapping[str, int], title: str = "Class") -> str:
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    width = max([len(title)] + [len(k) for k in counts])
    lines = [f"{title:<{width}}  Instances", "-" * (width + 11)]
    lines += [f"{k:<{width}}  {v}" for k, v in rows]
    return "\n".join(lines)


# -- columnar cache -------------------------------------------------------
#
# layout: magic(8) | u32 version | u64 header_len | header JSON (utf-8)
#         | n_features columns of n_rows little-endian float64
#         | n_rows little-endian int32 label codes into header["label_names"]


def write_cache(ds: CleanDataset, path) -> None:
    names = sorted(ds.class_counts)
    code = {n: i for i, n in enumerate(names)}
    codes = np.fromiter((code[x] for x in ds.labels), dtype="<i4", count=ds.n_rows)
    header = json.dumps(
        {"n_rows": ds.n_rows, "feature_names": list(ds.feature_names), "label_names": names}
    ).encode()
    with atomic_open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<IQ", CACHE_VERSION, len(header)))
        fh.write(header)
        fh.write(np.asfortranarray(ds.features, dtype="<f8").tobytes(order="F"))
        fh.write(codes.tobytes())


def read_cache(path) -> CleanDataset:
    buf = Path(path).read_bytes()
    if buf[:8] != CACHE_MAGIC:
        raise DataError(f"{path}: not a dataset cache file")
    version, hlen = struct.unpack_from("<IQ", buf, 8)
    if version != CACHE_VERSION:
        raise DataError(f"{path}: unsupported cache version {version}")
    off = 8 + 12
    header = json.loads(buf[off : off + hlen].decode())
    off += hlen
    n, d = header["n_rows"], len(header["feature_names"])
    feats = np.frombuffer(buf, dtype="<f8", count=n * d, offset=off).reshape((n, d), order="F")
    off += 8 * n * d
    codes = np.frombuffer(buf, dtype="<i4", count=n, offset=off)
    labels = np.asarray(header["label_names"], dtype=object)[codes] if n else np.empty(0, object)
    return CleanDataset.from_arrays(feats.astype(np.float64), header["feature_names"], labels)
