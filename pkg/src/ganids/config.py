"""Pipeline configuration: an INI file with flat sections, every value
overridable from the command line."""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import DataError
from .forest import ForestConfig
from .gan import KINDS, GanSpec

OUTPUT_ENV = "GANIDS_OUTPUT_DIR"

_GAN_KEYS = {
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "beta1": float,
    "beta2": float,
    "noise_dim": int,
    "n_critic": int,
    "clip_value": float,
    "gp_lambda": float,
    "mmd_bandwidth": float,
    "steps": int,
}


def _csv_list(text, cast=str):
    return [cast(x.strip()) for x in str(text).split(",") if x.strip()]


def _opt_int(text):
    text = str(text).strip().lower()
    return None if text in ("", "none", "all") else int(text)


@dataclass
class PipelineConfig:
    input_dir: str | None = None
    cache: str | None = None
    label_column: str = "Label"
    grouping_file: str | None = None

    target_class: str = "Botnet"
    benign_class: str = "Benign"
    port_column: str = "Destination Port"
    cardinality_threshold: int = 3
    min_segment_size: int = 30

    n_features: int | None = 32
    split_ratio: float = 0.8

    gan: dict = field(default_factory=lambda: {k: {} for k in KINDS})

    n_trees: int = 100
    max_depth: int | None = None
    feature_subsample: str = "sqrt"

    kinds: list = field(default_factory=lambda: list(KINDS))
    multipliers: list = field(default_factory=lambda: [4.0, 49.0, 99.0])
    mode: str = "replace"
    benign_context: int = 10000

    similarity_features: list = field(default_factory=list)
    benign_pool: int = 10000

    gan_seed: int = 0
    split_seed: int = 0
    forest_seed: int = 0

    output_dir: str = "out"

    @classmethod
    def load(cls, path=None) -> "PipelineConfig":
        cfg = cls()
        if path is not None:
            if not Path(path).is_file():
                raise DataError(f"config file not found: {path}")
            cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
            try:
                cp.read(path, encoding="utf-8")
                cfg._apply(cp, Path(path).parent)
            except (configparser.Error, ValueError) as exc:
                raise DataError(f"bad config {path}: {exc}") from exc
        env = os.environ.get(OUTPUT_ENV)
        if env:
            cfg.output_dir = env
        return cfg

    def _apply(self, cp: configparser.ConfigParser, base: Path) -> None:
        def path(v):
            p = Path(v)
            return str(p if p.is_absolute() else base / p)

        table = {
            ("data", "input_dir"): ("input_dir", path),
            ("data", "cache"): ("cache", path),
            ("data", "label_column"): ("label_column", str),
            ("data", "grouping_file"): ("grouping_file", path),
            ("target", "class"): ("target_class", str),
            ("target", "benign_class"): ("benign_class", str),
            ("target", "port_column"): ("port_column", str),
            ("target", "cardinality_threshold"): ("cardinality_threshold", int),
            ("target", "min_segment_size"): ("min_segment_size", int),
            ("preprocess", "n_features"): ("n_features", _opt_int),
            ("preprocess", "split_ratio"): ("split_ratio", float),
            ("forest", "n_trees"): ("n_trees", int),
            ("forest", "max_depth"): ("max_depth", _opt_int),
            ("forest", "feature_subsample"): ("feature_subsample", str),
            ("experiment", "kinds"): ("kinds", _csv_list),
            ("experiment", "multipliers"): ("multipliers", lambda v: _csv_list(v, float)),
            ("experiment", "mode"): ("mode", str),
            ("experiment", "benign_context"): ("benign_context", int),
            ("similarity", "features"): ("similarity_features", _csv_list),
            ("similarity", "benign_pool"): ("benign_pool", int),
            ("seeds", "gan"): ("gan_seed", int),
            ("seeds", "split"): ("split_seed", int),
            ("seeds", "forest"): ("forest_seed", int),
            ("output", "dir"): ("output_dir", path),
        }
        known_sections = {s for s, _ in table} | {"gan"} | {f"gan.{k}" for k in KINDS}
        for section in cp.sections():
            if section not in known_sections:
                raise DataError(f"unknown config section [{section}]")
            for key, value in cp.items(section, raw=True):
                if section == "gan" or section.startswith("gan."):
                    if key not in _GAN_KEYS:
                        raise DataError(f"unknown GAN setting {key!r} in [{section}]")
                    kinds = KINDS if section == "gan" else [section[4:]]
                    for k in kinds:
                        # kind-specific sections win over the shared [gan] block
                        if section == "gan" and key in self.gan[k]:
                            continue
                        self.gan[k][key] = _GAN_KEYS[key](value)
                    continue
                if (section, key) not in table:
                    raise DataError(f"unknown config key {key!r} in [{section}]")
                attr, cast = table[(section, key)]
                setattr(self, attr, cast(value))
        for k in self.kinds:
            if k not in KINDS:
                raise DataError(f"unknown GAN kind {k!r} in [experiment] kinds")

    def override(self, **kw) -> "PipelineConfig":
        names = {f.name for f in fields(self)}
        for k, v in kw.items():
            if v is None:
                continue
            if k not in names:
                raise DataError(f"unknown setting {k!r}")
            setattr(self, k, v)
        return self

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @property
    def cache_path(self) -> Path:
        return Path(self.cache) if self.cache else self.out / "dataset.cache"

    def gan_spec(self, kind: str) -> GanSpec:
        kw = {k: v for k, v in self.gan.get(kind, {}).items()}
        if kind == "vanilla":
            for k in ("n_critic", "clip_value", "gp_lambda"):
                kw.pop(k, None)
        elif kind == "wgan":
            kw.pop("gp_lambda", None)
        else:
            kw.pop("clip_value", None)
        return GanSpec.default(kind, 1, seed=self.gan_seed, **kw)

    def forest_config(self, seed: int | None = None) -> ForestConfig:
        fs = self.feature_subsample
        fs = None if fs in ("all", "none", "") else (fs if fs == "sqrt" else int(fs))
        return ForestConfig(self.n_trees, self.max_depth, 2, fs, True,
                            self.forest_seed if seed is None else seed)
