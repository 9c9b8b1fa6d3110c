"""``ganids`` command line.

Artifacts live under the output directory::

    dataset.cache, dataset.cache.counts.json
    plans/<class>.json
    generators/<kind>/<segment>.{weights,weights.json,loss.csv,manifest.json}
    synthetic/<kind>_k<k>.csv
    similarity/<kind>/
    baseline.json
    experiments/<name>.json
"""
from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import PipelineConfig
from .dataio import (
    ClassGrouping,
    clean,
    format_counts,
    load_dir,
    read_cache,
    regroup_labels,
    write_cache,
)
from .errors import DataError, NumericError
from .forest import MetricsReport
from .gan import KINDS, load_generator, save_generator
from .harness import (
    MODES,
    ExperimentSpec,
    run_augmentation,
    run_baseline,
    stability_check,
    write_table_csv,
)
from .segment import SegmentationPlan, build_plan, generate_proportional, train_per_segment
from .similarity import ml_validation, similarity_report
from .utils import atomic_open, derive_seed, make_rng, read_json, write_json

log = logging.getLogger("ganids")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- helpers --------------------------------------------------------------


def _need(path: Path, producer: str) -> Path:
    if not path.exists():
        raise DataError(f"missing {path}; run `ganids {producer}` first")
    return path


def _load_ds(cfg):
    return read_cache(_need(cfg.cache_path, "ingest"))


def _plan_path(cfg, cls):
    return cfg.out / "plans" / f"{cls.replace(' ', '_')}.json"


def _gen_dir(cfg, kind):
    return cfg.out / "generators" / kind


def _load_generators(cfg, kind):
    index = read_json(_need(_gen_dir(cfg, kind) / "index.json", f"train-gan --kind {kind}"))
    plan = SegmentationPlan.load(_need(_plan_path(cfg, index["class"]), f"train-gan --kind {kind}"))
    gens = {sid: load_generator(_gen_dir(cfg, kind) / sid) for sid in index["segments"]}
    return plan, gens


def _write_rows_csv(path, names, X, labels):
    df = pd.DataFrame(X, columns=list(names))
    df["Label"] = labels
    with atomic_open(path, "w", newline="") as fh:
        df.to_csv(fh, index=False, float_format="%.17g")


# -- commands -------------------------------------------------------------


def cmd_ingest(cfg, args):
    cache = Path(args.out) if args.out else cfg.cache_path
    counts_path = Path(str(cache) + ".counts.json")
    if cache.exists() and counts_path.exists() and not args.force:
        log.info("reusing cache %s", cache)
        fine = read_json(counts_path)["fine"]
        ds = read_cache(cache)
    else:
        src = args.input or cfg.input_dir
        if not src:
            raise UsageError("ingest needs --input DIR (or [data] input_dir in the config)")
        if not Path(src).is_dir():
            raise DataError(f"input directory not found: {src}")
        raw_ds = clean(load_dir(src, args.label_column or cfg.label_column))
        fine = dict(raw_ds.class_counts)
        grouping = (ClassGrouping.from_file(cfg.grouping_file) if cfg.grouping_file
                    else ClassGrouping.cicids2017())
        ds = regroup_labels(raw_ds, grouping)
        cache.parent.mkdir(parents=True, exist_ok=True)
        write_cache(ds, cache)
        write_json(counts_path, {"fine": fine, "grouped": dict(ds.class_counts)})
    print(format_counts(fine, "Label"))
    print()
    print(format_counts(dict(ds.class_counts), "Class"))
    print(f"\n{ds.n_rows} rows, {len(ds.feature_names)} features -> {cache}")
    return 0


def cmd_train_gan(cfg, args):
    ds = _load_ds(cfg)
    cls = args.cls or cfg.target_class
    if cls not in ds.class_counts:
        raise DataError(f"class {cls!r} not in dataset; classes: {ds.classes}")
    plan = build_plan(ds, cls, cfg.port_column, cfg.cardinality_threshold, cfg.min_segment_size)
    plan.save(_plan_path(cfg, cls))
    out = _gen_dir(cfg, args.kind)
    out.mkdir(parents=True, exist_ok=True)
    gens = train_per_segment(plan, ds, cfg.gan_spec(args.kind))
    for sid, g in gens.items():
        save_generator(g, out / sid)
    write_json(out / "index.json", {"kind": args.kind, "class": cls, "segments": list(gens)})
    print(f"{args.kind} generators for {cls} ({plan.total_rows} rows):")
    for s in plan.segments:
        g = gens[s.id]
        print(f"  {s.id}  {s.size:>6} rows  {len(g.feature_names):>3} cols  "
              f"final d_loss {g.trace.d_loss[-1]:.4f}  g_loss {g.trace.g_loss[-1]:.4f}")
    return 0


def cmd_generate(cfg, args):
    plan, gens = _load_generators(cfg, args.kind)
    synth = generate_proportional(plan, gens, args.k, derive_seed(cfg.gan_seed, f"generate:{args.k:g}"))
    path = cfg.out / "synthetic" / f"{args.kind}_k{args.k:g}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_rows_csv(path, plan.feature_names, synth.features, synth.labels)
    print(f"{synth.n_rows} {plan.source_class} rows -> {path}")
    return 0


def cmd_eval_similarity(cfg, args):
    ds = _load_ds(cfg)
    plan, gens = _load_generators(cfg, args.kind)
    synth = generate_proportional(plan, gens, args.k, derive_seed(cfg.gan_seed, "similarity"))
    target = plan.source_class
    orig = ds.features[ds.labels == target]
    rep = similarity_report(orig, synth.features, ds.feature_names, cfg.similarity_features or None)

    benign = np.flatnonzero(ds.labels == cfg.benign_class)
    if len(benign) < 2:
        raise DataError(f"need benign rows of class {cfg.benign_class!r} for the ML check")
    perm = make_rng(cfg.split_seed, "similarity-benign").permutation(benign)
    n = min(cfg.benign_pool, len(perm) // 2)
    # pools must not share a row, not just an index
    X_b = ds.features[perm]
    _, first = np.unique(X_b, axis=0, return_index=True)
    uniq = perm[np.sort(first)]
    n = min(n, len(uniq) // 2)
    pool_a, pool_b = ds.features[uniq[:n]], ds.features[uniq[n : 2 * n]]
    rep.ml_validation = ml_validation(synth.features, orig, pool_a, pool_b, target, cfg.benign_class,
                                      cfg.split_ratio, cfg.split_seed, cfg.forest_config())
    out = cfg.out / "similarity" / args.kind
    rep.write(out, target)
    print(f"cosine similarity ({args.kind}, {synth.n_rows} generated vs {len(orig)} original):")
    for f in rep.features:
        print(f"  {f:<32} {rep.cosine[f]:.4f}")
    for model, pair in rep.ml_validation.items():
        for name, r in pair.items():
            row = r.row(target)
            print(f"  {model:<6} {name:<15} P {row['precision']:.2f}  R {row['recall']:.2f}  F1 {row['f1']:.2f}")
    print(f"-> {out}")
    return 0


def cmd_baseline(cfg, args):
    ds = _load_ds(cfg)
    rep = run_baseline(ds, cfg.n_features, cfg.split_ratio, cfg.split_seed, cfg.forest_config())
    write_json(cfg.out / "baseline.json", {
        "seeds": {"split": cfg.split_seed, "forest": cfg.forest_seed},
        "n_features": cfg.n_features,
        "report": rep.to_dict(),
    })
    print(rep.to_text())
    return 0


def cmd_experiment(cfg, args):
    if args.grid:
        cells = [(kind, k, cfg.mode) for kind in cfg.kinds for k in cfg.multipliers]
    else:
        if not args.kind or args.k is None:
            raise UsageError("experiment needs --grid, or --kind and --k")
        cells = [(args.kind, args.k, args.mode or cfg.mode)]
    ds = _load_ds(cfg)
    base_path = cfg.out / "baseline.json"
    baseline = MetricsReport.from_dict(read_json(base_path)["report"]) if base_path.exists() else None
    loaded = {}
    for kind, k, mode in cells:
        if kind not in loaded:
            loaded[kind] = _load_generators(cfg, kind)
        plan, gens = loaded[kind]
        spec = ExperimentSpec(kind, float(k), mode, cfg.gan_seed, cfg.split_seed, cfg.forest_seed,
                              plan.source_class, cfg.benign_class, cfg.benign_context,
                              cfg.n_features, cfg.split_ratio)
        res = run_augmentation(ds, spec, plan, gens, cfg.forest_config())
        doc = res.to_dict()
        if baseline is not None and list(baseline.classes) == list(res.full_per_class.classes):
            doc["stability"] = stability_check(baseline, res.full_per_class, spec.target_class)
        write_json(cfg.out / "experiments" / f"{spec.name}.json", doc)
        o, a = res.target_row("original"), res.target_row("augmented")
        stab = doc.get("stability")
        stab_txt = "" if stab is None else f"  stable {sum(v['pass'] for v in stab.values())}/{len(stab)}"
        print(f"{spec.name:<24} generated-test F1 {a['f1']:.2f}  original P {o['precision']:.2f} "
              f"R {o['recall']:.2f} F1 {o['f1']:.2f}{stab_txt}")
    return 0


def _rows_from_doc(doc) -> list:
    s = doc["spec"]
    target = s["target_class"]
    rows = []
    for table, key in (("generated_test", "metrics_on_augmented_test"),
                       ("original_target", "metrics_on_original_target")):
        rep = MetricsReport.from_dict(doc[key])
        rows.append({"table": table, "model": s["gan_kind"], "multiplier": s["multiplier"],
                     "mode": s["mode"], "class": target, **rep.row(target)})
    full = MetricsReport.from_dict(doc["full_per_class"])
    for c in full.classes:
        rows.append({"table": "full_per_class", "model": s["gan_kind"], "multiplier": s["multiplier"],
                     "mode": s["mode"], "class": c, **full.row(c)})
    return rows


def cmd_report(cfg, args):
    dest = Path(args.out) if args.out else cfg.out / "report"
    dest.mkdir(parents=True, exist_ok=True)
    rows = []
    base_path = cfg.out / "baseline.json"
    if base_path.exists():
        base = MetricsReport.from_dict(read_json(base_path)["report"])
        rows += [{"table": "baseline", "model": "-", "multiplier": "", "mode": "", "class": c, **base.row(c)}
                 for c in base.classes]
    docs = sorted((cfg.out / "experiments").glob("*.json"))
    for p in docs:
        rows += _rows_from_doc(read_json(p))
    if not rows:
        raise DataError("nothing to report; run `ganids baseline` or `ganids experiment` first")
    written = []
    for table in ("baseline", "generated_test", "original_target", "full_per_class"):
        part = [r for r in rows if r["table"] == table]
        if part:
            write_table_csv(part, dest / f"{table}.csv")
            written.append(f"{table}.csv")
    write_table_csv(rows, dest / "all_tables.csv")
    written.append("all_tables.csv")
    sim_root = cfg.out / "similarity"
    if sim_root.is_dir():
        for kind_dir in sorted(p for p in sim_root.iterdir() if p.is_dir()):
            for f in sorted(kind_dir.iterdir()):
                target = dest / "similarity" / kind_dir.name / f.name
                target.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(f, target)
                written.append(str(target.relative_to(dest)))
    print(f"report -> {dest}")
    for w in written:
        print(f"  {w}")
    return 0


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--output-dir", help="output directory (overrides config and GANIDS_OUTPUT_DIR)")
    common.add_argument("--cache", help="dataset cache path (default: <output-dir>/dataset.cache)")
    common.add_argument("--gan-seed", type=int, help="seed for GAN training and sampling")
    common.add_argument("--split-seed", type=int, help="seed for train/test splits")
    common.add_argument("--forest-seed", type=int, help="seed for the random forest")
    common.add_argument("--n-trees", type=int, help="trees per forest")
    common.add_argument("--n-features", type=int, help="chi2 top-k features (0 keeps all)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = _Parser(prog="ganids", description="GAN-based scarce-class augmentation for flow IDS")
    p.add_argument("--version", action="version", version=f"ganids {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="parse, clean and regroup flow CSVs into a cache")
    s.add_argument("--input", help="directory of flow CSV files")
    s.add_argument("--out", help="cache file to write")
    s.add_argument("--label-column", help="label column name (default Label)")
    s.add_argument("--force", action="store_true", help="rebuild even if the cache exists")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train-gan", parents=[common], help="segment a class and train one generator per segment")
    s.add_argument("--kind", required=True, choices=KINDS)
    s.add_argument("--class", dest="cls", help="class to model (default from config: Botnet)")
    s.set_defaults(func=cmd_train_gan)

    s = sub.add_parser("generate", parents=[common], help="write k times the class size in generated rows")
    s.add_argument("--kind", required=True, choices=KINDS)
    s.add_argument("--k", type=float, required=True, help="multiplier")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("eval-similarity", parents=[common], help="cosine, cumulative sums and ML validation")
    s.add_argument("--kind", required=True, choices=KINDS)
    s.add_argument("--k", type=float, default=1.0, help="multiplier for the generated sample (default 1)")
    s.set_defaults(func=cmd_eval_similarity)

    s = sub.add_parser("baseline", parents=[common], help="forest on the original data, per-class report")
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("experiment", parents=[common], help="augmentation runs")
    s.add_argument("--grid", action="store_true", help="run every kind x multiplier from the config")
    s.add_argument("--kind", choices=KINDS)
    s.add_argument("--k", type=float, help="multiplier")
    s.add_argument("--mode", choices=MODES)
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", parents=[common], help="collect results into table CSVs")
    s.add_argument("--out", help="report directory (default <output-dir>/report)")
    s.set_defaults(func=cmd_report)
    return p


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config)
    n_feat = args.n_features
    cfg.override(
        cache=args.cache,
        gan_seed=args.gan_seed,
        split_seed=args.split_seed,
        forest_seed=args.forest_seed,
        n_trees=args.n_trees,
    )
    if n_feat is not None:
        cfg.n_features = None if n_feat == 0 else n_feat
    if args.output_dir:
        cfg.output_dir = args.output_dir
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return args.func(cfg, args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        where = f" at step {e.step}" if e.step is not None else ""
        print(f"numeric failure{where}: {e}", file=sys.stderr)
        return 3
    except (DataError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"invalid setting: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
