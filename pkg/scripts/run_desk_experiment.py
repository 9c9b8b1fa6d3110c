#!/usr/bin/env python3
"""Recall on original Botnet rows vs multiplier, on the synthetic desk data.

Prints one line per (kind, k) with the per-seed recalls and their median,
and optionally writes the whole sweep as JSON.
"""
import argparse
import json
import logging
import time

import numpy as np

from ganids.gan import KINDS, GanSpec
from ganids.harness import recall_sweep
from ganids.synthetic import desk_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kinds", nargs="+", default=list(KINDS), choices=KINDS)
    ap.add_argument("--k", nargs="+", type=float, default=[1, 4, 16])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--batch-size", type=int, default=64)
    ap.add_argument("--trees", type=int, default=50)
    ap.add_argument("--mode", choices=["replace", "append"], default="replace")
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--json", help="write results here")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    ds = desk_dataset(args.data_seed)
    results = {}
    for kind in args.kinds:
        t0 = time.perf_counter()
        spec = GanSpec.default(kind, 1, epochs=args.epochs, batch_size=args.batch_size)
        sweep = recall_sweep(ds, spec, args.k, range(args.seeds), "Destination Port",
                             n_features=None, n_trees=args.trees, mode=args.mode)
        for k, vals in sweep.items():
            print(f"{kind:8s} k={k:<5g} median {np.median(vals):.3f}  seeds {np.round(vals, 3).tolist()}")
        print(f"{kind:8s} {time.perf_counter() - t0:.0f}s")
        results[kind] = {str(k): v for k, v in sweep.items()}
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
