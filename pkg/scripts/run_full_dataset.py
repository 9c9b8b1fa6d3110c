#!/usr/bin/env python3
"""Full pipeline on the real flow CSVs through the CLI: ingest, baseline,
train every GAN kind, then the multiplier grid and the report.

Takes hours on the full dataset. Stages whose artifacts exist are not
skipped; delete the output directory to start clean.
"""
import argparse
import sys

from ganids.cli import main as cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("dataset_dir")
    ap.add_argument("--out", default="out-full")
    ap.add_argument("--config", help="INI config passed to every stage")
    args = ap.parse_args()
    common = ["--output-dir", args.out] + (["--config", args.config] if args.config else [])
    stages = [["ingest", "--input", args.dataset_dir], ["baseline"]]
    stages += [["train-gan", "--kind", k] for k in ("vanilla", "wgan", "ctgan")]
    stages += [["experiment", "--grid"], ["report", "--out", f"{args.out}/report"]]
    for argv in stages:
        print("ganids", " ".join(argv), flush=True)
        rc = cli(argv + common)
        if rc:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
