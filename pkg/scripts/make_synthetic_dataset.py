#!/usr/bin/env python3
"""Write the bundled synthetic flow tables as CSVs, ready for ``ganids ingest``."""
import argparse

from ganids.synthetic import write_csvs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", help="directory to write the CSVs into")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--files", type=int, default=2, help="number of CSV files")
    ap.add_argument("--benign", type=int, default=6000, help="benign rows")
    args = ap.parse_args()
    for p in write_csvs(args.out, seed=args.seed, n_files=args.files, n_benign=args.benign):
        print(p)


if __name__ == "__main__":
    main()
