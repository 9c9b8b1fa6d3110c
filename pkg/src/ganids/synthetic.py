"""Desk-scale stand-in for the flow dataset.

Five fine-grained labels regroup into Benign, DoS, Probe, Brute Force and a
scarce Botnet class. Botnet rows carry the structure the segmentation step
looks for: most use port 8080, and a binary flag column splits the 8080 side
into sub-populations with different timing profiles. A slice of benign
traffic is drawn from a slightly shifted copy of the Botnet profiles, so
Botnet recall depends on how many Botnet examples the classifier sees.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .utils import make_rng

FEATURES = (
    "Destination Port",
    "Protocol",
    "PSH Flag Count",
    "Flow Duration",
    "Total Fwd Packets",
    "Total Length of Fwd Packets",
    "Flow Packets/s",
    "Fwd IAT Mean",
    "Bwd IAT Mean",
    "Fwd Packets/s",
    "Packet Length Mean",
    "Init_Win_bytes_backward",
)
CONTINUOUS = FEATURES[3:]

# log-scale centres of the continuous columns per traffic profile
_PROFILES = {
    "bot_a": [11.0, 1.6, 5.5, 3.0, 9.0, 8.0, 2.5, 4.6, 5.4],
    "bot_b": [12.5, 2.2, 6.4, 2.0, 10.2, 9.4, 1.8, 5.0, 7.9],
    "bot_c": [9.6, 1.1, 4.8, 4.2, 7.7, 6.9, 3.4, 4.1, 5.4],
    "dos": [15.0, 2.8, 8.0, 1.0, 13.0, 12.0, 0.5, 6.5, 3.0],
    "probe": [3.5, 0.3, 1.0, 10.0, 1.5, 1.5, 8.5, 1.0, 7.0],
    "brute": [13.5, 3.0, 6.0, 1.5, 11.5, 11.0, 1.0, 3.5, 6.0],
}


def _profile_rows(rng, profile, n, spread=0.35, shift=0.0):
    centre = np.asarray(_PROFILES[profile]) + shift
    return np.exp(centre + spread * rng.standard_normal((n, len(centre))))


def _categorical(rng, n, values, probs):
    return rng.choice(np.asarray(values, float), size=n, p=probs)


def make_flows(seed: int = 0, n_benign: int = 6000, n_bot: int = 200, n_dos: int = 800,
               n_probe: int = 800, n_brute: int = 600, lookalike_frac: float = 1.5,
               lookalike_shift: float = 0.25) -> pd.DataFrame:
    """Return a flow table with a ``Label`` column (fine-grained labels)."""
    rng = make_rng(seed, "synthetic-flows")
    blocks = []

    def block(label, cont, port, proto, psh):
        df = pd.DataFrame(cont, columns=CONTINUOUS)
        df.insert(0, "PSH Flag Count", psh)
        df.insert(0, "Protocol", proto)
        df.insert(0, "Destination Port", port)
        df["Label"] = label
        blocks.append(df)

    def bot_like(n, label, shift):
        # 70% on 8080 split by the PSH flag into profiles a/b; rest on 80/443 (profile c)
        n8080 = int(round(0.7 * n))
        n_a = int(round(0.55 * n8080))
        n_b = n8080 - n_a
        n_c = n - n8080
        block(label, _profile_rows(rng, "bot_a", n_a, shift=shift), np.full(n_a, 8080.0),
              np.full(n_a, 6.0), np.zeros(n_a))
        block(label, _profile_rows(rng, "bot_b", n_b, shift=shift), np.full(n_b, 8080.0),
              np.full(n_b, 6.0), np.ones(n_b))
        block(label, _profile_rows(rng, "bot_c", n_c, shift=shift),
              _categorical(rng, n_c, [80, 443], [0.5, 0.5]), np.full(n_c, 6.0),
              _categorical(rng, n_c, [0, 1], [0.5, 0.5]))

    bot_like(n_bot, "Bot", 0.0)
    n_look = int(round(lookalike_frac * n_bot))
    bot_like(n_look, "BENIGN", lookalike_shift)

    n_rest = n_benign - n_look
    cont = np.exp(rng.uniform(0.0, 16.0, size=(n_rest, len(CONTINUOUS))))
    block("BENIGN", cont, _categorical(rng, n_rest, [53, 80, 443, 8080], [0.15, 0.3, 0.3, 0.25]),
          _categorical(rng, n_rest, [6, 17], [0.8, 0.2]), _categorical(rng, n_rest, [0, 1], [0.6, 0.4]))
    block("DoS Hulk", _profile_rows(rng, "dos", n_dos), np.full(n_dos, 80.0), np.full(n_dos, 6.0),
          _categorical(rng, n_dos, [0, 1], [0.3, 0.7]))
    block("PortScan", _profile_rows(rng, "probe", n_probe),
          rng.integers(1, 1024, n_probe).astype(float), np.full(n_probe, 6.0), np.zeros(n_probe))
    block("FTP-Patator", _profile_rows(rng, "brute", n_brute), np.full(n_brute, 21.0),
          np.full(n_brute, 6.0), _categorical(rng, n_brute, [0, 1], [0.5, 0.5]))

    df = pd.concat(blocks, ignore_index=True)
    return df.iloc[rng.permutation(len(df))].reset_index(drop=True)


def write_csvs(directory, seed: int = 0, n_files: int = 2, **kw) -> list:
    """Write the table as ``n_files`` CSVs (like the per-day files of the
    real dataset), with a few NaN/Infinity rows for the cleaner to drop."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    df = make_flows(seed, **kw).astype({c: object for c in CONTINUOUS})
    rng = make_rng(seed, "synthetic-dirt")
    benign = np.flatnonzero((df["Label"] == "BENIGN").to_numpy())
    dirty = rng.choice(benign, size=5, replace=False)
    for i, r in enumerate(dirty):
        df.loc[r, "Flow Packets/s"] = ["Infinity", "NaN", "inf", "", "nan"][i]
    paths = []
    for i, part in enumerate(np.array_split(np.arange(len(df)), n_files)):
        p = d / f"day{i + 1}.csv"
        df.iloc[part].to_csv(p, index=False)
        paths.append(p)
    return paths


def desk_dataset(seed: int = 0, **kw):
    """The synthetic table as a regrouped ``CleanDataset`` (no CSV round trip)."""
    from .dataio import ClassGrouping, CleanDataset, normalize_label, regroup_labels

    df = make_flows(seed, **kw)
    labels = [normalize_label(x) for x in df["Label"]]
    ds = CleanDataset.from_arrays(df[list(FEATURES)].to_numpy(float), FEATURES, labels)
    return regroup_labels(ds, ClassGrouping.cicids2017())
