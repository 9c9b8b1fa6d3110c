"""Acceptance gate.

Each test carries ``@pytest.mark.criterion(n)`` and prints one line
``criterion n: PASS|FAIL  detail``; conftest adds a per-criterion summary
at the end of the run. Criteria 8-11 need ``--paper-scale`` and
``--dataset-dir`` (or GANIDS_DATASET_DIR) and are skipped otherwise.
"""
import math
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from ganids.dataio import ClassGrouping, clean, load_dir, regroup_labels
from ganids.forest import ForestConfig, best_split, fit_forest, metrics, predict
from ganids.gan import (
    GanSpec,
    emd_discrete,
    mmd,
    sample,
    train,
    vanilla_d_loss,
    vanilla_g_loss,
)
from ganids.harness import ExperimentSpec, recall_sweep, run_augmentation, run_baseline, stability_check
from ganids.neuralnet import backward, build_mlp, forward, gradient_norm_penalty
from ganids.preprocess import apply_scaler, fit_scaler
from ganids.segment import apportion, build_plan, train_per_segment
from ganids.similarity import cosine_feature, cumulative_series
from ganids.synthetic import desk_dataset
from oracles import (
    brute_gini_root,
    central_diff,
    emd_by_atoms,
    jacobian_input_grad,
    largest_remainder,
    prf,
    rel_err,
    recount,
)


def verdict(n, ok, detail=""):
    print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# -- 1. gradient oracle ----------------------------------------------------


def _random_net(rng, acts):
    depth = int(rng.integers(1, 4))
    sizes = [int(rng.integers(2, 5))] + [int(rng.integers(2, 6)) for _ in range(depth)] + [1]
    hidden = [str(rng.choice(acts)) for _ in range(depth)]
    return build_mlp(sizes, hidden + ["linear"], rng)


def _kink_free(net, rng, n):
    for _ in range(200):
        x = rng.normal(size=(n, net.in_dim))
        _, cache = forward(net, x)
        if all(np.abs(z).min() > 1e-3 for z, l in zip(cache.pre, net.layers) if l.activation == "relu"):
            return x
    raise RuntimeError("no kink-free batch")


@pytest.mark.criterion(1)
def test_c1_gradient_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_bp = worst_gp = 0.0
    for _ in range(50):
        # plain backprop, any activation
        net = _random_net(rng, ["relu", "sigmoid", "linear"])
        x = _kink_free(net, rng, 4)
        u = rng.normal(size=(4, 1))
        _, cache = forward(net, x)
        grads, gx = backward(net, cache, u)

        def loss():
            return float(np.sum(forward(net, x)[0] * u))

        for p, g in zip(net.params() + [x], grads + [gx]):
            worst_bp = max(worst_bp, rel_err(g, central_diff(loss, p)))

        # double backprop through the penalty, relu/linear only
        net = _random_net(rng, ["relu", "linear"])
        x = _kink_free(net, rng, 4)
        layers = [(l.W, l.b, l.activation) for l in net.layers]

        def pen():
            g = np.array([jacobian_input_grad(layers, r) for r in x])
            return float(np.mean((np.linalg.norm(g, axis=1) - 1) ** 2))

        _, pgrads, _ = gradient_norm_penalty(net, x)
        for p, g in zip(net.params(), pgrads):
            worst_gp = max(worst_gp, rel_err(g, central_diff(pen, p)))
    secs = time.perf_counter() - t0
    ok = worst_bp < 1e-4 and worst_gp < 1e-4 and secs < 60
    verdict(1, ok, f"max rel err backprop {worst_bp:.2e}, penalty {worst_gp:.2e}, {secs:.1f}s")


# -- 2. loss unit values -----------------------------------------------------


@pytest.mark.criterion(2)
def test_c2_loss_units():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    half = np.full(16, 0.5)
    d_err = abs(vanilla_d_loss(half, half) - 2 * math.log(2))
    g_err = abs(vanilla_g_loss(half) - math.log(2))
    a = rng.normal(size=(20, 3))
    mmd_self = mmd(a, a)
    emd_err = 0.0
    for _ in range(25):
        # 4 support points per side, masses in units of 1/6
        m = 6
        p = np.bincount(rng.integers(0, 4, m), minlength=4)
        q = np.bincount(rng.integers(0, 4, m), minlength=4)
        cost = rng.integers(0, 10, size=(4, 4)).astype(float)
        want = emd_by_atoms(p.tolist(), q.tolist(), cost)
        emd_err = max(emd_err, abs(emd_discrete(p / m, q / m, cost) - want))
    secs = time.perf_counter() - t0
    ok = d_err <= 1e-12 and g_err <= 1e-12 and mmd_self == 0 and emd_err <= 1e-9 and secs < 60
    verdict(2, ok, f"|D-2ln2|={d_err:.1e} |G-ln2|={g_err:.1e} mmd(a,a)={mmd_self} emd err {emd_err:.1e}")


# -- 3. GAN convergence toy ---------------------------------------------------


def _two_gaussians(seed, n):
    r = np.random.default_rng(seed)
    c = np.where(r.random(n) < 0.5, -2.0, 2.0)
    return np.column_stack([c + 0.5 * r.standard_normal(n), c + 0.5 * r.standard_normal(n)])


@pytest.fixture(scope="module")
def toy_generators():
    x = _two_gaussians(0, 2000)
    sc = fit_scaler(x)
    z = apply_scaler(x, sc)
    t0 = time.perf_counter()
    gens = {k: train(GanSpec.default(k, 2, steps=2000, batch_size=128), z, scaler=sc)
            for k in ("vanilla", "wgan")}
    return gens, time.perf_counter() - t0


@pytest.mark.criterion(3)
def test_c3_mixture_mmd_absolute(toy_generators):
    gens, secs = toy_generators
    ref = _two_gaussians(1, 500)
    vals = {k: mmd(sample(g, 500, seed=1), ref) for k, g in gens.items()}
    ok = all(v < 0.05 for v in vals.values()) and secs < 300
    verdict(3, ok, " ".join(f"{k} mmd={v:.4f}" for k, v in vals.items()) + f" (limit 0.05, train {secs:.0f}s)")


@pytest.mark.criterion(3)
def test_c3_mixture_mmd_calibrated(toy_generators):
    # second route: the limit as 3x the real-vs-real mmd, both measured at the
    # training batch size and averaged over 20 draws
    gens, _ = toy_generators
    n, reps = 128, 20
    rr = float(np.mean([mmd(_two_gaussians(100 + i, n), _two_gaussians(200 + i, n)) for i in range(reps)]))
    vals = {k: float(np.mean([mmd(sample(g, n, seed=i), _two_gaussians(300 + i, n)) for i in range(reps)]))
            for k, g in gens.items()}
    ok = all(v < 3 * rr for v in vals.values())
    verdict(3, ok, f"real-vs-real {rr:.4f}, 3x = {3 * rr:.4f}; "
            + " ".join(f"{k}={v:.4f}" for k, v in vals.items()))


@pytest.mark.criterion(3)
def test_c3_ctgan_label_means():
    r = np.random.default_rng(0)
    n = 1000
    lab = np.repeat([0, 1], n // 2)
    mu = np.array([[0.0, 0.0], [3.0, 1.0]])
    x = mu[lab] + 0.4 * r.standard_normal((n, 2))
    sc = fit_scaler(x)
    t0 = time.perf_counter()
    spec = GanSpec.default("ctgan", 2, label_dim=2, noise_dim=8, steps=3000, batch_size=128)
    g = train(spec, apply_scaler(x, sc), np.eye(2)[lab], scaler=sc, label_names=("a", "b"))
    secs = time.perf_counter() - t0
    errs = [float(np.abs(sample(g, 5000, label=name, seed=5).mean(axis=0) - mu[i]).max())
            for i, name in enumerate("ab")]
    ok = max(errs) < 0.1 and secs < 300
    verdict(3, ok, f"per-label mean error {errs[0]:.3f}, {errs[1]:.3f} (limit 0.1, {secs:.0f}s)")


# -- 4. segmentation algebra ------------------------------------------------


@pytest.mark.criterion(4)
def test_c4_segmentation_algebra():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    partition_ok = True
    for seed in range(5):
        ds = desk_dataset(seed)
        plan = build_plan(ds, "Botnet", "Destination Port")
        rows = np.concatenate([s.row_indices for s in plan.segments])
        partition_ok &= sorted(rows.tolist()) == np.flatnonzero(ds.labels == "Botnet").tolist()
        partition_ok &= len(set(rows.tolist())) == len(rows)
    mismatches = 0
    for _ in range(200):
        sizes = rng.integers(1, 500, size=rng.integers(1, 9)).tolist()
        k = Fraction(int(rng.integers(1, 1600)), 8)
        got = apportion(sizes, float(k))
        want = largest_remainder(sizes, k)
        total = math.floor(k * sum(sizes) + Fraction(1, 2))
        mismatches += got.tolist() != want or int(got.sum()) != total
    secs = time.perf_counter() - t0
    ok = partition_ok and mismatches == 0 and secs < 60
    verdict(4, ok, f"partition {'exact' if partition_ok else 'BROKEN'}, {mismatches}/200 apportion mismatches")


# -- 5. forest oracles ------------------------------------------------------


@pytest.mark.criterion(5)
def test_c5_forest_oracles():
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    checked = bad_root = 0
    while checked < 100:
        X = np.round(rng.normal(size=(6, 3)), 1)
        y = rng.integers(0, 3, size=6)
        if len(set(y.tolist())) < 2:
            continue
        best, argmins = brute_gini_root(X, y, 3)
        split = best_split(X, y, np.arange(6), range(3), 3)
        checked += 1
        if best is None:
            bad_root += split is not None
        else:
            bad_root += not (abs(split[0] - best) <= 1e-12 and (split[1], split[2]) in argmins)

    bad_metrics = 0
    classes = ["p", "q", "r", "s"]
    for _ in range(100):
        n = int(rng.integers(1, 60))
        pred = rng.choice(classes, n).tolist()
        truth = rng.choice(classes, n).tolist()
        rep = metrics(pred, truth, classes)
        for c, counts in recount(pred, truth, classes).items():
            p, r, f = prf(*counts)
            row = rep.row(c)
            bad_metrics += not (row["precision"] == p and row["recall"] == r and row["f1"] == f)

    # two Gaussians whose means differ by 3 sd in every coordinate (d = 4)
    def blobs(seed, n=1000, d=4):
        g = np.random.default_rng(seed)
        return (np.vstack([g.normal(0, 1, (n, d)), g.normal(3, 1, (n, d))]),
                np.array(["a"] * n + ["b"] * n, dtype=object))

    X, y = blobs(0)
    Xt, yt = blobs(100)
    acc = float((predict(fit_forest(X, y, ForestConfig(n_trees=50, seed=0)), Xt) == yt).mean())
    secs = time.perf_counter() - t0
    ok = bad_root == 0 and bad_metrics == 0 and acc >= 0.99 and secs < 120
    verdict(5, ok, f"{bad_root}/100 root mismatches, {bad_metrics} metric mismatches, "
            f"separable accuracy {acc:.4f}, {secs:.0f}s")


# -- 6. desk-scale augmentation ---------------------------------------------


@pytest.mark.criterion(6)
@pytest.mark.slow
@pytest.mark.parametrize("kind", ["wgan", "vanilla", "ctgan"])
def test_c6_desk_augmentation(kind):
    ds = desk_dataset(0)
    t0 = time.perf_counter()
    spec = GanSpec.default(kind, 1, epochs=300, batch_size=64)
    sweep = recall_sweep(ds, spec, [1, 4, 16], range(5), "Destination Port",
                         target_class="Botnet", n_features=None, n_trees=50)
    secs = time.perf_counter() - t0
    med = [float(np.median(sweep[k])) for k in (1.0, 4.0, 16.0)]
    monotone = med[0] <= med[1] <= med[2]
    gain = med[2] - med[0]
    ok = monotone and gain >= 0.15 and secs < 900
    verdict(6, ok, f"{kind} median recall k=1,4,16: {med[0]:.3f} {med[1]:.3f} {med[2]:.3f}, "
            f"gain {gain:.3f} (need >= 0.15), {secs:.0f}s")


# -- 7. similarity algebra --------------------------------------------------


@pytest.mark.criterion(7)
def test_c7_similarity_algebra():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst_scale = worst_self = 0.0
    perm_ok = True
    for _ in range(100):
        a = rng.lognormal(size=int(rng.integers(2, 200)))
        b = rng.normal(size=int(rng.integers(2, 200)))
        lam = float(rng.uniform(1e-3, 1e3))
        worst_scale = max(worst_scale, abs(cosine_feature(a, lam * b) - cosine_feature(a, b)),
                          abs(cosine_feature(lam * a, b) - cosine_feature(a, b)))
        worst_self = max(worst_self, abs(cosine_feature(a, a) - 1.0))
        perm_ok &= np.array_equal(cumulative_series(a)[1], cumulative_series(rng.permutation(a))[1])
    secs = time.perf_counter() - t0
    ok = worst_scale < 1e-9 and worst_self < 1e-12 and perm_ok and secs < 60
    verdict(7, ok, f"scale drift {worst_scale:.1e}, self drift {worst_self:.1e}, "
            f"permutation {'invariant' if perm_ok else 'VARIES'}")


# -- 8-11. full-dataset reproduction ----------------------------------------


@pytest.fixture(scope="module")
def paper_data(paper_dataset):
    raw = clean(load_dir(paper_dataset))
    return raw, regroup_labels(raw, ClassGrouping.cicids2017())


@pytest.fixture(scope="module")
def paper_baseline(paper_data):
    return run_baseline(paper_data[1], n_features=32, forest_config=ForestConfig(n_trees=100, seed=0))


@pytest.fixture(scope="module")
def paper_wgan_runs(paper_data):
    ds = paper_data[1]
    plan = build_plan(ds, "Botnet", "Destination Port")
    base = GanSpec.default("wgan", 1)
    out = []
    for s in range(3):
        gens = train_per_segment(plan, ds, replace(base, seed=s))
        spec = ExperimentSpec("wgan", 99.0, "replace", s, s, s, "Botnet", n_features=32)
        out.append(run_augmentation(ds, spec, plan, gens, ForestConfig(n_trees=100, seed=s)))
    return out


@pytest.mark.criterion(8)
@pytest.mark.paper_scale
def test_c8_counts(paper_data):
    raw, grouped = paper_data
    got = (raw.class_counts.get("Bot", 0), grouped.class_counts.get("DoS", 0), grouped.class_counts.get("Benign", 0))
    verdict(8, got == (1956, 251723, 2271320), f"Bot {got[0]}, DoS {got[1]}, Benign {got[2]}")


@pytest.mark.criterion(9)
@pytest.mark.paper_scale
def test_c9_baseline(paper_baseline):
    acc = paper_baseline.accuracy
    f1 = paper_baseline.row("Botnet")["f1"]
    ok = abs(acc - 0.9972) <= 0.003 and abs(f1 - 0.60) <= 0.10
    verdict(9, ok, f"accuracy {acc:.4f} (0.9972 +- 0.003), Botnet F1 {f1:.3f} (0.60 +- 0.10)")


@pytest.mark.criterion(10)
@pytest.mark.paper_scale
def test_c10_wgan_k99(paper_wgan_runs):
    rows = [r.target_row("original") for r in paper_wgan_runs]
    p, r, f = (float(np.median([row[m] for row in rows])) for m in ("precision", "recall", "f1"))
    ok = p >= 0.95 and abs(r - 0.82) <= 0.08 and abs(f - 0.90) <= 0.06
    verdict(10, ok, f"median P {p:.3f} (>= 0.95), R {r:.3f} (0.82 +- 0.08), F1 {f:.3f} (0.90 +- 0.06)")


@pytest.mark.criterion(11)
@pytest.mark.paper_scale
def test_c11_stability(paper_baseline, paper_wgan_runs):
    out = stability_check(paper_baseline, paper_wgan_runs[0].full_per_class, "Botnet", tolerance=0.04)
    worst = max(v["max_delta"] for v in out.values())
    verdict(11, all(v["pass"] for v in out.values()), f"largest non-Botnet metric move {worst:.4f} (limit 0.04)")
