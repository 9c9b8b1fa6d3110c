"""Vanilla GAN, WGAN (weight clipping) and a conditional tabular GAN whose
generator minimises MMD while its critic trains under a gradient penalty.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import cdist, pdist

from .errors import DataError, NumericError
from .neuralnet import (
    Mlp,
    OptState,
    adam_step,
    backward,
    build_mlp,
    clip_weights,
    forward,
    gradient_norm_penalty,
    load_mlp,
    save_mlp,
)
from .preprocess import ScalerParams, invert_scaler
from .utils import atomic_open, derive_seed, make_rng, read_json, write_json

log = logging.getLogger(__name__)

KINDS = ("vanilla", "wgan", "ctgan")
LOG_EPS = 1e-12


# -- losses ---------------------------------------------------------------


def vanilla_d_loss(d_real, d_fake) -> float:
    d_real = np.clip(np.asarray(d_real, float), LOG_EPS, 1.0 - LOG_EPS)
    d_fake = np.clip(np.asarray(d_fake, float), LOG_EPS, 1.0 - LOG_EPS)
    return float(-np.mean(np.log(d_real)) - np.mean(np.log1p(-d_fake)))


def vanilla_g_loss(d_fake) -> float:
    """Non-saturating generator loss ``-mean(log D(G(z)))``."""
    d_fake = np.clip(np.asarray(d_fake, float), LOG_EPS, 1.0 - LOG_EPS)
    return float(-np.mean(np.log(d_fake)))


def wgan_losses(critic_real, critic_fake) -> tuple[float, float]:
    critic_real = np.asarray(critic_real, float)
    critic_fake = np.asarray(critic_fake, float)
    d_loss = float(np.mean(critic_fake) - np.mean(critic_real))
    return d_loss, float(-np.mean(critic_fake))


def emd_discrete(p_weights, q_weights, cost) -> float:
    """Exact optimal-transport cost between two discrete distributions.

    ``cost[i, j]`` is the ground distance between point i of P and point j
    of Q. Solved as a small LP; meant as a test oracle, not for large inputs.
    """
    p = np.asarray(p_weights, float)
    q = np.asarray(q_weights, float)
    C = np.asarray(cost, float)
    if C.shape != (len(p), len(q)):
        raise ValueError(f"cost table {C.shape} does not match {len(p)}x{len(q)} masses")
    if not np.isclose(p.sum(), q.sum(), rtol=1e-12, atol=1e-12):
        raise ValueError(f"total masses differ: {p.sum()} vs {q.sum()}")
    m, n = C.shape
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n : (i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([p, q]), bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def median_bandwidth(a, b) -> float:
    pooled = np.vstack([a, b])
    if len(pooled) < 2:
        return 1.0
    med = float(np.median(pdist(pooled)))
    return med if med > 0 else 1.0


def _kernels(a, b, bw):
    s = 2.0 * bw * bw
    return (
        np.exp(-cdist(a, a, "sqeuclidean") / s),
        np.exp(-cdist(b, b, "sqeuclidean") / s),
        np.exp(-cdist(a, b, "sqeuclidean") / s),
    )


def mmd(batch_a, batch_b, bandwidth: float | None = None) -> float:
    """Biased (V-statistic) squared MMD under a Gaussian kernel.

    The bandwidth defaults to the median pairwise distance of the pooled
    sample.
    """
    a = np.atleast_2d(np.asarray(batch_a, float))
    b = np.atleast_2d(np.asarray(batch_b, float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("mmd inputs must have equal widths")
    bw = median_bandwidth(a, b) if bandwidth is None else float(bandwidth)
    kaa, kbb, kab = _kernels(a, b, bw)
    return float(max(kaa.mean() + kbb.mean() - 2.0 * kab.mean(), 0.0))


def mmd_and_grad(a, b, bandwidth: float | None = None):
    """MMD and its gradient w.r.t. ``a`` (bandwidth held fixed)."""
    bw = median_bandwidth(a, b) if bandwidth is None else float(bandwidth)
    kaa, kbb, kab = _kernels(a, b, bw)
    n, m = len(a), len(b)
    value = kaa.mean() + kbb.mean() - 2.0 * kab.mean()
    s2 = bw * bw
    g_aa = kaa.sum(axis=1, keepdims=True) * a - kaa @ a
    g_ab = kab.sum(axis=1, keepdims=True) * a - kab @ b
    grad = -(2.0 / (n * n * s2)) * g_aa + (2.0 / (n * m * s2)) * g_ab
    return float(value), grad


def gradient_penalty(critic: Mlp, real_batch, fake_batch, seed=0, cols=None) -> float:
    """Mean ``(||grad_x critic(x_hat)|| - 1)^2`` on random interpolates."""
    value, _ = _penalty_terms(critic, real_batch, fake_batch, np.random.default_rng(seed), False, cols)
    return value


def _penalty_terms(critic, real, fake, rng, training, cols):
    real = np.asarray(real, float)
    fake = np.asarray(fake, float)
    if real.shape != fake.shape:
        raise ValueError("real and fake batches differ in shape")
    eps = rng.uniform(size=(len(real), 1))
    x_hat = eps * real + (1.0 - eps) * fake
    value, grads, _ = gradient_norm_penalty(critic, x_hat, training=training, rng=rng, cols=cols)
    return value, grads


# -- specs and artifacts --------------------------------------------------


@dataclass
class GanSpec:
    kind: str
    data_dim: int
    noise_dim: int = 32
    label_dim: int | None = None
    epochs: int = 300
    batch_size: int = 128
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.9
    n_critic: int | None = None
    clip_value: float | None = None
    gp_lambda: float | None = None
    mmd_bandwidth: float | None = None  # None: median heuristic per batch
    steps: int | None = None  # overrides epochs when set
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown GAN kind {self.kind!r}")
        need = {
            "vanilla": set(),
            "wgan": {"n_critic", "clip_value"},
            "ctgan": {"n_critic", "gp_lambda", "label_dim"},
        }[self.kind]
        for name in ("n_critic", "clip_value", "gp_lambda", "label_dim"):
            present = getattr(self, name) is not None
            if present and name not in need:
                raise ValueError(f"{name} is not used by kind {self.kind!r}")
            if not present and name in need:
                raise ValueError(f"kind {self.kind!r} requires {name}")
        if self.data_dim < 1 or self.noise_dim < 1 or self.batch_size < 1:
            raise ValueError("dimensions and batch size must be positive")

    @classmethod
    def default(cls, kind: str, data_dim: int, label_dim: int | None = None, **kw) -> "GanSpec":
        extra = {
            "vanilla": {},
            "wgan": {"n_critic": 5, "clip_value": 0.01},
            "ctgan": {"n_critic": 5, "gp_lambda": 10.0, "label_dim": label_dim or 1},
        }[kind]
        extra.update(kw)
        return cls(kind=kind, data_dim=data_dim, **extra)

    def total_steps(self, n_rows: int) -> int:
        if self.steps is not None:
            return int(self.steps)
        per_epoch = max(1, -(-n_rows // self.batch_size))
        return self.epochs * per_epoch

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossTrace:
    d_loss: list = field(default_factory=list)
    g_loss: list = field(default_factory=list)

    def append(self, d, g):
        self.d_loss.append(float(d))
        self.g_loss.append(float(g))

    def __len__(self):
        return len(self.d_loss)

    def write_csv(self, path) -> None:
        with atomic_open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "d_loss", "g_loss"])
            for i, (d, g) in enumerate(zip(self.d_loss, self.g_loss)):
                w.writerow([i, repr(d), repr(g)])

    @classmethod
    def read_csv(cls, path) -> "LossTrace":
        t = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                t.append(float(row["d_loss"]), float(row["g_loss"]))
        return t


@dataclass
class TrainedGenerator:
    generator: Mlp
    spec: GanSpec
    scaler: ScalerParams
    feature_names: tuple = ()
    label_names: tuple = ()
    segment: dict | None = None
    trace: LossTrace = field(default_factory=LossTrace)
    critic: Mlp | None = None


def build_networks(spec: GanSpec, rng):
    """Generator and discriminator/critic for ``spec.kind``."""
    d = spec.data_dim
    if spec.kind in ("vanilla", "wgan"):
        gen = build_mlp([spec.noise_dim, 25, 50, d], ["relu", "relu", "sigmoid"], rng)
        last = "sigmoid" if spec.kind == "vanilla" else "linear"
        disc = build_mlp([d, 50, 100, 1], ["relu", "relu", last], rng)
        return gen, disc
    g_in = spec.noise_dim + spec.label_dim
    gen = build_mlp(
        [g_in, g_in, 2 * g_in, 4 * g_in, d], ["relu", "relu", "relu", "sigmoid"], rng
    )
    c_in = d + spec.label_dim
    disc = build_mlp(
        [c_in, 4 * c_in, 2 * c_in, c_in, 1],
        ["relu", "relu", "relu", "linear"],
        rng,
        dropouts=[0.1, 0.1, 0.0, 0.0],
    )
    return gen, disc


# -- training -------------------------------------------------------------


def _add(acc, grads, scale=1.0):
    if acc is None:
        return [g * scale for g in grads]
    for a, g in zip(acc, grads):
        a += g * scale
    return acc


def train(spec: GanSpec, data, labels=None, scaler: ScalerParams | None = None,
          feature_names=(), label_names=(), segment=None) -> TrainedGenerator:
    """Train one GAN on ``data`` scaled to [0, 1]; deterministic per ``spec.seed``."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != spec.data_dim:
        raise DataError(f"data shape {data.shape} does not match data_dim={spec.data_dim}")
    if len(data) == 0:
        raise DataError("cannot train a GAN on zero rows")
    if data.min() < 0.0 or data.max() > 1.0:
        raise DataError("GAN training data must be scaled to [0, 1]")
    if spec.kind == "ctgan":
        if labels is None:
            raise DataError("ctgan needs one-hot labels")
        labels = np.asarray(labels, dtype=np.float64)
        if labels.shape != (len(data), spec.label_dim):
            raise DataError(f"labels shape {labels.shape} != ({len(data)}, {spec.label_dim})")

    rng = make_rng(spec.seed, "train")
    gen, disc = build_networks(spec, make_rng(spec.seed, "init"))
    g_opt = OptState(spec.learning_rate, spec.beta1, spec.beta2)
    d_opt = OptState(spec.learning_rate, spec.beta1, spec.beta2)
    trace = LossTrace()
    n = len(data)
    bs = min(spec.batch_size, n)

    def real_batch():
        idx = rng.choice(n, size=bs, replace=False)
        return data[idx], (labels[idx] if labels is not None else None)

    def noise(lab):
        z = rng.standard_normal((bs, spec.noise_dim))
        return z if lab is None else np.hstack([z, lab])

    for step in range(spec.total_steps(n)):
        if spec.kind == "vanilla":
            d_loss, g_loss = _vanilla_step(gen, disc, g_opt, d_opt, real_batch, noise, rng)
        elif spec.kind == "wgan":
            d_loss, g_loss = _wgan_step(spec, gen, disc, g_opt, d_opt, real_batch, noise, rng)
        else:
            d_loss, g_loss = _ctgan_step(spec, gen, disc, g_opt, d_opt, real_batch, noise, rng)
        trace.append(d_loss, g_loss)
        if not (np.isfinite(d_loss) and np.isfinite(g_loss)):
            raise NumericError(f"non-finite loss at step {step}", step=step, trace=trace)

    if scaler is None:
        scaler = ScalerParams(np.zeros(spec.data_dim), np.ones(spec.data_dim))
    return TrainedGenerator(
        gen, spec, scaler, tuple(feature_names), tuple(label_names), segment, trace, disc
    )


def _vanilla_step(gen, disc, g_opt, d_opt, real_batch, noise, rng):
    real, _ = real_batch()
    fake, _ = forward(gen, noise(None))
    m = len(real)
    p_real, c_real = forward(disc, real)
    p_fake, c_fake = forward(disc, fake)
    d_loss = vanilla_d_loss(p_real, p_fake)
    gr, _ = backward(disc, c_real, -1.0 / (m * np.clip(p_real, LOG_EPS, None)))
    gf, _ = backward(disc, c_fake, 1.0 / (m * np.clip(1.0 - p_fake, LOG_EPS, None)))
    adam_step(disc.params(), _add(gr, gf), d_opt)

    fake, g_cache = forward(gen, noise(None))
    p_fake, c_fake = forward(disc, fake)
    g_loss = vanilla_g_loss(p_fake)
    _, gx = backward(disc, c_fake, -1.0 / (m * np.clip(p_fake, LOG_EPS, None)))
    gg, _ = backward(gen, g_cache, gx)
    adam_step(gen.params(), gg, g_opt)
    return d_loss, g_loss


def _wgan_step(spec, gen, disc, g_opt, d_opt, real_batch, noise, rng):
    for _ in range(spec.n_critic):
        real, _ = real_batch()
        fake, _ = forward(gen, noise(None))
        m = len(real)
        f_real, c_real = forward(disc, real)
        f_fake, c_fake = forward(disc, fake)
        d_loss, _ = wgan_losses(f_real, f_fake)
        gr, _ = backward(disc, c_real, np.full_like(f_real, -1.0 / m))
        gf, _ = backward(disc, c_fake, np.full_like(f_fake, 1.0 / m))
        adam_step(disc.params(), _add(gr, gf), d_opt)
        clip_weights(disc, spec.clip_value)

    fake, g_cache = forward(gen, noise(None))
    f_fake, c_fake = forward(disc, fake)
    g_loss = float(-np.mean(f_fake))
    _, gx = backward(disc, c_fake, np.full_like(f_fake, -1.0 / len(fake)))
    gg, _ = backward(gen, g_cache, gx)
    adam_step(gen.params(), gg, g_opt)
    return d_loss, g_loss


def _ctgan_step(spec, gen, disc, g_opt, d_opt, real_batch, noise, rng):
    d = spec.data_dim
    cols = np.arange(d)
    for _ in range(spec.n_critic):
        real, lab = real_batch()
        fake, _ = forward(gen, noise(lab))
        m = len(real)
        real_in = np.hstack([real, lab])
        fake_in = np.hstack([fake, lab])
        f_real, c_real = forward(disc, real_in, training=True, rng=rng)
        f_fake, c_fake = forward(disc, fake_in, training=True, rng=rng)
        w_loss, _ = wgan_losses(f_real, f_fake)
        gp, gp_grads = _penalty_terms(disc, real_in, fake_in, rng, True, cols)
        gr, _ = backward(disc, c_real, np.full_like(f_real, -1.0 / m))
        gf, _ = backward(disc, c_fake, np.full_like(f_fake, 1.0 / m))
        grads = _add(_add(gr, gf), gp_grads, spec.gp_lambda)
        adam_step(disc.params(), grads, d_opt)
        d_loss = w_loss + spec.gp_lambda * gp

    real, lab = real_batch()
    fake, g_cache = forward(gen, noise(lab))
    g_loss, grad = mmd_and_grad(
        np.hstack([fake, lab]), np.hstack([real, lab]), spec.mmd_bandwidth
    )
    gg, _ = backward(gen, g_cache, grad[:, :d])
    adam_step(gen.params(), gg, g_opt)
    return d_loss, g_loss


def train_critic(critic: Mlp, real, fake, steps: int, lr: float = 1e-2,
                 clip_value: float | None = None, gp_lambda: float | None = None, seed: int = 0):
    """Fit a critic alone between two fixed samples; returns the d_loss trace.

    Used to probe how well the critic loss tracks the transport distance.
    """
    rng = np.random.default_rng(seed)
    opt = OptState(lr, 0.5, 0.9)
    real = np.asarray(real, float)
    fake = np.asarray(fake, float)
    out = []
    for _ in range(steps):
        f_real, c_real = forward(critic, real)
        f_fake, c_fake = forward(critic, fake)
        d_loss, _ = wgan_losses(f_real, f_fake)
        gr, _ = backward(critic, c_real, np.full_like(f_real, -1.0 / len(real)))
        gf, _ = backward(critic, c_fake, np.full_like(f_fake, 1.0 / len(fake)))
        grads = _add(gr, gf)
        if gp_lambda:
            _, gp_grads = _penalty_terms(critic, real, fake, rng, False, None)
            grads = _add(grads, gp_grads, gp_lambda)
        adam_step(critic.params(), grads, opt)
        if clip_value is not None:
            clip_weights(critic, clip_value)
        out.append(d_loss)
    return out


# -- sampling -------------------------------------------------------------


def sample_scaled(gen: TrainedGenerator, n: int, label=None, seed: int = 0) -> np.ndarray:
    """Generator output in [0, 1] (before undoing the scaler)."""
    spec = gen.spec
    if spec.kind == "ctgan":
        if label is None:
            raise DataError("ctgan sampling requires a label")
        if label not in gen.label_names:
            raise DataError(f"unknown label {label!r}; known: {list(gen.label_names)}")
    elif label is not None:
        raise DataError(f"{spec.kind} generators are unconditional")
    if n == 0:
        return np.empty((0, spec.data_dim))
    rng = np.random.default_rng(derive_seed(spec.seed, f"sample:{seed}:{label}"))
    z = rng.standard_normal((n, spec.noise_dim))
    if spec.kind == "ctgan":
        onehot = np.zeros((n, spec.label_dim))
        onehot[:, list(gen.label_names).index(label)] = 1.0
        z = np.hstack([z, onehot])
    out, _ = forward(gen.generator, z)
    return out


def sample(gen: TrainedGenerator, n: int, label=None, seed: int = 0) -> np.ndarray:
    return invert_scaler(sample_scaled(gen, n, label, seed), gen.scaler)


# -- persistence ----------------------------------------------------------


def save_generator(gen: TrainedGenerator, prefix) -> None:
    prefix = Path(prefix)
    save_mlp(gen.generator, prefix.with_suffix(".weights"), {"seed": gen.spec.seed, "kind": gen.spec.kind})
    gen.trace.write_csv(prefix.with_suffix(".loss.csv"))
    write_json(
        prefix.with_suffix(".manifest.json"),
        {
            "kind": gen.spec.kind,
            "spec": gen.spec.to_dict(),
            "scaler": gen.scaler.to_dict(),
            "feature_names": list(gen.feature_names),
            "label_names": list(gen.label_names),
            "segment": gen.segment,
            "weights": prefix.with_suffix(".weights").name,
        },
    )


def load_generator(prefix) -> TrainedGenerator:
    prefix = Path(prefix)
    man = read_json(prefix.with_suffix(".manifest.json"))
    net = load_mlp(prefix.parent / man["weights"])
    trace_path = prefix.with_suffix(".loss.csv")
    trace = LossTrace.read_csv(trace_path) if trace_path.exists() else LossTrace()
    return TrainedGenerator(
        net,
        GanSpec(**man["spec"]),
        ScalerParams.from_dict(man["scaler"]),
        tuple(man["feature_names"]),
        tuple(man["label_names"]),
        man["segment"],
        trace,
    )
