"""Fully-connected networks in numpy: forward/backward, Adam, and the
second-order pass needed to train a critic under a gradient penalty.

Weights are stored ``(fan_out, fan_in)``; batches are row-major, so a layer
computes ``z = x @ W.T + b``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .utils import atomic_open, write_json

ACTIVATIONS = ("relu", "sigmoid", "linear")
WEIGHTS_MAGIC = b"GANIDSW\x00"
WEIGHTS_VERSION = 1


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "linear"
    dropout: float = 0.0

    @property
    def fan_in(self) -> int:
        return self.W.shape[1]

    @property
    def fan_out(self) -> int:
        return self.W.shape[0]


@dataclass
class Mlp:
    layers: list

    def __post_init__(self):
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
            if not 0.0 <= layer.dropout < 1.0:
                raise ValueError(f"layer {i}: dropout must be in [0, 1)")
        for a, b in zip(self.layers, self.layers[1:]):
            if b.fan_in != a.fan_out:
                raise ValueError(f"layer widths do not chain: {a.fan_out} -> {b.fan_in}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def out_dim(self) -> int:
        return self.layers[-1].fan_out

    def params(self) -> list:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.W.copy(), l.b.copy(), l.activation, l.dropout) for l in self.layers])

    def architecture(self) -> list:
        return [
            {"fan_in": l.fan_in, "fan_out": l.fan_out, "activation": l.activation, "dropout": l.dropout}
            for l in self.layers
        ]


def init_he_uniform(fan_in: int, fan_out: int, rng) -> np.ndarray:
    """Uniform on [-sqrt(6/fan_in), sqrt(6/fan_in)], shape (fan_out, fan_in)."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def build_mlp(sizes: Sequence[int], activations: Sequence[str], rng, dropouts=None) -> Mlp:
    """``sizes`` lists every width including the input, e.g. ``[32, 25, 50, 7]``."""
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    dropouts = dropouts or [0.0] * len(activations)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    layers = [
        Layer(init_he_uniform(fi, fo, rng), np.zeros(fo), act, p)
        for fi, fo, act, p in zip(sizes[:-1], sizes[1:], activations, dropouts)
    ]
    return Mlp(layers)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        return _sigmoid(z)
    return z


@dataclass
class Cache:
    inputs: list = field(default_factory=list)  # input to each layer
    pre: list = field(default_factory=list)  # pre-activations z
    post: list = field(default_factory=list)  # activations before dropout
    masks: list = field(default_factory=list)  # scaled dropout masks or None


def forward(net: Mlp, X, training: bool = False, rng=None):
    """Return ``(output, cache)``.

    Dropout is inverted (survivors scaled by 1/(1-p)) and only active when
    ``training``; masks come from ``rng`` (a Generator or an int seed).
    """
    a = np.asarray(X, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.in_dim:
        raise DataError(f"batch shape {a.shape} does not match network input width {net.in_dim}")
    if training and rng is not None and not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    cache = Cache()
    for layer in net.layers:
        cache.inputs.append(a)
        z = a @ layer.W.T + layer.b
        h = _activate(z, layer.activation)
        mask = None
        if training and layer.dropout > 0.0:
            if rng is None:
                raise ValueError("training-mode dropout needs an rng")
            keep = 1.0 - layer.dropout
            mask = (rng.random(h.shape) < keep) / keep
            a = h * mask
        else:
            a = h
        cache.pre.append(z)
        cache.post.append(h)
        cache.masks.append(mask)
    return a, cache


def _local_derivative(cache: Cache, i: int, layer: Layer):
    """d(layer output)/d(pre-activation), elementwise, dropout included."""
    if layer.activation == "relu":
        d = (cache.pre[i] > 0).astype(np.float64)
    elif layer.activation == "sigmoid":
        s = cache.post[i]
        d = s * (1.0 - s)
    else:
        d = np.ones_like(cache.pre[i])
    if cache.masks[i] is not None:
        d = d * cache.masks[i]
    return d


def backward(net: Mlp, cache: Cache, grad_out):
    """Backpropagate ``grad_out`` (dLoss/dOutput).

    Returns ``(grads, grad_input)`` where ``grads`` is aligned with
    ``net.params()``.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if len(cache.pre) != len(net.layers) or g.shape != cache.pre[-1].shape:
        raise DataError("cache does not match this network or gradient shape")
    grads = [None] * (2 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if cache.pre[i].shape[1] != layer.fan_out:
            raise DataError("stale cache: layer width changed")
        delta = g * _local_derivative(cache, i, layer)
        grads[2 * i] = delta.T @ cache.inputs[i]
        grads[2 * i + 1] = delta.sum(axis=0)
        g = delta @ layer.W
    return grads, g


def input_gradient(net: Mlp, X, training: bool = False, rng=None):
    """Gradient of the (scalar) network output w.r.t. each input row."""
    if net.out_dim != 1:
        raise ValueError("input_gradient needs a scalar-output network")
    out, cache = forward(net, X, training=training, rng=rng)
    _, gx = backward(net, cache, np.ones_like(out))
    return gx, cache


def input_gradient_norm(net: Mlp, X) -> np.ndarray:
    gx, _ = input_gradient(net, X)
    return np.linalg.norm(gx, axis=1)


def gradient_norm_penalty(net: Mlp, X, training: bool = False, rng=None, cols=None):
    """``mean((||d net / d x|| - 1)^2)`` and its gradient w.r.t. ``net.params()``.

    Differentiating the input gradient w.r.t. the weights is a second-order
    problem. For relu/linear layers the per-unit derivatives are piecewise
    constant, so the input gradient is a linear chain
    ``g = u D_L W_L ... D_1 W_1`` and its weight-derivative can be pushed
    forward through the same chain. Biases only move the relu gates, so
    their gradient is zero almost everywhere.

    ``cols`` restricts the norm to a subset of input columns (conditional
    critics take the penalty on the data part only).
    """
    for layer in net.layers:
        if layer.activation == "sigmoid":
            raise ValueError("gradient penalty supports relu/linear layers only")
    out, cache = forward(net, X, training=training, rng=rng)
    n = out.shape[0]
    L = len(net.layers)
    deltas = [None] * L
    g = np.ones_like(out)
    derivs = [_local_derivative(cache, i, net.layers[i]) for i in range(L)]
    for i in range(L - 1, -1, -1):
        deltas[i] = g * derivs[i]
        g = deltas[i] @ net.layers[i].W
    gx = g if cols is None else g[:, cols]
    norms = np.linalg.norm(gx, axis=1)
    penalty = float(np.mean((norms - 1.0) ** 2))

    safe = np.where(norms > 0, norms, 1.0)
    v_sel = (2.0 / n) * ((norms - 1.0) / safe)[:, None] * gx
    v_sel[norms == 0] = 0.0
    if cols is None:
        s = v_sel
    else:
        s = np.zeros_like(g)
        s[:, cols] = v_sel

    grads = []
    for i in range(L):
        layer = net.layers[i]
        grads.append(deltas[i].T @ s)
        grads.append(np.zeros_like(layer.b))
        s = (s @ layer.W.T) * derivs[i]
    return penalty, grads, norms


@dataclass
class OptState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.9
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: list, grads: list, state: OptState) -> list:
    """Bias-corrected Adam update, applied in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(grads) != len(params):
        raise ValueError("grads and params differ in length")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def clip_weights(net: Mlp, clip: float) -> None:
    for p in net.params():
        np.clip(p, -clip, clip, out=p)


# -- persistence ----------------------------------------------------------
#
# layout: magic(8) | u32 version | u64 header_len | header JSON
#         | per layer: W (fan_out*fan_in) then b (fan_out), little-endian f64


def save_mlp(net: Mlp, path, meta: dict | None = None) -> None:
    header = json.dumps({"layers": net.architecture()}).encode()
    with atomic_open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<IQ", WEIGHTS_VERSION, len(header)))
        fh.write(header)
        for layer in net.layers:
            fh.write(np.ascontiguousarray(layer.W, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(layer.b, dtype="<f8").tobytes())
    sidecar = {"architecture": net.architecture(), **(meta or {})}
    write_json(Path(str(path) + ".json"), sidecar)


def load_mlp(path) -> Mlp:
    buf = Path(path).read_bytes()
    if buf[:8] != WEIGHTS_MAGIC:
        raise DataError(f"{path}: not a weights file")
    version, hlen = struct.unpack_from("<IQ", buf, 8)
    if version != WEIGHTS_VERSION:
        raise DataError(f"{path}: unsupported weights version {version}")
    off = 20
    header = json.loads(buf[off : off + hlen])
    off += hlen
    layers = []
    for spec in header["layers"]:
        fo, fi = spec["fan_out"], spec["fan_in"]
        W = np.frombuffer(buf, "<f8", fo * fi, off).reshape(fo, fi).copy()
        off += 8 * fo * fi
        b = np.frombuffer(buf, "<f8", fo, off).copy()
        off += 8 * fo
        layers.append(Layer(W, b, spec["activation"], spec["dropout"]))
    return Mlp(layers)
