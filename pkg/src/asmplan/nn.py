"""Minimal dense network with exact gradients.

Hand-rolled on purpose: the training losses here are simple enough that
a general autodiff graph would be overkill, and an independent analytic
backward pass is what makes the finite-difference gradient checks a real
cross-validation rather than a tautology.

All parameters and activations are float64.  Forward takes a 2D batch
(rows are samples); backward returns the exact gradient of whatever
scalar the caller's upstream gradient encodes (no hidden batch scaling).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Mlp",
    "Gradients",
    "OptimizerState",
    "init",
    "forward",
    "backward",
    "apply_update",
    "gradient_check",
    "save_snapshot",
    "load_snapshot",
]

SNAPSHOT_FORMAT = "asmplan-mlp"
SNAPSHOT_VERSION = 1


@dataclass
class Mlp:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden: str = "relu"

    def copy(self) -> "Mlp":
        return Mlp(
            layer_sizes=self.layer_sizes,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            hidden=self.hidden,
        )

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class Gradients:
    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.d_weights, self.d_biases):
            out.append(w)
            out.append(b)
        return out

    def scaled(self, c: float) -> "Gradients":
        return Gradients(
            d_weights=[c * g for g in self.d_weights],
            d_biases=[c * g for g in self.d_biases],
        )

    def add(self, other: "Gradients") -> "Gradients":
        for mine, theirs in zip(self.parameters(), other.parameters()):
            mine += theirs
        return self


def init(layer_sizes, seed: int | None = None, hidden: str = "relu") -> Mlp:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ValueError(f"need at least input and output layers, got {sizes}")
    if any(s < 1 for s in sizes):
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    if hidden not in ("relu", "tanh"):
        raise ValueError(f"hidden activation must be relu or tanh, got {hidden!r}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(layer_sizes=sizes, weights=weights, biases=biases, hidden=hidden)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    return 1.0 - a * a


def forward(mlp: Mlp, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Batched forward pass; returns (output, cache for backward).

    ``x`` has shape (batch, layer_sizes[0]); the output layer is linear.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != mlp.layer_sizes[0]:
        raise ValueError(
            f"expected input of shape (batch, {mlp.layer_sizes[0]}), got {x.shape}"
        )
    cache = [(None, x)]
    a = x
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = a @ w + b
        a = z if i == last else _activate(z, mlp.hidden)
        cache.append((z, a))
    return a, cache


def backward(mlp: Mlp, cache: list, grad_out: np.ndarray) -> Gradients:
    """Exact parameter gradients for the upstream gradient ``grad_out``."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    out = cache[-1][1]
    if grad_out.shape != out.shape:
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match output {out.shape}"
        )
    n_layers = len(mlp.weights)
    d_weights: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    d_biases: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    delta = grad_out  # output layer is linear
    for i in range(n_layers - 1, -1, -1):
        a_prev = cache[i][1]
        d_weights[i] = a_prev.T @ delta
        d_biases[i] = delta.sum(axis=0)
        if i > 0:
            z_prev, a_prev_act = cache[i]
            delta = (delta @ mlp.weights[i].T) * _activate_grad(
                z_prev, a_prev_act, mlp.hidden
            )
    return Gradients(d_weights=d_weights, d_biases=d_biases)


@dataclass
class OptimizerState:
    kind: str
    lr: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def sgd(cls, lr: float) -> "OptimizerState":
        return cls(kind="sgd", lr=lr)

    @classmethod
    def adam(cls, lr: float = 1e-3) -> "OptimizerState":
        return cls(kind="adam", lr=lr)


def apply_update(mlp: Mlp, grads: Gradients, opt: OptimizerState) -> Mlp:
    """One optimizer step, in place; returns the same Mlp."""
    params = mlp.parameters()
    gs = grads.parameters()
    if len(params) != len(gs) or any(
        p.shape != g.shape for p, g in zip(params, gs)
    ):
        raise ValueError("gradient shapes do not match parameters")
    if opt.kind == "sgd":
        for p, g in zip(params, gs):
            p -= opt.lr * g
        opt.step += 1
        return mlp
    if opt.kind != "adam":
        raise ValueError(f"unknown optimizer kind {opt.kind!r}")
    if not opt.m:
        opt.m = [np.zeros_like(p) for p in params]
        opt.v = [np.zeros_like(p) for p in params]
    opt.step += 1
    b1c = 1.0 - opt.beta1 ** opt.step
    b2c = 1.0 - opt.beta2 ** opt.step
    for p, g, m, v in zip(params, gs, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p -= opt.lr * (m / b1c) / (np.sqrt(v / b2c) + opt.eps)
    return mlp


def gradient_check(mlp: Mlp, loss_and_grad, tolerance: float = 1e-6,
                   h: float = 1e-5) -> dict:
    """Compare analytic gradients against central finite differences.

    ``loss_and_grad(mlp)`` returns (scalar loss, Gradients).  Every
    parameter is perturbed by +-h and the relative error
    |analytic - numeric| / max(|analytic|, |numeric|, 1) is reported.
    """
    _, analytic = loss_and_grad(mlp)
    analytic_params = analytic.parameters()
    params = mlp.parameters()
    max_rel = 0.0
    worst = None
    checked = 0
    for pi, p in enumerate(params):
        a_grad = analytic_params[pi]
        flat = p.reshape(-1)
        a_flat = a_grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            plus, _ = loss_and_grad(mlp)
            flat[j] = orig - h
            minus, _ = loss_and_grad(mlp)
            flat[j] = orig
            numeric = (plus - minus) / (2.0 * h)
            a = a_flat[j]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
            checked += 1
            if rel > max_rel:
                max_rel = rel
                worst = (pi, j, float(a), float(numeric))
    return {
        "max_rel_error": max_rel,
        "tolerance": tolerance,
        "passed": max_rel < tolerance,
        "params_checked": checked,
        "worst": worst,
    }


def save_snapshot(mlp: Mlp, path: str | Path) -> None:
    doc = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "layer_sizes": list(mlp.layer_sizes),
        "hidden": mlp.hidden,
        "weights": [w.tolist() for w in mlp.weights],
        "biases": [b.tolist() for b in mlp.biases],
    }
    Path(path).write_text(json.dumps(doc))


def load_snapshot(path: str | Path) -> Mlp:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"{path}: not an mlp snapshot")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {doc.get('version')}")
    mlp = Mlp(
        layer_sizes=tuple(doc["layer_sizes"]),
        weights=[np.asarray(w, dtype=np.float64) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in doc["biases"]],
        hidden=doc["hidden"],
    )
    expected = list(zip(mlp.layer_sizes[:-1], mlp.layer_sizes[1:]))
    got = [w.shape for w in mlp.weights]
    if got != expected:
        raise ValueError(f"{path}: weight shapes {got} do not match {expected}")
    return mlp
