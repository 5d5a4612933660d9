"""Dense numeric building blocks: activations, attention, Adam, FD checks.

These are the inference-path (plain ndarray) implementations.  The
trainable fusion subgraph builds the same math on autodiff.Var nodes; a
cross-check test keeps the two in lockstep.

Matrices act on row vectors: y = x @ W + b, with W of shape (in, out).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import ConfigError, NumericError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def gelu(x):
    """Exact Gaussian-CDF GELU, x * Phi(x)."""
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * (1.0 + erf(x * _INV_SQRT2))


def softmax(v, axis: int = -1):
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(v, gain, shift, eps: float = 1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    v = np.asarray(v, dtype=np.float64)
    mu = v.mean(axis=-1, keepdims=True)
    var = v.var(axis=-1, keepdims=True)
    return (v - mu) / np.sqrt(var + eps) * gain + shift


@dataclass
class AttentionParams:
    """Multi-head self-attention weights; all projections are C x C."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray
    bo: np.ndarray
    n_heads: int = 1

    def __post_init__(self):
        C = self.wq.shape[0]
        for name in ("wq", "wk", "wv", "wo"):
            if getattr(self, name).shape != (C, C):
                raise ConfigError(f"{name} must be square C x C")
        if C % self.n_heads != 0:
            raise ConfigError(f"channels {C} not divisible by {self.n_heads} heads")


def mhsa(x: np.ndarray, params: AttentionParams) -> np.ndarray:
    """Scaled dot-product self-attention over the second-to-last axis.

    x has shape (..., L, C); attention mixes the L positions per batch
    element, each of the n_heads heads attending over C/n_heads channels.
    """
    x = np.asarray(x, dtype=np.float64)
    L, C = x.shape[-2], x.shape[-1]
    nh = params.n_heads
    hd = C // nh

    def split(y):  # (..., L, C) -> (..., nh, L, hd)
        return y.reshape(*y.shape[:-1], nh, hd).swapaxes(-2, -3)

    q = split(x @ params.wq + params.bq)
    k = split(x @ params.wk + params.bk)
    v = split(x @ params.wv + params.bv)
    scores = (q @ k.swapaxes(-1, -2)) / np.sqrt(hd)
    ctx = softmax(scores) @ v
    merged = ctx.swapaxes(-2, -3).reshape(*x.shape[:-1], C)
    return merged @ params.wo + params.bo


# -- Adam ---------------------------------------------------------------------


@dataclass
class OptimizerState:
    """Adam moment accumulators keyed by parameter name."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; returns new parameter arrays."""
    state.step += 1
    t = state.step
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}", stage="adam")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        out[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


# -- gradient verification -----------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    worst: list[tuple[str, tuple, float]]  # (param name, index, rel error)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def grad_check(f, params: dict[str, np.ndarray], h: float = 1e-5, tol: float = 1e-4):
    """Compare f's reverse-mode gradients against central finite differences.

    f maps the parameter dict to (scalar loss, gradient dict).  Relative
    error per coordinate uses max(|fd|, |grad|, 1e-6) as denominator so
    coordinates with (near-)zero true gradient are not dominated by FD
    round-off.  Raises NumericError when any coordinate exceeds tol.
    """
    _, grads = f(params)
    worst: list[tuple[str, tuple, float]] = []
    max_rel = 0.0
    for name in sorted(params):
        p = params[name]
        an = grads[name]
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            up, _ = f(params)
            p[idx] = orig - h
            down, _ = f(params)
            p[idx] = orig
            fd = (up - down) / (2.0 * h)
            denom = max(abs(fd), abs(float(an[idx])), 1e-6)
            rel = abs(fd - float(an[idx])) / denom
            if rel > max_rel:
                max_rel = rel
            if rel > tol:
                worst.append((name, idx, rel))
    worst.sort(key=lambda w: -w[2])
    report = GradCheckReport(max_rel_error=max_rel, tol=tol, worst=worst[:10])
    if not report.passed:
        raise NumericError(
            f"gradient check failed: max rel error {max_rel:.3e} > {tol:.1e}; "
            f"worst coordinates {report.worst[:3]}",
            stage="grad_check",
        )
    return report
