"""Decoupled global/local spatiotemporal fusion (the trainable subgraph).

The global token stream runs through a two-layer GELU MLP.  Local tokens
get the average of two multi-head self-attentions, one mixing patches
within each frame and one mixing frames per patch, followed by a residual
MLP:

    X' = X + (SA_space(X) + SA_time(X)) / 2
    X_hat = X' + MLP_local(X')

No layer norm appears inside the block by default; pass pre_norm=True to
normalize attention/MLP inputs (parameter-free) instead.

The forward pass is written on autodiff Vars so the training loop gets
reverse-mode gradients; the plain-array entry points run the same graph
and strip the tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Var, constant, gelu_v, matmul, parameter, softmax_v
from .errors import ConfigError


@dataclass
class FusedFeatures:
    """Fusion outputs: per-frame global context and local token grid."""

    global_ctx: np.ndarray  # (T, C)
    local: np.ndarray  # (T, N, C)


@dataclass
class FusionParams:
    """All trainable weights, stored as a flat name -> array mapping.

    Names follow the serialization layout: global_mlp.{w1,b1,w2,b2},
    spatial_attn.{wq,bq,wk,bk,wv,bv,wo,bo}, temporal_attn.{...},
    local_mlp.{w1,b1,w2,b2}.
    """

    tensors: dict[str, np.ndarray]
    n_heads: int = 8

    def __post_init__(self):
        missing = set(_PARAM_NAMES) - set(self.tensors)
        extra = set(self.tensors) - set(_PARAM_NAMES)
        if missing or extra:
            raise ConfigError(f"bad fusion parameter set: missing {missing}, extra {extra}")
        C = self.tensors["global_mlp.w1"].shape[0]
        if C % self.n_heads != 0:
            raise ConfigError(f"channels {C} not divisible by {self.n_heads} heads")

    @property
    def channels(self) -> int:
        return self.tensors["global_mlp.w1"].shape[0]

    def copy(self) -> "FusionParams":
        return FusionParams({k: v.copy() for k, v in self.tensors.items()}, self.n_heads)


_MLP_NAMES = ["w1", "b1", "w2", "b2"]
_ATTN_NAMES = ["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"]
_PARAM_NAMES = (
    [f"global_mlp.{n}" for n in _MLP_NAMES]
    + [f"spatial_attn.{n}" for n in _ATTN_NAMES]
    + [f"temporal_attn.{n}" for n in _ATTN_NAMES]
    + [f"local_mlp.{n}" for n in _MLP_NAMES]
)


def init_fusion_params(
    C: int, n_heads: int = 8, hidden_mult: int = 4, rng: np.random.Generator | None = None
) -> FusionParams:
    """Random initialization: normal(0, 0.02) weights, zero biases."""
    rng = rng or np.random.default_rng(0)
    hidden = hidden_mult * C
    t: dict[str, np.ndarray] = {}
    for prefix in ("global_mlp", "local_mlp"):
        t[f"{prefix}.w1"] = rng.normal(0.0, 0.02, size=(C, hidden))
        t[f"{prefix}.b1"] = np.zeros(hidden)
        t[f"{prefix}.w2"] = rng.normal(0.0, 0.02, size=(hidden, C))
        t[f"{prefix}.b2"] = np.zeros(C)
    for prefix in ("spatial_attn", "temporal_attn"):
        for w in ("wq", "wk", "wv", "wo"):
            t[f"{prefix}.{w}"] = rng.normal(0.0, 0.02, size=(C, C))
        for b in ("bq", "bk", "bv", "bo"):
            t[f"{prefix}.{b}"] = np.zeros(C)
    return FusionParams(t, n_heads=n_heads)


# -- Var-graph building blocks -------------------------------------------------


def _mlp_v(x: Var, p: dict[str, Var], prefix: str) -> Var:
    h = gelu_v(matmul(x, p[f"{prefix}.w1"]) + p[f"{prefix}.b1"])
    return matmul(h, p[f"{prefix}.w2"]) + p[f"{prefix}.b2"]


def _attention_v(x: Var, p: dict[str, Var], prefix: str, n_heads: int) -> Var:
    """Self-attention over axis -2 of a (B, L, C) Var."""
    B, L, C = x.shape
    hd = C // n_heads
    scale = 1.0 / math.sqrt(hd)

    def split(y: Var) -> Var:
        return y.reshape(B, L, n_heads, hd).swapaxes(1, 2)

    q = split(matmul(x, p[f"{prefix}.wq"]) + p[f"{prefix}.bq"])
    k = split(matmul(x, p[f"{prefix}.wk"]) + p[f"{prefix}.bk"])
    v = split(matmul(x, p[f"{prefix}.wv"]) + p[f"{prefix}.bv"])
    attn = softmax_v(matmul(q, k.swapaxes(-1, -2)) * scale)
    ctx = matmul(attn, v).swapaxes(1, 2).reshape(B, L, C)
    return matmul(ctx, p[f"{prefix}.wo"]) + p[f"{prefix}.bo"]


def _norm_v(x: Var, eps: float = 1e-6) -> Var:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) * (var + eps) ** -0.5


def params_to_vars(params: FusionParams) -> dict[str, Var]:
    return {name: parameter(arr) for name, arr in params.tensors.items()}


def _local_fuse_v(X: Var, pvars: dict[str, Var], n_heads: int, pre_norm: bool) -> Var:
    def maybe_norm(y: Var) -> Var:
        return _norm_v(y) if pre_norm else y

    sa_space = _attention_v(maybe_norm(X), pvars, "spatial_attn", n_heads)
    sa_time = (
        _attention_v(maybe_norm(X).swapaxes(0, 1), pvars, "temporal_attn", n_heads)
    ).swapaxes(0, 1)
    x_mid = X + (sa_space + sa_time) * 0.5
    return x_mid + _mlp_v(maybe_norm(x_mid), pvars, "local_mlp")


def fuse_vars(
    x0: Var, X: Var, pvars: dict[str, Var], n_heads: int, pre_norm: bool = False
) -> tuple[Var, Var]:
    """Var-graph fusion forward; returns (global (T,C), local (T,N,C))."""
    return _mlp_v(x0, pvars, "global_mlp"), _local_fuse_v(X, pvars, n_heads, pre_norm)


def fuse(
    x0: np.ndarray, X: np.ndarray, params: FusionParams, pre_norm: bool = False
) -> FusedFeatures:
    """Plain-array fusion forward over one clip window."""
    x0 = np.asarray(x0, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if x0.ndim != 2 or X.ndim != 3 or x0.shape[0] != X.shape[0] or x0.shape[1] != X.shape[2]:
        raise ConfigError(f"inconsistent fusion inputs {x0.shape} / {X.shape}")
    pvars = {name: constant(arr) for name, arr in params.tensors.items()}
    g, l = fuse_vars(constant(x0), constant(X), pvars, params.n_heads, pre_norm)
    return FusedFeatures(global_ctx=g.data, local=l.data)


def global_context(x0: np.ndarray, params: FusionParams) -> np.ndarray:
    """Row-wise MLP over the per-frame global tokens."""
    pvars = {name: constant(arr) for name, arr in params.tensors.items()}
    return _mlp_v(constant(np.asarray(x0, dtype=np.float64)), pvars, "global_mlp").data


def local_fuse(X: np.ndarray, params: FusionParams, pre_norm: bool = False) -> np.ndarray:
    """Axis-averaged dual self-attention block over local tokens."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ConfigError(f"local tokens must be (T, N, C), got {X.shape}")
    pvars = {name: constant(arr) for name, arr in params.tensors.items()}
    return _local_fuse_v(constant(X), pvars, params.n_heads, pre_norm).data
