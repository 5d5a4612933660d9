"""Self-supervised consistency objectives and the fusion training loop.

Three losses over fused features, all mean squared deviations:

- temporal: each interior frame's local features vs the average of its two
  neighbours (endpoint frames are excluded and the mean renormalized over
  the T-2 interior frames, rather than clamping the boundary);
- spatial: each patch vs the inverse-geodesic-distance weighted average of
  its neighbours within an angular threshold epsilon;
- global: each frame's global context vs the clip mean (the per-clip
  variance of the global context).

The total is lambda_T * L_T + lambda_S * L_S + lambda_G * L_G.  Training
updates only the fusion weights with Adam; the encoder and the patch
projection stay frozen, so per-window tokens are encoded once and cached
across epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, constant
from .embedding import Frame, deform_embed
from .encoder import encode_frame
from .errors import ConfigError, TrainingError
from .fusion import FusionParams, fuse_vars, params_to_vars
from .geometry import (
    GridConfig,
    OffsetTable,
    Projection,
    geodesic_distance_matrix,
    patch_center_directions,
    patch_fov,
)
from .model import ModelParams
from .nn import OptimizerState, adam_step


@dataclass(frozen=True)
class LossWeights:
    lambda_t: float = 20.0
    lambda_s: float = 0.5
    lambda_g: float = 0.1
    epsilon: float = 0.0  # geodesic neighbourhood threshold; 0 = derive from grid

    def __post_init__(self):
        if min(self.lambda_t, self.lambda_s, self.lambda_g) < 0:
            raise ConfigError("loss weights must be nonnegative")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be positive")


def default_epsilon(cfg: GridConfig) -> float:
    """2.5 equatorial patch widths: gives equatorial patches 8-12 neighbours."""
    return 2.5 * patch_fov(cfg)


@dataclass
class SpatialNeighborhood:
    """Per-patch neighbour lists with inverse-distance weights summing to 1."""

    epsilon: float
    neighbors: list[np.ndarray]  # patch index arrays, self excluded
    distances: list[np.ndarray]  # matching geodesic distances
    weight_matrix: np.ndarray = field(repr=False)  # (N, N), rows sum to 1


def build_neighborhood(
    cfg: GridConfig, fmt: Projection = Projection.ERP, epsilon: float | None = None
) -> SpatialNeighborhood:
    if epsilon is None or epsilon == 0.0:
        epsilon = default_epsilon(cfg)
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    dirs = patch_center_directions(fmt, cfg)
    g = geodesic_distance_matrix(dirs, dirs)
    mask = (g > 0.0) & (g < epsilon)
    np.fill_diagonal(mask, False)

    neighbors: list[np.ndarray] = []
    distances: list[np.ndarray] = []
    W = np.zeros((cfg.N, cfg.N))
    for i in range(cfg.N):
        idx = np.nonzero(mask[i])[0]
        if idx.size == 0:
            raise ConfigError(
                f"patch {i} has no neighbours within epsilon={epsilon:.4f}; increase epsilon"
            )
        inv = 1.0 / g[i, idx]
        W[i, idx] = inv / inv.sum()
        neighbors.append(idx)
        distances.append(g[i, idx])
    return SpatialNeighborhood(
        epsilon=epsilon, neighbors=neighbors, distances=distances, weight_matrix=W
    )


# -- losses ---------------------------------------------------------------------
# Each loss is written once on autodiff Vars; the public entry points accept
# plain arrays and return floats.


def _loss_temporal_v(xhat: Var) -> Var:
    T, N, _ = xhat.shape
    if T < 3:
        raise ConfigError(f"temporal loss needs at least 3 frames, got {T}")
    mid = xhat[1 : T - 1]
    diff = mid - (xhat[2:T] + xhat[0 : T - 2]) * 0.5
    return (diff**2).sum() * (1.0 / ((T - 2) * N))


def _loss_spatial_v(xhat: Var, nbhd: SpatialNeighborhood) -> Var:
    T, N, _ = xhat.shape
    mixed = constant(nbhd.weight_matrix) @ xhat  # (T, N, C) per-frame mixing
    return ((xhat - mixed) ** 2).sum() * (1.0 / (T * N))


def _loss_global_v(x0hat: Var) -> Var:
    T = x0hat.shape[0]
    diff = x0hat - x0hat.mean(axis=0, keepdims=True)
    return (diff**2).sum() * (1.0 / T)


def _loss_total_v(xhat: Var, x0hat: Var, weights: LossWeights, nbhd: SpatialNeighborhood) -> Var:
    return (
        _loss_temporal_v(xhat) * weights.lambda_t
        + _loss_spatial_v(xhat, nbhd) * weights.lambda_s
        + _loss_global_v(x0hat) * weights.lambda_g
    )


def loss_temporal(xhat: np.ndarray) -> float:
    return float(_loss_temporal_v(constant(np.asarray(xhat, dtype=np.float64))).data)


def loss_spatial(xhat: np.ndarray, nbhd: SpatialNeighborhood) -> float:
    return float(_loss_spatial_v(constant(np.asarray(xhat, dtype=np.float64)), nbhd).data)


def loss_global(x0hat: np.ndarray) -> float:
    return float(_loss_global_v(constant(np.asarray(x0hat, dtype=np.float64))).data)


def loss_total(
    xhat: np.ndarray, x0hat: np.ndarray, weights: LossWeights, nbhd: SpatialNeighborhood
) -> float:
    return float(
        _loss_total_v(
            constant(np.asarray(xhat, dtype=np.float64)),
            constant(np.asarray(x0hat, dtype=np.float64)),
            weights,
            nbhd,
        ).data
    )


def window_loss_and_grads(
    x0: np.ndarray,
    X: np.ndarray,
    params: FusionParams,
    weights: LossWeights,
    nbhd: SpatialNeighborhood,
    pre_norm: bool = False,
) -> tuple[float, dict[str, np.ndarray]]:
    """Fusion forward + total loss + reverse-mode gradients for one window."""
    pvars = params_to_vars(params)
    x0hat, xhat = fuse_vars(constant(x0), constant(X), pvars, params.n_heads, pre_norm)
    loss = _loss_total_v(xhat, x0hat, weights, nbhd)
    loss.backward()
    grads = {name: v.grad for name, v in pvars.items()}
    return float(loss.data), grads


# -- training loop ----------------------------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 5
    T: int = 5
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    max_steps: int | None = None
    pre_norm: bool = False


@dataclass
class TrainResult:
    fusion: FusionParams
    trace: list[float]
    steps: int


def encode_clip_windows(
    clips: list[list[Frame]], model: ModelParams, offsets: OffsetTable, T: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Frozen embed+encode pass over consecutive T-frame windows of each clip.

    Returns (x0 (T, C), X (T, N, C)) pairs in clip order; a shorter final
    window is dropped during training (losses need full windows).
    """
    windows = []
    for frames in clips:
        for start in range(0, len(frames) - T + 1, T):
            toks = [
                encode_frame(deform_embed(f, offsets, model.embed), model.encoder)
                for f in frames[start : start + T]
            ]
            stacked = np.stack(toks)  # (T, N+1, C)
            windows.append((stacked[:, 0, :], stacked[:, 1:, :]))
    return windows


def train(
    clips: list[list[Frame]],
    model: ModelParams,
    offsets: OffsetTable,
    config: TrainConfig,
    nbhd: SpatialNeighborhood | None = None,
) -> TrainResult:
    """Adam on the fusion weights only; deterministic under config.seed."""
    if config.T < 3:
        raise ConfigError("training windows need T >= 3 for the temporal loss")
    windows = encode_clip_windows(clips, model, offsets, config.T)
    if not windows:
        raise ConfigError(f"no clip provides a full window of {config.T} frames")
    if nbhd is None:
        nbhd = build_neighborhood(offsets.config, offsets.format, config.weights.epsilon or None)

    fusion = model.fusion.copy()
    state = OptimizerState(lr=config.lr)
    rng = np.random.default_rng(config.seed)
    trace: list[float] = []

    total_steps = config.max_steps
    if total_steps is None:
        total_steps = config.epochs * len(windows)

    step = 0
    while step < total_steps:
        order = rng.permutation(len(windows))
        for wi in order:
            if step >= total_steps:
                break
            x0, X = windows[wi]
            loss, grads = window_loss_and_grads(
                x0, X, fusion, config.weights, nbhd, config.pre_norm
            )
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {step}", step=step)
            named = {name: fusion.tensors[name] for name in fusion.tensors}
            updated = adam_step(named, grads, state)
            for name, arr in updated.items():
                fusion.tensors[name] = arr
            trace.append(loss)
            step += 1
    return TrainResult(fusion=fusion, trace=trace, steps=step)
