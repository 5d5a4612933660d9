"""Saliency decoding: per-patch relative scores and spherical upsampling.

Each patch's score is a sum of three squared feature distances, weighted
by (alpha, beta, gamma): to the frame's global context, to the patch's
own temporal mean, and to the frame's spatial mean.  Dense maps come from
a von Mises-Fisher kernel regression over patch centres,

    dense(pixel j) = sum_i  score_i * cos(lat_i) * (a/sinh a) * exp(a*cos psi_ij)

with concentration a = W^2 / (4 pi^2 sigma^2) and psi_ij the great-circle
angle between pixel j and patch centre i.  Smoothing is an evaluation-time
operation only; training never sees it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fusion import FusedFeatures
from .geometry import GridConfig, Projection, patch_centers, pixel_directions, direction_arrays


@dataclass
class SaliencyRaster:
    """Coarse patch scores and their dense upsampled maps for one window."""

    coarse: np.ndarray  # (T, h, w)
    dense: np.ndarray  # (T, H, W)
    sigma: float
    weights: tuple[float, float, float]


def saliency_scores(
    fused: FusedFeatures, alpha: float = 1.0, beta: float = 1.0, gamma: float = 1.0
) -> np.ndarray:
    """(T, N) nonnegative scores from the three-term decomposition."""
    X = np.asarray(fused.local, dtype=np.float64)  # (T, N, C)
    x0 = np.asarray(fused.global_ctx, dtype=np.float64)  # (T, C)
    if X.ndim != 3 or x0.shape != (X.shape[0], X.shape[2]):
        raise ConfigError(f"inconsistent fused shapes {X.shape} / {x0.shape}")
    d_global = X - x0[:, None, :]
    d_time = X - X.mean(axis=0, keepdims=True)
    d_space = X - X.mean(axis=1, keepdims=True)
    return (
        alpha * (d_global**2).sum(axis=-1)
        + beta * (d_time**2).sum(axis=-1)
        + gamma * (d_space**2).sum(axis=-1)
    )


def kernel_concentration(W: int, sigma: float) -> float:
    """vMF concentration for a Gaussian of std sigma pixels on a W-wide raster."""
    if sigma <= 0:
        raise ConfigError("smoothing sigma must be positive")
    return W * W / (4.0 * math.pi**2 * sigma**2)


def vmf_kernel(a: float, cos_psi) -> np.ndarray:
    """(a / sinh a) * exp(a * cos psi); integrates to 4*pi over the sphere."""
    cos_psi = np.asarray(cos_psi, dtype=np.float64)
    if a < 1e-6:
        # sinh(a)/a -> 1; avoid 0/0
        return np.exp(a * cos_psi)
    # a/sinh(a) * exp(a c) = 2a * exp(a(c-1)) / (1 - exp(-2a)), stable for large a
    return 2.0 * a * np.exp(a * (cos_psi - 1.0)) / (1.0 - math.exp(-2.0 * a))


def smooth_to_map(
    coarse: np.ndarray,
    cfg: GridConfig,
    sigma: float,
    fmt: Projection = Projection.ERP,
    truncate: bool = True,
) -> np.ndarray:
    """Upsample (T, h, w) patch scores to dense (T, H, W) maps.

    truncate=True skips kernel evaluation beyond psi = 4/sqrt(a), where
    the kernel mass is negligible; pass False for the exact sum.
    """
    coarse = np.asarray(coarse, dtype=np.float64)
    if coarse.ndim != 3 or coarse.shape[1:] != (cfg.h, cfg.w):
        raise ConfigError(f"coarse scores must be (T, {cfg.h}, {cfg.w}), got {coarse.shape}")
    a = kernel_concentration(cfg.W, sigma)

    theta_i, phi_i = patch_centers(fmt, cfg)
    centers = direction_arrays(theta_i, phi_i)  # (N, 3)
    cos_lat = np.cos(phi_i)
    dirs = pixel_directions(fmt, cfg).reshape(-1, 3)  # (H*W, 3)

    scores = coarse.reshape(coarse.shape[0], cfg.N) * cos_lat[None, :]  # (T, N)
    out = np.zeros((coarse.shape[0], dirs.shape[0]))
    cutoff = math.cos(min(4.0 / math.sqrt(a), math.pi)) if truncate else None

    chunk = 16384
    for start in range(0, dirs.shape[0], chunk):
        cos_psi = dirs[start : start + chunk] @ centers.T  # (chunk, N)
        k = vmf_kernel(a, cos_psi)
        if cutoff is not None:
            k = np.where(cos_psi >= cutoff, k, 0.0)
        out[:, start : start + chunk] = scores @ k.T
    return out.reshape(coarse.shape[0], cfg.H, cfg.W)


def normalize_map(dense: np.ndarray) -> np.ndarray:
    """Per-frame min-max rescale to [0, 1]; constant frames map to zeros."""
    dense = np.asarray(dense, dtype=np.float64)
    if not np.all(np.isfinite(dense)):
        raise ConfigError("map contains non-finite values")
    frames = dense if dense.ndim == 3 else dense[None]
    lo = frames.min(axis=(1, 2), keepdims=True)
    hi = frames.max(axis=(1, 2), keepdims=True)
    span = hi - lo
    out = np.where(span > 0, (frames - lo) / np.where(span > 0, span, 1.0), 0.0)
    return out if dense.ndim == 3 else out[0]
