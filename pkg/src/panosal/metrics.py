"""Saliency and omnidirectional quality metrics.

Saliency: Pearson correlation between maps, AUC-Judd (thresholds swept at
the fixations' saliency values against all non-fixation pixels) and
AUC-Borji (mean exact ROC area against per-split random negative samples).

Quality: PSNR with an arbitrary nonnegative weight map (uniform weights
give plain PSNR, cos-latitude rows give the sphere-corrected variant) and
sphere-sampled PSNR over a deterministic Fibonacci lattice.  Errors are
computed on BT.601 luma by default; pass luma=False for a per-channel
mean.  Identical inputs report a capped 99 dB with an exact-match flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedding import Frame, sample_at
from .errors import ConfigError, MetricError
from .geometry import GridConfig, Projection, raster_from_direction_arrays

PSNR_CAP_DB = 99.0
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class FixationSet:
    """Ground-truth fixation pixels as (row, col) integer pairs."""

    coords: np.ndarray  # (K, 2)
    shape: tuple[int, int]

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        if self.coords.shape[0] == 0:
            raise MetricError("fixation set is empty")
        H, W = self.shape
        if (
            self.coords.min() < 0
            or self.coords[:, 0].max() >= H
            or self.coords[:, 1].max() >= W
        ):
            raise MetricError("fixations outside the raster")


@dataclass
class SpherePointSet:
    """Deterministic, reproducible unit directions for sphere-sampled metrics."""

    directions: np.ndarray  # (M, 3)
    generator: str = "fibonacci"
    seed: int = 0


def fibonacci_sphere(count: int = 10242) -> SpherePointSet:
    """Near-uniform spherical Fibonacci lattice."""
    i = np.arange(count, dtype=np.float64)
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    lon = 2.0 * math.pi * i / golden
    y = 1.0 - 2.0 * (i + 0.5) / count
    r = np.sqrt(1.0 - y * y)
    dirs = np.stack([r * np.sin(lon), y, r * np.cos(lon)], axis=-1)
    return SpherePointSet(directions=dirs)


# -- saliency metrics ------------------------------------------------------------


def cc(pred: np.ndarray, gt: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Pearson correlation over pixels; optionally area-weighted."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    gt = np.asarray(gt, dtype=np.float64).ravel()
    if pred.shape != gt.shape:
        raise ConfigError("maps must have identical shapes")
    if weights is None:
        w = np.full(pred.shape, 1.0 / pred.size)
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.shape != pred.shape or w.min() < 0 or w.sum() == 0:
            raise ConfigError("weights must be nonnegative, matching, not all zero")
        w = w / w.sum()
    pm = pred - (w * pred).sum()
    gm = gt - (w * gt).sum()
    vp = (w * pm * pm).sum()
    vg = (w * gm * gm).sum()
    if vp == 0.0 or vg == 0.0:
        raise MetricError("correlation undefined for a constant map")
    return float((w * pm * gm).sum() / math.sqrt(vp * vg))


def _roc_area(pos: np.ndarray, neg: np.ndarray) -> float:
    """Exact ROC area for two finite samples (ties count half)."""
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    tpr = [0.0]
    fpr = [0.0]
    for t in thresholds:
        tpr.append(float(np.mean(pos >= t)))
        fpr.append(float(np.mean(neg >= t)))
    return float(np.trapezoid(tpr, fpr))


def auc_judd(pred: np.ndarray, fix: FixationSet) -> float:
    """Threshold sweep at the fixations' saliency values vs all other pixels."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != fix.shape:
        raise ConfigError(f"map shape {pred.shape} != fixation raster {fix.shape}")
    mask = np.zeros(pred.shape, dtype=bool)
    mask[fix.coords[:, 0], fix.coords[:, 1]] = True
    pos = pred[mask]
    neg = pred[~mask]
    n_fix = pos.size
    n_neg = neg.size
    if n_neg == 0:
        raise MetricError("every pixel is a fixation")
    thresholds = np.sort(pos)[::-1]
    tpr = [0.0]
    fpr = [0.0]
    for t in thresholds:
        tpr.append(float(np.sum(pos >= t)) / n_fix)
        fpr.append(float(np.sum(neg >= t)) / n_neg)
    tpr.append(1.0)
    fpr.append(1.0)
    return float(np.trapezoid(tpr, fpr))


def auc_borji(pred: np.ndarray, fix: FixationSet, n_splits: int = 100, seed: int = 0) -> float:
    """Mean ROC area over n_splits random negative samples; deterministic per seed."""
    if n_splits < 1:
        raise ConfigError("n_splits must be >= 1")
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != fix.shape:
        raise ConfigError(f"map shape {pred.shape} != fixation raster {fix.shape}")
    mask = np.zeros(pred.shape, dtype=bool)
    mask[fix.coords[:, 0], fix.coords[:, 1]] = True
    pos = pred[mask]
    neg_pool = pred[~mask]
    if neg_pool.size == 0:
        raise MetricError("every pixel is a fixation")
    rng = np.random.default_rng(seed)
    areas = [
        _roc_area(pos, neg_pool[rng.integers(0, neg_pool.size, size=pos.size)])
        for _ in range(n_splits)
    ]
    return float(np.mean(areas))


def binarize_gt(heatmap: np.ndarray, percentile: float = 95.0) -> FixationSet:
    """Fixations = pixels at or above the given percentile (ties included)."""
    if not 0.0 < percentile < 100.0:
        raise ConfigError("percentile must be in (0, 100)")
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if heatmap.min() == heatmap.max():
        raise MetricError("cannot binarize a constant heatmap")
    threshold = np.percentile(heatmap, percentile)
    rows, cols = np.nonzero(heatmap >= threshold)
    return FixationSet(coords=np.stack([rows, cols], axis=-1), shape=heatmap.shape)


# -- quality metrics ------------------------------------------------------------


@dataclass
class PsnrResult:
    db: float
    exact: bool

    def __float__(self):
        return self.db


def _error_map(ref: np.ndarray, dist: np.ndarray, luma: bool) -> np.ndarray:
    """(T, H, W) squared error from (T, 3, H, W) sequences."""
    diff = ref - dist
    if luma:
        e = np.einsum("tchw,c->thw", diff, _LUMA)
        return e * e
    return (diff * diff).mean(axis=1)


def _as_sequence(frames: np.ndarray) -> np.ndarray:
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != 3:
        raise ConfigError(f"expected (T, 3, H, W) frames, got {arr.shape}")
    return arr


def psnr_weighted(
    ref,
    dist,
    weight: np.ndarray | None = None,
    peak: float = 1.0,
    luma: bool = True,
) -> PsnrResult:
    """10*log10(peak^2 / weighted MSE); weights normalized per frame."""
    ref = _as_sequence(ref)
    dist = _as_sequence(dist)
    if ref.shape != dist.shape:
        raise ConfigError(f"sequences differ in shape: {ref.shape} vs {dist.shape}")
    T, _, H, W = ref.shape
    if weight is None:
        w = np.full((T, H, W), 1.0)
    else:
        w = np.asarray(weight, dtype=np.float64)
        if w.ndim == 2:
            w = np.broadcast_to(w, (T, H, W))
        if w.shape != (T, H, W) or w.min() < 0:
            raise ConfigError("weight map must be nonnegative with shape (T, H, W)")
    wsum = w.sum(axis=(1, 2), keepdims=True)
    if np.any(wsum == 0):
        raise ConfigError("weight map sums to zero on some frame")
    err = _error_map(ref, dist, luma)
    mse = float((err * (w / wsum)).sum() / T)
    if mse == 0.0:
        return PsnrResult(db=PSNR_CAP_DB, exact=True)
    return PsnrResult(db=min(10.0 * math.log10(peak * peak / mse), PSNR_CAP_DB), exact=False)


def ws_psnr_weights(H: int, W: int) -> np.ndarray:
    """Per-row cos(latitude) weights for an H x W equirectangular raster."""
    lat = math.pi * (0.5 - np.arange(H, dtype=np.float64) / H)
    return np.broadcast_to(np.cos(lat)[:, None], (H, W)).copy()


def spsnr(
    ref,
    dist,
    pts: SpherePointSet,
    cfg: GridConfig,
    fmt: Projection = Projection.ERP,
    weight_map: np.ndarray | None = None,
    peak: float = 1.0,
    luma: bool = True,
) -> PsnrResult:
    """PSNR over sphere-sampled pixels, optionally saliency-weighted."""
    ref = _as_sequence(ref)
    dist = _as_sequence(dist)
    if ref.shape != dist.shape:
        raise ConfigError(f"sequences differ in shape: {ref.shape} vs {dist.shape}")
    if pts.directions.shape[0] == 0:
        raise ConfigError("empty sphere point set")
    u, v = raster_from_direction_arrays(fmt, pts.directions, cfg)

    total = 0.0
    exact = True
    T = ref.shape[0]
    for t in range(T):
        fr = Frame(ref[t], fmt)
        fd = Frame(dist[t], fmt)
        diff = sample_at(fr, u, v) - sample_at(fd, u, v)  # (3, M)
        if luma:
            e = _LUMA @ diff
            err = e * e
        else:
            err = (diff * diff).mean(axis=0)
        if weight_map is None:
            w = np.full(err.shape, 1.0)
        else:
            wm = np.asarray(weight_map, dtype=np.float64)
            wm_t = wm[t] if wm.ndim == 3 else wm
            w = sample_at(Frame(np.broadcast_to(wm_t, (3,) + wm_t.shape), fmt), u, v)[0]
            w = np.maximum(w, 0.0)
            if w.sum() == 0:
                raise ConfigError("saliency weights vanish at every sample point")
        mse = float((err * w).sum() / w.sum())
        if mse > 0:
            exact = False
        total += mse
    mse = total / T
    if mse == 0.0:
        return PsnrResult(db=PSNR_CAP_DB, exact=True)
    return PsnrResult(db=min(10.0 * math.log10(peak * peak / mse), PSNR_CAP_DB), exact=exact)
