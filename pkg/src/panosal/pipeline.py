"""End-to-end window processing: frames -> dense normalized saliency maps.

A clip is processed in consecutive windows of up to T frames (the final
window may be shorter; fusion handles any window length at inference).
Coarse patch scores are min-max normalized per frame before spherical
smoothing so that constant score fields yield empty maps, then the dense
maps are normalized again for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import Frame, deform_embed
from .encoder import encode_frame
from .errors import NumericError
from .fusion import FusedFeatures, fuse
from .geometry import OffsetTable
from .model import ModelParams
from .saliency import SaliencyRaster, normalize_map, saliency_scores, smooth_to_map


@dataclass
class SaliencyOptions:
    sigma: float = 0.0  # 0 = W/64 default
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    window: int = 5
    truncate_kernel: bool = True


def default_sigma(W: int) -> float:
    return W / 64.0


def _check_finite(arr: np.ndarray, stage: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values after {stage}", stage=stage)
    return arr


def window_features(
    frames: list[Frame], model: ModelParams, offsets: OffsetTable
) -> FusedFeatures:
    tokens = []
    for f in frames:
        embedded = _check_finite(deform_embed(f, offsets, model.embed), "embed")
        tokens.append(_check_finite(encode_frame(embedded, model.encoder), "encode"))
    stacked = np.stack(tokens)  # (T, N+1, C)
    fused = fuse(stacked[:, 0, :], stacked[:, 1:, :], model.fusion)
    _check_finite(fused.global_ctx, "fuse")
    _check_finite(fused.local, "fuse")
    return fused


def process_clip(
    frames: list[Frame],
    model: ModelParams,
    offsets: OffsetTable,
    options: SaliencyOptions,
) -> SaliencyRaster:
    """Dense saliency maps for every frame of a clip."""
    cfg = offsets.config
    sigma = options.sigma if options.sigma > 0 else default_sigma(cfg.W)
    coarse_frames = []
    for start in range(0, len(frames), options.window):
        window = frames[start : start + options.window]
        fused = window_features(window, model, offsets)
        scores = _check_finite(
            saliency_scores(fused, options.alpha, options.beta, options.gamma), "score"
        )
        coarse_frames.append(scores.reshape(len(window), cfg.h, cfg.w))
    coarse = np.concatenate(coarse_frames, axis=0)

    coarse_norm = normalize_map(coarse)
    dense = _check_finite(
        smooth_to_map(coarse_norm, cfg, sigma, offsets.format, options.truncate_kernel),
        "smooth",
    )
    dense = normalize_map(dense)
    return SaliencyRaster(
        coarse=coarse,
        dense=dense,
        sigma=sigma,
        weights=(options.alpha, options.beta, options.gamma),
    )
