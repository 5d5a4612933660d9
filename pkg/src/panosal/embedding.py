"""Deformable patch embedding: fractional-offset sampling plus projection.

Sampling reads a frame at the continuous raster positions of an offset
table and flattens each patch's samples channel-major (channel, tap row,
tap column) before the linear projection, matching the weight layout of a
standard convolution kernel so pretrained patch projections drop in.

Boundary rules for a sample at (u, v): u always wraps modulo W.  For ERP
frames, v beyond the first/last row reflects across that row with a half-
turn shift in u (the continuation of a meridian over the pole); for CMP
and TSP frames v clamps to the raster edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import GridConfig, OffsetTable, PixelCoord, Projection


@dataclass
class Frame:
    """One video frame: (3, H, W) values in [0, 1] plus its projection tag."""

    pixels: np.ndarray
    format: Projection = Projection.ERP

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 3 or self.pixels.shape[0] != 3:
            raise ConfigError(f"frame must be (3, H, W), got {self.pixels.shape}")
        if not np.all(np.isfinite(self.pixels)):
            raise ConfigError("frame contains non-finite values")

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


@dataclass
class EmbedParams:
    """Linear projection of flattened patch samples into C-channel tokens."""

    weight: np.ndarray  # (C, 3*S*S)
    bias: np.ndarray  # (C,)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ConfigError("embedding weight must be (C, 3*S*S) with bias (C,)")


def _fold_rows(iy: np.ndarray, ushift: np.ndarray, H: int, W: int, reflect: bool):
    """Resolve out-of-range row indices per the format's boundary rule."""
    if reflect:
        # reflect across the first/last row with a half-turn in u; one fold
        # covers every index bilinear interpolation can produce
        below = iy < 0
        above = iy > H - 1
        iy = np.where(below, -iy, iy)
        iy = np.where(above, 2 * (H - 1) - iy, iy)
        ushift = ushift + (below | above) * (W // 2)
        iy = np.clip(iy, 0, H - 1)
    else:
        iy = np.clip(iy, 0, H - 1)
    return iy, ushift


def sample_at(frame: Frame, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear samples of a frame at continuous positions; returns (3, ...)."""
    H, W = frame.height, frame.width
    u = np.asarray(u, dtype=np.float64) % W
    v = np.asarray(v, dtype=np.float64)

    ix0 = np.floor(u).astype(np.int64)
    iy0 = np.floor(v).astype(np.int64)
    fx = u - ix0
    fy = v - iy0

    reflect = frame.format is Projection.ERP
    out = None
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        iy, ushift = _fold_rows(iy0 + dy, np.zeros_like(ix0), H, W, reflect)
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            ix = (ix0 + dx + ushift) % W
            term = (wy * wx) * frame.pixels[:, iy, ix]
            out = term if out is None else out + term
    return out


def bilinear_sample(frame: Frame, p: PixelCoord) -> np.ndarray:
    """RGB triple at one continuous raster position."""
    u, v = p
    if not (np.isfinite(u) and np.isfinite(v)):
        raise ConfigError("sample position must be finite")
    return sample_at(frame, np.float64(u), np.float64(v))


def deform_embed(frame: Frame, offsets: OffsetTable, params: EmbedParams) -> np.ndarray:
    """(N, C) tokens: per-patch offset sampling followed by the projection."""
    cfg: GridConfig = offsets.config
    if frame.height != cfg.H or frame.width != cfg.W:
        raise ConfigError(
            f"frame {frame.width}x{frame.height} does not match grid {cfg.W}x{cfg.H}"
        )
    if params.weight.shape != (params.weight.shape[0], 3 * cfg.S * cfg.S):
        raise ConfigError(
            f"embedding weight expects {3 * cfg.S * cfg.S} inputs, got {params.weight.shape[1]}"
        )
    samples = sample_at(frame, offsets.taps[..., 0], offsets.taps[..., 1])  # (3, N, S, S)
    flat = samples.transpose(1, 0, 2, 3).reshape(cfg.N, 3 * cfg.S * cfg.S)
    return flat @ params.weight.T + params.bias
