"""Inference-only transformer encoder over patch tokens plus a global token.

Pre-norm blocks (LN -> MHSA -> residual, LN -> MLP -> residual) with a
final layer norm.  The encoder is frozen everywhere in this package: no
gradients flow through it, so it runs on plain arrays.

Positional embeddings are learned, 1-D over (global token, patches in
row-major order), and optional.  When a loaded table was trained on a
different patch grid it is resampled bilinearly over the 2-D grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .nn import AttentionParams, gelu, layer_norm, mhsa


@dataclass
class BlockParams:
    ln1_gain: np.ndarray
    ln1_shift: np.ndarray
    attn: AttentionParams
    ln2_gain: np.ndarray
    ln2_shift: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray


@dataclass
class EncoderParams:
    cls_token: np.ndarray  # (C,)
    blocks: list[BlockParams] = field(default_factory=list)
    ln_f_gain: np.ndarray = None
    ln_f_shift: np.ndarray = None
    pos_embed: np.ndarray | None = None  # (N+1, C) or absent

    @property
    def depth(self) -> int:
        return len(self.blocks)

    @property
    def channels(self) -> int:
        return self.cls_token.shape[0]


def init_encoder_params(
    C: int,
    N: int,
    depth: int,
    n_heads: int = 4,
    hidden_mult: int = 4,
    rng: np.random.Generator | None = None,
    with_pos_embed: bool = True,
) -> EncoderParams:
    """Random init: normal(0, 0.02) weights, zero biases and pos embeddings.

    Zero-initialized positional embeddings keep a freshly initialized
    model exactly translation-equivariant until embeddings are trained or
    loaded.
    """
    rng = rng or np.random.default_rng(0)
    hidden = hidden_mult * C

    def attn() -> AttentionParams:
        return AttentionParams(
            wq=rng.normal(0.0, 0.02, size=(C, C)),
            wk=rng.normal(0.0, 0.02, size=(C, C)),
            wv=rng.normal(0.0, 0.02, size=(C, C)),
            wo=rng.normal(0.0, 0.02, size=(C, C)),
            bq=np.zeros(C),
            bk=np.zeros(C),
            bv=np.zeros(C),
            bo=np.zeros(C),
            n_heads=n_heads,
        )

    blocks = [
        BlockParams(
            ln1_gain=np.ones(C),
            ln1_shift=np.zeros(C),
            attn=attn(),
            ln2_gain=np.ones(C),
            ln2_shift=np.zeros(C),
            mlp_w1=rng.normal(0.0, 0.02, size=(C, hidden)),
            mlp_b1=np.zeros(hidden),
            mlp_w2=rng.normal(0.0, 0.02, size=(hidden, C)),
            mlp_b2=np.zeros(C),
        )
        for _ in range(depth)
    ]
    return EncoderParams(
        cls_token=rng.normal(0.0, 0.02, size=C),
        blocks=blocks,
        ln_f_gain=np.ones(C),
        ln_f_shift=np.zeros(C),
        pos_embed=np.zeros((N + 1, C)) if with_pos_embed else None,
    )


def encode_frame(patch_tokens: np.ndarray, params: EncoderParams) -> np.ndarray:
    """(N, C) patch tokens -> (N+1, C) encoded tokens; row 0 is global."""
    tokens = np.asarray(patch_tokens, dtype=np.float64)
    C = params.channels
    if tokens.ndim != 2 or tokens.shape[1] != C:
        raise ConfigError(f"patch tokens must be (N, {C}), got {tokens.shape}")
    x = np.concatenate([params.cls_token[None, :], tokens], axis=0)
    if params.pos_embed is not None:
        if params.pos_embed.shape != x.shape:
            raise ConfigError(
                f"positional embeddings {params.pos_embed.shape} do not match tokens {x.shape}"
            )
        x = x + params.pos_embed
    for blk in params.blocks:
        x = x + mhsa(layer_norm(x, blk.ln1_gain, blk.ln1_shift), blk.attn)
        h = gelu(layer_norm(x, blk.ln2_gain, blk.ln2_shift) @ blk.mlp_w1 + blk.mlp_b1)
        x = x + h @ blk.mlp_w2 + blk.mlp_b2
    return layer_norm(x, params.ln_f_gain, params.ln_f_shift)


def resize_pos_embed(
    pos: np.ndarray, old_grid: tuple[int, int], new_grid: tuple[int, int]
) -> np.ndarray:
    """Resample the patch rows of a positional table onto a new patch grid.

    Row 0 (global token) is kept; the remaining rows are treated as an
    (h, w, C) image and interpolated bilinearly with edge clamping.
    """
    oh, ow = old_grid
    nh, nw = new_grid
    if pos.shape[0] != oh * ow + 1:
        raise ConfigError(f"positional table has {pos.shape[0]} rows, grid {old_grid} needs {oh*ow+1}")
    if (oh, ow) == (nh, nw):
        return pos.copy()
    grid = pos[1:].reshape(oh, ow, -1)

    def axis_coords(n_new, n_old):
        # align cell centres of the two grids
        return (np.arange(n_new) + 0.5) * (n_old / n_new) - 0.5

    ys = np.clip(axis_coords(nh, oh), 0, oh - 1)
    xs = np.clip(axis_coords(nw, ow), 0, ow - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, oh - 1)
    x1 = np.minimum(x0 + 1, ow - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    out = (
        grid[y0][:, x0] * (1 - fy) * (1 - fx)
        + grid[y0][:, x1] * (1 - fy) * fx
        + grid[y1][:, x0] * fy * (1 - fx)
        + grid[y1][:, x1] * fy * fx
    )
    return np.concatenate([pos[:1], out.reshape(nh * nw, -1)], axis=0)
