"""Model parameter aggregation, naming, and container (de)serialization.

Canonical tensor names:

    embed.weight, embed.bias
    encoder.cls_token, encoder.pos_embed,
    encoder.blocks.{d}.ln1.gain/.shift,
    encoder.blocks.{d}.attn.{wq,bq,wk,bk,wv,bv,wo,bo},
    encoder.blocks.{d}.ln2.gain/.shift,
    encoder.blocks.{d}.mlp.{w1,b1,w2,b2},
    encoder.ln_f.gain/.shift
    fusion.<FusionParams names>

Loading a container assigns tensors into these slots: unknown names and
shape mismatches are rejected, absent slots keep their current values,
and a positional table with a different (square-grid) row count is
resampled onto the model's patch grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embedding import EmbedParams
from .encoder import EncoderParams, init_encoder_params, resize_pos_embed
from .errors import ConfigError, FormatError
from .formats import WeightContainer
from .fusion import FusionParams, init_fusion_params
from .geometry import GridConfig


@dataclass
class ModelParams:
    embed: EmbedParams
    encoder: EncoderParams
    fusion: FusionParams


def init_model(
    cfg: GridConfig,
    depth: int = 2,
    encoder_heads: int = 4,
    fusion_heads: int = 8,
    seed: int = 0,
    with_pos_embed: bool = True,
) -> ModelParams:
    """Deterministic random initialization for a given grid."""
    rng = np.random.default_rng(seed)
    embed = EmbedParams(
        weight=rng.normal(0.0, 0.02, size=(cfg.C, 3 * cfg.S * cfg.S)),
        bias=np.zeros(cfg.C),
    )
    enc = init_encoder_params(
        cfg.C, cfg.N, depth, n_heads=encoder_heads, rng=rng, with_pos_embed=with_pos_embed
    )
    fus = init_fusion_params(cfg.C, n_heads=fusion_heads, rng=rng)
    return ModelParams(embed=embed, encoder=enc, fusion=fus)


def _encoder_slots(enc: EncoderParams) -> dict[str, tuple]:
    """Map names to (owner object, attribute) pairs for assignment."""
    slots: dict[str, tuple] = {
        "encoder.cls_token": (enc, "cls_token"),
        "encoder.ln_f.gain": (enc, "ln_f_gain"),
        "encoder.ln_f.shift": (enc, "ln_f_shift"),
    }
    if enc.pos_embed is not None:
        slots["encoder.pos_embed"] = (enc, "pos_embed")
    for d, blk in enumerate(enc.blocks):
        base = f"encoder.blocks.{d}"
        slots[f"{base}.ln1.gain"] = (blk, "ln1_gain")
        slots[f"{base}.ln1.shift"] = (blk, "ln1_shift")
        slots[f"{base}.ln2.gain"] = (blk, "ln2_gain")
        slots[f"{base}.ln2.shift"] = (blk, "ln2_shift")
        for w in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"):
            slots[f"{base}.attn.{w}"] = (blk.attn, w)
        for w in ("w1", "b1", "w2", "b2"):
            slots[f"{base}.mlp.{w}"] = (blk, f"mlp_{w}")
    return slots


def named_parameters(model: ModelParams) -> dict[str, np.ndarray]:
    """Flat view of every parameter under its canonical name."""
    out = {"embed.weight": model.embed.weight, "embed.bias": model.embed.bias}
    for name, (owner, attr) in _encoder_slots(model.encoder).items():
        out[name] = getattr(owner, attr)
    for name, arr in model.fusion.tensors.items():
        out[f"fusion.{name}"] = arr
    return out


def to_container(model: ModelParams) -> WeightContainer:
    container = WeightContainer()
    for name, arr in named_parameters(model).items():
        container.add(name, arr)
    return container


def load_weights(model: ModelParams, container: WeightContainer, cfg: GridConfig) -> None:
    """Assign container tensors into the model's parameter slots, in place."""
    embed_slots = {"embed.weight", "embed.bias"}
    enc_slots = _encoder_slots(model.encoder)
    fusion_names = {f"fusion.{n}": n for n in model.fusion.tensors}

    for name in container.names():
        arr = np.asarray(container[name], dtype=np.float64)
        if name in embed_slots:
            target = getattr(model.embed, name.split(".")[1])
            if arr.shape != target.shape:
                raise FormatError(f"{name}: shape {arr.shape} != expected {target.shape}")
            setattr(model.embed, name.split(".")[1], arr)
        elif name in enc_slots:
            owner, attr = enc_slots[name]
            target = getattr(owner, attr)
            if arr.shape != target.shape:
                if name == "encoder.pos_embed":
                    arr = _regrid_pos_embed(arr, target.shape, cfg)
                else:
                    raise FormatError(f"{name}: shape {arr.shape} != expected {target.shape}")
            setattr(owner, attr, arr)
        elif name in fusion_names:
            key = fusion_names[name]
            target = model.fusion.tensors[key]
            if arr.shape != target.shape:
                raise FormatError(f"{name}: shape {arr.shape} != expected {target.shape}")
            model.fusion.tensors[key] = arr
        else:
            raise FormatError(f"unknown tensor name {name!r} in weight container")


def _regrid_pos_embed(arr: np.ndarray, want_shape: tuple, cfg: GridConfig) -> np.ndarray:
    if arr.ndim != 2 or arr.shape[1] != want_shape[1]:
        raise FormatError(f"encoder.pos_embed: shape {arr.shape} incompatible with {want_shape}")
    n_src = arr.shape[0] - 1
    side = math.isqrt(n_src)
    if side * side != n_src:
        raise FormatError(
            f"cannot infer source patch grid for a {arr.shape[0]}-row positional table"
        )
    return resize_pos_embed(arr, (side, side), (cfg.h, cfg.w))


def trainable_parameters(model: ModelParams) -> dict[str, np.ndarray]:
    """The fusion subgraph: the only weights the training loop updates."""
    return {f"fusion.{n}": arr for n, arr in model.fusion.tensors.items()}


def set_trainable_parameters(model: ModelParams, values: dict[str, np.ndarray]) -> None:
    for name, arr in values.items():
        if not name.startswith("fusion."):
            raise ConfigError(f"{name} is not a trainable slot")
        key = name[len("fusion.") :]
        if key not in model.fusion.tensors:
            raise ConfigError(f"unknown fusion parameter {key!r}")
        model.fusion.tensors[key] = arr
