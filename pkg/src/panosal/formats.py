"""Bit-exact binary file formats and plain-text config I/O.

All multi-byte integers and floats are little-endian.

POFF (offset table):
    magic "POFF", u32 version=1, u8 format id (0=ERP, 1=CMP, 2=TSP),
    u32 W, H, S, then N*S*S pairs of f32 (u, v), row-major by patch index,
    tap row, tap column.

PAVW (named weight container):
    magic "PAVW", u32 version=1, u32 count; per tensor: u16 name length,
    UTF-8 name bytes, u8 dtype (0=f32, 1=f64), u8 rank, rank * u32 dims,
    payload row-major.  Tensors are written sorted by name.

PTEN (raw tensor): magic "PTEN", u8 rank, rank * u32 dims, f32 payload.

PSAL (dense saliency maps): magic "PSAL", u32 W, u32 H, u32 T, then
    T*H*W f32 row-major.

Frames are binary PPM (P6, maxval 255) scaled to [0, 1]; previews are
binary PGM (P5, maxval 255).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .geometry import GridConfig, OffsetTable, Projection

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_IDS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(buf)}")
    return buf


# -- POFF --------------------------------------------------------------------


def write_offset_table(path, table: OffsetTable) -> None:
    cfg = table.config
    with open(path, "wb") as f:
        f.write(b"POFF")
        f.write(struct.pack("<IBIII", 1, table.format.value, cfg.W, cfg.H, cfg.S))
        f.write(np.ascontiguousarray(table.taps, dtype="<f4").tobytes())


def read_offset_table(path, C: int = 64, T: int = 5) -> OffsetTable:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != b"POFF":
            raise FormatError("not an offset-table file (bad magic)")
        version, fmt_id, W, H, S = struct.unpack("<IBIII", _read_exact(f, 17))
        if version != 1:
            raise FormatError(f"unsupported offset-table version {version}")
        try:
            fmt = Projection(fmt_id)
        except ValueError:
            raise FormatError(f"unknown format id {fmt_id}") from None
        cfg = GridConfig.create(W, H, S, C=C, T=T)
        raw = _read_exact(f, cfg.N * S * S * 2 * 4)
        if f.read(1):
            raise FormatError("trailing bytes after offset table payload")
    taps = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(cfg.N, S, S, 2)
    return OffsetTable(format=fmt, config=cfg, taps=taps)


# -- PAVW --------------------------------------------------------------------


@dataclass
class WeightContainer:
    """Ordered mapping of unique tensor names to float arrays."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, name: str, array: np.ndarray) -> None:
        if name in self.tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        arr = np.asarray(array)
        if arr.dtype not in _DTYPE_IDS:
            arr = arr.astype(np.float64)
        self.tensors[name] = arr

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> list[str]:
        return sorted(self.tensors)


def write_weights(path, container: WeightContainer) -> None:
    with open(path, "wb") as f:
        f.write(b"PAVW")
        f.write(struct.pack("<II", 1, len(container.tensors)))
        for name in container.names():
            arr = container.tensors[name]
            nb = name.encode("utf-8")
            dtype_id = _DTYPE_IDS[np.dtype(arr.dtype)]
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<BB", dtype_id, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def read_weights(path) -> WeightContainer:
    container = WeightContainer()
    with open(path, "rb") as f:
        if _read_exact(f, 4) != b"PAVW":
            raise FormatError("not a weight container (bad magic)")
        version, count = struct.unpack("<II", _read_exact(f, 8))
        if version != 1:
            raise FormatError(f"unsupported weight container version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2))
            name = _read_exact(f, name_len).decode("utf-8")
            dtype_id, rank = struct.unpack("<BB", _read_exact(f, 2))
            if dtype_id not in _DTYPES:
                raise FormatError(f"unknown dtype id {dtype_id} for tensor {name!r}")
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank))
            dt = _DTYPES[dtype_id]
            payload = _read_exact(f, int(np.prod(dims, dtype=np.int64)) * dt.itemsize)
            arr = np.frombuffer(payload, dtype=dt).reshape(dims).copy()
            container.add(name, arr)
        if f.read(1):
            raise FormatError("trailing bytes after weight container payload")
    return container


# -- PTEN --------------------------------------------------------------------


def write_tensor(path, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype=np.float32)
    with open(path, "wb") as f:
        f.write(b"PTEN")
        f.write(struct.pack("<B", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != b"PTEN":
            raise FormatError("not a raw tensor file (bad magic)")
        (rank,) = struct.unpack("<B", _read_exact(f, 1))
        dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank))
        payload = _read_exact(f, int(np.prod(dims, dtype=np.int64)) * 4)
        if f.read(1):
            raise FormatError("trailing bytes after tensor payload")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)


# -- PSAL --------------------------------------------------------------------


def write_saliency_maps(path, maps: np.ndarray) -> None:
    maps = np.asarray(maps)
    if maps.ndim != 3:
        raise ConfigError(f"saliency maps must be (T, H, W), got shape {maps.shape}")
    T, H, W = maps.shape
    with open(path, "wb") as f:
        f.write(b"PSAL")
        f.write(struct.pack("<III", W, H, T))
        f.write(np.ascontiguousarray(maps, dtype="<f4").tobytes())


def read_saliency_maps(path) -> np.ndarray:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != b"PSAL":
            raise FormatError("not a saliency map file (bad magic)")
        W, H, T = struct.unpack("<III", _read_exact(f, 12))
        payload = _read_exact(f, T * H * W * 4)
        if f.read(1):
            raise FormatError("trailing bytes after saliency payload")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(T, H, W)


# -- PPM / PGM ---------------------------------------------------------------


def _read_pnm_header(f, magic: bytes):
    if _read_exact(f, 2) != magic:
        raise FormatError(f"expected {magic.decode()} image")
    fields = []
    while len(fields) < 3:
        line = f.readline()
        if not line:
            raise FormatError("truncated PNM header")
        body = line.split(b"#", 1)[0]
        fields.extend(body.split())
    W, H, maxval = (int(x) for x in fields[:3])
    if maxval != 255:
        raise FormatError(f"only maxval 255 supported, got {maxval}")
    return W, H


def read_ppm(path) -> np.ndarray:
    """Return a (3, H, W) float64 array in [0, 1]."""
    with open(path, "rb") as f:
        W, H = _read_pnm_header(f, b"P6")
        raw = _read_exact(f, W * H * 3)
    img = np.frombuffer(raw, dtype=np.uint8).reshape(H, W, 3)
    return img.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_ppm(path, pixels: np.ndarray) -> None:
    """Write a (3, H, W) array in [0, 1] as binary PPM."""
    arr = np.asarray(pixels)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ConfigError(f"frame must be (3, H, W), got {arr.shape}")
    img = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (arr.shape[2], arr.shape[1]))
        f.write(img.tobytes())


def write_pgm(path, image: np.ndarray) -> None:
    """Write a (H, W) array in [0, 1] as binary PGM."""
    arr = np.asarray(image)
    img = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (arr.shape[1], arr.shape[0]))
        f.write(img.tobytes())


def list_frame_files(directory) -> list[Path]:
    d = Path(directory)
    frames = sorted(d.glob("frame_*.ppm"))
    if not frames:
        raise ConfigError(f"no frame_*.ppm files in {d}")
    return frames


# -- key=value config and JSON-lines reports ---------------------------------


def read_config_file(path) -> dict[str, str]:
    """Parse UTF-8 key=value lines; '#' starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = body.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def report_line(clip: str, metric: str, value: float, params: dict) -> str:
    record = {"clip": clip, "metric": metric, "value": value, "params": params}
    return json.dumps(record, sort_keys=True)
