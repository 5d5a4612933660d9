"""Sphere <-> raster geometry for panoramic rasters.

Conventions (fixed for the whole package):

- Direction frame is y-up, right-handed:
      d(theta, phi) = (cos(phi)*sin(theta), sin(phi), cos(phi)*cos(theta))
  theta is longitude in [0, 2*pi), phi is latitude in [-pi/2, pi/2],
  so +z is (theta=0, phi=0), +x is (theta=pi/2, phi=0), +y the north pole.

- Raster coordinates are continuous (u, v) with pixel (ix, iy) centred at
  u = ix, v = iy exactly.  For the equirectangular raster
      u = W * theta / (2*pi)   (wraps mod W)
      v = H * (1/2 - phi/pi)
  which puts row 0 on the north pole and row H on the (virtual) south pole.

- The patch-centre rotation is R(theta, phi) = Ry(theta) @ Rx(-phi), a
  proper rotation mapping +z to d(theta, phi) with yaw outermost; this is
  what makes offset tables equivariant to whole-patch yaw shifts.

Cubemap (CMP) layout: 3x2 face tiles, each a 90-degree gnomonic square:
row 0 = front, right, back; row 1 = left, top, bottom.  Truncated square
pyramid (TSP) layout: W = 2H; left H x H square is the full-resolution
front face; the right square holds the back face at half side length in
its centre and the four remaining faces as linearly tapered trapezoids.
Exact formulas are in the face-map helpers below and in the README.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError

TWO_PI = 2.0 * math.pi


class Projection(Enum):
    ERP = 0
    CMP = 1
    TSP = 2


class PixelCoord(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class SphereCoord:
    """Longitude/latitude point on the unit sphere.

    theta is normalized into [0, 2*pi); phi is clamped to [-pi/2, pi/2].
    """

    theta: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)
        object.__setattr__(self, "phi", float(np.clip(self.phi, -math.pi / 2, math.pi / 2)))


@dataclass(frozen=True)
class GridConfig:
    """Raster and patch-grid dimensions.

    W, H: raster size in pixels; S: patch side; w, h: patch counts per
    axis; N = w*h; C: feature channels; T: frames per clip window.
    """

    W: int
    H: int
    S: int
    w: int
    h: int
    N: int
    C: int = 64
    T: int = 5

    @classmethod
    def create(cls, W: int, H: int, S: int, C: int = 64, T: int = 5) -> "GridConfig":
        if min(W, H, S, C, T) <= 0:
            raise ConfigError("all grid dimensions must be positive")
        if W % S != 0 or H % S != 0:
            raise ConfigError(f"patch side {S} must divide raster {W}x{H} exactly")
        w, h = W // S, H // S
        return cls(W=W, H=H, S=S, w=w, h=h, N=w * h, C=C, T=T)

    def validate_format(self, fmt: Projection) -> None:
        if fmt is Projection.CMP and 2 * self.W != 3 * self.H:
            raise ConfigError(f"CMP raster needs W:H = 3:2, got {self.W}x{self.H}")
        if fmt is Projection.TSP and self.W != 2 * self.H:
            raise ConfigError(f"TSP raster needs W = 2H, got {self.W}x{self.H}")


@dataclass(frozen=True)
class TangentGrid:
    """S x S sampling points on the z=1 plane, centrosymmetric about (0,0,1)."""

    points: np.ndarray  # (S, S, 3)


@dataclass(frozen=True)
class OffsetTable:
    """Per-patch, per-tap continuous raster coordinates.

    taps[i, a, b] = (u, v) for patch i, tap row a, tap column b.  A pure
    function of (format, config): recomputation is bit-identical.
    """

    format: Projection
    config: GridConfig
    taps: np.ndarray  # (N, S, S, 2) float64


def direction(c: SphereCoord) -> np.ndarray:
    """Unit 3-vector of a sphere coordinate."""
    return direction_arrays(np.float64(c.theta), np.float64(c.phi))


def direction_arrays(theta, phi) -> np.ndarray:
    cp = np.cos(phi)
    return np.stack(
        [cp * np.sin(theta), np.sin(phi) * np.ones_like(cp), cp * np.cos(theta)], axis=-1
    )


def sph_from_cart(v) -> SphereCoord:
    """Spherical coordinate of a nonzero 3-vector; theta = 0 at the poles."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)) or float(np.linalg.norm(v)) == 0.0:
        raise DomainError("sph_from_cart requires a finite nonzero vector")
    theta, phi = sph_from_cart_arrays(v[..., 0], v[..., 1], v[..., 2])
    return SphereCoord(float(theta), float(phi))


def sph_from_cart_arrays(x, y, z):
    theta = np.arctan2(x, z) % TWO_PI
    phi = np.arctan2(y, np.hypot(x, z))
    # np.arctan2(0, 0) = 0 already gives the theta=0 pole convention.
    return theta, phi


def rotation_matrix(c: SphereCoord) -> np.ndarray:
    """Proper rotation (det +1) mapping +z to direction(c); yaw outermost."""
    return rotation_matrices(np.float64(c.theta), np.float64(c.phi))


def rotation_matrices(theta, phi) -> np.ndarray:
    """Vectorized R(theta, phi) = Ry(theta) @ Rx(-phi); output shape (..., 3, 3)."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    zero = np.zeros_like(ct)
    one = np.ones_like(ct)
    rows = [
        [ct, -st * sp, st * cp],
        [zero, cp, sp],
        [-st, -ct * sp, ct * cp],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def er_from_sph(c: SphereCoord, cfg: GridConfig) -> PixelCoord:
    """Continuous equirectangular raster position of a sphere coordinate."""
    u, v = erp_raster_from_sph_arrays(np.float64(c.theta), np.float64(c.phi), cfg.W, cfg.H)
    return PixelCoord(float(u), float(v))


def erp_raster_from_sph_arrays(theta, phi, W: int, H: int):
    u = (W * theta / TWO_PI) % W
    v = H * (0.5 - phi / math.pi)
    return u, v


def sph_from_er(u, v, cfg: GridConfig):
    """Inverse of er_from_sph on continuous raster positions (arrays ok)."""
    theta = (TWO_PI * np.asarray(u, dtype=np.float64) / cfg.W) % TWO_PI
    phi = math.pi * (0.5 - np.asarray(v, dtype=np.float64) / cfg.H)
    return theta, np.clip(phi, -math.pi / 2, math.pi / 2)


def geodesic_distance(a: SphereCoord, b: SphereCoord) -> float:
    """Great-circle angle between two sphere points, in [0, pi]."""
    da, db = direction(a), direction(b)
    return float(np.arctan2(np.linalg.norm(np.cross(da, db)), np.dot(da, db)))


def geodesic_distance_matrix(dirs_a: np.ndarray, dirs_b: np.ndarray) -> np.ndarray:
    """Pairwise great-circle angles between two (N,3)/(M,3) direction sets."""
    dots = np.clip(dirs_a @ dirs_b.T, -1.0, 1.0)
    ax, ay, az = dirs_a[:, 0:1], dirs_a[:, 1:2], dirs_a[:, 2:3]
    bx, by, bz = dirs_b[:, 0], dirs_b[:, 1], dirs_b[:, 2]
    cx = ay * bz - az * by
    cy = az * bx - ax * bz
    cz = ax * by - ay * bx
    cross_norm = np.sqrt(cx * cx + cy * cy + cz * cz)
    return np.arctan2(cross_norm, dots)


def patch_fov(cfg: GridConfig) -> float:
    """Angular extent of one tangential patch: its equatorial raster footprint."""
    return TWO_PI * cfg.S / cfg.W


def tangent_grid(S: int, fov: float) -> TangentGrid:
    """S x S tap centres on the z=1 plane spanning tan(fov/2) * [-1, 1].

    Tap row a runs north to south (decreasing plane y), tap column b runs
    west to east (increasing plane x), matching raster (v, u) order.
    """
    if S < 1:
        raise ConfigError("patch side must be >= 1")
    t = math.tan(fov / 2.0)
    idx = np.arange(S, dtype=np.float64)
    centers = t * (2.0 * idx + 1.0 - S) / S
    x = np.broadcast_to(centers[None, :], (S, S))
    y = np.broadcast_to(-centers[:, None], (S, S))
    pts = np.stack([x, y, np.ones((S, S))], axis=-1)
    return TangentGrid(points=pts)


# ---------------------------------------------------------------------------
# Cube faces shared by CMP and TSP.  Ordered alphabetically so that argmax
# over face-forward dot products resolves seam ties to the lexicographically
# first face.

_FACE_NAMES = ["back", "bottom", "front", "left", "right", "top"]
_FACE_FORWARD = np.array(
    [[0, 0, -1], [0, -1, 0], [0, 0, 1], [-1, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=np.float64
)
_FACE_RIGHT = np.array(
    [[-1, 0, 0], [1, 0, 0], [1, 0, 0], [0, 0, 1], [0, 0, -1], [1, 0, 0]], dtype=np.float64
)
_FACE_DOWN = np.array(
    [[0, -1, 0], [0, 0, -1], [0, -1, 0], [0, -1, 0], [0, -1, 0], [0, 0, 1]], dtype=np.float64
)

# CMP tile positions (row, col) in the 3x2 layout, indexed like _FACE_NAMES.
_CMP_TILE = {
    "front": (0, 0),
    "right": (0, 1),
    "back": (0, 2),
    "left": (1, 0),
    "top": (1, 1),
    "bottom": (1, 2),
}
_CMP_TILE_ARR = np.array([_CMP_TILE[n] for n in _FACE_NAMES], dtype=np.int64)
_CMP_FACE_OF_TILE = {v: _FACE_NAMES.index(k) for k, v in _CMP_TILE.items()}


def _face_local_coords(dirs: np.ndarray):
    """Dominant cube face index and gnomonic in-face coords for unit dirs.

    Returns (face_idx, a, b) with a, b in [-1, 1]; ties go to the first
    face in alphabetical order.
    """
    dots = dirs @ _FACE_FORWARD.T  # (..., 6)
    face = np.argmax(dots, axis=-1)
    fwd = _FACE_FORWARD[face]
    t = np.sum(dirs * fwd, axis=-1)
    a = np.sum(dirs * _FACE_RIGHT[face], axis=-1) / t
    b = np.sum(dirs * _FACE_DOWN[face], axis=-1) / t
    return face, a, b


def _cmp_raster_from_dirs(dirs: np.ndarray, cfg: GridConfig):
    F = cfg.H // 2
    face, a, b = _face_local_coords(dirs)
    tile = _CMP_TILE_ARR[face]
    u = tile[..., 1] * F + ((a + 1.0) * F - 1.0) / 2.0
    v = tile[..., 0] * F + ((b + 1.0) * F - 1.0) / 2.0
    return u, v


def _cmp_dirs_from_raster(u, v, cfg: GridConfig) -> np.ndarray:
    F = cfg.H // 2
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    col = np.clip(np.floor((u + 0.5) / F).astype(np.int64), 0, 2)
    row = np.clip(np.floor((v + 0.5) / F).astype(np.int64), 0, 1)
    face = np.vectorize(lambda r, c: _CMP_FACE_OF_TILE[(r, c)])(row, col)
    a = (2.0 * (u - col * F) + 1.0) / F - 1.0
    b = (2.0 * (v - row * F) + 1.0) / F - 1.0
    d = (
        _FACE_FORWARD[face]
        + a[..., None] * _FACE_RIGHT[face]
        + b[..., None] * _FACE_DOWN[face]
    )
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


# TSP side-face orientation table: maps (s, c) trapezoid coordinates to the
# face's gnomonic (a, b).  s runs 0 at the outer (front-adjacent) edge to 1
# at the back square; c runs 0..1 along the cross axis.  Derived so that all
# trapezoid/back-square raster seams are continuous on the sphere.
#   right  (left trapezoid):   a = 2s-1, b = 2c-1, cross axis = Y
#   left   (right trapezoid):  a = 1-2s, b = 2c-1, cross axis = Y
#   top    (top trapezoid):    b = 1-2s, a = 1-2c, cross axis = X
#   bottom (bottom trapezoid): b = 2s-1, a = 1-2c, cross axis = X


def _tsp_raster_from_dirs(dirs: np.ndarray, cfg: GridConfig):
    F = cfg.H
    face, a, b = _face_local_coords(dirs)
    name = np.asarray(_FACE_NAMES, dtype=object)[face]

    u = np.empty(np.shape(face), dtype=np.float64)
    v = np.empty(np.shape(face), dtype=np.float64)

    m_front = name == "front"
    u[m_front] = ((a[m_front] + 1.0) * F - 1.0) / 2.0
    v[m_front] = ((b[m_front] + 1.0) * F - 1.0) / 2.0

    m_back = name == "back"
    X = (a[m_back] + 2.0) / 4.0
    Y = (b[m_back] + 2.0) / 4.0
    u[m_back] = F + X * F - 0.5
    v[m_back] = Y * F - 0.5

    for fname, s_expr, c_expr, horiz, sign in (
        ("right", lambda A, B: (A + 1) / 2, lambda A, B: (B + 1) / 2, True, -1.0),
        ("left", lambda A, B: (1 - A) / 2, lambda A, B: (B + 1) / 2, True, 1.0),
        ("top", lambda A, B: (1 - B) / 2, lambda A, B: (1 - A) / 2, False, -1.0),
        ("bottom", lambda A, B: (B + 1) / 2, lambda A, B: (1 - A) / 2, False, 1.0),
    ):
        m = name == fname
        if not np.any(m):
            continue
        s = s_expr(a[m], b[m])
        c = c_expr(a[m], b[m])
        mag = 0.5 - 0.25 * s
        other = (c - 0.5) * (2.0 * mag)
        dx = sign * mag if horiz else other
        dy = other if horiz else sign * mag
        u[m] = F + (0.5 + dx) * F - 0.5
        v[m] = (0.5 + dy) * F - 0.5

    return u, v


def _tsp_dirs_from_raster(u, v, cfg: GridConfig) -> np.ndarray:
    F = cfg.H
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    face = np.empty(u.shape, dtype=np.int64)
    a = np.empty(u.shape, dtype=np.float64)
    b = np.empty(u.shape, dtype=np.float64)

    m_front = u < F - 0.5
    a[m_front] = (2.0 * u[m_front] + 1.0) / F - 1.0
    b[m_front] = (2.0 * v[m_front] + 1.0) / F - 1.0
    face[m_front] = _FACE_NAMES.index("front")

    mr = ~m_front
    X = (u[mr] - F + 0.5) / F
    Y = (v[mr] + 0.5) / F
    dx = X - 0.5
    dy = Y - 0.5
    in_back = (np.abs(dx) < 0.25) & (np.abs(dy) < 0.25)

    fa = np.empty(X.shape, dtype=np.int64)
    aa = np.empty(X.shape, dtype=np.float64)
    bb = np.empty(X.shape, dtype=np.float64)

    fa[in_back] = _FACE_NAMES.index("back")
    aa[in_back] = 4.0 * X[in_back] - 2.0
    bb[in_back] = 4.0 * Y[in_back] - 2.0

    tz = ~in_back
    tdx, tdy = dx[tz], dy[tz]
    mag = np.maximum(np.abs(tdx), np.abs(tdy))
    s = np.clip((0.5 - mag) / 0.25, 0.0, 1.0)
    horiz = np.abs(tdx) >= np.abs(tdy)  # diagonal ties go to the horizontal pair
    cross = np.where(horiz, tdy, tdx)
    c = 0.5 + cross / (2.0 * mag)

    ta = np.empty(s.shape, dtype=np.float64)
    tb = np.empty(s.shape, dtype=np.float64)
    tf = np.empty(s.shape, dtype=np.int64)

    m = horiz & (tdx < 0)
    tf[m] = _FACE_NAMES.index("right")
    ta[m] = 2 * s[m] - 1
    tb[m] = 2 * c[m] - 1
    m = horiz & (tdx >= 0)
    tf[m] = _FACE_NAMES.index("left")
    ta[m] = 1 - 2 * s[m]
    tb[m] = 2 * c[m] - 1
    m = ~horiz & (tdy < 0)
    tf[m] = _FACE_NAMES.index("top")
    tb[m] = 1 - 2 * s[m]
    ta[m] = 1 - 2 * c[m]
    m = ~horiz & (tdy >= 0)
    tf[m] = _FACE_NAMES.index("bottom")
    tb[m] = 2 * s[m] - 1
    ta[m] = 1 - 2 * c[m]

    fa[tz], aa[tz], bb[tz] = tf, ta, tb
    face[mr], a[mr], b[mr] = fa, aa, bb

    d = (
        _FACE_FORWARD[face]
        + a[..., None] * _FACE_RIGHT[face]
        + b[..., None] * _FACE_DOWN[face]
    )
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def raster_from_direction_arrays(fmt: Projection, dirs: np.ndarray, cfg: GridConfig):
    """Continuous (u, v) arrays for unit directions in the given format."""
    cfg.validate_format(fmt)
    if fmt is Projection.ERP:
        theta, phi = sph_from_cart_arrays(dirs[..., 0], dirs[..., 1], dirs[..., 2])
        return erp_raster_from_sph_arrays(theta, phi, cfg.W, cfg.H)
    if fmt is Projection.CMP:
        return _cmp_raster_from_dirs(dirs, cfg)
    return _tsp_raster_from_dirs(dirs, cfg)


def raster_from_direction(fmt: Projection, d, cfg: GridConfig) -> PixelCoord:
    """Continuous raster position of a single unit direction."""
    d = np.asarray(d, dtype=np.float64)
    n = float(np.linalg.norm(d))
    if abs(n - 1.0) > 1e-9:
        raise DomainError(f"direction must be unit length, got norm {n}")
    u, v = raster_from_direction_arrays(fmt, d[None, :], cfg)
    return PixelCoord(float(u[0]), float(v[0]))


def direction_from_raster_arrays(fmt: Projection, u, v, cfg: GridConfig) -> np.ndarray:
    """Unit directions of continuous raster positions (inverse of the above)."""
    cfg.validate_format(fmt)
    if fmt is Projection.ERP:
        theta, phi = sph_from_er(u, v, cfg)
        return direction_arrays(theta, phi)
    if fmt is Projection.CMP:
        return _cmp_dirs_from_raster(u, v, cfg)
    return _tsp_dirs_from_raster(u, v, cfg)


def pixel_directions(fmt: Projection, cfg: GridConfig) -> np.ndarray:
    """(H, W, 3) unit direction of every pixel centre."""
    vv, uu = np.meshgrid(
        np.arange(cfg.H, dtype=np.float64), np.arange(cfg.W, dtype=np.float64), indexing="ij"
    )
    return direction_from_raster_arrays(fmt, uu, vv, cfg)


def patch_centers(fmt: Projection, cfg: GridConfig):
    """(theta, phi) arrays of the N patch centres, row-major patch order.

    The centre of patch (r, c) is the geometric centre of its S x S pixel
    block: continuous raster position (c*S + (S-1)/2, r*S + (S-1)/2).
    """
    cfg.validate_format(fmt)
    half = (cfg.S - 1) / 2.0
    cols = np.arange(cfg.w, dtype=np.float64) * cfg.S + half
    rows = np.arange(cfg.h, dtype=np.float64) * cfg.S + half
    vv, uu = np.meshgrid(rows, cols, indexing="ij")
    dirs = direction_from_raster_arrays(fmt, uu.ravel(), vv.ravel(), cfg)
    return sph_from_cart_arrays(dirs[:, 0], dirs[:, 1], dirs[:, 2])


def patch_center_directions(fmt: Projection, cfg: GridConfig) -> np.ndarray:
    theta, phi = patch_centers(fmt, cfg)
    return direction_arrays(theta, phi)


def compute_offset_table(cfg: GridConfig, fmt: Projection) -> OffsetTable:
    """Deformable sampling positions for every patch of the raster.

    taps[i] projects the reference tangent grid, rotated to patch i's
    centre, back into the raster.  Deterministic and pure.
    """
    cfg.validate_format(fmt)
    theta, phi = patch_centers(fmt, cfg)
    rot = rotation_matrices(theta, phi)  # (N, 3, 3)
    grid = tangent_grid(cfg.S, patch_fov(cfg)).points.reshape(-1, 3)  # (S*S, 3)
    pts = np.einsum("nij,pj->npi", rot, grid)
    pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
    u, v = raster_from_direction_arrays(fmt, pts, cfg)
    u = u % cfg.W
    if fmt is Projection.ERP:
        v = np.clip(v, 0.0, np.nextafter(cfg.H, 0.0))
    else:
        # half-texel overhang at tile edges; clamping matches the
        # clamp-to-face-edge sampling rule bit for bit
        v = np.clip(v, 0.0, cfg.H - 1.0)
    taps = np.stack([u, v], axis=-1).reshape(cfg.N, cfg.S, cfg.S, 2)
    return OffsetTable(format=fmt, config=cfg, taps=taps)
