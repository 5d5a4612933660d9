"""Saliency detection for 360-degree video.

Tangent-patch deformable embedding of panoramic rasters, transformer
encoding with a frozen backbone, trainable spatiotemporal fusion, a
three-term relative saliency decomposition with spherical smoothing, and
saliency/quality evaluation metrics.
"""

from .geometry import (
    GridConfig,
    OffsetTable,
    PixelCoord,
    Projection,
    SphereCoord,
    compute_offset_table,
)

__version__ = "0.1.0"

__all__ = [
    "GridConfig",
    "OffsetTable",
    "PixelCoord",
    "Projection",
    "SphereCoord",
    "compute_offset_table",
    "__version__",
]
