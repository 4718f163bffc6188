"""
Low-level contour proxy.

Stands in for a trained edge detector: the gradient magnitude of the
image luminance, max-normalised to [0, 1].  Externally computed contour
maps can always be supplied as files instead.
"""

import numpy as np
from scipy import ndimage

from otmask.core.errors import ShapeError
from otmask.core.models import BoundaryMap

# ITU-R BT.601 luma weights.
LUMA = np.array([0.299, 0.587, 0.114])

_CENTRAL = np.array([-0.5, 0.0, 0.5])


def luminance(image: np.ndarray) -> np.ndarray:
    """Luma of an ``(H, W, 3)`` RGB array as float64 ``(H, W)``."""
    if image.ndim != 3 or image.shape[2] != 3 or min(image.shape) < 1:
        raise ShapeError(f"image must be (H, W, 3), got {image.shape}")
    return image.astype(np.float64) @ LUMA


def low_level_boundary(image: np.ndarray) -> BoundaryMap:
    """Normalised luminance gradient magnitude.

    Central differences along both axes with edge replication, so a
    vertical step between columns ``c - 1`` and ``c`` responds on exactly
    those two columns.  A constant image yields an all-zero map.
    """
    lum = luminance(image)
    gx = ndimage.correlate1d(lum, _CENTRAL, axis=1, mode="nearest")
    gy = ndimage.correlate1d(lum, _CENTRAL, axis=0, mode="nearest")
    magnitude = np.hypot(gx, gy)
    peak = float(magnitude.max())
    if peak <= 0.0:
        return BoundaryMap.zeros(*lum.shape)
    return BoundaryMap(magnitude / peak)
