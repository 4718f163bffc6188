"""
Scene directory layout shared by ``synth`` and the batch commands.

A scene directory holds::

    semantic.pfm (+ semantic.pfm.channels)
    boundary_high.pfm            optional, zeros when missing
    boundary_low.pfm             optional, image proxy or zeros when missing
    image.pfm                    optional
    points.txt
    gt_mask.pgm (+ .labels)      optional
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from otmask.config import debug_print
from otmask.core.errors import ShapeError, ValidationError
from otmask.core.models import BoundaryMap, PointAnnotation, PseudoMask, SemanticMap
from otmask.maps.boundary import low_level_boundary
from otmask.maps.codecs import (
    read_image,
    read_map,
    read_mask,
    read_points,
    write_image,
    write_map,
    write_mask,
    write_points,
)
from otmask.maps.synth import SyntheticScene

SEMANTIC_FILE = "semantic.pfm"
BOUNDARY_HIGH_FILE = "boundary_high.pfm"
BOUNDARY_LOW_FILE = "boundary_low.pfm"
IMAGE_FILE = "image.pfm"
POINTS_FILE = "points.txt"
GT_MASK_FILE = "gt_mask.pgm"


@dataclass
class SceneInputs:
    """Maps and annotations loaded from one scene directory."""

    name: str
    semantic: SemanticMap
    boundary_high: BoundaryMap
    boundary_low: BoundaryMap
    points: List[PointAnnotation]
    image: Optional[np.ndarray] = None
    gt_mask: Optional[PseudoMask] = None


def write_scene(scene: SyntheticScene, out_dir: Union[str, Path]) -> None:
    """Write a synthetic scene as a scene directory."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create {out_dir}: {exc}") from exc
    write_image(scene.image, out_dir / IMAGE_FILE)
    write_map(scene.semantic, out_dir / SEMANTIC_FILE)
    write_map(scene.boundary_high, out_dir / BOUNDARY_HIGH_FILE)
    write_map(scene.boundary_low, out_dir / BOUNDARY_LOW_FILE)
    write_points(scene.points, out_dir / POINTS_FILE)
    write_mask(scene.gt_mask, out_dir / GT_MASK_FILE)
    debug_print(f"scene written to {out_dir}")


def _read_typed(path: Path, expected: type):
    value = read_map(path)
    if not isinstance(value, expected):
        raise ValidationError(f"{path}: expected a {expected.__name__}, got a {type(value).__name__}")
    return value


def load_scene(
    scene_dir: Union[str, Path],
    boundary_low_override: Optional[Union[str, Path]] = None,
    require_gt: bool = False,
) -> SceneInputs:
    """Load a scene directory.

    Args:
        scene_dir:             Directory following the layout above.
        boundary_low_override: Low-level boundary file used instead of the
                               directory's own.
        require_gt:            Reject directories without ``gt_mask.pgm``.

    Raises:
        ValidationError: Missing required file, size disagreement or any
                         codec error.
    """
    scene_dir = Path(scene_dir)
    if not scene_dir.is_dir():
        raise ValidationError(f"scene directory {scene_dir} does not exist")

    semantic = _read_typed(scene_dir / SEMANTIC_FILE, SemanticMap)
    h, w = semantic.shape

    image = read_image(scene_dir / IMAGE_FILE) if (scene_dir / IMAGE_FILE).exists() else None

    high_path = scene_dir / BOUNDARY_HIGH_FILE
    high = _read_typed(high_path, BoundaryMap) if high_path.exists() else BoundaryMap.zeros(h, w)

    low_path = Path(boundary_low_override) if boundary_low_override else scene_dir / BOUNDARY_LOW_FILE
    if boundary_low_override or low_path.exists():
        low = _read_typed(low_path, BoundaryMap)
    elif image is not None:
        low = low_level_boundary(image)
    else:
        low = BoundaryMap.zeros(h, w)

    for label, shape in (
        ("boundary_high", high.shape),
        ("boundary_low", low.shape),
        ("image", None if image is None else image.shape[:2]),
    ):
        if shape is not None and shape != (h, w):
            raise ShapeError(f"{scene_dir}: {label} is {shape}, semantic map is {(h, w)}")

    points = read_points(scene_dir / POINTS_FILE, h, w)

    gt_path = scene_dir / GT_MASK_FILE
    gt_mask = None
    if gt_path.exists():
        gt_mask = read_mask(gt_path)
        if gt_mask.shape != (h, w):
            raise ShapeError(f"{scene_dir}: gt mask is {gt_mask.shape}, semantic map is {(h, w)}")
    elif require_gt:
        raise ValidationError(f"{scene_dir}: {GT_MASK_FILE} is required")

    debug_print(f"loaded scene {scene_dir} {h}x{w} points={len(points)}")
    return SceneInputs(
        name=scene_dir.name,
        semantic=semantic,
        boundary_high=high,
        boundary_low=low,
        points=points,
        image=image,
        gt_mask=gt_mask,
    )
