"""
Shared fixtures for the otmask tests.

Strip scenes
~~~~~~~~~~~~
A 3-row canvas split into two touching things of the same class, with
the points in the same corner of both boxes.  Nothing in the maps
separates the two things, so the minimum-cost split lands halfway
between the points while the true split is the seam between the boxes.

Separated scenes
~~~~~~~~~~~~~~~~
A stuff background with two things of different classes, at least three
pixels from each other and from the canvas border.  With noise 0 the
maps carry all the information needed to recover the gt mask.
"""

from typing import List

import numpy as np

from otmask.core.models import BoundaryMap, PointAnnotation, PseudoMask, SemanticMap
from otmask.maps.synth import SceneSpec, parse_scene_spec, synth_scene


def strip_spec_text(left: int, right: int) -> str:
    """Scene description of a ``3 x (left + right)`` strip of two things."""
    width = left + right
    return (
        f"size 3 {width}\n"
        "classes 2\n"
        "placement corner\n"
        "instance_edge 0\n"
        f"rect thing 1 0 0 {left} 3\n"
        f"rect thing 1 {left} 0 {width} 3\n"
    )


def strip_suite(count: int = 50) -> List:
    """*count* strip scenes, sizes 10.. with two seeds each."""
    scenes = []
    for k in range(count):
        size = 10 + k // 2
        spec = parse_scene_spec(strip_spec_text(size, size))
        scenes.append(synth_scene(spec, seed=k))
    return scenes


def left_strip(left: int = 12, right: int = 12):
    """Strip maps with both points one pixel inside the left ends.

    Returns:
        ``(semantic, boundary_high, boundary_low, points, gt_mask)``.
    """
    width = left + right
    probs = np.zeros((3, width, 2))
    probs[..., 1] = 1.0
    points = [
        PointAnnotation(1, 1, "thing", 1, 1),
        PointAnnotation(2, 1, "thing", left + 1, 1),
    ]
    targets = np.where(np.arange(width) < left, 1, 2)[None, :].repeat(3, axis=0)
    gt = PseudoMask(targets, {1: (1, "thing"), 2: (1, "thing")})
    return SemanticMap(probs), BoundaryMap.zeros(3, width), BoundaryMap.zeros(3, width), points, gt


def separated_spec(rng: np.random.Generator) -> SceneSpec:
    """Random noise-0 scene of two different-class things on a background."""
    x0 = int(rng.integers(3, 5))
    y0 = int(rng.integers(3, 9))
    w0, h0 = int(rng.integers(4, 6)), int(rng.integers(4, 6))
    x1 = int(rng.integers(12, 14))
    y1 = int(rng.integers(3, 9))
    w1 = int(rng.integers(4, 18 - 3 - x1 + 1))
    h1 = int(rng.integers(4, 6))
    text = (
        "size 18 18\n"
        "classes 3\n"
        "background 0\n"
        "placement uniform\n"
        f"rect thing 1 {x0} {y0} {x0 + w0} {y0 + h0}\n"
        f"rect thing 2 {x1} {y1} {x1 + w1} {y1 + h1}\n"
    )
    return parse_scene_spec(text)


def random_semantic(rng: np.random.Generator, height: int, width: int, channels: int, floor: float = 0.2) -> SemanticMap:
    """Smooth random probabilities bounded away from 0."""
    raw = rng.uniform(floor, 1.0, size=(height, width, channels))
    return SemanticMap(raw / raw.sum(axis=2, keepdims=True))


def random_boundary(rng: np.random.Generator, height: int, width: int, low: float = 0.0, high: float = 1.0) -> BoundaryMap:
    return BoundaryMap(rng.uniform(low, high, size=(height, width)))


def random_points(rng: np.random.Generator, height: int, width: int, count: int, channels: int) -> List[PointAnnotation]:
    """*count* points on distinct pixels with random classes and kinds."""
    pixels = rng.choice(height * width, size=count, replace=False)
    points = []
    for k, j in enumerate(pixels.tolist()):
        y, x = divmod(j, width)
        kind = "thing" if rng.random() < 0.5 else "stuff"
        points.append(PointAnnotation(k + 1, int(rng.integers(channels)), kind, x, y))
    return points
