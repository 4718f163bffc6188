"""
Supplier unit numbers.

Each point supplier ``i`` ships ``x_i`` pixels; the supplies always sum
to the pixel count ``n``.  Three schemes:

- ``equal_division``:   ``n // m`` each, the remainder to the lowest indices.
- ``nearest_gt``:       pixels whose cheapest supplier is ``i``.
- ``nearest_centroid``: start from the nearest_gt regions; repeatedly
  move every source to its region centroid, rebuild the geodesic costs
  from the centroids and re-assign.  The final regions are counted.

Tie rules: argmin ties go to the lowest supplier index; a centroid snaps
to the owned pixel nearest to the coordinate mean (row-major on ties);
a supplier with an empty region keeps its gt point as centroid.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from otmask.config import CENTROID_ITERATIONS, SUPPLY_SCHEME, debug_print
from otmask.core.errors import ValidationError
from otmask.core.models import PointAnnotation, nearest_member
from otmask.graph.grid_graph import EdgeWeightField, build_cost_matrix

EQUAL_DIVISION = "equal_division"
NEAREST_GT = "nearest_gt"
NEAREST_CENTROID = "nearest_centroid"
SCHEMES = (EQUAL_DIVISION, NEAREST_GT, NEAREST_CENTROID)


@dataclass
class InitialAssignment:
    """Cheapest supplier per pixel.

    Attributes:
        labels: Integer ``(height, width)`` array of supplier indices.
    """

    labels: np.ndarray

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    def counts(self, m: int) -> np.ndarray:
        """Pixels owned by each of the *m* suppliers."""
        return np.bincount(self.labels.reshape(-1), minlength=m)


@dataclass
class SupplyVector:
    """Per-supplier pixel counts.

    Attributes:
        counts:              Integer supply ``x_i`` per supplier.
        scheme:              Scheme that produced the counts.
        centroid_iterations: Refinement rounds (nearest_centroid only).
        sources:             Source pixel of every supplier in the last
                             assignment (gt points or centroids).
        assignment:          Last assignment (None for equal_division).
    """

    counts: np.ndarray
    scheme: str
    centroid_iterations: int = 0
    sources: List[int] = field(default_factory=list)
    assignment: Optional[InitialAssignment] = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def as_dict(self, points: Sequence[PointAnnotation]) -> Dict[str, int]:
        return {str(p.target_id): int(c) for p, c in zip(points, self.counts)}


def initial_assignment(cost: np.ndarray, height: Optional[int] = None, width: Optional[int] = None) -> InitialAssignment:
    """Per-pixel argmin over the cost rows (lowest index wins ties).

    Without *height*/*width* the labels form a single row.
    """
    if cost.ndim != 2 or cost.shape[0] < 1:
        raise ValidationError(f"cost matrix must be (m >= 1, n), got {cost.shape}")
    labels = np.argmin(cost, axis=0)
    if height is None or width is None:
        height, width = 1, cost.shape[1]
    return InitialAssignment(labels.reshape(height, width))


def region_centroid(assignment: InitialAssignment, supplier: int, fallback: Optional[int] = None) -> int:
    """Owned pixel nearest to the mean coordinate of *supplier*'s region.

    Args:
        assignment: Current per-pixel labels.
        supplier:   Supplier index.
        fallback:   Pixel returned when the region is empty (the gt point).

    Raises:
        ValidationError: Empty region and no *fallback*.
    """
    member = assignment.labels == supplier
    if not member.any():
        if fallback is None:
            raise ValidationError(f"supplier {supplier} owns no pixel")
        return fallback
    ys, xs = np.nonzero(member)
    return nearest_member(member, float(ys.mean()), float(xs.mean()))


def equal_division(n: int, m: int) -> np.ndarray:
    counts = np.full(m, n // m, dtype=np.int64)
    counts[: n % m] += 1
    return counts


def compute_supplies(
    weights: EdgeWeightField,
    points: Sequence[PointAnnotation],
    scheme: str = SUPPLY_SCHEME,
    centroid_iterations: int = CENTROID_ITERATIONS,
    cost: Optional[np.ndarray] = None,
) -> SupplyVector:
    """Supply vector of *points* on the graph *weights*.

    Args:
        weights:             Edge lengths of the image graph.
        points:              Suppliers in order.
        scheme:              One of :data:`SCHEMES`.
        centroid_iterations: Refinement rounds (>= 1) of nearest_centroid.
        cost:                Cost matrix from the gt points, when the
                             caller already has it.

    Raises:
        ValidationError: No points, unknown scheme or fewer than one
                         centroid iteration.
    """
    points = list(points)
    m, n = len(points), weights.size
    if m == 0:
        raise ValidationError("at least one supplier is required")
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown supply scheme {scheme!r} (expected one of {', '.join(SCHEMES)})")
    if centroid_iterations < 1:
        raise ValidationError(f"centroid_iterations must be >= 1, got {centroid_iterations}")

    h, w = weights.height, weights.width
    gt_sources = [p.pixel_index(w) for p in points]

    if scheme == EQUAL_DIVISION:
        result = SupplyVector(equal_division(n, m), scheme, sources=gt_sources)
        debug_print(f"supplies {scheme}: {result.counts.tolist()}")
        return result

    if cost is None:
        cost = build_cost_matrix(weights, gt_sources)
    assignment = initial_assignment(cost, h, w)
    sources = gt_sources
    rounds = 0

    if scheme == NEAREST_CENTROID:
        for rounds in range(1, centroid_iterations + 1):
            sources = [region_centroid(assignment, i, fallback=gt_sources[i]) for i in range(m)]
            assignment = initial_assignment(build_cost_matrix(weights, sources), h, w)
            debug_print(f"centroid round {rounds}: sources={sources}")

    counts = assignment.counts(m).astype(np.int64)
    debug_print(f"supplies {scheme}: {counts.tolist()}")
    return SupplyVector(counts, scheme, rounds, list(sources), assignment)
