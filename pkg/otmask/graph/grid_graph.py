"""
8-connected pixel graph and geodesic costs.

An image of ``height x width`` pixels is a planar graph in which every
pixel is adjacent to its eight neighbours.  Edge lengths come from the
task-oriented maps::

    w(k, l) = d_s(k, l) + beta * d_b(k, l) + edge_floor
    d_s(k, l) = 0.5 * || P_s(k) - P_s(l) ||_1      (half L1 of class vectors)
    d_b(k, l) = max(P_b(k), P_b(l))

Diagonal edges use the same formula (no sqrt(2) factor): the lengths are
value differences, not spatial distances.

Geodesic costs are single-source shortest paths under ``w`` (Dijkstra with
a binary heap).  Costs are the contract, paths are never materialised.

Storage
~~~~~~~
``EdgeWeightField.weights`` has shape ``(height, width, 8)``; slot ``k``
holds the edge towards ``OFFSETS[k]``.  Slots pointing outside the grid
hold ``+inf``.  ``OFFSETS`` is point-symmetric, so the reverse of slot
``k`` is slot ``7 - k``.
"""

import heapq
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np

from otmask.config import BOUNDARY_COMBINE, EDGE_FLOOR, debug_print
from otmask.core.errors import ShapeError, ValidationError
from otmask.core.models import BoundaryMap, SemanticMap

# (dy, dx) of the eight neighbours.
OFFSETS: Tuple[Tuple[int, int], ...] = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1),           (0, 1),
    (1, -1),  (1, 0),  (1, 1),
)

# One offset per unordered neighbour pair.
FORWARD_OFFSETS: Tuple[Tuple[int, int], ...] = ((0, 1), (1, -1), (1, 0), (1, 1))

BOUNDARY_COMBINE_MODES = ("max", "high_only", "low_only")


def shifted_slices(dy: int, dx: int, height: int, width: int):
    """Slices ``(src, dst)`` so that ``dst`` pixels are ``src`` shifted by (dy, dx)."""
    src = (
        slice(max(0, -dy), height - max(0, dy)),
        slice(max(0, -dx), width - max(0, dx)),
    )
    dst = (
        slice(max(0, dy), height + min(0, dy)),
        slice(max(0, dx), width + min(0, dx)),
    )
    return src, dst


@lru_cache(maxsize=32)
def _neighbour_table(height: int, width: int) -> Tuple[Tuple[Tuple[int, int], ...], ...]:
    """For every flat pixel, the ``(slot, neighbour)`` pairs inside the grid."""
    table = []
    for y in range(height):
        for x in range(width):
            row = []
            for k, (dy, dx) in enumerate(OFFSETS):
                ny, nx = y + dy, x + dx
                if 0 <= ny < height and 0 <= nx < width:
                    row.append((k, ny * width + nx))
            table.append(tuple(row))
    return tuple(table)


# ---------------------------------------------------------------------------
# EdgeWeightField
# ---------------------------------------------------------------------------

@dataclass
class EdgeWeightField:
    """Symmetric nonnegative edge lengths of the 8-connected grid.

    Attributes:
        weights: ``(height, width, 8)`` array, ``+inf`` outside the grid.
    """

    weights: np.ndarray

    @property
    def height(self) -> int:
        return int(self.weights.shape[0])

    @property
    def width(self) -> int:
        return int(self.weights.shape[1])

    @property
    def size(self) -> int:
        """Number of pixels (graph vertices)."""
        return self.height * self.width

    @classmethod
    def uniform(cls, height: int, width: int, value: float) -> "EdgeWeightField":
        """Every in-grid edge gets *value*."""
        weights = np.full((height, width, 8), np.inf)
        for k, (dy, dx) in enumerate(OFFSETS):
            src, _ = shifted_slices(dy, dx, height, width)
            weights[src + (k,)] = value
        return cls(weights)

    def edge(self, a: int, b: int) -> float:
        """Length of the edge between adjacent flat pixels *a* and *b*."""
        return float(self.weights.reshape(-1, 8)[a, self._slot(a, b)])

    def with_edge(self, a: int, b: int, value: float) -> "EdgeWeightField":
        """Copy with the edge ``(a, b)`` (both directions) set to *value*."""
        weights = self.weights.copy()
        flat = weights.reshape(-1, 8)
        k = self._slot(a, b)
        flat[a, k] = value
        flat[b, 7 - k] = value
        return EdgeWeightField(weights)

    def scaled(self, factor: float) -> "EdgeWeightField":
        """Copy with every edge multiplied by *factor*."""
        return EdgeWeightField(self.weights * factor)

    def validate(self) -> "EdgeWeightField":
        """Check finiteness, nonnegativity and symmetry of in-grid edges."""
        h, w = self.height, self.width
        for k, (dy, dx) in enumerate(OFFSETS):
            src, dst = shifted_slices(dy, dx, h, w)
            forward = self.weights[src + (k,)]
            if not np.isfinite(forward).all() or (forward < 0).any():
                raise ValidationError(f"edge slot {k}: weights must be finite and >= 0")
            if not np.array_equal(forward, self.weights[dst + (7 - k,)]):
                raise ValidationError(f"edge slot {k}: weights are not symmetric")
        return self

    def _slot(self, a: int, b: int) -> int:
        ay, ax = divmod(a, self.width)
        by, bx = divmod(b, self.width)
        try:
            return OFFSETS.index((by - ay, bx - ax))
        except ValueError:
            raise ValidationError(f"pixels {a} and {b} are not adjacent") from None


# ---------------------------------------------------------------------------
# CostField
# ---------------------------------------------------------------------------

@dataclass
class CostField:
    """Geodesic cost from one source pixel to every pixel.

    Attributes:
        source: Flat index of the source pixel.
        costs:  ``(height, width)`` array, 0 at the source.
    """

    source: int
    costs: np.ndarray

    @property
    def height(self) -> int:
        return int(self.costs.shape[0])

    @property
    def width(self) -> int:
        return int(self.costs.shape[1])

    def flat(self) -> np.ndarray:
        """Costs in row-major pixel order."""
        return self.costs.reshape(-1)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def combine_boundaries(
    high: BoundaryMap,
    low: BoundaryMap,
    mode: str = BOUNDARY_COMBINE,
) -> BoundaryMap:
    """Merge the high- and low-level boundary maps per pixel.

    Args:
        high: Instance-level boundary map.
        low:  Low-level contour map.
        mode: ``'max'`` (strongest evidence), ``'high_only'`` or ``'low_only'``.
    """
    if high.shape != low.shape:
        raise ShapeError(f"boundary maps differ in size: {high.shape} vs {low.shape}")
    if mode == "max":
        return BoundaryMap(np.maximum(high.values, low.values))
    if mode == "high_only":
        return BoundaryMap(high.values.copy())
    if mode == "low_only":
        return BoundaryMap(low.values.copy())
    raise ValidationError(
        f"unknown boundary combine mode {mode!r} (expected one of {', '.join(BOUNDARY_COMBINE_MODES)})"
    )


def build_edge_weights(
    semantic: SemanticMap,
    boundary: BoundaryMap,
    beta: float,
    edge_floor: float = EDGE_FLOOR,
) -> EdgeWeightField:
    """Edge lengths ``d_s + beta * d_b + edge_floor`` of the pixel graph.

    Raises:
        ShapeError:      The maps differ in height/width.
        ValidationError: NaN in a map, ``beta < 0`` or ``edge_floor < 0``.
    """
    if semantic.shape != boundary.shape:
        raise ShapeError(f"semantic map {semantic.shape} and boundary map {boundary.shape} differ")
    if beta < 0:
        raise ValidationError(f"beta must be >= 0, got {beta}")
    if edge_floor < 0:
        raise ValidationError(f"edge_floor must be >= 0, got {edge_floor}")
    probs = semantic.probs.astype(np.float64)
    bound = boundary.values.astype(np.float64)
    if np.isnan(probs).any():
        raise ValidationError("semantic map contains NaN")
    if np.isnan(bound).any():
        raise ValidationError("boundary map contains NaN")

    h, w = semantic.shape
    weights = np.full((h, w, 8), np.inf)
    for k, (dy, dx) in enumerate(OFFSETS):
        src, dst = shifted_slices(dy, dx, h, w)
        d_s = 0.5 * np.abs(probs[src] - probs[dst]).sum(axis=2)
        d_b = np.maximum(bound[src], bound[dst])
        weights[src + (k,)] = d_s + beta * d_b + edge_floor

    debug_print(f"edge weights {h}x{w}: beta={beta} floor={edge_floor}")
    return EdgeWeightField(weights)


def geodesic_costs(weights: EdgeWeightField, source: int) -> CostField:
    """Shortest-path cost from *source* to every pixel (Dijkstra).

    The result is the minimum summed edge length over all 8-connected
    paths and does not depend on the heap's tie order.

    Raises:
        ValidationError: *source* outside the grid.
    """
    n = weights.size
    if not 0 <= source < n:
        raise ValidationError(f"source pixel {source} outside grid of {n} pixels")

    table = _neighbour_table(weights.height, weights.width)
    lengths: List[List[float]] = weights.weights.reshape(n, 8).tolist()
    dist = [float("inf")] * n
    done = [False] * n
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        row = lengths[u]
        for k, v in table[u]:
            nd = d + row[k]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))

    return CostField(source, np.asarray(dist).reshape(weights.height, weights.width))


def build_cost_matrix(weights: EdgeWeightField, sources: Sequence[int]) -> np.ndarray:
    """Stack the geodesic cost rows of *sources* into an ``(m, n)`` matrix.

    Raises:
        ValidationError: Empty source list or a source outside the grid.
    """
    sources = list(sources)
    if not sources:
        raise ValidationError("cost matrix needs at least one source")
    rows = [geodesic_costs(weights, int(s)).flat() for s in sources]
    cost = np.vstack(rows)
    debug_print(f"cost matrix {cost.shape[0]}x{cost.shape[1]} max={cost.max():.6g}")
    return cost
