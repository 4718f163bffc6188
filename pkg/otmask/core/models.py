"""
Domain model for otmask.

Typed dataclasses for the values that flow between the modules: the
task-oriented maps, the point annotations, the pseudo-mask and the
transport problem/plan pair.  Module-private types (edge weights,
spanning trees, supply vectors, scores) live next to the code that
produces them.

Construction never validates; evaluators such as the finite-difference
check build maps from perturbed arrays on purpose.  Call ``validate()``
(or go through the codecs, which always do) before trusting a value.

Pixel indexing
~~~~~~~~~~~~~~
Pixels are addressed row-major: ``j = y * width + x``.  Every flat
vector of length ``n = height * width`` (cost rows, demands, plan
columns) uses this order.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from otmask.config import PROB_SUM_TOLERANCE
from otmask.core.errors import InvariantError, ShapeError, ValidationError

THING: str = "thing"
STUFF: str = "stuff"
KINDS = frozenset({THING, STUFF})

# Mask value reserved for "not yet assigned"; never present in a final mask.
UNASSIGNED: int = 0

# Largest target id a mask may carry (16-bit PGM storage).
MAX_TARGET_ID: int = 65535


# ---------------------------------------------------------------------------
# SemanticMap
# ---------------------------------------------------------------------------

@dataclass
class SemanticMap:
    """Per-pixel class-probability grid.

    Attributes:
        probs: Array of shape ``(height, width, channels)``; every pixel's
               channel vector sums to 1.
    """

    probs: np.ndarray

    @property
    def height(self) -> int:
        return int(self.probs.shape[0])

    @property
    def width(self) -> int:
        return int(self.probs.shape[1])

    @property
    def channels(self) -> int:
        return int(self.probs.shape[2])

    @property
    def shape(self) -> Tuple[int, int]:
        """``(height, width)`` of the pixel grid."""
        return self.height, self.width

    def flat(self) -> np.ndarray:
        """Probabilities as an ``(n, channels)`` row-major view."""
        return self.probs.reshape(self.height * self.width, self.channels)

    def validate(self, tolerance: float = PROB_SUM_TOLERANCE) -> "SemanticMap":
        """Check the map invariants and return ``self``.

        Raises:
            ShapeError:      Not a non-empty ``(H, W, C)`` array.
            ValidationError: Non-finite value, value outside [0, 1] or a
                             pixel whose probabilities do not sum to 1.
                             The message names the first offending pixel.
        """
        if self.probs.ndim != 3 or min(self.probs.shape) < 1:
            raise ShapeError(f"semantic map must be (H, W, C), got {self.probs.shape}")
        flat = self.flat()
        bad = ~np.isfinite(flat).all(axis=1)
        if bad.any():
            raise ValidationError(f"semantic map: non-finite value at pixel {int(np.argmax(bad))}")
        bad = ((flat < 0.0) | (flat > 1.0)).any(axis=1)
        if bad.any():
            raise ValidationError(
                f"semantic map: probability outside [0, 1] at pixel {int(np.argmax(bad))}"
            )
        sums = flat.astype(np.float64).sum(axis=1)
        bad = np.abs(sums - 1.0) > tolerance
        if bad.any():
            j = int(np.argmax(bad))
            raise ValidationError(
                f"semantic map: probabilities at pixel {j} sum to {sums[j]:.9g}, expected 1"
            )
        return self

    def argmax_classes(self) -> np.ndarray:
        """Most probable class per pixel, shape ``(height, width)``."""
        return np.argmax(self.probs, axis=2)


# ---------------------------------------------------------------------------
# BoundaryMap
# ---------------------------------------------------------------------------

@dataclass
class BoundaryMap:
    """Per-pixel boundary strength in [0, 1].

    Attributes:
        values: Array of shape ``(height, width)``.
    """

    values: np.ndarray

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    @classmethod
    def zeros(cls, height: int, width: int) -> "BoundaryMap":
        """A map without any boundary evidence."""
        return cls(np.zeros((height, width), dtype=np.float64))

    def validate(self) -> "BoundaryMap":
        """Check the map invariants and return ``self``.

        Raises:
            ShapeError:      Not a non-empty 2-D array.
            ValidationError: Non-finite value or value outside [0, 1];
                             the message names the first offending pixel.
        """
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise ShapeError(f"boundary map must be (H, W), got {self.values.shape}")
        flat = self.values.reshape(-1)
        bad = ~np.isfinite(flat)
        if bad.any():
            raise ValidationError(f"boundary map: non-finite value at pixel {int(np.argmax(bad))}")
        bad = (flat < 0.0) | (flat > 1.0)
        if bad.any():
            j = int(np.argmax(bad))
            raise ValidationError(f"boundary map: value {flat[j]:.9g} outside [0, 1] at pixel {j}")
        return self


# ---------------------------------------------------------------------------
# PointAnnotation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointAnnotation:
    """One ground-truth point label.

    Attributes:
        target_id: Identifier of the annotated target (>= 1).
        class_id:  Semantic class in ``[0, N_c)``.
        kind:      ``'thing'`` or ``'stuff'``.
        x:         Column of the annotated pixel.
        y:         Row of the annotated pixel.
    """

    target_id: int
    class_id: int
    kind: str
    x: int
    y: int

    def pixel_index(self, width: int) -> int:
        """Row-major flat index of the annotated pixel."""
        return self.y * width + self.x


def validate_points(
    points: Sequence[PointAnnotation],
    height: Optional[int] = None,
    width: Optional[int] = None,
    channels: Optional[int] = None,
) -> List[PointAnnotation]:
    """Check an annotation set and return it as a list.

    Args:
        points:   Annotations in supplier order.
        height:   Image height; coordinates are checked when given.
        width:    Image width; coordinates are checked when given.
        channels: Class count; ``class_id`` is checked when given.

    Raises:
        ValidationError: Empty set, duplicate ``target_id``, id < 1,
                         unknown kind, class or coordinate out of range.
    """
    points = list(points)
    if not points:
        raise ValidationError("annotation set is empty")
    seen = set()
    for p in points:
        if p.target_id < 1:
            raise ValidationError(f"target_id {p.target_id} must be >= 1")
        if p.target_id in seen:
            raise ValidationError(f"duplicate target_id {p.target_id}")
        seen.add(p.target_id)
        if p.kind not in KINDS:
            raise ValidationError(f"target {p.target_id}: unknown kind {p.kind!r}")
        if p.class_id < 0 or (channels is not None and p.class_id >= channels):
            raise ValidationError(f"target {p.target_id}: class_id {p.class_id} out of range")
        if p.x < 0 or p.y < 0:
            raise ValidationError(f"target {p.target_id}: negative coordinate ({p.x}, {p.y})")
        if height is not None and width is not None:
            if not (p.x < width and p.y < height):
                raise ValidationError(
                    f"target {p.target_id}: point ({p.x}, {p.y}) outside {width}x{height} image"
                )
    return points


def point_lookup(points: Iterable[PointAnnotation]) -> Dict[int, Tuple[int, str]]:
    """``{target_id: (class_id, kind)}`` for a set of annotations."""
    return {p.target_id: (p.class_id, p.kind) for p in points}


def nearest_member(member: np.ndarray, y: float, x: float) -> int:
    """Flat index of the ``True`` pixel of *member* closest to ``(y, x)``.

    Euclidean distance; ties go to the first pixel in row-major order.

    Raises:
        ValidationError: *member* has no ``True`` pixel.
    """
    ys, xs = np.nonzero(member)
    if ys.size == 0:
        raise ValidationError("region is empty")
    dist = (ys - y) ** 2 + (xs - x) ** 2
    k = int(np.argmin(dist))
    return int(ys[k]) * member.shape[1] + int(xs[k])


# ---------------------------------------------------------------------------
# PseudoMask
# ---------------------------------------------------------------------------

@dataclass
class PseudoMask:
    """Per-pixel target assignment.

    Attributes:
        targets: Integer array ``(height, width)`` of target ids.
        lookup:  ``{target_id: (class_id, kind)}``.
    """

    targets: np.ndarray
    lookup: Dict[int, Tuple[int, str]] = field(default_factory=dict)

    @property
    def height(self) -> int:
        return int(self.targets.shape[0])

    @property
    def width(self) -> int:
        return int(self.targets.shape[1])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def validate(self, points: Optional[Sequence[PointAnnotation]] = None) -> "PseudoMask":
        """Check the mask invariants and return ``self``.

        Raises:
            InvariantError:  A pixel is still :data:`UNASSIGNED`.
            ValidationError: A pixel carries an id outside
                             ``[1, MAX_TARGET_ID]`` or missing from the lookup,
                             or the lookup names a target outside *points*.
        """
        flat = self.targets.reshape(-1)
        zero = flat == UNASSIGNED
        if zero.any():
            raise InvariantError(f"pixel {int(np.argmax(zero))} is unassigned")
        out_of_range = (flat < 0) | (flat > MAX_TARGET_ID)
        if out_of_range.any():
            k = int(np.argmax(out_of_range))
            raise ValidationError(f"pixel {k}: target id {int(flat[k])} outside [1, {MAX_TARGET_ID}]")
        present = np.unique(flat)
        missing = [int(t) for t in present if int(t) not in self.lookup]
        if missing:
            raise ValidationError(f"target ids {missing} appear in the mask but not in its lookup")
        for tid, (_, kind) in self.lookup.items():
            if kind not in KINDS:
                raise ValidationError(f"target {tid}: unknown kind {kind!r}")
        if points is not None:
            allowed = {p.target_id for p in points}
            extra = sorted(set(self.lookup) - allowed)
            if extra:
                raise ValidationError(f"lookup names targets {extra} outside the annotation set")
        return self

    def pixel_counts(self) -> Dict[int, int]:
        """``{target_id: pixel count}`` for every id in the lookup."""
        ids, counts = np.unique(self.targets, return_counts=True)
        found = {int(i): int(c) for i, c in zip(ids, counts)}
        return {tid: found.get(tid, 0) for tid in sorted(self.lookup)}


# ---------------------------------------------------------------------------
# Transport problem / plan
# ---------------------------------------------------------------------------

@dataclass
class TransportProblem:
    """Balanced transport problem between m suppliers and n consumers.

    Attributes:
        cost:   ``(m, n)`` nonnegative finite costs.
        supply: Length-m supplier masses ``x``.
        demand: Length-n consumer masses ``y``.
    """

    cost: np.ndarray
    supply: np.ndarray
    demand: np.ndarray

    @property
    def m(self) -> int:
        return int(self.cost.shape[0])

    @property
    def n(self) -> int:
        return int(self.cost.shape[1])

    def validate(self, tolerance: float = 1e-9) -> "TransportProblem":
        """Check shapes, nonnegativity and balance; return ``self``.

        Raises:
            ShapeError:      Marginals do not match the cost matrix.
            ValidationError: Negative/non-finite entries or unbalanced
                             totals (relative tolerance *tolerance*).
        """
        if self.cost.ndim != 2:
            raise ShapeError(f"cost must be a matrix, got shape {self.cost.shape}")
        if self.supply.shape != (self.m,) or self.demand.shape != (self.n,):
            raise ShapeError(
                f"marginals {self.supply.shape}/{self.demand.shape} "
                f"do not fit cost {self.cost.shape}"
            )
        for name, arr in (("cost", self.cost), ("supply", self.supply), ("demand", self.demand)):
            if not np.isfinite(arr).all():
                raise ValidationError(f"{name} contains non-finite values")
            if (arr < 0).any():
                raise ValidationError(f"{name} contains negative values")
        total_x = float(self.supply.sum())
        total_y = float(self.demand.sum())
        if abs(total_x - total_y) > tolerance * max(abs(total_x), abs(total_y), 1.0):
            raise ValidationError(f"unbalanced problem: sum(x)={total_x:.9g} != sum(y)={total_y:.9g}")
        return self


@dataclass
class TransportPlan:
    """Coupling between suppliers and consumers.

    Attributes:
        gamma:                    ``(m, n)`` nonnegative plan.
        converged_marginal_error: Largest absolute deviation of a row sum
                                  from ``x`` or a column sum from ``y``.
        iterations:               Solver iterations actually run
                                  (0 for the exact oracle).
        error_trace:              Column marginal error recorded during
                                  the iterations (every 10th iteration).
    """

    gamma: np.ndarray
    converged_marginal_error: float = 0.0
    iterations: int = 0
    error_trace: List[float] = field(default_factory=list)

    @property
    def m(self) -> int:
        return int(self.gamma.shape[0])

    @property
    def n(self) -> int:
        return int(self.gamma.shape[1])


def marginal_error(gamma: np.ndarray, supply: np.ndarray, demand: np.ndarray) -> float:
    """Largest absolute marginal violation of *gamma*."""
    row = np.abs(gamma.sum(axis=1) - supply)
    col = np.abs(gamma.sum(axis=0) - demand)
    return float(max(row.max(initial=0.0), col.max(initial=0.0)))
