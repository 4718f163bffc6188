"""
Pseudo-mask generation by optimal transport.

Pure pipeline, no file I/O.  Given the task-oriented maps and the point
annotations it runs::

    merge boundaries -> edge weights -> geodesic costs from the gt points
    -> supplies -> unit demand per pixel -> transport plan -> argmax decode

and reports machine-readable diagnostics.  The minimum-cost baseline
assigns every pixel to its cheapest supplier independently.

The transport solver is injected (:class:`~otmask.core.protocols.TransportSolver`);
``PipelineConfig.solver`` picks Sinkhorn or the exact oracle when none is given.
"""

import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from otmask.config import (
    BETA,
    BOUNDARY_COMBINE,
    CENTROID_ITERATIONS,
    EDGE_FLOOR,
    LAMBDA,
    SINKHORN_ITERATIONS,
    SUPPLY_SCHEME,
    debug_data,
    debug_print,
)
from otmask.core.errors import InvariantError, ShapeError, ValidationError
from otmask.core.models import (
    BoundaryMap,
    PointAnnotation,
    PseudoMask,
    SemanticMap,
    TransportPlan,
    TransportProblem,
    point_lookup,
    validate_points,
)
from otmask.core.protocols import TransportSolver
from otmask.graph.grid_graph import (
    BOUNDARY_COMBINE_MODES,
    build_cost_matrix,
    build_edge_weights,
    combine_boundaries,
)
from otmask.services.supply import NEAREST_CENTROID, SCHEMES, SupplyVector, compute_supplies, initial_assignment
from otmask.transport.exact import exact_solve, plan_cost
from otmask.transport.sinkhorn import SinkhornConfig, SinkhornSolver

SOLVERS = ("sinkhorn", "exact")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """Settings of one pseudo-mask run.

    Attributes:
        beta:                Weight of the boundary term in the edge length.
        lam:                 Entropic regularisation of Sinkhorn.
        sinkhorn_iterations: Sinkhorn rounds T.
        supply_scheme:       equal_division | nearest_gt | nearest_centroid.
        centroid_iterations: Refinement rounds of nearest_centroid.
        boundary_combine:    max | high_only | low_only.
        cost_from_centroids: Build the transport costs from the refined
                             centroids instead of the gt points.
        log_domain:          Log-domain Sinkhorn updates.
        normalize_cost:      Max-normalise costs before exponentiation.
        edge_floor:          Constant added to every edge length.
        solver:              ``'sinkhorn'`` or ``'exact'``.
    """

    beta: float = BETA
    lam: float = LAMBDA
    sinkhorn_iterations: int = SINKHORN_ITERATIONS
    supply_scheme: str = SUPPLY_SCHEME
    centroid_iterations: int = CENTROID_ITERATIONS
    boundary_combine: str = BOUNDARY_COMBINE
    cost_from_centroids: bool = False
    log_domain: bool = False
    normalize_cost: bool = True
    edge_floor: float = EDGE_FLOOR
    solver: str = "sinkhorn"

    def validate(self) -> "PipelineConfig":
        if self.beta < 0:
            raise ValidationError(f"beta must be >= 0, got {self.beta}")
        if self.supply_scheme not in SCHEMES:
            raise ValidationError(f"unknown supply scheme {self.supply_scheme!r}")
        if self.boundary_combine not in BOUNDARY_COMBINE_MODES:
            raise ValidationError(f"unknown boundary combine mode {self.boundary_combine!r}")
        if self.centroid_iterations < 1:
            raise ValidationError(f"centroid_iterations must be >= 1, got {self.centroid_iterations}")
        if self.edge_floor < 0:
            raise ValidationError(f"edge_floor must be >= 0, got {self.edge_floor}")
        if self.solver not in SOLVERS:
            raise ValidationError(f"unknown solver {self.solver!r} (expected sinkhorn or exact)")
        self.sinkhorn_config().validate()
        return self

    def sinkhorn_config(self) -> SinkhornConfig:
        return SinkhornConfig(
            lam=self.lam,
            iterations=self.sinkhorn_iterations,
            log_domain=self.log_domain,
            normalize_cost=self.normalize_cost,
        )

    def make_solver(self) -> TransportSolver:
        if self.solver == "exact":
            return exact_solve
        return SinkhornSolver(self.sinkhorn_config())

    def as_dict(self) -> Dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Result
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    """Output of :func:`generate_pseudo_mask`.

    Attributes:
        mask:        Decoded pseudo-mask.
        plan:        Transport plan (suppliers x pixels).
        cost:        Cost matrix handed to the solver.
        supply:      Supply vector.
        diagnostics: JSON-ready run summary (no timings).
        timings:     Seconds per stage.
    """

    mask: PseudoMask
    plan: TransportPlan
    cost: np.ndarray
    supply: SupplyVector
    diagnostics: Dict
    timings: Dict[str, float] = field(default_factory=dict)


def _diagnostics(
    points: Sequence[PointAnnotation],
    mask: PseudoMask,
    plan: TransportPlan,
    supply: SupplyVector,
    transport_cost: float,
    config: PipelineConfig,
) -> Dict:
    counts = mask.pixel_counts()
    targets: List[Dict] = []
    for p, x_i, src in zip(points, supply.counts, supply.sources):
        targets.append({
            "target_id": p.target_id,
            "class_id": p.class_id,
            "kind": p.kind,
            "point": [p.x, p.y],
            "supply": int(x_i),
            "source": [src % mask.width, src // mask.width],
            "pixels": counts.get(p.target_id, 0),
        })
    return {
        "height": mask.height,
        "width": mask.width,
        "solver": config.solver,
        "supply_scheme": supply.scheme,
        "centroid_iterations": supply.centroid_iterations,
        "iterations": plan.iterations,
        "marginal_error": plan.converged_marginal_error,
        "error_trace": list(plan.error_trace),
        "transport_cost": transport_cost,
        "targets": targets,
    }


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def decode_plan(plan: TransportPlan, points: Sequence[PointAnnotation], height: int, width: int) -> PseudoMask:
    """Assign every pixel to the supplier with the largest plan entry.

    Ties go to the lowest supplier index.

    Raises:
        ShapeError:     Plan size does not match the points or the grid.
        InvariantError: A plan column is all zero.
    """
    points = list(points)
    if plan.n != height * width or plan.m != len(points):
        raise ShapeError(
            f"plan {plan.m}x{plan.n} does not fit {len(points)} points on a {height}x{width} grid"
        )
    empty = plan.gamma.max(axis=0) <= 0.0
    if empty.any():
        raise InvariantError(f"plan column {int(np.argmax(empty))} carries no mass")
    ids = np.array([p.target_id for p in points], dtype=np.int64)
    winners = np.argmax(plan.gamma, axis=0)
    return PseudoMask(ids[winners].reshape(height, width), point_lookup(points))


def minimum_cost_baseline(cost: np.ndarray, points: Sequence[PointAnnotation], height: int, width: int) -> PseudoMask:
    """Cheapest supplier per pixel, decoded into a mask."""
    points = list(points)
    if cost.shape != (len(points), height * width):
        raise ShapeError(f"cost {cost.shape} does not fit {len(points)} points on a {height}x{width} grid")
    labels = initial_assignment(cost, height, width).labels
    ids = np.array([p.target_id for p in points], dtype=np.int64)
    return PseudoMask(ids[labels], point_lookup(points))


class PseudoMaskGenerator:
    """Runs the transport pipeline with an injected solver.

    Args:
        config: Pipeline settings.
        solver: Transport solver; built from ``config.solver`` when omitted.
    """

    def __init__(self, config: PipelineConfig = PipelineConfig(), solver: Optional[TransportSolver] = None) -> None:
        self._config = config.validate()
        self._solver = solver if solver is not None else config.make_solver()

    @property
    def config(self) -> PipelineConfig:
        return self._config

    def cost_matrix(
        self,
        semantic: SemanticMap,
        boundary_high: BoundaryMap,
        boundary_low: BoundaryMap,
        points: Sequence[PointAnnotation],
    ) -> np.ndarray:
        """Geodesic costs from the gt points (no transport)."""
        weights = self._edge_weights(semantic, boundary_high, boundary_low, points)
        return build_cost_matrix(weights, [p.pixel_index(semantic.width) for p in points])

    def generate(
        self,
        semantic: SemanticMap,
        boundary_high: BoundaryMap,
        boundary_low: BoundaryMap,
        points: Sequence[PointAnnotation],
    ) -> PipelineResult:
        """Generate the pseudo-mask of one image.

        Raises:
            ValidationError: Bad maps, points or settings.
            InvariantError:  A pixel ended up unassigned.
        """
        cfg = self._config
        points = list(points)
        h, w = semantic.shape
        timings: Dict[str, float] = {}
        clock = time.perf_counter()

        def lap(stage: str) -> None:
            nonlocal clock
            now = time.perf_counter()
            timings[stage] = now - clock
            clock = now

        weights = self._edge_weights(semantic, boundary_high, boundary_low, points)
        lap("edge_weights")

        gt_sources = [p.pixel_index(w) for p in points]
        cost = build_cost_matrix(weights, gt_sources)
        lap("cost_matrix")

        supply = compute_supplies(weights, points, cfg.supply_scheme, cfg.centroid_iterations, cost=cost)
        if supply.total != h * w:
            raise InvariantError(f"supplies sum to {supply.total}, image has {h * w} pixels")
        if cfg.cost_from_centroids and cfg.supply_scheme == NEAREST_CENTROID:
            cost = build_cost_matrix(weights, supply.sources)
        lap("supplies")

        problem = TransportProblem(cost, supply.counts.astype(np.float64), np.ones(h * w))
        plan = self._solver(problem)
        lap("transport")

        mask = decode_plan(plan, points, h, w).validate(points)
        transport_cost = plan_cost(problem, plan)
        lap("decode")

        diagnostics = _diagnostics(points, mask, plan, supply, transport_cost, cfg)
        debug_data("diagnostics", diagnostics)
        debug_print(f"stage timings: {', '.join(f'{k}={v:.3f}s' for k, v in timings.items())}")
        return PipelineResult(mask, plan, cost, supply, diagnostics, timings)

    def _edge_weights(self, semantic, boundary_high, boundary_low, points):
        semantic.validate()
        boundary_high.validate()
        boundary_low.validate()
        for label, b in (("boundary_high", boundary_high), ("boundary_low", boundary_low)):
            if b.shape != semantic.shape:
                raise ShapeError(f"{label} is {b.shape}, semantic map is {semantic.shape}")
        validate_points(points, semantic.height, semantic.width, semantic.channels)
        boundary = combine_boundaries(boundary_high, boundary_low, self._config.boundary_combine)
        return build_edge_weights(semantic, boundary, self._config.beta, self._config.edge_floor)


def generate_pseudo_mask(
    semantic: SemanticMap,
    boundary_high: BoundaryMap,
    boundary_low: BoundaryMap,
    points: Sequence[PointAnnotation],
    config: PipelineConfig = PipelineConfig(),
    solver: Optional[TransportSolver] = None,
) -> Tuple[PseudoMask, TransportPlan, Dict]:
    """Functional form of :meth:`PseudoMaskGenerator.generate`.

    Returns:
        ``(mask, plan, diagnostics)``.
    """
    result = PseudoMaskGenerator(config, solver).generate(semantic, boundary_high, boundary_low, points)
    return result.mask, result.plan, result.diagnostics
