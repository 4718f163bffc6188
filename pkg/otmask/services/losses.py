"""
Weak-supervision loss evaluators with analytic gradients.

Every loss returns ``(value, gradient)`` with the gradient shaped like
the input it is taken against (the semantic probabilities or the
high-level boundary values).  These are verification surfaces for the
formulas, checked against central differences; nothing is trained here.

Terms
~~~~~
- partial cross-entropy on the annotated pixels;
- local LAB affinity: ``-log(P_i . P_j)`` over 8-neighbour pairs whose
  LAB similarity ``exp(-||lab_i - lab_j|| / theta1)`` reaches ``tau``;
- long-range RGB affinity: ``|P_i - (1/z_i) sum_j S_ij P_j|`` where
  ``S_ij = exp(-pathsum_ij / theta2)`` along a minimum spanning tree of
  squared RGB differences;
- boundary affinity between the high-level boundary map and a pseudo-mask.

All log arguments are clamped below at ``PROB_FLOOR``; the gradient is
zero where the clamp is active.
"""

from collections import deque
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from skimage.color import rgb2lab

from otmask.config import (
    ALPHA1,
    ALPHA2,
    GRADIENT_CHECK_STEP,
    PROB_FLOOR,
    TAU,
    THETA1,
    THETA2,
    debug_print,
)
from otmask.core.errors import ShapeError, ValidationError
from otmask.core.models import STUFF, THING, BoundaryMap, PointAnnotation, PseudoMask, SemanticMap
from otmask.core.protocols import LossEvaluator
from otmask.graph.grid_graph import FORWARD_OFFSETS, shifted_slices

# Gradient magnitude below which a coordinate is skipped by the check.
GRADIENT_CHECK_MIN = 1e-8

LossValue = Tuple[float, np.ndarray]


@dataclass(frozen=True)
class LossConfig:
    """Loss weights and kernel scales."""

    alpha1: float = ALPHA1
    alpha2: float = ALPHA2
    tau: float = TAU
    theta1: float = THETA1
    theta2: float = THETA2

    def validate(self) -> "LossConfig":
        if self.theta1 <= 0 or self.theta2 <= 0:
            raise ValidationError("theta1 and theta2 must be > 0")
        return self


def _check_image(image: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"image must be (H, W, 3), got {image.shape}")
    if image.shape[:2] != shape:
        raise ShapeError(f"image is {image.shape[:2]}, map is {shape}")
    return image.astype(np.float64)


# ---------------------------------------------------------------------------
# Partial cross-entropy
# ---------------------------------------------------------------------------

def partial_cross_entropy(semantic: SemanticMap, points: Sequence[PointAnnotation]) -> LossValue:
    """Mean ``-log P(point, class)`` over the annotated pixels."""
    points = list(points)
    if not points:
        raise ValidationError("partial cross-entropy needs at least one point")
    probs = semantic.probs.astype(np.float64)
    grad = np.zeros_like(probs)
    total = 0.0
    for p in points:
        if not (0 <= p.class_id < semantic.channels):
            raise ValidationError(f"target {p.target_id}: class_id {p.class_id} out of range")
        value = probs[p.y, p.x, p.class_id]
        clamped = max(value, PROB_FLOOR)
        total -= np.log(clamped)
        if value > PROB_FLOOR:
            grad[p.y, p.x, p.class_id] -= 1.0 / value
    m = len(points)
    return float(total / m), grad / m


# ---------------------------------------------------------------------------
# Local LAB affinity
# ---------------------------------------------------------------------------

def lab_affinity_loss(semantic: SemanticMap, image: np.ndarray, config: LossConfig = LossConfig()) -> LossValue:
    """Mean ``-log(P_i . P_j)`` over similar-colour neighbour pairs.

    The image is clipped to [0, 1] and converted to CIELAB (D65).
    Returns 0 when no pair passes the ``tau`` threshold.  A spatially
    constant map scores 0 only when it is one-hot: a uniform ``(0.5, 0.5)``
    map gives ``ln 2`` on every passing pair.
    """
    h, w = semantic.shape
    lab = rgb2lab(np.clip(_check_image(image, (h, w)), 0.0, 1.0))
    probs = semantic.probs.astype(np.float64)
    grad = np.zeros_like(probs)
    total = 0.0
    passing = 0
    for dy, dx in FORWARD_OFFSETS:
        src, dst = shifted_slices(dy, dx, h, w)
        dist = np.linalg.norm(lab[src] - lab[dst], axis=2)
        keep = np.exp(-dist / config.theta1) >= config.tau
        dot = np.sum(probs[src] * probs[dst], axis=2)
        live = keep & (dot > PROB_FLOOR)
        total -= float(np.log(np.maximum(dot[keep], PROB_FLOOR)).sum())
        passing += int(keep.sum())
        coef = np.where(live, -1.0 / np.where(live, dot, 1.0), 0.0)[..., None]
        grad[src] += coef * probs[dst]
        grad[dst] += coef * probs[src]
    if passing == 0:
        return 0.0, grad
    return total / passing, grad / passing


# ---------------------------------------------------------------------------
# Minimum spanning tree
# ---------------------------------------------------------------------------

class _DisjointSet:
    """Union-find with path halving and union by size."""

    def __init__(self, n: int) -> None:
        self._parent = list(range(n))
        self._size = [1] * n

    def find(self, a: int) -> int:
        parent = self._parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]
        return True


@dataclass
class SpanningTree:
    """Spanning tree over the pixels of a ``height x width`` grid.

    Attributes:
        edges:   ``(n - 1, 2)`` flat pixel index pairs.
        weights: ``(n - 1,)`` squared RGB differences.
    """

    height: int
    width: int
    edges: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.height * self.width

    def total_weight(self) -> float:
        return float(self.weights.sum())

    def validate(self) -> "SpanningTree":
        """Check that the edges form a spanning tree."""
        if self.edges.shape != (self.n - 1, 2):
            raise ValidationError(f"a tree on {self.n} pixels needs {self.n - 1} edges, got {len(self.edges)}")
        dsu = _DisjointSet(self.n)
        for a, b in self.edges.tolist():
            if not dsu.union(a, b):
                raise ValidationError(f"edge ({a}, {b}) closes a cycle")
        return self

    def adjacency(self) -> List[List[Tuple[int, float]]]:
        adj: List[List[Tuple[int, float]]] = [[] for _ in range(self.n)]
        for (a, b), wt in zip(self.edges.tolist(), self.weights.tolist()):
            adj[a].append((b, wt))
            adj[b].append((a, wt))
        return adj


def build_mst(image: np.ndarray) -> SpanningTree:
    """Kruskal MST of the 8-connected grid under squared RGB distance.

    Edges are processed in ``(weight, u, v)`` order, so the tree is unique.
    """
    if image.ndim != 3 or image.shape[2] != 3 or min(image.shape) < 1:
        raise ShapeError(f"image must be (H, W, 3), got {image.shape}")
    h, w = image.shape[:2]
    rgb = image.astype(np.float64)
    index = np.arange(h * w).reshape(h, w)
    us, vs, ws = [], [], []
    for dy, dx in FORWARD_OFFSETS:
        src, dst = shifted_slices(dy, dx, h, w)
        us.append(index[src].reshape(-1))
        vs.append(index[dst].reshape(-1))
        ws.append(np.sum((rgb[src] - rgb[dst]) ** 2, axis=2).reshape(-1))
    u, v, wt = np.concatenate(us), np.concatenate(vs), np.concatenate(ws)
    order = np.lexsort((v, u, wt))

    dsu = _DisjointSet(h * w)
    chosen = []
    for k in order.tolist():
        if dsu.union(int(u[k]), int(v[k])):
            chosen.append(k)
            if len(chosen) == h * w - 1:
                break
    chosen = np.asarray(chosen, dtype=np.int64)
    edges = np.stack([u[chosen], v[chosen]], axis=1) if chosen.size else np.zeros((0, 2), dtype=np.int64)
    tree = SpanningTree(h, w, edges.astype(np.int64), wt[chosen] if chosen.size else np.zeros(0))
    debug_print(f"mst {h}x{w}: total weight {tree.total_weight():.6g}")
    return tree


# ---------------------------------------------------------------------------
# Tree filter
# ---------------------------------------------------------------------------

def tree_filter(tree: SpanningTree, values: np.ndarray, theta2: float = THETA2) -> np.ndarray:
    """``S @ values`` with ``S_ij = exp(-pathsum_ij / theta2)``, in O(n) per column.

    Two passes over the tree rooted at pixel 0: leaves-to-root sums of
    each subtree, then root-to-leaves completion with the outside part.
    """
    n = tree.n
    values = values.reshape(n, -1).astype(np.float64)
    adj = tree.adjacency()
    parent = [-1] * n
    factor = [0.0] * n
    order = [0]
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    while queue:
        a = queue.popleft()
        for b, wt in adj[a]:
            if not seen[b]:
                seen[b] = True
                parent[b] = a
                factor[b] = float(np.exp(-wt / theta2))
                order.append(b)
                queue.append(b)
    if len(order) != n:
        raise ValidationError("spanning tree does not reach every pixel")

    up = values.copy()
    for b in reversed(order[1:]):
        up[parent[b]] += factor[b] * up[b]
    agg = up.copy()
    for b in order[1:]:
        e = factor[b]
        agg[b] = up[b] + e * (agg[parent[b]] - e * up[b])
    return agg


def tree_path_sums(tree: SpanningTree) -> np.ndarray:
    """All-pairs sums of edge weights along tree paths, ``(n, n)``."""
    n = tree.n
    adj = tree.adjacency()
    sums = np.zeros((n, n))
    for root in range(n):
        dist = sums[root]
        seen = [False] * n
        seen[root] = True
        stack = [root]
        while stack:
            a = stack.pop()
            for b, wt in adj[a]:
                if not seen[b]:
                    seen[b] = True
                    dist[b] = dist[a] + wt
                    stack.append(b)
    return sums


def naive_tree_filter(tree: SpanningTree, values: np.ndarray, theta2: float = THETA2) -> np.ndarray:
    """Pairwise O(n^2) evaluation of :func:`tree_filter`."""
    similarity = np.exp(-tree_path_sums(tree) / theta2)
    return similarity @ values.reshape(tree.n, -1).astype(np.float64)


def rgb_tree_loss(
    semantic: SemanticMap,
    tree: SpanningTree,
    config: LossConfig = LossConfig(),
    naive: bool = False,
) -> LossValue:
    """Mean over pixels and channels of ``|P - A P|`` with ``A = S / z``.

    Args:
        semantic: Probabilities ``P``.
        tree:     Spanning tree over the same pixels.
        config:   Supplies ``theta2``.
        naive:    Use the O(n^2) pairwise path instead of the tree DP.
    """
    if (tree.height, tree.width) != semantic.shape:
        raise ShapeError(f"tree spans {(tree.height, tree.width)}, map is {semantic.shape}")
    n, c = tree.n, semantic.channels
    flt = naive_tree_filter if naive else tree_filter
    probs = semantic.probs.astype(np.float64).reshape(n, c)
    z = flt(tree, np.ones(n), config.theta2)[:, 0]
    filtered = flt(tree, probs, config.theta2) / z[:, None]
    diff = probs - filtered
    loss = float(np.abs(diff).sum() / (n * c))
    sign = np.sign(diff)
    grad = (sign - flt(tree, sign / z[:, None], config.theta2)) / (n * c)
    return loss, grad.reshape(semantic.probs.shape)


# ---------------------------------------------------------------------------
# Boundary affinity
# ---------------------------------------------------------------------------

def boundary_affinity_loss(boundary_high: BoundaryMap, mask: PseudoMask) -> LossValue:
    """Affinity loss of the high-level boundary against a pseudo-mask.

    With ``A_kl = 1 - max(b_k, b_l)`` over unordered 8-neighbour pairs::

        L = -sum_{thing+} log A / (2 |thing+|)
            -sum_{stuff+} log A / (2 |stuff+|)
            -sum_{-} log(1 - A) / |-|

    Empty pair sets contribute 0.  The gradient of the max goes to the
    larger value; equal values share it.
    """
    if boundary_high.shape != mask.shape:
        raise ShapeError(f"boundary is {boundary_high.shape}, mask is {mask.shape}")
    h, w = mask.shape
    b = boundary_high.values.astype(np.float64)
    targets = mask.targets
    is_thing = np.zeros(int(targets.max()) + 1, dtype=bool)
    for tid, (_, kind) in mask.lookup.items():
        if tid < is_thing.size:
            is_thing[tid] = kind == THING

    groups = {THING: [], STUFF: [], "diff": []}
    for dy, dx in FORWARD_OFFSETS:
        src, dst = shifted_slices(dy, dx, h, w)
        bk, bl = b[src], b[dst]
        same = targets[src] == targets[dst]
        thing = is_thing[targets[src]]
        share = np.where(bk > bl, 1.0, np.where(bk == bl, 0.5, 0.0))
        pair = (src, dst, np.maximum(bk, bl), share)
        groups[THING].append((pair, same & thing))
        groups[STUFF].append((pair, same & ~thing))
        groups["diff"].append((pair, ~same))

    loss = 0.0
    grad = np.zeros_like(b)
    for name, entries in groups.items():
        count = sum(int(sel.sum()) for _, sel in entries)
        if count == 0:
            continue
        norm = count if name == "diff" else 2 * count
        for (src, dst, mx, share), sel in entries:
            if name == "diff":
                arg = mx
                d_arg = 1.0
            else:
                arg = 1.0 - mx
                d_arg = -1.0
            loss -= float(np.log(np.maximum(arg[sel], PROB_FLOOR)).sum()) / norm
            live = sel & (arg > PROB_FLOOR)
            d_mx = np.where(live, -d_arg / np.where(live, arg, 1.0), 0.0) / norm
            grad[src] += d_mx * share
            grad[dst] += d_mx * (1.0 - share)
    return loss, grad


# ---------------------------------------------------------------------------
# Combination and gradient check
# ---------------------------------------------------------------------------

def combine_semantic_terms(partial: float, lab: float, rgb: float, config: LossConfig = LossConfig()) -> float:
    """``partial + alpha1 * lab + alpha2 * rgb``."""
    return partial + config.alpha1 * lab + config.alpha2 * rgb


def semantic_loss_total(
    semantic: SemanticMap,
    image: np.ndarray,
    points: Sequence[PointAnnotation],
    tree: SpanningTree,
    config: LossConfig = LossConfig(),
) -> float:
    """Semantic objective: partial CE plus the weighted affinity terms."""
    partial, _ = partial_cross_entropy(semantic, points)
    lab, _ = lab_affinity_loss(semantic, image, config)
    rgb, _ = rgb_tree_loss(semantic, tree, config)
    return combine_semantic_terms(partial, lab, rgb, config)


def finite_difference_check(
    evaluator: LossEvaluator,
    values: np.ndarray,
    step: float = GRADIENT_CHECK_STEP,
    coords: Optional[Sequence[int]] = None,
) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    Args:
        evaluator: ``values -> (loss, gradient)``.
        values:    Point of evaluation (not modified).
        step:      Central-difference step (> 0).
        coords:    Flat coordinates to check (default: all).

    Returns:
        ``max |numeric - analytic| / |analytic|`` over the checked
        coordinates with ``|analytic| > 1e-8``; 0.0 when none qualifies.
    """
    if not step > 0:
        raise ValidationError(f"step must be > 0, got {step}")
    base = np.array(values, dtype=np.float64)
    _, grad = evaluator(base.copy())
    grad = np.asarray(grad, dtype=np.float64).reshape(-1)
    if grad.size != base.size:
        raise ShapeError(f"gradient has {grad.size} entries, input has {base.size}")

    worst = 0.0
    for k in (range(base.size) if coords is None else coords):
        if abs(grad[k]) <= GRADIENT_CHECK_MIN:
            continue
        probe = base.copy()
        probe.flat[k] += step
        plus, _ = evaluator(probe)
        probe.flat[k] = base.flat[k] - step
        minus, _ = evaluator(probe)
        numeric = (plus - minus) / (2.0 * step)
        worst = max(worst, abs(numeric - grad[k]) / abs(grad[k]))
    return worst


def sample_coords(size: int, count: int, seed: int) -> List[int]:
    """Sorted seeded sample of ``min(count, size)`` flat coordinates."""
    rng = np.random.default_rng(seed)
    return sorted(rng.choice(size, size=min(count, size), replace=False).tolist())


def loss_evaluators(
    semantic: SemanticMap,
    points: Sequence[PointAnnotation],
    boundary_high: BoundaryMap,
    mask: PseudoMask,
    image: Optional[np.ndarray] = None,
    tree: Optional[SpanningTree] = None,
    config: LossConfig = LossConfig(),
) -> Dict[str, Tuple[Callable[[np.ndarray], LossValue], np.ndarray]]:
    """``{name: (evaluator, input)}`` for every loss the inputs support.

    The colour losses need *image*; the tree is built from it when not given.
    """
    points = list(points)
    probs = semantic.probs.astype(np.float64)
    result = {
        "partial": (lambda v: partial_cross_entropy(SemanticMap(v), points), probs),
        "boundary": (
            lambda v: boundary_affinity_loss(BoundaryMap(v), mask),
            boundary_high.values.astype(np.float64),
        ),
    }
    if image is not None:
        if tree is None:
            tree = build_mst(image)
        result["lab"] = (lambda v: lab_affinity_loss(SemanticMap(v), image, config), probs)
        result["rgb"] = (lambda v: rgb_tree_loss(SemanticMap(v), tree, config), probs)
    return result
