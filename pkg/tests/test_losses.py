"""
Unit tests for the weak-supervision loss evaluators.

Tests cover:
- Values on hand-sized fixtures (ln 2, clamp floor, zero cases)
- Minimum spanning tree against a brute-force Prim oracle
- Tree-filter dynamic program against the naive pairwise path
- Analytic gradients against central differences
- Loss combination
"""

import math
import unittest

import numpy as np

from otmask.core.errors import ShapeError, ValidationError
from otmask.core.models import BoundaryMap, PointAnnotation, PseudoMask, SemanticMap
from otmask.graph.grid_graph import OFFSETS
from otmask.services.losses import (
    LossConfig,
    boundary_affinity_loss,
    build_mst,
    combine_semantic_terms,
    finite_difference_check,
    lab_affinity_loss,
    loss_evaluators,
    naive_tree_filter,
    partial_cross_entropy,
    rgb_tree_loss,
    sample_coords,
    semantic_loss_total,
    tree_filter,
)

from scene_fixtures import random_boundary, random_points, random_semantic

CLAMP = -math.log(1e-12)
FD_STEP = 1e-5


def prim_weight(image: np.ndarray) -> float:
    """Total MST weight of the 8-connected grid by dense Prim."""
    h, w = image.shape[:2]
    n = h * w
    rgb = image.reshape(n, 3).astype(np.float64)
    dense = np.full((n, n), np.inf)
    for y in range(h):
        for x in range(w):
            for dy, dx in OFFSETS:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w:
                    a, b = y * w + x, ny * w + nx
                    dense[a, b] = float(np.sum((rgb[a] - rgb[b]) ** 2))
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = dense[0].copy()
    total = 0.0
    for _ in range(n - 1):
        candidates = np.where(in_tree, np.inf, best)
        k = int(np.argmin(candidates))
        total += candidates[k]
        in_tree[k] = True
        best = np.minimum(best, dense[k])
    return total


def smooth_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Two flat colour halves with faint noise, so most LAB pairs pass tau."""
    image = np.empty((h, w, 3))
    image[:, : w // 2] = (0.6, 0.3, 0.2)
    image[:, w // 2:] = (0.2, 0.4, 0.7)
    return image + rng.uniform(-0.003, 0.003, size=image.shape)


def _checked(evaluator, values, threshold=5e-3, limit=60, seed=0):
    """Coordinates whose analytic gradient is comfortably non-zero."""
    _, grad = evaluator(np.array(values, dtype=np.float64))
    strong = np.flatnonzero(np.abs(grad.reshape(-1)) > threshold)
    if strong.size > limit:
        strong = np.sort(np.random.default_rng(seed).choice(strong, size=limit, replace=False))
    return strong.tolist()


class TestPartialCrossEntropy(unittest.TestCase):
    """Cross-entropy on annotated pixels."""

    def test_certain_points(self):
        """Test that probability 1 at every point gives 0."""
        probs = np.zeros((2, 2, 2))
        probs[..., 1] = 1.0
        points = [PointAnnotation(1, 1, "thing", 0, 0), PointAnnotation(2, 1, "stuff", 1, 1)]
        value, grad = partial_cross_entropy(SemanticMap(probs), points)
        self.assertEqual(value, 0.0)
        self.assertAlmostEqual(float(grad[0, 0, 1]), -0.5)

    def test_half_probability(self):
        """Test that one point at probability 0.5 gives ln 2."""
        value, _ = partial_cross_entropy(SemanticMap(np.full((1, 1, 2), 0.5)), [PointAnnotation(1, 0, "thing", 0, 0)])
        self.assertAlmostEqual(value, math.log(2.0), places=12)

    def test_zero_probability_is_clamped(self):
        """Test the log floor and its zero gradient."""
        probs = np.array([[[1.0, 0.0]]])
        value, grad = partial_cross_entropy(SemanticMap(probs), [PointAnnotation(1, 1, "thing", 0, 0)])
        self.assertAlmostEqual(value, CLAMP, places=9)
        self.assertEqual(float(np.abs(grad).sum()), 0.0)

    def test_rejections(self):
        """Test empty point sets and unknown classes."""
        semantic = SemanticMap(np.full((1, 1, 2), 0.5))
        with self.assertRaises(ValidationError):
            partial_cross_entropy(semantic, [])
        with self.assertRaises(ValidationError):
            partial_cross_entropy(semantic, [PointAnnotation(1, 5, "thing", 0, 0)])


class TestLabAffinity(unittest.TestCase):
    """Local colour-affinity loss."""

    def test_identical_one_hot(self):
        """Test that a constant one-hot map on a flat image costs nothing."""
        probs = np.zeros((3, 3, 2))
        probs[..., 0] = 1.0
        value, _ = lab_affinity_loss(SemanticMap(probs), np.full((3, 3, 3), 0.5))
        self.assertEqual(value, 0.0)

    def test_constant_soft_map_is_not_free(self):
        """Test that a constant but uncertain map pays -log(P . P) on every pair."""
        value, grad = lab_affinity_loss(SemanticMap(np.full((3, 3, 2), 0.5)), np.full((3, 3, 3), 0.5))
        self.assertAlmostEqual(value, math.log(2.0), places=12)
        self.assertTrue(np.isfinite(grad).all())

    def test_orthogonal_pair_hits_the_floor(self):
        """Test that a similar-colour pair with orthogonal classes costs -log(1e-12)."""
        probs = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        value, grad = lab_affinity_loss(SemanticMap(probs), np.full((1, 2, 3), 0.5))
        self.assertAlmostEqual(value, CLAMP, places=9)
        self.assertEqual(float(np.abs(grad).sum()), 0.0)

    def test_dissimilar_colours_are_ignored(self):
        """Test that a black/white pair fails the threshold."""
        probs = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        image = np.array([[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]])
        value, _ = lab_affinity_loss(SemanticMap(probs), image)
        self.assertEqual(value, 0.0)

    def test_image_shape(self):
        """Test a mismatched image."""
        with self.assertRaises(ShapeError):
            lab_affinity_loss(SemanticMap(np.full((2, 2, 2), 0.5)), np.zeros((2, 3, 3)))


class TestSpanningTree(unittest.TestCase):
    """Kruskal MST over squared RGB differences."""

    def test_path_image(self):
        """Test a 1xn strip, which has exactly one spanning tree."""
        image = np.linspace(0, 1, 5)[None, :, None].repeat(3, axis=2)
        tree = build_mst(image).validate()
        self.assertEqual(tree.edges.shape, (4, 2))
        self.assertAlmostEqual(tree.total_weight(), 4 * 3 * 0.25 ** 2)

    def test_constant_image(self):
        """Test that a flat image has weight 0."""
        tree = build_mst(np.full((4, 4, 3), 0.3)).validate()
        self.assertEqual(tree.total_weight(), 0.0)

    def test_single_pixel(self):
        """Test the degenerate one-pixel tree."""
        tree = build_mst(np.zeros((1, 1, 3))).validate()
        self.assertEqual(tree.edges.shape, (0, 2))

    def test_matches_prim(self):
        """Test random 6x6 images against dense Prim."""
        rng = np.random.default_rng(50)
        for _ in range(10):
            image = rng.uniform(size=(6, 6, 3))
            tree = build_mst(image).validate()
            self.assertAlmostEqual(tree.total_weight(), prim_weight(image), places=10)

    def test_cycle_rejected(self):
        """Test that validate() finds a cycle."""
        tree = build_mst(np.zeros((2, 2, 3)))
        tree.edges[2] = tree.edges[0]
        with self.assertRaises(ValidationError):
            tree.validate()


class TestTreeFilter(unittest.TestCase):
    """Two-pass tree aggregation."""

    def test_matches_naive(self):
        """Test the dynamic program against pairwise path sums on 20 fixtures."""
        rng = np.random.default_rng(51)
        for _ in range(20):
            h, w = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            tree = build_mst(rng.uniform(size=(h, w, 3)))
            values = rng.uniform(size=(h * w, 3))
            theta2 = float(rng.uniform(0.02, 1.0))
            np.testing.assert_allclose(
                tree_filter(tree, values, theta2), naive_tree_filter(tree, values, theta2), rtol=1e-9, atol=1e-12,
            )

    def test_fast_loss_matches_naive(self):
        """Test loss and gradient of both paths on 20 random 5x5 fixtures."""
        rng = np.random.default_rng(52)
        config = LossConfig(theta2=0.5)
        for _ in range(20):
            semantic = random_semantic(rng, 5, 5, 3)
            tree = build_mst(rng.uniform(size=(5, 5, 3)))
            fast, fast_grad = rgb_tree_loss(semantic, tree, config)
            slow, slow_grad = rgb_tree_loss(semantic, tree, config, naive=True)
            self.assertAlmostEqual(fast, slow, delta=1e-9)
            np.testing.assert_allclose(fast_grad, slow_grad, atol=1e-9)

    def test_constant_semantic(self):
        """Test that identical pixels have zero loss."""
        semantic = SemanticMap(np.full((3, 4, 2), 0.5))
        value, _ = rgb_tree_loss(semantic, build_mst(np.random.default_rng(0).uniform(size=(3, 4, 3))))
        self.assertAlmostEqual(value, 0.0, places=12)

    def test_constant_image_averages(self):
        """Test that a flat image reduces the filter to the global mean."""
        rng = np.random.default_rng(53)
        semantic = random_semantic(rng, 3, 3, 2)
        value, _ = rgb_tree_loss(semantic, build_mst(np.full((3, 3, 3), 0.5)))
        flat = semantic.flat()
        expected = float(np.abs(flat - flat.mean(axis=0)).mean())
        self.assertAlmostEqual(value, expected, places=12)

    def test_tree_shape_mismatch(self):
        """Test a tree over a different grid."""
        with self.assertRaises(ShapeError):
            rgb_tree_loss(SemanticMap(np.full((2, 2, 2), 0.5)), build_mst(np.zeros((3, 3, 3))))


class TestBoundaryAffinity(unittest.TestCase):
    """Boundary map against a pseudo-mask."""

    def test_no_boundary_single_stuff(self):
        """Test that one stuff target without boundaries costs nothing."""
        mask = PseudoMask(np.ones((3, 3), dtype=int), {1: (0, "stuff")})
        value, _ = boundary_affinity_loss(BoundaryMap.zeros(3, 3), mask)
        self.assertEqual(value, 0.0)

    def test_full_boundary_two_things(self):
        """Test b = 1 on a 1x4 row split into two things."""
        mask = PseudoMask(np.array([[1, 1, 2, 2]]), {1: (0, "thing"), 2: (0, "thing")})
        value, _ = boundary_affinity_loss(BoundaryMap(np.ones((1, 4))), mask)
        self.assertAlmostEqual(value, CLAMP / 2.0, places=9)

    def test_separate_normalisers(self):
        """Test that thing and stuff pairs are normalised separately."""
        mask = PseudoMask(np.array([[1, 1, 2, 2]]), {1: (0, "thing"), 2: (1, "stuff")})
        b = np.array([[0.5, 0.0, 0.0, 0.5]])
        value, _ = boundary_affinity_loss(BoundaryMap(b), mask)
        # thing pair (0,1) and stuff pair (2,3) each give -log(0.5) / 2; cross pair max 0 hits the floor
        self.assertAlmostEqual(value, math.log(2.0) + CLAMP, places=9)

    def test_shape_mismatch(self):
        """Test a mask over a different grid."""
        mask = PseudoMask(np.ones((2, 2), dtype=int), {1: (0, "stuff")})
        with self.assertRaises(ShapeError):
            boundary_affinity_loss(BoundaryMap.zeros(3, 3), mask)


class TestGradients(unittest.TestCase):
    """Analytic gradients against central differences."""

    def setUp(self):
        """Build a smooth random fixture."""
        rng = np.random.default_rng(60)
        self.h, self.w = 5, 6
        self.semantic = random_semantic(rng, self.h, self.w, 3)
        self.image = smooth_image(rng, self.h, self.w)
        self.boundary = random_boundary(rng, self.h, self.w, 0.1, 0.9)
        self.points = random_points(rng, self.h, self.w, 4, 3)
        targets = np.where(np.arange(self.w) < 3, 1, 2)[None, :].repeat(self.h, axis=0)
        targets[0, :] = 3
        self.mask = PseudoMask(targets, {1: (0, "thing"), 2: (1, "thing"), 3: (2, "stuff")})

    def test_quadratic_sanity(self):
        """Test the check itself on a quadratic."""
        rng = np.random.default_rng(61)
        a = rng.uniform(1.0, 2.0, size=10)
        values = rng.uniform(0.5, 1.5, size=10)
        error = finite_difference_check(lambda v: (float(np.sum(a * v ** 2)), 2.0 * a * v), values, step=1e-4)
        self.assertLess(error, 1e-9)

    def test_partial_cross_entropy(self):
        """Test the cross-entropy gradient."""
        evaluator = lambda v: partial_cross_entropy(SemanticMap(v), self.points)
        coords = _checked(evaluator, self.semantic.probs)
        self.assertTrue(coords)
        self.assertLess(finite_difference_check(evaluator, self.semantic.probs, step=FD_STEP, coords=coords), 1e-6)

    def test_lab_affinity(self):
        """Test the local affinity gradient."""
        evaluator = lambda v: lab_affinity_loss(SemanticMap(v), self.image)
        self.assertGreater(evaluator(self.semantic.probs)[0], 0.0)
        coords = _checked(evaluator, self.semantic.probs)
        self.assertTrue(coords)
        self.assertLess(finite_difference_check(evaluator, self.semantic.probs, step=FD_STEP, coords=coords), 1e-6)

    def test_rgb_tree(self):
        """Test the long-range affinity gradient."""
        tree = build_mst(self.image)
        evaluator = lambda v: rgb_tree_loss(SemanticMap(v), tree, LossConfig(theta2=0.5))
        coords = _checked(evaluator, self.semantic.probs)
        self.assertTrue(coords)
        self.assertLess(finite_difference_check(evaluator, self.semantic.probs, step=FD_STEP, coords=coords), 1e-6)

    def test_boundary_affinity(self):
        """Test the boundary gradient away from max-ties."""
        evaluator = lambda v: boundary_affinity_loss(BoundaryMap(v), self.mask)
        coords = _checked(evaluator, self.boundary.values)
        self.assertTrue(coords)
        self.assertLess(finite_difference_check(evaluator, self.boundary.values, step=FD_STEP, coords=coords), 1e-6)

    def test_evaluator_table(self):
        """Test that every loss is offered when an image is present."""
        table = loss_evaluators(self.semantic, self.points, self.boundary, self.mask, image=self.image)
        self.assertEqual(set(table), {"partial", "lab", "rgb", "boundary"})
        table = loss_evaluators(self.semantic, self.points, self.boundary, self.mask)
        self.assertEqual(set(table), {"partial", "boundary"})

    def test_sample_coords(self):
        """Test seeded coordinate sampling."""
        self.assertEqual(sample_coords(100, 10, 3), sample_coords(100, 10, 3))
        self.assertEqual(sample_coords(5, 10, 0), [0, 1, 2, 3, 4])
        with self.assertRaises(ValidationError):
            finite_difference_check(lambda v: (0.0, v), np.ones(2), step=0.0)


class TestCombination(unittest.TestCase):
    """Weighted sum of the semantic terms."""

    def test_weights(self):
        """Test partial + 3 * lab + 3 * rgb."""
        self.assertAlmostEqual(combine_semantic_terms(0.1, 0.2, 0.3), 1.6, places=12)
        self.assertEqual(combine_semantic_terms(0.0, 0.0, 0.0), 0.0)

    def test_total_is_the_sum_of_its_terms(self):
        """Test that the total equals the combined individual values."""
        rng = np.random.default_rng(70)
        semantic = random_semantic(rng, 4, 4, 3)
        image = smooth_image(rng, 4, 4)
        points = random_points(rng, 4, 4, 3, 3)
        tree = build_mst(image)
        parts = (
            partial_cross_entropy(semantic, points)[0],
            lab_affinity_loss(semantic, image)[0],
            rgb_tree_loss(semantic, tree)[0],
        )
        self.assertEqual(semantic_loss_total(semantic, image, points, tree), combine_semantic_terms(*parts))


if __name__ == "__main__":
    unittest.main()
