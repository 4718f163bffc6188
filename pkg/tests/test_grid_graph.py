"""
Unit tests for the pixel graph and geodesic costs.

Tests cover:
- Edge weights from the semantic and boundary maps
- Boundary merging modes
- Dijkstra costs against a Bellman-Ford relaxation on random fields
- Symmetry and scaling of geodesic costs
- Cost matrix assembly
"""

import time
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from otmask.core.errors import ShapeError, ValidationError
from otmask.core.models import BoundaryMap, SemanticMap
from otmask.graph.grid_graph import (
    OFFSETS,
    EdgeWeightField,
    build_cost_matrix,
    build_edge_weights,
    combine_boundaries,
    geodesic_costs,
    shifted_slices,
)

from scene_fixtures import random_boundary, random_semantic


def bellman_ford(weights: np.ndarray, source: int) -> np.ndarray:
    """Relax every edge until nothing changes; returns flat costs."""
    h, w, _ = weights.shape
    dist = np.full((h, w), np.inf)
    dist.reshape(-1)[source] = 0.0
    for _ in range(h * w):
        before = dist.copy()
        for k, (dy, dx) in enumerate(OFFSETS):
            src, dst = shifted_slices(dy, dx, h, w)
            # src -> dst along slot k
            candidate = dist[src] + weights[src + (k,)]
            np.minimum(dist[dst], candidate, out=dist[dst])
        if np.array_equal(before, dist):
            break
    return dist.reshape(-1)


def _one_hot(classes: np.ndarray, channels: int) -> SemanticMap:
    probs = np.zeros(classes.shape + (channels,))
    np.put_along_axis(probs, classes[..., None], 1.0, axis=2)
    return SemanticMap(probs)


class TestEdgeWeights(unittest.TestCase):
    """Edge lengths of the 8-connected grid."""

    def test_uniform_maps_give_zero_weights(self):
        """Test that identical pixels without boundaries are free to cross."""
        semantic = _one_hot(np.zeros((3, 4), dtype=int), 2)
        field = build_edge_weights(semantic, BoundaryMap.zeros(3, 4), beta=0.1, edge_floor=0.0)
        inside = np.isfinite(field.weights)
        self.assertEqual(float(field.weights[inside].max()), 0.0)
        field.validate()

    def test_edge_floor_added(self):
        """Test that the floor is added to every in-grid edge."""
        semantic = _one_hot(np.zeros((2, 2), dtype=int), 2)
        field = build_edge_weights(semantic, BoundaryMap.zeros(2, 2), beta=0.1)
        inside = np.isfinite(field.weights)
        np.testing.assert_array_equal(field.weights[inside], 1e-6)

    def test_opposite_classes(self):
        """Test that orthogonal one-hot pixels are one unit apart."""
        semantic = _one_hot(np.array([[0, 1]]), 2)
        field = build_edge_weights(semantic, BoundaryMap.zeros(1, 2), beta=0.1, edge_floor=0.0)
        self.assertEqual(field.edge(0, 1), 1.0)

    def test_boundary_term_uses_max(self):
        """Test d_b = max(b_k, b_l) weighted by beta."""
        semantic = _one_hot(np.zeros((1, 2), dtype=int), 2)
        boundary = BoundaryMap(np.array([[0.4, 0.7]]))
        field = build_edge_weights(semantic, boundary, beta=0.1, edge_floor=0.0)
        self.assertAlmostEqual(field.edge(0, 1), 0.07, places=12)
        self.assertAlmostEqual(field.edge(1, 0), 0.07, places=12)

    def test_diagonals_have_no_sqrt2(self):
        """Test that a diagonal edge uses the same formula as a straight one."""
        semantic = _one_hot(np.array([[0, 1], [1, 1]]), 2)
        field = build_edge_weights(semantic, BoundaryMap.zeros(2, 2), beta=0.0, edge_floor=0.0)
        self.assertEqual(field.edge(0, 3), 1.0)
        self.assertEqual(field.edge(1, 2), 0.0)

    def test_out_of_grid_slots_are_infinite(self):
        """Test the +inf sentinel on the border."""
        field = EdgeWeightField.uniform(2, 3, 1.0)
        self.assertTrue(np.isinf(field.weights[0, 0, 0]))
        self.assertTrue(np.isinf(field.weights[1, 2, 7]))
        # 11 undirected edges, each stored from both ends
        self.assertEqual(int(np.isfinite(field.weights).sum()), 22)

    def test_symmetric(self):
        """Test symmetry of weights built from random maps."""
        rng = np.random.default_rng(4)
        build_edge_weights(random_semantic(rng, 5, 6, 3), random_boundary(rng, 5, 6), beta=0.3).validate()

    def test_rejections(self):
        """Test size mismatch, negative beta and NaN."""
        semantic = _one_hot(np.zeros((2, 2), dtype=int), 2)
        with self.assertRaises(ShapeError):
            build_edge_weights(semantic, BoundaryMap.zeros(2, 3), beta=0.1)
        with self.assertRaises(ValidationError):
            build_edge_weights(semantic, BoundaryMap.zeros(2, 2), beta=-1.0)
        boundary = BoundaryMap(np.array([[0.0, np.nan], [0.0, 0.0]]))
        with self.assertRaises(ValidationError):
            build_edge_weights(semantic, boundary, beta=0.1)

    def test_non_adjacent_edge(self):
        """Test that only neighbours have an edge."""
        with self.assertRaises(ValidationError):
            EdgeWeightField.uniform(3, 3, 1.0).edge(0, 2)


class TestCombineBoundaries(unittest.TestCase):
    """Merging the high- and low-level boundary maps."""

    def test_modes(self):
        """Test max, high_only and low_only."""
        high = BoundaryMap(np.array([[0.2, 0.9]]))
        low = BoundaryMap(np.array([[0.5, 0.1]]))
        np.testing.assert_array_equal(combine_boundaries(high, low, "max").values, [[0.5, 0.9]])
        np.testing.assert_array_equal(combine_boundaries(high, low, "high_only").values, [[0.2, 0.9]])
        np.testing.assert_array_equal(combine_boundaries(high, low, "low_only").values, [[0.5, 0.1]])
        with self.assertRaises(ValidationError):
            combine_boundaries(high, low, "mean")
        with self.assertRaises(ShapeError):
            combine_boundaries(high, BoundaryMap.zeros(2, 2))


class TestGeodesicCosts(unittest.TestCase):
    """Single-source shortest paths."""

    def test_single_pixel(self):
        """Test the 1x1 grid."""
        costs = geodesic_costs(EdgeWeightField.uniform(1, 1, 1.0), 0)
        np.testing.assert_array_equal(costs.costs, [[0.0]])

    def test_row_of_three(self):
        """Test cumulative costs along a row."""
        costs = geodesic_costs(EdgeWeightField.uniform(1, 3, 0.5), 0)
        np.testing.assert_array_equal(costs.flat(), [0.0, 0.5, 1.0])

    def test_chebyshev_hops(self):
        """Test that unit weights give the king-move distance."""
        costs = geodesic_costs(EdgeWeightField.uniform(5, 7, 1.0), 2 * 7 + 3).costs
        yy, xx = np.mgrid[0:5, 0:7]
        np.testing.assert_array_equal(costs, np.maximum(abs(yy - 2), abs(xx - 3)))

    def test_barrier_detour(self):
        """Test that a heavy edge is avoided when a detour is cheaper."""
        field = EdgeWeightField.uniform(2, 2, 1.0).with_edge(0, 1, 10.0)
        self.assertEqual(geodesic_costs(field, 0).flat()[1], 2.0)

    def test_source_outside_grid(self):
        """Test that a source index beyond the grid is rejected."""
        with self.assertRaises(ValidationError):
            geodesic_costs(EdgeWeightField.uniform(2, 2, 1.0), 4)

    def test_random_8x8_matches_bellman_ford(self):
        """Test one random 8x8 field against the relaxation oracle."""
        rng = np.random.default_rng(8)
        field = build_edge_weights(random_semantic(rng, 8, 8, 3), random_boundary(rng, 8, 8), beta=0.5)
        for source in (0, 27, 63):
            np.testing.assert_allclose(geodesic_costs(field, source).flat(), bellman_ford(field.weights, source), rtol=1e-9)

    def test_random_fields_match_bellman_ford(self):
        """Test 200 random fields up to 16x16 against the relaxation oracle."""
        rng = np.random.default_rng(2024)
        started = time.perf_counter()
        for _ in range(200):
            h, w = (int(v) for v in rng.integers(1, 17, size=2))
            c = int(rng.integers(1, 5))
            field = build_edge_weights(
                random_semantic(rng, h, w, c, floor=0.0),
                random_boundary(rng, h, w),
                beta=float(rng.uniform(0.0, 2.0)),
            )
            source = int(rng.integers(h * w))
            np.testing.assert_allclose(
                geodesic_costs(field, source).flat(), bellman_ford(field.weights, source), rtol=1e-9, atol=0.0,
            )
        self.assertLess(time.perf_counter() - started, 60.0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.1, 10.0))
    def test_costs_scale_with_weights(self, seed, scale):
        """Test that scaling every edge scales every cost."""
        rng = np.random.default_rng(seed)
        field = build_edge_weights(random_semantic(rng, 4, 5, 2), random_boundary(rng, 4, 5), beta=0.2)
        base = geodesic_costs(field, 7).flat()
        np.testing.assert_allclose(geodesic_costs(field.scaled(scale), 7).flat(), base * scale, rtol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_costs_are_symmetric(self, seed):
        """Test that the cost from a to b equals the cost from b to a."""
        rng = np.random.default_rng(seed)
        h, w = (int(v) for v in rng.integers(1, 9, size=2))
        field = build_edge_weights(random_semantic(rng, h, w, 3), random_boundary(rng, h, w), beta=0.5)
        a, b = (int(v) for v in rng.integers(h * w, size=2))
        forward = geodesic_costs(field, a).flat()[b]
        backward = geodesic_costs(field, b).flat()[a]
        self.assertAlmostEqual(forward, backward, delta=1e-12 * max(1.0, forward))

    def test_lowering_an_edge_never_raises_costs(self):
        """Test monotonicity of costs in a single edge weight."""
        rng = np.random.default_rng(5)
        field = build_edge_weights(random_semantic(rng, 6, 6, 3), random_boundary(rng, 6, 6), beta=0.4)
        base = geodesic_costs(field, 0).flat()
        cheaper = field.with_edge(14, 15, 0.0)
        self.assertTrue((geodesic_costs(cheaper, 0).flat() <= base + 1e-15).all())


class TestCostMatrix(unittest.TestCase):
    """Stacking cost rows."""

    def test_rows_are_geodesic_costs(self):
        """Test a 4x4 grid with two sources."""
        rng = np.random.default_rng(3)
        field = build_edge_weights(random_semantic(rng, 4, 4, 2), random_boundary(rng, 4, 4), beta=0.1)
        cost = build_cost_matrix(field, [0, 15])
        self.assertEqual(cost.shape, (2, 16))
        np.testing.assert_allclose(cost[0], bellman_ford(field.weights, 0), rtol=1e-9)
        np.testing.assert_allclose(cost[1], bellman_ford(field.weights, 15), rtol=1e-9)

    def test_single_source(self):
        """Test that one source yields its cost field as the only row."""
        field = EdgeWeightField.uniform(3, 3, 1.0)
        np.testing.assert_array_equal(build_cost_matrix(field, [4])[0], geodesic_costs(field, 4).flat())

    def test_duplicate_sources(self):
        """Test that two sources on one pixel give identical rows."""
        cost = build_cost_matrix(EdgeWeightField.uniform(3, 3, 1.0), [2, 2])
        np.testing.assert_array_equal(cost[0], cost[1])

    def test_no_sources(self):
        """Test that an empty source list is rejected."""
        with self.assertRaises(ValidationError):
            build_cost_matrix(EdgeWeightField.uniform(2, 2, 1.0), [])


if __name__ == "__main__":
    unittest.main()
