"""
Unit tests for the map, image, mask and points codecs.

Tests cover:
- Bit-exact semantic/boundary map round trips (float32 content)
- Header comments, truncated rasters and bad sidecars
- Mask round trips and the reserved id 0
- Points parsing and its error paths
"""

import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from otmask.core.errors import CodecError, ValidationError
from otmask.core.models import BoundaryMap, PointAnnotation, PseudoMask, SemanticMap
from otmask.maps.codecs import (
    CHANNELS_SUFFIX,
    LABELS_SUFFIX,
    read_image,
    read_map,
    read_mask,
    read_points,
    write_image,
    write_map,
    write_mask,
    write_points,
)


def _float32_semantic(seed: int, height: int, width: int, channels: int) -> SemanticMap:
    """Probabilities that survive a float32 round trip and still sum to 1."""
    rng = np.random.default_rng(seed)
    raw = rng.uniform(0.05, 1.0, size=(height, width, channels))
    return SemanticMap((raw / raw.sum(axis=2, keepdims=True)).astype(np.float32))


class TestMapCodec(unittest.TestCase):
    """PFM maps and images."""

    def setUp(self):
        """Create a scratch directory."""
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        """Remove the scratch directory."""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    # ------------------------------------------------------------------
    # Round trips
    # ------------------------------------------------------------------

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 2**31 - 1),
        height=st.integers(1, 6),
        width=st.integers(1, 6),
        channels=st.integers(1, 4),
    )
    def test_semantic_round_trip_bit_identical(self, seed, height, width, channels):
        """Test that a float32 semantic map reads back bit for bit."""
        semantic = _float32_semantic(seed, height, width, channels)
        path = self.temp_dir / f"sem_{seed}_{height}_{width}_{channels}.pfm"
        write_map(semantic, path)
        back = read_map(path)
        self.assertIsInstance(back, SemanticMap)
        self.assertEqual(back.probs.tobytes(), semantic.probs.tobytes())

    def test_boundary_round_trip(self):
        """Test that a boundary map reads back as a boundary map."""
        values = np.linspace(0.0, 1.0, 12, dtype=np.float32).reshape(3, 4)
        path = self.temp_dir / "b.pfm"
        write_map(BoundaryMap(values), path)
        back = read_map(path)
        self.assertIsInstance(back, BoundaryMap)
        np.testing.assert_array_equal(back.values, values)

    def test_boundary_write_removes_stale_sidecar(self):
        """Test that overwriting a semantic map with a boundary map drops the sidecar."""
        path = self.temp_dir / "m.pfm"
        write_map(_float32_semantic(0, 2, 2, 3), path)
        self.assertTrue(path.with_name(path.name + CHANNELS_SUFFIX).exists())
        write_map(BoundaryMap.zeros(2, 2), path)
        self.assertFalse(path.with_name(path.name + CHANNELS_SUFFIX).exists())
        self.assertIsInstance(read_map(path), BoundaryMap)

    def test_image_round_trip(self):
        """Test colour PFM images."""
        image = np.random.default_rng(1).uniform(size=(4, 5, 3)).astype(np.float32)
        path = self.temp_dir / "image.pfm"
        write_image(image, path)
        np.testing.assert_array_equal(read_image(path), image)
        with self.assertRaises(CodecError):
            read_map(path)

    # ------------------------------------------------------------------
    # Malformed files
    # ------------------------------------------------------------------

    def test_header_comments_are_skipped(self):
        """Test that '#' comments inside the header are ignored."""
        path = self.temp_dir / "c.pfm"
        raster = np.array([[0.25, 0.5]], dtype="<f4").tobytes()
        path.write_bytes(b"Pf\n# written by hand\n2 1\n# scale\n-1.0\n" + raster)
        back = read_map(path)
        np.testing.assert_array_equal(back.values, [[0.25, 0.5]])

    def test_bad_probability_sum_names_pixel(self):
        """Test that a pixel summing to 1.5 is rejected with its index."""
        probs = np.full((1, 2, 2), 0.5, dtype=np.float32)
        probs[0, 0, 0] = 1.0
        path = self.temp_dir / "bad.pfm"
        write_map(SemanticMap(probs), path)
        with self.assertRaisesRegex(ValidationError, "pixel 0"):
            read_map(path)

    def test_truncated_raster(self):
        """Test that a short raster is a codec error."""
        path = self.temp_dir / "t.pfm"
        write_map(BoundaryMap.zeros(3, 3), path)
        path.write_bytes(path.read_bytes()[:-4])
        with self.assertRaisesRegex(CodecError, "expected 36"):
            read_map(path)

    def test_bad_magic_and_sidecar(self):
        """Test non-PFM input and a malformed channel sidecar."""
        path = self.temp_dir / "x.pfm"
        path.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
        with self.assertRaises(CodecError):
            read_map(path)
        write_map(BoundaryMap.zeros(2, 2), path)
        path.with_name(path.name + CHANNELS_SUFFIX).write_text("planes=2\n")
        with self.assertRaises(CodecError):
            read_map(path)

    def test_rows_not_divisible_by_channels(self):
        """Test a channel count that does not split the rows."""
        path = self.temp_dir / "s.pfm"
        write_map(BoundaryMap.zeros(3, 2), path)
        path.with_name(path.name + CHANNELS_SUFFIX).write_text("channels=2\n")
        with self.assertRaises(CodecError):
            read_map(path)


class TestMaskAndPointsCodec(unittest.TestCase):
    """PGM masks and points files."""

    def setUp(self):
        """Create a scratch directory."""
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        """Remove the scratch directory."""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_mask_round_trip(self):
        """Test that targets and lookup survive a round trip."""
        mask = PseudoMask(np.array([[1, 1, 300], [2, 300, 300]]), {1: (0, "stuff"), 2: (3, "thing"), 300: (3, "thing")})
        path = self.temp_dir / "mask.pgm"
        write_mask(mask, path)
        back = read_mask(path)
        np.testing.assert_array_equal(back.targets, mask.targets)
        self.assertEqual(back.lookup, mask.lookup)

    def test_mask_with_reserved_id(self):
        """Test that a stored 0 is rejected on read."""
        path = self.temp_dir / "zero.pgm"
        path.write_bytes(b"P5\n2 1\n65535\n" + np.array([1, 0], dtype=">u2").tobytes())
        path.with_name(path.name + LABELS_SUFFIX).write_text("1 0 thing\n")
        with self.assertRaisesRegex(CodecError, "pixel 1"):
            read_mask(path)

    def test_mask_id_without_label(self):
        """Test that every id needs a sidecar line."""
        path = self.temp_dir / "nolabel.pgm"
        path.write_bytes(b"P5\n2 1\n65535\n" + np.array([1, 2], dtype=">u2").tobytes())
        path.with_name(path.name + LABELS_SUFFIX).write_text("1 0 thing\n")
        with self.assertRaises(ValidationError):
            read_mask(path)

    def test_points_round_trip(self):
        """Test the points text format."""
        points = [PointAnnotation(1, 0, "thing", 2, 3), PointAnnotation(4, 2, "stuff", 0, 0)]
        path = self.temp_dir / "points.txt"
        write_points(points, path)
        self.assertEqual(read_points(path, 5, 5), points)

    def test_points_with_comments(self):
        """Test that comments and blank lines are skipped."""
        path = self.temp_dir / "p.txt"
        path.write_text("# header\n\n1 0 thing 1 1  # trailing\n2 1 stuff 0 0\n")
        self.assertEqual(len(read_points(path)), 2)

    def test_duplicate_point_id(self):
        """Test that a repeated target_id 3 is reported."""
        path = self.temp_dir / "dup.txt"
        path.write_text("3 0 thing 0 0\n3 1 thing 1 1\n")
        with self.assertRaisesRegex(ValidationError, "duplicate target_id 3"):
            read_points(path)

    def test_malformed_points(self):
        """Test unknown kinds, short lines and out-of-range coordinates."""
        path = self.temp_dir / "bad.txt"
        path.write_text("1 0 blob 0 0\n")
        with self.assertRaises(CodecError):
            read_points(path)
        path.write_text("1 0 thing 0\n")
        with self.assertRaises(CodecError):
            read_points(path)
        path.write_text("1 0 thing 4 0\n")
        with self.assertRaises(ValidationError):
            read_points(path, height=2, width=4)


if __name__ == "__main__":
    unittest.main()
