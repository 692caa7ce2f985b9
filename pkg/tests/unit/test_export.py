"""
Unit tests for point cloud and image writers.
"""

import numpy as np
import pytest

from voxel_nbv.camera import DepthImage, GrayImage
from voxel_nbv.export import read_pfm, read_pgm, read_ply_points, write_pfm, write_pgm, write_ply_points


class TestPointClouds:
    """Test PLY point clouds."""

    @pytest.mark.parametrize("binary", [True, False])
    def test_ply_loads_back(self, tmp_path, rng, binary):
        """Test written points load back exactly."""
        points = rng.uniform(-10, 10, size=(50, 3))
        path = tmp_path / "points.ply"
        assert write_ply_points(path, points, binary=binary) == 50
        np.testing.assert_array_equal(read_ply_points(path), points)

    def test_ply_header(self, tmp_path):
        """Test the header declares the vertex element."""
        path = tmp_path / "points.ply"
        write_ply_points(path, np.zeros((3, 3)))
        head = path.read_bytes().split(b"end_header")[0].decode("ascii")
        assert "format binary_little_endian 1.0" in head
        assert "element vertex 3" in head


class TestImages:
    """Test PGM and PFM frames."""

    def test_pgm(self, tmp_path):
        """Test grayscale frames are quantized to 8 bits."""
        gray = GrayImage(np.array([[0.0, 0.25], [0.5, 1.0], [1.0, 0.0]]))
        path = tmp_path / "frame.pgm"
        write_pgm(path, gray)
        assert path.read_bytes().startswith(b"P5\n2 3\n255\n")
        np.testing.assert_array_equal(read_pgm(path), gray.to_uint8())

    def test_pfm_keeps_misses(self, tmp_path):
        """Test depth frames keep row order and infinite misses."""
        values = np.array([[1.5, np.inf, 2.25], [4.0, 8.5, np.inf]])
        path = tmp_path / "depth.pfm"
        write_pfm(path, DepthImage(values))
        np.testing.assert_array_equal(read_pfm(path), values)

    def test_pfm_rows_bottom_to_top(self, tmp_path):
        """Test the raster starts with the bottom row."""
        path = tmp_path / "depth.pfm"
        write_pfm(path, DepthImage(np.array([[1.0], [2.0]])))
        data = path.read_bytes()
        raster = np.frombuffer(data[-8:], dtype="<f4")
        assert raster.tolist() == [2.0, 1.0]

    def test_wrong_format(self, tmp_path):
        """Test reading a frame of the other kind fails."""
        path = tmp_path / "depth.pfm"
        write_pfm(path, DepthImage(np.ones((2, 2))))
        with pytest.raises(ValueError):
            read_pgm(path)
