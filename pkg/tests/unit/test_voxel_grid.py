"""
Unit tests for the voxel belief grid.
"""

import json

import numpy as np
import pytest

from voxel_nbv.camera import DepthImage, Pose
from voxel_nbv.exceptions import CacheFormatError, UnschedulableViewpointError
from voxel_nbv.models import Intrinsics
from voxel_nbv.voxel_grid import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    FaceMask,
    GridFrame,
    VoxelGrid,
    face_bits_toward,
)


def brute_nearest(grid, p, cap, clearance):
    """Exhaustive argmin over qualifying voxels in lexicographic order."""
    best, best_d2 = None, None
    for idx in np.argwhere(grid.state == FREE):
        c = grid.frame.voxel_center(idx)
        if c[2] > cap or c[2] < clearance:
            continue
        dx, dy, dz = c - p
        d2 = dx * dx + dy * dy + dz * dz
        if best is None or d2 < best_d2:
            best, best_d2 = c, d2
    return best


class TestFaceMask:
    """Test face bit masks."""

    def test_order_and_bits(self):
        """Test the fixed (+x, -x, +y, -y, +z, -z) bit order."""
        mask = FaceMask.from_faces([0, 5])
        assert mask.bits == 0b100001
        assert mask.is_set(0) and mask.is_set(5)
        assert not mask.is_set(1)
        assert repr(mask) == "FaceMask(+x,-z)"
        assert repr(FaceMask()) == "FaceMask(-)"

    def test_with_face_is_monotone(self):
        """Test setting a face never clears another."""
        mask = FaceMask(0b000110).with_face(4)
        assert mask.faces() == (1, 2, 4)
        assert mask.with_face(4) == mask
        assert (FaceMask(0b1) | FaceMask(0b10)).count() == 2

    def test_invalid(self):
        """Test out-of-range bits and faces."""
        with pytest.raises(ValueError):
            FaceMask(64)
        with pytest.raises(IndexError):
            FaceMask().is_set(6)
        with pytest.raises(IndexError):
            FaceMask.from_faces([-1])


class TestGridFrame:
    """Test grid frames."""

    def test_default_frame(self, frame):
        """Test the 20 m scene frame."""
        assert frame.shape == (20, 20, 20)
        assert frame.extent == 20.0
        np.testing.assert_array_equal(frame.voxel_center((0, 0, 0)), [-9.5, -9.5, 0.5])

    def test_index_of(self, frame):
        """Test world points map to voxel indices and the max face lies outside."""
        idx, inside = frame.index_of(np.array([[-10.0, -10.0, 0.0], [9.999, 0.0, 19.5], [10.0, 0.0, 1.0]]))
        np.testing.assert_array_equal(idx[0], [0, 0, 0])
        np.testing.assert_array_equal(idx[1], [19, 10, 19])
        assert inside.tolist() == [True, True, False]

    def test_pos_enc(self, small_frame):
        """Test normalized positional encoding."""
        enc = small_frame.pos_enc
        assert enc.shape == (4, 4, 4, 3)
        np.testing.assert_allclose(enc[1, 2, 3], [0.375, 0.625, 0.875])
        assert not enc.flags.writeable

    def test_flat_centers_order(self, small_frame):
        """Test flat centers follow C order over (i, j, k)."""
        centers = small_frame.flat_centers
        np.testing.assert_array_equal(centers[1], [0.5, 0.5, 1.5])
        np.testing.assert_array_equal(centers[4], [0.5, 1.5, 0.5])
        np.testing.assert_array_equal(centers[16], [1.5, 0.5, 0.5])

    def test_header_bytes(self, frame):
        """Test the snapshot header layout."""
        expected = bytes.fromhex(
            "14000000" "00000000000024c0" "00000000000024c0" "0000000000000000" "000000000000f03f"
        )
        assert frame.header_bytes() == expected

    def test_invalid(self):
        """Test invalid frames."""
        with pytest.raises(ValueError):
            GridFrame(0, (0, 0, 0), 1.0)
        with pytest.raises(ValueError):
            GridFrame(4, (0, 0, 0), 0.0)


class TestFaceVisibility:
    """Test the face visibility rule."""

    def test_single_axis(self):
        """Test a camera straight along +x sees only the +x face."""
        bits, zero = face_bits_toward(np.array([[0.5, 0.5, 0.5]]), np.array([5.0, 0.5, 0.5]))
        assert bits.tolist() == [0b000001]
        assert not zero[0]

    def test_diagonal(self):
        """Test a diagonal camera sees three faces."""
        bits, _ = face_bits_toward(np.array([[0.0, 0.0, 0.0]]), np.array([-1.0, 2.0, -3.0]))
        assert FaceMask(int(bits[0])).faces() == (1, 2, 5)

    def test_perpendicular_face_not_visible(self):
        """Test a zero dot product does not count as visible."""
        bits, _ = face_bits_toward(np.array([[0.0, 0.0, 0.0]]), np.array([0.0, 3.0, 0.0]))
        assert FaceMask(int(bits[0])).faces() == (2,)

    def test_zero_distance(self):
        """Test a camera on the voxel center yields no bits."""
        bits, zero = face_bits_toward(np.array([[0.5, 0.5, 0.5]]), np.array([0.5, 0.5, 0.5]))
        assert bits.tolist() == [0]
        assert zero[0]


class TestIntegration:
    """Test observation integration."""

    def test_integrate_marks_occupied_and_faces(self, small_frame):
        """Test a point marks its voxel occupied with the camera-facing faces."""
        grid = VoxelGrid(small_frame)
        result = grid.integrate_observation(np.array([[0.5, 0.5, 0.5]]), (5.0, 0.5, 0.5))
        assert grid.state[0, 0, 0] == OCCUPIED
        assert grid.faces[0, 0, 0] == 0b000001
        assert result.newly_seen_faces == 1
        assert result.newly_occupied == 1
        assert result.observed_voxels == 1

    def test_repeat_gains_nothing(self, small_frame):
        """Test re-observing from the same camera gains no faces."""
        grid = VoxelGrid(small_frame)
        grid.integrate_observation(np.array([[0.5, 0.5, 0.5]]), (5.0, 0.5, 0.5))
        result = grid.integrate_observation(np.array([[0.6, 0.4, 0.5]]), (5.0, 0.5, 0.5))
        assert result.newly_seen_faces == 0
        assert result.newly_occupied == 0

    def test_faces_accumulate(self, small_frame):
        """Test faces from several cameras are OR-ed."""
        grid = VoxelGrid(small_frame)
        grid.integrate_observation(np.array([[0.5, 0.5, 0.5]]), (5.0, 0.5, 0.5))
        result = grid.integrate_observation(np.array([[0.5, 0.5, 0.5]]), (0.5, 0.5, 5.0))
        assert result.newly_seen_faces == 1
        assert FaceMask(int(grid.faces[0, 0, 0])).faces() == (0, 4)

    def test_boundary_point_binned_toward_camera(self, small_frame):
        """Test a hit on a shared voxel face lands in the camera-side voxel."""
        grid = VoxelGrid(small_frame)
        grid.integrate_observation(np.array([[2.0, 0.5, 0.5]]), (3.5, 0.5, 0.5))
        assert grid.state[2, 0, 0] == OCCUPIED
        assert grid.state[1, 0, 0] == UNKNOWN

    def test_points_outside_ignored(self, small_frame):
        """Test points outside the grid are dropped."""
        grid = VoxelGrid(small_frame)
        result = grid.integrate_observation(np.array([[9.0, 9.0, 9.0]]), (1.0, 1.0, 1.0))
        assert result.observed_voxels == 0
        assert not np.any(grid.state)

    def test_camera_at_center_skips_faces(self, small_frame):
        """Test a voxel whose center coincides with the camera is skipped for faces."""
        grid = VoxelGrid(small_frame)
        result = grid.integrate_observation(np.array([[1.5, 1.5, 1.5]]), (1.5, 1.5, 1.5))
        assert result.skipped_voxels == [(1, 1, 1)]
        assert grid.state[1, 1, 1] == OCCUPIED
        assert grid.faces[1, 1, 1] == 0

    def test_preview_does_not_mutate(self, small_frame):
        """Test preview reports the gain of integrate without changing the grid."""
        grid = VoxelGrid(small_frame)
        points = np.array([[0.5, 0.5, 0.5], [3.5, 3.5, 3.5]])
        preview = grid.preview_observation(points, (2.0, 2.0, 2.0))
        assert not np.any(grid.state)
        result = grid.integrate_observation(points, (2.0, 2.0, 2.0))
        assert preview == (result.newly_seen_faces, result.newly_occupied) == (6, 2)


class TestCarving:
    """Test free-space carving."""

    def carve(self, grid, distance):
        pose = Pose(position=np.array([0.5, 0.5, 0.5]), yaw=0.0, pitch=0.0)
        depth = DepthImage(np.array([[distance]]))
        return grid.carve_free_space(depth, pose, Intrinsics(width=1, height=1))

    def test_carve_up_to_hit(self, small_frame):
        """Test voxels fully traversed before the hit become free."""
        grid = self.carve(VoxelGrid(small_frame), 2.7)
        assert grid.state[:, 0, 0].tolist() == [FREE, FREE, FREE, UNKNOWN]

    def test_carve_miss_to_boundary(self, small_frame):
        """Test a miss carves up to the grid boundary."""
        grid = self.carve(VoxelGrid(small_frame), np.inf)
        assert grid.state[:, 0, 0].tolist() == [FREE] * 4
        assert np.count_nonzero(grid.state) == 4

    def test_occupied_never_reverts(self, small_frame):
        """Test carving leaves occupied voxels occupied."""
        grid = VoxelGrid(small_frame)
        grid.state[1, 0, 0] = OCCUPIED
        self.carve(grid, np.inf)
        assert grid.state[1, 0, 0] == OCCUPIED
        assert grid.state[2, 0, 0] == FREE

    def test_camera_voxel_freed(self, small_frame):
        """Test the camera voxel is free even for a point-blank hit."""
        grid = self.carve(VoxelGrid(small_frame), 0.1)
        assert grid.state[0, 0, 0] == FREE
        assert np.count_nonzero(grid.state) == 1


class TestQueries:
    """Test point queries and collision-free projection."""

    def test_world_to_voxel(self, small_frame):
        """Test half-open voxel lookup."""
        grid = VoxelGrid(small_frame)
        assert grid.world_to_voxel((0.0, 0.0, 0.0)) == (0, 0, 0)
        assert grid.world_to_voxel((3.99, 1.0, 2.5)) == (3, 1, 2)
        assert grid.world_to_voxel((4.0, 1.0, 1.0)) is None
        assert grid.world_to_voxel((-0.01, 1.0, 1.0)) is None

    def test_state_at_closed_volume(self, small_frame):
        """Test the max faces of the volume belong to the last voxel."""
        grid = VoxelGrid(small_frame)
        grid.state[3, 3, 3] = FREE
        assert grid.state_at((4.0, 4.0, 4.0)) == FREE
        assert grid.state_at((4.01, 1.0, 1.0)) is None

    def test_nearest_inside_free_returns_point(self, small_frame):
        """Test a point already in a qualifying voxel is returned unchanged."""
        grid = VoxelGrid(small_frame)
        grid.state[1, 1, 1] = FREE
        np.testing.assert_array_equal(grid.nearest_collision_free((1.2, 1.7, 1.9), 4.0), [1.2, 1.7, 1.9])

    def test_nearest_tie_lexicographic(self, small_frame):
        """Test equidistant voxels resolve to the lowest index."""
        grid = VoxelGrid(small_frame)
        grid.state[0, 0, 0] = FREE
        grid.state[2, 0, 0] = FREE
        np.testing.assert_array_equal(grid.nearest_collision_free((1.5, 0.5, 0.5), 4.0), [0.5, 0.5, 0.5])

    def test_nearest_respects_cap(self, small_frame):
        """Test voxels above the cap are excluded."""
        grid = VoxelGrid(small_frame)
        grid.state[0, 0, 3] = FREE
        grid.state[3, 3, 0] = FREE
        np.testing.assert_array_equal(grid.nearest_collision_free((0.5, 0.5, 3.5), 2.0), [3.5, 3.5, 0.5])

    def test_nearest_respects_floor_clearance(self, small_frame):
        """Test voxels below the clearance are excluded."""
        grid = VoxelGrid(small_frame)
        grid.state[0, 0, 0] = FREE
        grid.state[0, 0, 2] = FREE
        np.testing.assert_array_equal(grid.nearest_collision_free((0.5, 0.5, 0.5), 4.0, 1.0), [0.5, 0.5, 2.5])

    def test_nearest_unschedulable(self, small_frame):
        """Test an all-unknown grid cannot be scheduled."""
        with pytest.raises(UnschedulableViewpointError):
            VoxelGrid(small_frame).nearest_collision_free((1.0, 1.0, 1.0), 4.0)

    def check_against_exhaustive(self, frame, count, seed):
        rng = np.random.default_rng(seed)
        for _ in range(count):
            grid = VoxelGrid(frame)
            grid.state = rng.choice([UNKNOWN, FREE, OCCUPIED], size=frame.shape, p=[0.45, 0.1, 0.45]).astype(np.uint8)
            p = rng.uniform([-12, -12, -2], [12, 12, 22])
            cap = float(rng.choice([2.0, 5.0, 10.0, 20.0]))
            expected = brute_nearest(grid, p, cap, 0.0)
            idx = grid.world_to_voxel(p)
            if idx is not None and grid.state[idx] == FREE and grid.frame.voxel_center(idx)[2] <= cap:
                expected = p
            np.testing.assert_array_equal(grid.nearest_collision_free(p, cap), expected)

    def test_nearest_matches_exhaustive_search(self, frame):
        """Test projection against an exhaustive search on randomized grids."""
        self.check_against_exhaustive(frame, 100, 7)

    @pytest.mark.slow
    def test_nearest_matches_exhaustive_search_many(self, frame):
        """Test projection against an exhaustive search on 1000 randomized grids."""
        self.check_against_exhaustive(frame, 1000, 11)


class TestCoverageAndSerialization:
    """Test coverage, tensors and snapshots."""

    def test_face_coverage(self, cube_scene):
        """Test coverage against the ground truth."""
        gt = cube_scene.gt
        grid = VoxelGrid(gt.frame)
        assert grid.face_coverage(gt) == 0.0
        grid.faces = gt.visible_faces.copy()
        assert grid.face_coverage(gt) == 1.0

    def test_face_coverage_ignores_non_gt_faces(self, cube_scene):
        """Test faces outside the ground truth do not count."""
        gt = cube_scene.gt
        grid = VoxelGrid(gt.frame)
        grid.faces[0, 0, 0] = 0b111111
        assert grid.face_coverage(gt) == 0.0

    def test_face_coverage_frame_mismatch(self, cube_scene, small_frame):
        """Test a grid in another frame is rejected."""
        with pytest.raises(ValueError):
            VoxelGrid(small_frame).face_coverage(cube_scene.gt)

    def test_tensor(self, small_frame):
        """Test the (g, g, g, 10) tensor layout."""
        grid = VoxelGrid(small_frame)
        grid.state[1, 2, 3] = OCCUPIED
        grid.faces[1, 2, 3] = 0b010001
        t = grid.tensor()
        assert t.shape == (4, 4, 4, 10)
        assert t.dtype == np.float32
        np.testing.assert_allclose(t[1, 2, 3], [1, 0.375, 0.625, 0.875, 1, 0, 0, 0, 1, 0])
        assert t[..., 0].sum() == 1

    def test_snapshot_restores_grid(self, small_frame):
        """Test a snapshot decodes to an identical grid."""
        grid = VoxelGrid(small_frame)
        grid.state[0, 1, 2] = OCCUPIED
        grid.state[3, 3, 3] = FREE
        grid.faces[0, 1, 2] = 0b101010
        data = grid.to_bytes()
        assert len(data) == 36 + 2 * 64
        restored = VoxelGrid.from_bytes(data)
        assert restored.frame == small_frame
        np.testing.assert_array_equal(restored.state, grid.state)
        np.testing.assert_array_equal(restored.faces, grid.faces)

    def test_snapshot_errors(self, small_frame):
        """Test truncated and corrupt snapshots."""
        data = VoxelGrid(small_frame).to_bytes()
        with pytest.raises(CacheFormatError):
            VoxelGrid.from_bytes(data[:20])
        with pytest.raises(CacheFormatError):
            VoxelGrid.from_bytes(data[:-1])
        corrupt = bytearray(data)
        corrupt[36] = 7
        with pytest.raises(CacheFormatError):
            VoxelGrid.from_bytes(bytes(corrupt))

    def test_copy_is_independent(self, small_frame):
        """Test copies do not share arrays."""
        grid = VoxelGrid(small_frame)
        other = grid.copy()
        other.state[0, 0, 0] = FREE
        assert grid.state[0, 0, 0] == UNKNOWN

    def test_debug_json(self, small_frame):
        """Test the debug dump lists occupied voxels and named faces."""
        grid = VoxelGrid(small_frame)
        grid.state[1, 0, 0] = OCCUPIED
        grid.faces[1, 0, 0] = 0b000011
        grid.state[2, 2, 2] = FREE
        dump = json.loads(grid.to_debug_json())
        assert dump["occupied"] == [[1, 0, 0]]
        assert dump["faces"] == {"1,0,0": ["+x", "-x"]}
        assert dump["free_voxels"] == 1
