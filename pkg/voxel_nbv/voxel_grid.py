"""
Cumulative voxel belief with per-voxel six-face visibility.

Face order is fixed as (+x, -x, +y, -y, +z, -z); bit j of a voxel's face byte means
"outward face j has been seen". Voxel states are UNKNOWN, FREE and OCCUPIED, and an
occupied voxel never reverts within an episode.

Binary snapshot layout (little-endian)::

    int32 g | float64 origin[3] | float64 voxel_size | uint8 state[g^3] | uint8 faces[g^3]

Arrays are stored in C order over (i, j, k).
"""

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numba
import numpy as np

from .camera import DepthImage, Pose, ray_directions
from .exceptions import CacheFormatError, DegenerateSceneError, UnschedulableViewpointError
from .models import EnvConfig, Intrinsics

if TYPE_CHECKING:
    from .scene import GroundTruth

logger = logging.getLogger(__name__)

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

FACE_NAMES = ("+x", "-x", "+y", "-y", "+z", "-z")
FACE_NORMALS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64
)
FACE_OFFSETS = FACE_NORMALS.astype(np.int64)
FACE_BITS = (1 << np.arange(6)).astype(np.uint8)
ALL_FACES = 0b111111

POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)

GRID_HEADER = struct.Struct("<i3dd")

# Hit points are binned after moving this fraction of a voxel toward the camera.
BIN_NUDGE = 1e-9


class FaceMask:
    """Six seen/unseen bits in the fixed (+x, -x, +y, -y, +z, -z) order."""

    __slots__ = ("bits",)

    def __init__(self, bits: int = 0):
        if not 0 <= int(bits) <= ALL_FACES:
            raise ValueError(f"Face bits out of range: {bits}")
        self.bits = int(bits)

    @staticmethod
    def _check(j: int) -> int:
        if not isinstance(j, (int, np.integer)) or not 0 <= j < 6:
            raise IndexError(f"Face index must be in 0..5, got {j}")
        return int(j)

    @classmethod
    def from_faces(cls, faces: Iterable[int]) -> "FaceMask":
        bits = 0
        for j in faces:
            bits |= 1 << cls._check(j)
        return cls(bits)

    def is_set(self, j: int) -> bool:
        return bool(self.bits >> self._check(j) & 1)

    def with_face(self, j: int) -> "FaceMask":
        return FaceMask(self.bits | 1 << self._check(j))

    def faces(self) -> Tuple[int, ...]:
        return tuple(j for j in range(6) if self.bits >> j & 1)

    def count(self) -> int:
        return int(POPCOUNT[self.bits])

    def __or__(self, other: "FaceMask") -> "FaceMask":
        return FaceMask(self.bits | other.bits)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FaceMask) and other.bits == self.bits

    def __hash__(self) -> int:
        return hash(self.bits)

    def __repr__(self) -> str:
        names = ",".join(FACE_NAMES[j] for j in self.faces())
        return f"FaceMask({names or '-'})"


@dataclass(frozen=True)
class GridFrame:
    """Resolution, min-corner origin and voxel edge of a cubic grid."""

    resolution: int
    origin: Tuple[float, float, float]
    voxel_size: float

    def __post_init__(self) -> None:
        if self.resolution < 1:
            raise ValueError("Grid resolution must be >= 1")
        if not self.voxel_size > 0:
            raise ValueError("Voxel size must be positive")
        object.__setattr__(self, "origin", tuple(float(c) for c in self.origin))

    @classmethod
    def from_config(cls, cfg: EnvConfig) -> "GridFrame":
        return cls(cfg.g, cfg.grid_origin, cfg.voxel_size)

    @property
    def shape(self) -> Tuple[int, int, int]:
        g = self.resolution
        return (g, g, g)

    @property
    def extent(self) -> float:
        return self.resolution * self.voxel_size

    @property
    def origin_array(self) -> np.ndarray:
        return np.array(self.origin, dtype=np.float64)

    @cached_property
    def flat_centers(self) -> np.ndarray:
        """World centers of all voxels, C order, shape (g^3, 3)."""
        g = self.resolution
        i, j, k = np.meshgrid(np.arange(g), np.arange(g), np.arange(g), indexing="ij")
        idx = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)
        centers = self.origin_array + (idx + 0.5) * self.voxel_size
        centers.setflags(write=False)
        return centers

    @cached_property
    def pos_enc(self) -> np.ndarray:
        """Normalized voxel centers ((i+0.5)/g, (j+0.5)/g, (k+0.5)/g), shape (g, g, g, 3)."""
        g = self.resolution
        axis = (np.arange(g) + 0.5) / g
        i, j, k = np.meshgrid(axis, axis, axis, indexing="ij")
        enc = np.stack([i, j, k], axis=-1)
        enc.setflags(write=False)
        return enc

    def voxel_center(self, index: Sequence[int]) -> np.ndarray:
        return self.origin_array + (np.asarray(index, dtype=np.float64) + 0.5) * self.voxel_size

    def index_of(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Voxel indices of world points.

        Returns:
            (indices (n, 3) int64, inside mask (n,)); the max face is outside
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        idx = np.floor((pts - self.origin_array) / self.voxel_size).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < self.resolution), axis=1)
        return idx, inside

    def header_bytes(self) -> bytes:
        return GRID_HEADER.pack(self.resolution, *self.origin, self.voxel_size)


@dataclass
class IntegrationResult:
    newly_seen_faces: int
    newly_occupied: int
    observed_voxels: int
    skipped_voxels: List[Tuple[int, int, int]] = field(default_factory=list)


def face_bits_toward(centers: np.ndarray, cam_pos: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Face visibility f(v, j) = 1(d_v . n_j > 0) for voxel centers seen from ``cam_pos``.

    Returns:
        (bits uint8 per voxel, zero-distance mask); zero-distance voxels get no bits
    """
    d = np.asarray(cam_pos, dtype=np.float64)[None, :] - centers
    norm = np.linalg.norm(d, axis=1)
    zero = norm == 0.0
    safe = np.where(zero, 1.0, norm)
    dots = (d / safe[:, None]) @ FACE_NORMALS.T
    visible = (dots > 0.0) & ~zero[:, None]
    bits = (visible.astype(np.uint8) * FACE_BITS[None, :]).sum(axis=1).astype(np.uint8)
    return bits, zero


class VoxelGrid:
    """
    Scene belief over a cubic volume: per-voxel state, cumulative face visibility and
    positional encoding. Mutation is single-writer; queries are pure reads.
    """

    def __init__(self, frame: GridFrame):
        self.frame = frame
        self.state = np.zeros(frame.shape, dtype=np.uint8)
        self.faces = np.zeros(frame.shape, dtype=np.uint8)

    @classmethod
    def from_config(cls, cfg: EnvConfig) -> "VoxelGrid":
        return cls(GridFrame.from_config(cfg))

    @property
    def resolution(self) -> int:
        return self.frame.resolution

    @property
    def voxel_size(self) -> float:
        return self.frame.voxel_size

    @property
    def origin(self) -> np.ndarray:
        return self.frame.origin_array

    @property
    def pos_enc(self) -> np.ndarray:
        return self.frame.pos_enc

    def copy(self) -> "VoxelGrid":
        other = VoxelGrid(self.frame)
        other.state = self.state.copy()
        other.faces = self.faces.copy()
        return other

    def world_to_voxel(self, p: Sequence[float]) -> Optional[Tuple[int, int, int]]:
        """Index of the voxel containing ``p``, or None when ``p`` is outside the grid."""
        idx, inside = self.frame.index_of(np.asarray(p, dtype=np.float64))
        if not inside[0]:
            return None
        i, j, k = idx[0]
        return int(i), int(j), int(k)

    def state_at(self, p: Sequence[float]) -> Optional[int]:
        """
        State of the voxel containing ``p``; points on the max faces of the closed grid
        volume belong to the last voxel. None outside the closed volume.
        """
        pts = np.asarray(p, dtype=np.float64)
        rel = (pts - self.origin) / self.voxel_size
        g = self.resolution
        if np.any(rel < 0) or np.any(rel > g):
            return None
        idx = np.minimum(np.floor(rel).astype(np.int64), g - 1)
        return int(self.state[tuple(idx)])

    def count_faces(self) -> int:
        return int(POPCOUNT[self.faces].sum())

    def _observed_voxels(self, points: np.ndarray, cam_pos: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            return np.empty(0, dtype=np.int64)
        toward = cam_pos[None, :] - pts
        dist = np.linalg.norm(toward, axis=1)
        scale = np.where(dist > 0.0, BIN_NUDGE * self.voxel_size / np.where(dist > 0, dist, 1), 0)
        idx, inside = self.frame.index_of(pts + toward * scale[:, None])
        if not np.any(inside):
            return np.empty(0, dtype=np.int64)
        return np.unique(np.ravel_multi_index(idx[inside].T, self.frame.shape))

    def integrate_observation(self, points: np.ndarray, cam_pos: Sequence[float]) -> IntegrationResult:
        """
        Mark voxels containing points occupied and OR in their visible faces.

        Args:
            points: (n, 3) world points unprojected from a depth image
            cam_pos: collision-free camera position

        Returns:
            IntegrationResult with the number of face bits that went 0 -> 1
        """
        cam = np.asarray(cam_pos, dtype=np.float64)
        flat = self._observed_voxels(points, cam)
        if len(flat) == 0:
            return IntegrationResult(0, 0, 0)

        state = self.state.reshape(-1)
        faces = self.faces.reshape(-1)
        newly_occupied = int(np.count_nonzero(state[flat] != OCCUPIED))
        state[flat] = OCCUPIED

        bits, zero = face_bits_toward(self.frame.flat_centers[flat], cam)
        skipped: List[Tuple[int, int, int]] = []
        if np.any(zero):
            for f in flat[zero]:
                skipped.append(tuple(int(c) for c in np.unravel_index(f, self.frame.shape)))
            logger.warning(f"Camera coincides with voxel center(s) {skipped}; face update skipped")

        old = faces[flat]
        gained = bits & ~old
        faces[flat] = old | bits
        return IntegrationResult(
            newly_seen_faces=int(POPCOUNT[gained].sum()),
            newly_occupied=newly_occupied,
            observed_voxels=len(flat),
            skipped_voxels=skipped,
        )

    def preview_observation(self, points: np.ndarray, cam_pos: Sequence[float]) -> Tuple[int, int]:
        """
        What integrate_observation would gain, without mutating the grid.

        Returns:
            (newly_seen_faces, newly_occupied)
        """
        cam = np.asarray(cam_pos, dtype=np.float64)
        flat = self._observed_voxels(points, cam)
        if len(flat) == 0:
            return 0, 0
        bits, _ = face_bits_toward(self.frame.flat_centers[flat], cam)
        old = self.faces.reshape(-1)[flat]
        newly_occupied = int(np.count_nonzero(self.state.reshape(-1)[flat] != OCCUPIED))
        return int(POPCOUNT[bits & ~old].sum()), newly_occupied

    def carve_free_space(self, depth: DepthImage, pose: Pose, intrinsics: Intrinsics) -> "VoxelGrid":
        """
        Mark voxels fully traversed before each ray's hit (or up to the grid boundary on a
        miss) as free; occupied voxels stay occupied. The camera voxel is freed afterwards.
        """
        dirs = ray_directions(pose, intrinsics)
        t_end = np.ascontiguousarray(depth.values.reshape(-1), dtype=np.float64)
        _carve_kernel(self.state, self.origin, float(self.voxel_size), pose.position, dirs, t_end)
        self.mark_free(pose.position)
        return self

    def mark_free(self, p: Sequence[float]) -> None:
        idx = self.world_to_voxel(p)
        if idx is not None and self.state[idx] != OCCUPIED:
            self.state[idx] = FREE

    def face_coverage(self, gt: "GroundTruth") -> float:
        """Fraction of ground-truth visible faces marked seen in this grid."""
        if gt.frame != self.frame:
            raise ValueError("Grid and ground truth use different frames")
        total = int(POPCOUNT[gt.visible_faces].sum())
        if total == 0:
            raise DegenerateSceneError("Ground truth has no visible faces")
        seen = int(POPCOUNT[self.faces & gt.visible_faces].sum())
        return seen / total

    def collision_free_mask(self, height_cap: float, floor_clearance: float) -> np.ndarray:
        """Free voxels whose center height lies in [floor_clearance, height_cap], (g, g, g)."""
        cz = self.frame.flat_centers[:, 2].reshape(self.frame.shape)
        return (self.state == FREE) & (cz <= height_cap) & (cz >= floor_clearance)

    def nearest_collision_free(
        self, p: Sequence[float], height_cap: float, floor_clearance: float = 0.0
    ) -> np.ndarray:
        """
        Project ``p`` onto collision-free space.

        Returns ``p`` unchanged when it lies in a qualifying free voxel; otherwise the
        center of the nearest qualifying free voxel, ties broken by lexicographic index.

        Raises:
            UnschedulableViewpointError: If no voxel qualifies
        """
        point = np.asarray(p, dtype=np.float64).reshape(3)
        mask = self.collision_free_mask(height_cap, floor_clearance)
        idx = self.world_to_voxel(point)
        if idx is not None and mask[idx]:
            return point.copy()
        candidates = np.flatnonzero(mask.reshape(-1))
        if len(candidates) == 0:
            raise UnschedulableViewpointError(
                height_cap=height_cap, floor_clearance=floor_clearance
            )
        centers = self.frame.flat_centers[candidates]
        d2 = ((centers - point[None, :]) ** 2).sum(axis=1)
        return centers[int(np.argmin(d2))].copy()

    def tensor(self) -> np.ndarray:
        """G_t as (g, g, g, 10) float32: occupancy, 3 positional channels, 6 face bits."""
        occ = (self.state == OCCUPIED).astype(np.float32)[..., None]
        faces = ((self.faces[..., None] & FACE_BITS) > 0).astype(np.float32)
        return np.concatenate([occ, self.pos_enc.astype(np.float32), faces], axis=-1)

    def to_bytes(self) -> bytes:
        return self.frame.header_bytes() + self.state.tobytes(order="C") + self.faces.tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "VoxelGrid":
        grid, _ = cls.read_from(data, 0)
        return grid

    @classmethod
    def read_from(cls, data: bytes, offset: int) -> Tuple["VoxelGrid", int]:
        """Decode a snapshot starting at ``offset``; returns the grid and the end offset."""
        if len(data) < offset + GRID_HEADER.size:
            raise CacheFormatError("Truncated grid header")
        g, ox, oy, oz, voxel_size = GRID_HEADER.unpack_from(data, offset)
        if g < 1 or not math.isfinite(voxel_size) or voxel_size <= 0:
            raise CacheFormatError(f"Invalid grid header: g={g}, voxel_size={voxel_size}")
        offset += GRID_HEADER.size
        n = g * g * g
        if len(data) < offset + 2 * n:
            raise CacheFormatError("Truncated grid body")
        grid = cls(GridFrame(g, (ox, oy, oz), voxel_size))
        grid.state = np.frombuffer(data, np.uint8, n, offset).reshape(grid.frame.shape).copy()
        grid.faces = np.frombuffer(data, np.uint8, n, offset + n).reshape(grid.frame.shape).copy()
        if np.any(grid.state > OCCUPIED) or np.any(grid.faces > ALL_FACES):
            raise CacheFormatError("Grid body holds out-of-range values")
        return grid, offset + 2 * n

    def to_debug_dict(self) -> Dict[str, Any]:
        """JSON-friendly dump listing non-unknown voxels and their seen faces."""
        occupied = np.argwhere(self.state == OCCUPIED)
        faces = {
            f"{i},{j},{k}": [FACE_NAMES[b] for b in FaceMask(int(self.faces[i, j, k])).faces()]
            for i, j, k in np.argwhere(self.faces > 0)
        }
        return {
            "g": self.resolution,
            "origin": list(self.frame.origin),
            "voxel_size": self.voxel_size,
            "free_voxels": int(np.count_nonzero(self.state == FREE)),
            "occupied": occupied.tolist(),
            "faces": faces,
        }

    def to_debug_json(self) -> str:
        return json.dumps(self.to_debug_dict(), sort_keys=True)


@numba.njit(cache=True)
def _carve_kernel(state, origin, voxel_size, cam, dirs, t_end):  # pragma: no cover - compiled
    g = state.shape[0]
    gx = (cam[0] - origin[0]) / voxel_size
    gy = (cam[1] - origin[1]) / voxel_size
    gz = (cam[2] - origin[2]) / voxel_size
    i0 = int(np.floor(gx))
    j0 = int(np.floor(gy))
    k0 = int(np.floor(gz))
    if i0 < 0 or j0 < 0 or k0 < 0 or i0 >= g or j0 >= g or k0 >= g:
        return
    for r in range(dirs.shape[0]):
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]
        te = t_end[r]
        i = i0
        j = j0
        k = k0
        if dx > 0.0:
            sx = 1
            tmx = ((i + 1) - gx) * voxel_size / dx
            tdx = voxel_size / dx
        elif dx < 0.0:
            sx = -1
            tmx = (i - gx) * voxel_size / dx
            tdx = -voxel_size / dx
        else:
            sx = 0
            tmx = np.inf
            tdx = np.inf
        if dy > 0.0:
            sy = 1
            tmy = ((j + 1) - gy) * voxel_size / dy
            tdy = voxel_size / dy
        elif dy < 0.0:
            sy = -1
            tmy = (j - gy) * voxel_size / dy
            tdy = -voxel_size / dy
        else:
            sy = 0
            tmy = np.inf
            tdy = np.inf
        if dz > 0.0:
            sz = 1
            tmz = ((k + 1) - gz) * voxel_size / dz
            tdz = voxel_size / dz
        elif dz < 0.0:
            sz = -1
            tmz = (k - gz) * voxel_size / dz
            tdz = -voxel_size / dz
        else:
            sz = 0
            tmz = np.inf
            tdz = np.inf
        while True:
            t_exit = min(tmx, min(tmy, tmz))
            if t_exit >= te:
                break
            if state[i, j, k] != OCCUPIED:
                state[i, j, k] = FREE
            if tmx <= tmy and tmx <= tmz:
                i += sx
                tmx += tdx
            elif tmy <= tmz:
                j += sy
                tmy += tdy
            else:
                k += sz
                tmz += tdz
            if i < 0 or j < 0 or k < 0 or i >= g or j >= g or k >= g:
                break
