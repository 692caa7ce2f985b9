"""
Pinhole camera: poses, depth/grayscale rendering and depth unprojection.

Depth values are Euclidean hit distances along each pixel ray (not z-depth), so a
pixel unprojects to ``position + depth * ray_direction``. Misses are stored as +inf.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple

import numpy as np

from .bvh import MeshBVH
from .exceptions import PoseError
from .models import Intrinsics

logger = logging.getLogger(__name__)


def _normalize_yaw(yaw: float) -> float:
    yaw = math.atan2(math.sin(yaw), math.cos(yaw))
    if yaw <= -math.pi:
        yaw = math.pi
    return yaw


@dataclass(frozen=True, eq=False)
class Pose:
    """5-DoF camera pose: position, yaw about +z, pitch (positive looks up); roll is 0."""

    position: np.ndarray
    yaw: float
    pitch: float

    def __post_init__(self) -> None:
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise PoseError("Pose position must be finite")
        if not (-math.pi / 2 - 1e-12 <= self.pitch <= math.pi / 2 + 1e-12):
            raise PoseError(f"Pitch {self.pitch} outside [-pi/2, pi/2]")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "pitch", float(min(max(self.pitch, -math.pi / 2), math.pi / 2)))
        object.__setattr__(self, "yaw", _normalize_yaw(float(self.yaw)))

    @property
    def forward(self) -> np.ndarray:
        cp = math.cos(self.pitch)
        return np.array(
            [cp * math.cos(self.yaw), cp * math.sin(self.yaw), math.sin(self.pitch)]
        )

    def basis(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (forward, right, up) unit vectors in world coordinates."""
        fwd = self.forward
        right = np.array([math.sin(self.yaw), -math.cos(self.yaw), 0.0])
        up = np.cross(right, fwd)
        return fwd, right, up

    def as_vector(self) -> np.ndarray:
        """X_t = (x, y, z, pitch, yaw)."""
        return np.array([*self.position, self.pitch, self.yaw])

    def to_dict(self) -> dict:
        return {"position": self.position.tolist(), "yaw": self.yaw, "pitch": self.pitch}


def pose_from_lookat(position: np.ndarray, lookat: np.ndarray) -> Pose:
    """
    Build the pose at ``position`` oriented toward ``lookat``.

    Raises:
        PoseError: If the two points coincide
    """
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(lookat, dtype=np.float64) - position
    norm = float(np.linalg.norm(forward))
    if not math.isfinite(norm) or norm == 0.0:
        raise PoseError("Look-at point coincides with the camera position")
    forward = forward / norm
    yaw = math.atan2(forward[1], forward[0])
    pitch = math.asin(max(-1.0, min(1.0, forward[2])))
    return Pose(position=position, yaw=yaw, pitch=pitch)


@dataclass
class DepthImage:
    """h x w Euclidean hit distances; +inf marks a miss."""

    values: np.ndarray
    max_range: float = field(default=math.inf)

    @property
    def hit_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass
class GrayImage:
    """h x w luminance in [0, 1]; background is 0."""

    values: np.ndarray

    def to_uint8(self) -> np.ndarray:
        return np.round(np.clip(self.values, 0.0, 1.0) * 255.0).astype(np.uint8)


@lru_cache(maxsize=16)
def _camera_frame_rays(intr: Intrinsics) -> np.ndarray:
    """Per-pixel (x_right, y_up) offsets on the unit-focal image plane, row-major."""
    f = intr.focal_px
    cols = (np.arange(intr.width) + 0.5 - intr.width / 2.0) / f
    rows = (intr.height / 2.0 - (np.arange(intr.height) + 0.5)) / f
    xr, yu = np.meshgrid(cols, rows)
    offsets = np.stack([xr.ravel(), yu.ravel()], axis=1)
    offsets.setflags(write=False)
    return offsets


def ray_directions(pose: Pose, intr: Intrinsics) -> np.ndarray:
    """Unit world-space directions of every pixel ray, row-major (h*w, 3)."""
    fwd, right, up = pose.basis()
    offsets = _camera_frame_rays(intr)
    dirs = fwd[None, :] + offsets[:, :1] * right[None, :] + offsets[:, 1:] * up[None, :]
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs


def capture(
    bvh: MeshBVH, pose: Pose, intr: Intrinsics, max_range: float
) -> Tuple[DepthImage, GrayImage]:
    """Render depth and grayscale from one traversal of the scene."""
    dirs = ray_directions(pose, intr)
    dist, slot = bvh.intersect(pose.position, dirs, math.inf)
    hit = slot >= 0
    gray = np.zeros(len(dirs))
    if np.any(hit):
        gray[hit] = np.abs(np.einsum("ij,ij->i", bvh.normals[slot[hit]], dirs[hit]))
    gray = np.clip(gray, 0.0, 1.0)
    depth = np.where(dist <= max_range, dist, np.inf)
    shape = (intr.height, intr.width)
    return DepthImage(depth.reshape(shape), max_range), GrayImage(gray.reshape(shape))


def render_depth(bvh: MeshBVH, pose: Pose, intr: Intrinsics, max_range: float) -> DepthImage:
    """Nearest-hit distance per pixel, +inf beyond ``max_range`` or on a miss."""
    dirs = ray_directions(pose, intr)
    dist, _ = bvh.intersect(pose.position, dirs, max_range)
    return DepthImage(dist.reshape(intr.height, intr.width), max_range)


def render_gray(bvh: MeshBVH, pose: Pose, intr: Intrinsics) -> GrayImage:
    """Two-sided Lambertian headlight shading: |n . v| with misses at 0."""
    _, gray = capture(bvh, pose, intr, math.inf)
    return gray


def unproject(depth: DepthImage, pose: Pose, intr: Intrinsics) -> np.ndarray:
    """World points ``position + depth * direction`` of every finite-depth pixel."""
    values = depth.values.reshape(-1)
    hit = np.isfinite(values)
    if not np.any(hit):
        return np.empty((0, 3))
    dirs = ray_directions(pose, intr)[hit]
    return pose.position[None, :] + values[hit, None] * dirs
