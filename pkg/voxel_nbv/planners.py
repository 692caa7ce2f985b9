"""
Planner interface and reference planners.

- random: uniform collision-free voxel center below the height cap
- frontier: weighted centroid of unseen observed faces, viewed along the dominant unseen normal
- greedy: candidate shells around the frontier, each scored by a low-resolution depth probe
  simulated against the current belief; argmax wins
- extern:<url>: an HTTP policy service
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .camera import pose_from_lookat, render_depth, unproject
from .exceptions import PlannerError, PoseError, UnschedulableViewpointError, VoxelNBVError
from .models import EnvConfig, Intrinsics
from .scene import PreparedScene
from .voxel_grid import FACE_NORMALS, FREE, OCCUPIED, VoxelGrid

if TYPE_CHECKING:
    from .env import NBVEnv, Observation

logger = logging.getLogger(__name__)

DEFAULT_RADII = (0.75, 1.0, 1.25)
DEFAULT_AZIMUTHS = 16
DEFAULT_ELEVATIONS = (-40.0, -10.0, 20.0, 50.0)
DEFAULT_PROBE = 64


@dataclass
class PlannerDecision:
    """Position action in [-1, 1]^3 plus the world look-at point."""

    action: np.ndarray
    lookat: np.ndarray
    debug: Dict[str, Any] = field(default_factory=dict)
    fallback: bool = False

    def __post_init__(self) -> None:
        self.action = np.asarray(self.action, dtype=np.float64).reshape(3)
        self.lookat = np.asarray(self.lookat, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(self.action)) and np.all(np.isfinite(self.lookat))):
            raise PlannerError("Planner produced a non-finite decision")


@dataclass
class PlannerContext:
    """Everything a planner may read; planners never mutate ``grid``."""

    grid: VoxelGrid
    cfg: EnvConfig
    scene: PreparedScene
    height_cap: float
    rng: np.random.Generator
    step_index: int = 0
    observation: Optional["Observation"] = None

    @classmethod
    def from_env(cls, env: "NBVEnv", rng: np.random.Generator) -> "PlannerContext":
        return cls(
            grid=env.grid,
            cfg=env.cfg,
            scene=env.scene,
            height_cap=env.current_height_cap,
            rng=rng,
            step_index=env.step_count,
            observation=env.last_obs,
        )

    @property
    def default_lookat(self) -> np.ndarray:
        return self.scene.aabb_center


@dataclass
class CandidateSet:
    positions: np.ndarray
    center: np.ndarray
    radii: Tuple[float, ...]
    azimuths: int
    elevations: Tuple[float, ...]
    generated: int = 0

    def __len__(self) -> int:
        return len(self.positions)


def world_to_action(p: Sequence[float], cfg: EnvConfig) -> np.ndarray:
    """Inverse of env.scale_action, clipped to [-1, 1]."""
    origin = np.array(cfg.grid_origin)
    a = 2.0 * (np.asarray(p, dtype=np.float64) - origin) / cfg.scene_size - 1.0
    return np.clip(a, -1.0, 1.0)


def _open_neighbours(grid: VoxelGrid, free_only: bool) -> np.ndarray:
    """(g, g, g, 6) mask: the j-neighbour is open space. Outside the grid counts as free,
    except below the floor."""
    padded = np.pad(grid.state, 1, mode="constant", constant_values=FREE)
    padded[:, :, 0] = OCCUPIED
    g = grid.resolution
    out = np.zeros(grid.state.shape + (6,), dtype=np.bool_)
    for j, (di, dj, dk) in enumerate(FACE_NORMALS.astype(np.int64)):
        neighbour = padded[1 + di : 1 + di + g, 1 + dj : 1 + dj + g, 1 + dk : 1 + dk + g]
        out[..., j] = neighbour == FREE if free_only else neighbour != OCCUPIED
    return out


def frontier_faces(grid: VoxelGrid) -> np.ndarray:
    """
    Unseen faces of observed occupied voxels bordering open space, (g, g, g, 6).

    Faces bordering known free space are preferred; faces bordering unknown space are
    used only when no such face remains.
    """
    occupied = (grid.state == OCCUPIED)[..., None]
    unseen = ((grid.faces[..., None] >> np.arange(6, dtype=np.uint8)) & 1) == 0
    base = occupied & unseen
    faces = base & _open_neighbours(grid, free_only=True)
    if not np.any(faces):
        faces = base & _open_neighbours(grid, free_only=False)
    return faces


def frontier_centroid(grid: VoxelGrid) -> Optional[np.ndarray]:
    """Unseen-face-count weighted centroid of frontier voxels, or None without a frontier."""
    weights = frontier_faces(grid).sum(axis=-1).reshape(-1)
    total = int(weights.sum())
    if total == 0:
        return None
    nz = np.flatnonzero(weights)
    return (weights[nz, None] * grid.frame.flat_centers[nz]).sum(axis=0) / total


def plan_random(
    grid: VoxelGrid,
    cfg: EnvConfig,
    rng: np.random.Generator,
    height_cap: float,
    lookat: Sequence[float],
) -> PlannerDecision:
    """
    Uniformly random collision-free voxel center below the cap.

    Raises:
        PlannerError: If no voxel qualifies
    """
    candidates = np.flatnonzero(grid.collision_free_mask(height_cap, cfg.floor_clearance).reshape(-1))
    if len(candidates) == 0:
        raise PlannerError("No collision-free voxel below the height cap", "random")
    center = grid.frame.flat_centers[candidates[rng.integers(len(candidates))]]
    return PlannerDecision(action=world_to_action(center, cfg), lookat=lookat, debug={"position": center.tolist()})


def plan_frontier(
    grid: VoxelGrid,
    cfg: EnvConfig,
    rng: np.random.Generator,
    height_cap: float,
    fallback_lookat: Sequence[float],
    standoff: float,
) -> PlannerDecision:
    """
    Look at the frontier centroid from ``standoff`` meters along the dominant unseen normal.

    Falls back to plan_random (flagged) when there is no frontier or no reachable viewpoint.
    """
    faces = frontier_faces(grid)
    per_direction = faces.reshape(-1, 6).sum(axis=0)
    centroid = frontier_centroid(grid)
    if centroid is None:
        return _fallback(grid, cfg, rng, height_cap, fallback_lookat, "no frontier")

    direction = int(np.argmax(per_direction))
    target = centroid + standoff * FACE_NORMALS[direction]
    lo = grid.origin
    hi = lo + grid.frame.extent
    margin = 0.5 * grid.voxel_size
    target = np.clip(target, lo + margin, hi - margin)
    target[2] = min(max(target[2], cfg.floor_clearance), height_cap)
    try:
        position = grid.nearest_collision_free(target, height_cap, cfg.floor_clearance)
    except UnschedulableViewpointError:
        return _fallback(grid, cfg, rng, height_cap, fallback_lookat, "no collision-free viewpoint")
    if np.allclose(position, centroid):
        return _fallback(grid, cfg, rng, height_cap, fallback_lookat, "viewpoint on the frontier")
    return PlannerDecision(
        action=world_to_action(position, cfg),
        lookat=centroid,
        debug={
            "direction": direction,
            "position": position.tolist(),
            "frontier_faces": per_direction.tolist(),
        },
    )


def _fallback(
    grid: VoxelGrid,
    cfg: EnvConfig,
    rng: np.random.Generator,
    height_cap: float,
    lookat: Sequence[float],
    reason: str,
) -> PlannerDecision:
    logger.warning(f"Falling back to a random viewpoint: {reason}")
    decision = plan_random(grid, cfg, rng, height_cap, lookat)
    decision.fallback = True
    decision.debug["fallback"] = reason
    return decision


def generate_candidates(
    grid: VoxelGrid,
    cfg: EnvConfig,
    height_cap: float,
    center: np.ndarray,
    object_radius: float,
    radii: Sequence[float] = DEFAULT_RADII,
    azimuths: int = DEFAULT_AZIMUTHS,
    elevations: Sequence[float] = DEFAULT_ELEVATIONS,
) -> CandidateSet:
    """
    Spherical shells around ``center`` sampled on an azimuth x elevation grid, each sample
    projected onto collision-free space; duplicates keep their first occurrence.
    """
    lo = grid.origin
    hi = lo + grid.frame.extent
    positions: List[np.ndarray] = []
    seen = set()
    generated = 0
    for scale in radii:
        r = scale * object_radius
        for elev in elevations:
            el = math.radians(elev)
            for a in range(azimuths):
                az = 2.0 * math.pi * a / azimuths
                offset = r * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
                p = np.clip(center + offset, lo, hi)
                generated += 1
                try:
                    q = grid.nearest_collision_free(p, height_cap, cfg.floor_clearance)
                except UnschedulableViewpointError:
                    return CandidateSet(np.empty((0, 3)), center, tuple(radii), azimuths, tuple(elevations), generated)
                key = tuple(np.round(q, 9))
                if key in seen:
                    continue
                seen.add(key)
                positions.append(q)
    return CandidateSet(
        positions=np.array(positions).reshape(-1, 3),
        center=np.asarray(center, dtype=np.float64),
        radii=tuple(radii),
        azimuths=azimuths,
        elevations=tuple(elevations),
        generated=generated,
    )


def score_candidates(
    grid: VoxelGrid,
    scene: PreparedScene,
    cfg: EnvConfig,
    candidates: CandidateSet,
    lookat: np.ndarray,
    intrinsics: Intrinsics,
) -> np.ndarray:
    """Newly seen faces each candidate would add, from a depth probe against the true mesh."""
    scores = np.zeros(len(candidates), dtype=np.int64)
    max_range = cfg.effective_max_range
    for i, position in enumerate(candidates.positions):
        try:
            pose = pose_from_lookat(position, lookat)
        except PoseError:
            scores[i] = -1
            continue
        depth = render_depth(scene.bvh, pose, intrinsics, max_range)
        points = unproject(depth, pose, intrinsics)
        gained, _ = grid.preview_observation(points, position)
        scores[i] = gained
    return scores


def plan_greedy_oracle(
    grid: VoxelGrid,
    scene: PreparedScene,
    cfg: EnvConfig,
    rng: np.random.Generator,
    height_cap: float,
    probe: int = DEFAULT_PROBE,
    radii: Sequence[float] = DEFAULT_RADII,
    azimuths: int = DEFAULT_AZIMUTHS,
    elevations: Sequence[float] = DEFAULT_ELEVATIONS,
) -> PlannerDecision:
    """Argmax of simulated face gain over the candidate shells (first index wins ties)."""
    centroid = frontier_centroid(grid)
    lookat = scene.aabb_center if centroid is None else centroid
    candidates = generate_candidates(
        grid, cfg, height_cap, lookat, scene.object_radius, radii, azimuths, elevations
    )
    if len(candidates) == 0:
        return _fallback(grid, cfg, rng, height_cap, lookat, "empty candidate set")
    intrinsics = cfg.intrinsics.scaled(probe, probe)
    scores = score_candidates(grid, scene, cfg, candidates, lookat, intrinsics)
    best = int(np.argmax(scores))
    return PlannerDecision(
        action=world_to_action(candidates.positions[best], cfg),
        lookat=lookat,
        debug={
            "chosen": best,
            "position": candidates.positions[best].tolist(),
            "candidates": [
                {"position": p.tolist(), "score": int(s)}
                for p, s in zip(candidates.positions, scores)
            ],
        },
    )


class Planner(ABC):
    """Selects the next (action, look-at) pair for an environment."""

    name: str = "planner"

    @abstractmethod
    def plan(self, ctx: PlannerContext) -> PlannerDecision:
        raise NotImplementedError

    def close(self) -> None:
        """Release resources held by the planner."""


class RandomPlanner(Planner):
    name = "random"

    def plan(self, ctx: PlannerContext) -> PlannerDecision:
        return plan_random(ctx.grid, ctx.cfg, ctx.rng, ctx.height_cap, ctx.default_lookat)


class FrontierPlanner(Planner):
    name = "frontier"

    def __init__(self, standoff: Optional[float] = None):
        self.standoff = standoff

    def plan(self, ctx: PlannerContext) -> PlannerDecision:
        standoff = self.standoff if self.standoff is not None else ctx.scene.object_radius
        return plan_frontier(ctx.grid, ctx.cfg, ctx.rng, ctx.height_cap, ctx.default_lookat, standoff)


class GreedyOraclePlanner(Planner):
    name = "greedy"

    def __init__(
        self,
        probe: int = DEFAULT_PROBE,
        radii: Sequence[float] = DEFAULT_RADII,
        azimuths: int = DEFAULT_AZIMUTHS,
        elevations: Sequence[float] = DEFAULT_ELEVATIONS,
    ):
        self.probe = probe
        self.radii = tuple(radii)
        self.azimuths = azimuths
        self.elevations = tuple(elevations)

    def plan(self, ctx: PlannerContext) -> PlannerDecision:
        return plan_greedy_oracle(
            ctx.grid,
            ctx.scene,
            ctx.cfg,
            ctx.rng,
            ctx.height_cap,
            self.probe,
            self.radii,
            self.azimuths,
            self.elevations,
        )


class ExternPlanner(Planner):
    """Delegates to an HTTP policy service answering ``POST <url>/plan``."""

    def __init__(self, url: str, timeout: int = 30, max_retries: int = 3):
        from .client import PolicyClient

        self.name = f"extern:{url}"
        self.client = PolicyClient(base_url=url, timeout=timeout, max_retries=max_retries)

    def plan(self, ctx: PlannerContext) -> PlannerDecision:
        from .protocol import encode_observation

        if ctx.observation is None:
            raise PlannerError("Extern planner needs the current observation", self.name)
        payload = {
            "step": ctx.step_index,
            "height_cap": ctx.height_cap,
            "observation": encode_observation(ctx.observation),
        }
        try:
            response = self.client.plan(payload)
        except VoxelNBVError as e:
            raise PlannerError(f"Policy service failed: {e}", self.name) from e
        return PlannerDecision(action=response.action, lookat=response.lookat)

    def close(self) -> None:
        self.client.close()


def make_planner(name: str) -> Planner:
    """
    Build a planner from its CLI name: random, frontier, greedy or extern:<url>.

    Raises:
        PlannerError: If the name is unknown
    """
    if name.startswith("extern:"):
        url = name[len("extern:") :]
        if not url:
            raise PlannerError("extern planner needs a URL", name)
        return ExternPlanner(url)
    planners = {"random": RandomPlanner, "frontier": FrontierPlanner, "greedy": GreedyOraclePlanner}
    if name not in planners:
        raise PlannerError(f"Unknown planner: {name}", name)
    return planners[name]()
