"""
Next-best-view environment: observation assembly, collision-free action projection,
face-coverage reward with constraint penalties, height-cap schedule and termination.

One ``NBVEnv`` is strictly sequential. Independent instances share only the read-only
``PreparedScene``.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .camera import DepthImage, GrayImage, Pose, capture, pose_from_lookat, unproject
from .exceptions import (
    ConfigError,
    CoverageCompleteError,
    EpisodeDoneError,
    InvalidActionError,
    PoseError,
    UnschedulableViewpointError,
)
from .models import EnvConfig, StepRecord
from .scene import PreparedScene, gt_lookat
from .voxel_grid import FREE, GridFrame, IntegrationResult, VoxelGrid

logger = logging.getLogger(__name__)


def scale_action(action: Sequence[float], cfg: EnvConfig) -> Tuple[np.ndarray, bool]:
    """
    Map an action in [-1, 1]^3 affinely onto the scene volume.

    Out-of-range components are clamped.

    Returns:
        (world point, clamped flag)

    Raises:
        InvalidActionError: If the action is not three finite numbers
    """
    try:
        a = np.asarray(action, dtype=np.float64).reshape(3)
    except (TypeError, ValueError) as e:
        raise InvalidActionError("Action must be three numbers", action) from e
    if not np.all(np.isfinite(a)):
        raise InvalidActionError("Action must be finite", a.tolist())
    clamped = bool(np.any(np.abs(a) > 1.0))
    a = np.clip(a, -1.0, 1.0)
    origin = np.array(cfg.grid_origin)
    return origin + (a + 1.0) / 2.0 * cfg.scene_size, clamped


def height_cap(step_index: int, cfg: EnvConfig) -> float:
    """Piecewise-constant height cap of the fixed schedule at ``step_index``."""
    if step_index < 0:
        raise ValueError("step_index must be >= 0")
    cap = cfg.height_schedule[0][1]
    for from_step, value in cfg.height_schedule:
        if step_index >= from_step:
            cap = value
        else:
            break
    return float(cap)


@dataclass
class Observation:
    """s_t = {I_t, M_t, G_t, L_t} plus the raw capture it was built from."""

    gray: GrayImage
    depth: DepthImage
    points: np.ndarray
    vector: np.ndarray
    grid: VoxelGrid
    lookat: np.ndarray
    pose: Pose

    @property
    def height_cap(self) -> float:
        return float(self.vector[5])


@dataclass
class StepResult:
    obs: Observation
    reward: float
    coverage_reward: float
    constraint_penalty: float
    m_col: bool
    newly_seen_faces: int
    face_coverage: float
    terminated: bool
    termination_reason: Optional[str]
    a_prime: Optional[np.ndarray]
    gt_lookat: Optional[np.ndarray]
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_record(self, step: int, cr: Optional[float] = None) -> StepRecord:
        return StepRecord(
            kind="step",
            step=step,
            position=self.obs.pose.position.tolist(),
            yaw=self.obs.pose.yaw,
            pitch=self.obs.pose.pitch,
            lookat=self.obs.lookat.tolist(),
            height_cap=float(self.diagnostics.get("height_cap", self.obs.height_cap)),
            reward=self.reward,
            coverage_reward=self.coverage_reward,
            constraint_penalty=self.constraint_penalty,
            m_col=self.m_col,
            newly_seen_faces=self.newly_seen_faces,
            face_coverage=self.face_coverage,
            terminated=self.terminated,
            termination_reason=self.termination_reason,
            cr=cr,
        )


class NBVEnv:
    """
    Stepping environment over one prepared scene.

    Args:
        scene: Placed mesh and ground truth
        cfg: Environment constants; the grid frame must match the scene's
    """

    def __init__(self, scene: PreparedScene, cfg: Optional[EnvConfig] = None):
        self.scene = scene
        self.cfg = cfg or EnvConfig()
        self.frame = GridFrame.from_config(self.cfg)
        if self.frame != scene.frame:
            raise ConfigError(
                "Environment grid does not match the scene's ground truth",
                {"env": str(self.frame), "scene": str(scene.frame)},
            )
        self.max_range = self.cfg.effective_max_range
        self.grid = VoxelGrid(self.frame)
        self.step_count = 0
        self.done = True
        self.face_coverage = 0.0
        self.last_obs: Optional[Observation] = None
        self._episode_cap: Optional[float] = None
        self._reset_integration: Optional[IntegrationResult] = None

    @property
    def n_voxels(self) -> int:
        return self.frame.resolution ** 3

    def height_cap_at(self, step_index: int) -> float:
        if self._episode_cap is not None:
            return self._episode_cap
        return height_cap(min(step_index, self.cfg.max_steps - 1), self.cfg)

    @property
    def current_height_cap(self) -> float:
        """Cap that applies to the next step() call."""
        return self.height_cap_at(self.step_count)

    def reset(self, seed: Optional[int] = None) -> Observation:
        """
        Start an episode from a random collision-free position facing the object center.

        Raises:
            UnschedulableViewpointError: If no exterior voxel lies within the height limits
        """
        rng = np.random.default_rng(self.cfg.seed if seed is None else seed)
        self.grid = VoxelGrid(self.frame)
        self.step_count = 0
        self._episode_cap = None

        initial_cap = self.cfg.max_height if self.cfg.height_mode == "random" else height_cap(0, self.cfg)
        start = self._sample_start(rng, initial_cap)
        if self.cfg.height_mode == "random":
            self._episode_cap = float(rng.uniform(start[2], self.cfg.max_height))

        lookat = self.scene.aabb_center
        pose = pose_from_lookat(start, lookat)
        depth, gray, points, result = self._observe(pose)
        self._reset_integration = result
        self.face_coverage = self.grid.face_coverage(self.scene.gt)
        self.done = False
        self.last_obs = self._make_obs(gray, depth, points, pose, lookat)
        logger.debug(
            f"Reset {self.scene.scene_id}: start={start.tolist()}, "
            f"faces={result.newly_seen_faces}, coverage={self.face_coverage:.4f}"
        )
        return self.last_obs

    def reset_record(self, cr: Optional[float] = None) -> StepRecord:
        """Trace record of the reset capture (step 0)."""
        obs = self._require_obs()
        return StepRecord(
            kind="reset",
            step=0,
            position=obs.pose.position.tolist(),
            yaw=obs.pose.yaw,
            pitch=obs.pose.pitch,
            lookat=obs.lookat.tolist(),
            height_cap=self.height_cap_at(0),
            newly_seen_faces=self._reset_integration.newly_seen_faces if self._reset_integration else 0,
            face_coverage=self.face_coverage,
            cr=cr,
        )

    def _sample_start(self, rng: np.random.Generator, cap: float) -> np.ndarray:
        gt = self.scene.gt
        centers_z = self.frame.flat_centers[:, 2]
        allowed = (
            gt.exterior.reshape(-1)
            & (centers_z <= cap)
            & (centers_z >= self.cfg.floor_clearance)
        )
        candidates = np.flatnonzero(allowed)
        if len(candidates) == 0:
            raise UnschedulableViewpointError(
                "No exterior voxel for the start position",
                height_cap=cap,
                floor_clearance=self.cfg.floor_clearance,
            )
        center = self.frame.flat_centers[candidates[rng.integers(len(candidates))]]
        half = self.frame.voxel_size / 2.0
        p = center + rng.uniform(-half, half, size=3)
        p[2] = min(max(p[2], self.cfg.floor_clearance), cap)
        return p

    def _observe(self, pose: Pose) -> Tuple[DepthImage, GrayImage, np.ndarray, IntegrationResult]:
        depth, gray = capture(self.scene.bvh, pose, self.cfg.intrinsics, self.max_range)
        self.grid.carve_free_space(depth, pose, self.cfg.intrinsics)
        points = unproject(depth, pose, self.cfg.intrinsics)
        result = self.grid.integrate_observation(points, pose.position)
        return depth, gray, points, result

    def _make_obs(
        self, gray: GrayImage, depth: DepthImage, points: np.ndarray, pose: Pose, lookat: np.ndarray
    ) -> Observation:
        vector = np.array([*pose.position, pose.pitch, pose.yaw, self.current_height_cap])
        return Observation(
            gray=gray,
            depth=depth,
            points=points,
            vector=vector,
            grid=self.grid.copy(),
            lookat=np.asarray(lookat, dtype=np.float64).copy(),
            pose=pose,
        )

    def _require_obs(self) -> Observation:
        if self.last_obs is None:
            raise EpisodeDoneError("Environment has not been reset")
        return self.last_obs

    def _labels_lookat(self) -> Optional[np.ndarray]:
        try:
            return gt_lookat(self.scene.gt, self.grid.faces)
        except CoverageCompleteError:
            return None

    def step(self, action: Sequence[float], lookat: Sequence[float]) -> StepResult:
        """
        Apply (position action, look-at point), capture from the projected viewpoint and
        score the newly seen faces.

        Raises:
            EpisodeDoneError: If the episode has terminated
            InvalidActionError: If the action or look-at is invalid; the episode is unchanged
        """
        if self.done:
            raise EpisodeDoneError()
        cfg = self.cfg
        step_index = self.step_count
        cap = self.height_cap_at(step_index)
        p, clamped = scale_action(action, cfg)
        try:
            target = np.asarray(lookat, dtype=np.float64).reshape(3)
        except (TypeError, ValueError) as e:
            raise InvalidActionError("Look-at must be three numbers", lookat) from e
        if not np.all(np.isfinite(target)):
            raise InvalidActionError("Look-at must be finite", target.tolist())
        if clamped:
            logger.warning(f"Action {list(action)} clamped to [-1, 1]")

        state = self.grid.state_at(p)
        non_free = state != FREE
        above = bool(p[2] > cap)
        m_col = not (non_free or above)
        diagnostics: Dict[str, Any] = {
            "clamped": clamped,
            "raw_position": p.tolist(),
            "height_cap": cap,
        }

        try:
            a_prime = self.grid.nearest_collision_free(p, cap, cfg.floor_clearance)
        except UnschedulableViewpointError as e:
            return self._fail_step(e, diagnostics)

        try:
            pose = pose_from_lookat(a_prime, target)
        except PoseError as e:
            raise InvalidActionError(str(e), target.tolist()) from e

        depth, gray, points, result = self._observe(pose)
        if cfg.reward_mode == "face":
            gain = result.newly_seen_faces / (self.n_voxels * 6)
        else:
            gain = result.newly_occupied / self.n_voxels
        coverage_reward = gain * cfg.coverage_scale * (1.0 if m_col else 0.0)
        penalize = coverage_reward == 0.0 or above or non_free
        constraint_penalty = -cfg.penalty if penalize else 0.0

        self.face_coverage = self.grid.face_coverage(self.scene.gt)
        self.step_count += 1
        reason = None
        if cfg.terminate_on_target and self.face_coverage >= cfg.face_target:
            reason = "target"
        elif self.step_count >= cfg.max_steps:
            reason = "budget"
        self.done = reason is not None

        diagnostics["newly_occupied"] = result.newly_occupied
        if result.skipped_voxels:
            diagnostics["skipped_voxels"] = result.skipped_voxels
        self.last_obs = self._make_obs(gray, depth, points, pose, target)
        logger.debug(
            f"Step {self.step_count}: faces+{result.newly_seen_faces}, m_col={m_col}, "
            f"coverage={self.face_coverage:.4f}"
        )
        return StepResult(
            obs=self.last_obs,
            reward=coverage_reward + constraint_penalty,
            coverage_reward=coverage_reward,
            constraint_penalty=constraint_penalty,
            m_col=m_col,
            newly_seen_faces=result.newly_seen_faces,
            face_coverage=self.face_coverage,
            terminated=self.done,
            termination_reason=reason,
            a_prime=a_prime,
            gt_lookat=self._labels_lookat(),
            diagnostics=diagnostics,
        )

    def _fail_step(self, error: UnschedulableViewpointError, diagnostics: Dict[str, Any]) -> StepResult:
        logger.warning(f"Step {self.step_count + 1}: {error}; terminating episode")
        self.step_count += 1
        self.done = True
        diagnostics["error"] = error.error_code
        obs = self._require_obs()
        return StepResult(
            obs=obs,
            reward=-self.cfg.penalty,
            coverage_reward=0.0,
            constraint_penalty=-self.cfg.penalty,
            m_col=False,
            newly_seen_faces=0,
            face_coverage=self.face_coverage,
            terminated=True,
            termination_reason="error",
            a_prime=None,
            gt_lookat=self._labels_lookat(),
            diagnostics=diagnostics,
        )

    def labels(self) -> Dict[str, Optional[List[float]]]:
        """Current supervision targets derived from the ground truth."""
        lookat = self._labels_lookat()
        return {"gt_lookat": None if lookat is None else lookat.tolist()}
