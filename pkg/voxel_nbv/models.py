"""
Pydantic models for configuration, wire messages and result records.
"""

import math
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Ground offsets (meters) of the five object-center placements.
OBJECT_CENTERS: Tuple[Tuple[float, float], ...] = (
    (0.0, 0.0),
    (4.0, 4.0),
    (4.0, -4.0),
    (-4.0, 4.0),
    (-4.0, -4.0),
)

PROTOCOL_VERSION = 1


# Camera / scene / environment configuration
class Intrinsics(BaseModel):
    """Pinhole intrinsics; principal point at the image center, square pixels."""

    model_config = ConfigDict(frozen=True)

    width: int = Field(default=300, description="Image width in pixels", ge=1)
    height: int = Field(default=300, description="Image height in pixels", ge=1)
    vertical_fov: float = Field(
        default=math.radians(60.0), description="Vertical field of view (radians)"
    )

    @field_validator("vertical_fov")
    @classmethod
    def validate_fov(cls, v: float) -> float:
        if not (0.0 < v < math.pi):
            raise ValueError("vertical_fov must lie in (0, pi)")
        return v

    @property
    def focal_px(self) -> float:
        """Focal length in pixels derived from the vertical field of view."""
        return (self.height / 2.0) / math.tan(self.vertical_fov / 2.0)

    def scaled(self, width: int, height: int) -> "Intrinsics":
        return Intrinsics(width=width, height=height, vertical_fov=self.vertical_fov)


class SceneConfig(BaseModel):
    """Object normalization and placement inside the cubic scene volume."""

    target_extent: float = Field(default=8.0, description="Longest AABB edge (m)", gt=0)
    scene_size: float = Field(default=20.0, description="Scene cube edge (m)", gt=0)
    object_center: Tuple[float, float] = Field(
        default=(0.0, 0.0), description="Ground-plane offset of the object AABB center (m)"
    )
    ground_height: float = Field(default=0.0, description="Height of the AABB base (m)", ge=0)
    ground_occludes: bool = Field(
        default=False, description="Treat the grid floor as ground that hides -z faces"
    )
    surface_samples: int = Field(
        default=100_000, description="Surface points sampled for the GT cloud", ge=1
    )
    sample_seed: int = Field(default=0, description="Seed for surface sampling")

    @field_validator("object_center")
    @classmethod
    def validate_object_center(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        center = (float(v[0]), float(v[1]))
        if center not in OBJECT_CENTERS:
            raise ValueError(f"object_center must be one of {OBJECT_CENTERS}")
        return center

    @model_validator(mode="after")
    def validate_fits(self) -> "SceneConfig":
        if self.target_extent >= self.scene_size:
            raise ValueError("target_extent must be smaller than scene_size")
        half = self.scene_size / 2.0
        for c in self.object_center:
            if abs(c) + self.target_extent / 2.0 > half:
                raise ValueError("object does not fit inside the scene at this offset")
        if self.ground_height + self.target_extent > self.scene_size:
            raise ValueError("object top exceeds the scene height")
        return self

    @property
    def center_index(self) -> int:
        return OBJECT_CENTERS.index(self.object_center)


class EnvConfig(BaseModel):
    """Environment constants; defaults follow the published test protocol."""

    g: int = Field(default=20, description="Grid resolution per axis", ge=1)
    intrinsics: Intrinsics = Field(default_factory=Intrinsics, description="Camera intrinsics")
    scene_size: float = Field(default=20.0, description="Scene cube edge (m)", gt=0)
    max_steps: int = Field(default=50, description="Episode step limit", ge=1)
    face_target: float = Field(default=0.9, description="Face coverage that ends an episode")
    coverage_scale: float = Field(default=0.3, description="Positive reward scale", ge=0)
    penalty: float = Field(default=0.01, description="Constraint penalty magnitude", ge=0)
    gamma_doc: float = Field(
        default=0.1, description="Discount factor for external trainers (unused here)"
    )
    height_schedule: List[Tuple[int, float]] = Field(
        default_factory=lambda: [(0, 10.0), (40, 5.0), (45, 2.0)],
        description="Piecewise-constant height cap as (from_step, cap_meters)",
    )
    height_mode: Literal["schedule", "random"] = Field(
        default="schedule", description="Fixed test schedule or randomized training cap"
    )
    max_height: float = Field(default=10.0, description="Upper cap for random height mode", gt=0)
    floor_clearance: float = Field(default=0.0, description="Minimum camera height (m)", ge=0)
    seed: int = Field(default=0, description="Default episode seed")
    max_range: Optional[float] = Field(default=None, description="Depth range; None = diagonal")
    reward_mode: Literal["face", "point"] = Field(
        default="face", description="Reward newly seen faces or newly occupied voxels"
    )
    terminate_on_target: bool = Field(
        default=True, description="End the episode when face_target is reached"
    )
    tau: Optional[float] = Field(default=None, description="CR threshold; None = voxel size")

    @field_validator("face_target")
    @classmethod
    def validate_face_target(cls, v: float) -> float:
        if not (0.0 < v <= 1.0):
            raise ValueError("face_target must lie in (0, 1]")
        return v

    @field_validator("height_schedule")
    @classmethod
    def validate_schedule(cls, v: List[Tuple[int, float]]) -> List[Tuple[int, float]]:
        if not v:
            raise ValueError("height_schedule cannot be empty")
        if v[0][0] != 0:
            raise ValueError("height_schedule must start at step 0")
        for (s0, c0), (s1, c1) in zip(v, v[1:]):
            if s1 <= s0:
                raise ValueError("height_schedule steps must be strictly increasing")
            if c1 > c0:
                raise ValueError("height_schedule caps must be non-increasing")
        if any(cap <= 0 for _, cap in v):
            raise ValueError("height caps must be positive")
        return v

    @property
    def voxel_size(self) -> float:
        return self.scene_size / self.g

    @property
    def grid_origin(self) -> Tuple[float, float, float]:
        half = self.scene_size / 2.0
        return (-half, -half, 0.0)

    @property
    def effective_max_range(self) -> float:
        if self.max_range is not None:
            return self.max_range
        return self.scene_size * math.sqrt(3.0)

    @property
    def effective_tau(self) -> float:
        return self.tau if self.tau is not None else self.voxel_size


class BenchSpec(BaseModel):
    """One benchmark run: planners x scenes x object centers x seeds."""

    scenes: List[str] = Field(..., description="Mesh paths or prepped-cache directories")
    planners: List[str] = Field(..., description="Planner names")
    object_centers: List[int] = Field(
        default_factory=lambda: list(range(len(OBJECT_CENTERS))),
        description="Indices into OBJECT_CENTERS",
    )
    views_budget: int = Field(default=30, description="Views per episode", ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0], description="Episode seeds")
    output_dir: str = Field(..., description="Directory receiving result files")
    workers: int = Field(default=1, description="Parallel episode workers", ge=1)
    debug_candidates: bool = Field(default=False, description="Dump greedy candidate scores")
    env: EnvConfig = Field(default_factory=EnvConfig, description="Environment configuration")
    scene: SceneConfig = Field(default_factory=SceneConfig, description="Placement for raw meshes")

    @field_validator("scenes", "planners", "seeds")
    @classmethod
    def validate_non_empty(cls, v: List[Any]) -> List[Any]:
        if not v:
            raise ValueError("list cannot be empty")
        return v

    @field_validator("object_centers")
    @classmethod
    def validate_centers(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("object_centers cannot be empty")
        for idx in v:
            if not 0 <= idx < len(OBJECT_CENTERS):
                raise ValueError(f"object center index {idx} out of range")
        return sorted(set(v))

    @model_validator(mode="after")
    def validate_budget(self) -> "BenchSpec":
        if self.views_budget > self.env.max_steps:
            raise ValueError("views_budget cannot exceed env.max_steps")
        return self


class BenchConfigFile(BaseModel):
    """Documented key set of the JSON config file accepted by the CLI."""

    model_config = ConfigDict(extra="forbid")

    env: EnvConfig = Field(default_factory=EnvConfig)
    scene: SceneConfig = Field(default_factory=SceneConfig)
    bench: Dict[str, Any] = Field(default_factory=dict, description="BenchSpec field overrides")


# Wire messages
class WireRequest(BaseModel):
    """One request line of the environment protocol."""

    model_config = ConfigDict(extra="ignore")

    type: str = Field(..., description="hello | reset | step | close")
    env_id: str = Field(default="default", description="Environment instance key")
    payload: Dict[str, Any] = Field(default_factory=dict, description="Request arguments")

    @field_validator("env_id")
    @classmethod
    def validate_env_id(cls, v: str) -> str:
        if not v or not v.strip():
            raise ValueError("env_id cannot be empty")
        return v


class WireError(BaseModel):
    code: str = Field(..., description="Stable error code")
    message: str = Field(..., description="Human readable message")


class WireResponse(BaseModel):
    """One response line of the environment protocol."""

    model_config = ConfigDict(extra="ignore")

    type: str = Field(..., description="Echo of the request type, or 'error'")
    env_id: Optional[str] = Field(None, description="Environment instance key")
    payload: Optional[Dict[str, Any]] = Field(None, description="Result data")
    error: Optional[WireError] = Field(None, description="Set when the request failed")


class PlanResponse(BaseModel):
    """Answer of an extern policy service."""

    model_config = ConfigDict(extra="ignore")

    action: List[float] = Field(..., description="Position action in [-1, 1]^3")
    lookat: List[float] = Field(..., description="World look-at point")

    @field_validator("action", "lookat")
    @classmethod
    def validate_triple(cls, v: List[float]) -> List[float]:
        if len(v) != 3 or not all(math.isfinite(x) for x in v):
            raise ValueError("expected three finite numbers")
        return v


# Records
class TraceHeader(BaseModel):
    kind: Literal["header"] = "header"
    scene_id: str
    cache_path: str
    planner: str
    seed: int
    object_center: Tuple[float, float]
    env: EnvConfig


class StepRecord(BaseModel):
    """One line of an episode trace; step 0 is the reset capture."""

    kind: Literal["reset", "step"] = "step"
    step: int = Field(..., ge=0)
    position: List[float]
    yaw: float
    pitch: float
    lookat: List[float]
    height_cap: float
    reward: float = 0.0
    coverage_reward: float = 0.0
    constraint_penalty: float = 0.0
    m_col: bool = True
    newly_seen_faces: int = 0
    face_coverage: float = 0.0
    terminated: bool = False
    termination_reason: Optional[Literal["budget", "target", "error"]] = None
    cr: Optional[float] = None


class MetricRow(BaseModel):
    scene_id: str
    planner: str
    object_center: str
    seed: int
    step: int
    CR: float
    CD_cm: float
    AUC: float
    face_coverage: float
    tau: float
    fov: float
    g: int


class EpisodeSummary(BaseModel):
    scene_id: str
    planner: str
    object_center: str
    seed: int
    views: int
    CR: Optional[float] = None
    CD_cm: Optional[float] = None
    AUC: Optional[float] = None
    face_coverage: Optional[float] = None
    tau: float
    fov: float
    g: int
    status: Literal["ok", "error"] = "ok"
    error: Optional[str] = None


class SummaryRow(BaseModel):
    scene_id: str
    planner: str
    centers: int
    episodes: int
    CR: float
    CD_cm: float
    AUC: float
    tau: float
    fov: float
    g: int


class TimingRow(BaseModel):
    scene_id: str
    planner: str
    object_center: str
    seed: int
    steps: int
    seconds: float
    fps: float


class CurvePoint(BaseModel):
    """One exported coverage-curve row."""

    step: int
    CR: Optional[float]
    face_coverage: float


class TheoryRow(BaseModel):
    k: int
    closed_form: Optional[float]
    empirical_mean: float
    empirical_std: float
    fixed_budget_mean: float
    fixed_budget_std: float
    trials: int
    expected_rays: float
    scenario1_mean_rays: float
    scenario2_mean_rays: float


class PrepEntry(BaseModel):
    scene_id: str
    source: str
    object_center: Optional[int] = None
    cache_file: Optional[str] = None
    occupied_voxels: int = 0
    visible_faces: int = 0
    surface_points: int = 0
    status: Literal["ok", "error"] = "ok"
    error: Optional[str] = None


class PrepManifest(BaseModel):
    voxelization: str = "conservative"
    g: int
    scene_size: float
    entries: List[PrepEntry] = Field(default_factory=list)
