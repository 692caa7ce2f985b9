"""
Unit tests for configuration, wire and record models.
"""

import math

import pytest
from pydantic import ValidationError

from voxel_nbv.models import (
    OBJECT_CENTERS,
    BenchConfigFile,
    BenchSpec,
    EnvConfig,
    Intrinsics,
    PlanResponse,
    SceneConfig,
    StepRecord,
    WireRequest,
    WireResponse,
)


class TestIntrinsics:
    """Test camera intrinsics."""

    def test_defaults(self):
        """Test the default 300x300, 60 degree camera."""
        intr = Intrinsics()
        assert (intr.width, intr.height) == (300, 300)
        assert intr.vertical_fov == pytest.approx(math.radians(60.0))

    def test_focal_length(self):
        """Test the focal length follows from the vertical field of view."""
        intr = Intrinsics(width=300, height=300)
        assert intr.focal_px == pytest.approx(150.0 / math.tan(math.radians(30.0)))

    def test_scaled_keeps_fov(self):
        """Test scaling keeps the field of view."""
        intr = Intrinsics(vertical_fov=1.0).scaled(32, 16)
        assert (intr.width, intr.height, intr.vertical_fov) == (32, 16, 1.0)

    @pytest.mark.parametrize("fov", [0.0, math.pi, -0.5])
    def test_invalid_fov(self, fov):
        """Test out-of-range field of view is rejected."""
        with pytest.raises(ValidationError):
            Intrinsics(vertical_fov=fov)

    def test_frozen(self):
        """Test intrinsics are immutable and hashable."""
        intr = Intrinsics()
        with pytest.raises(ValidationError):
            intr.width = 10
        assert hash(intr) == hash(Intrinsics())


class TestSceneConfig:
    """Test scene placement configuration."""

    def test_defaults(self):
        """Test default placement."""
        cfg = SceneConfig()
        assert cfg.target_extent == 8.0
        assert cfg.object_center == (0.0, 0.0)
        assert cfg.center_index == 0

    @pytest.mark.parametrize("idx", range(len(OBJECT_CENTERS)))
    def test_all_centers_fit(self, idx):
        """Test the five object centers are accepted."""
        assert SceneConfig(object_center=OBJECT_CENTERS[idx]).center_index == idx

    def test_unknown_center(self):
        """Test an offset outside the five placements is rejected."""
        with pytest.raises(ValidationError):
            SceneConfig(object_center=(1.0, 2.0))

    def test_extent_must_fit(self):
        """Test an object larger than the scene is rejected."""
        with pytest.raises(ValidationError):
            SceneConfig(target_extent=20.0)

    def test_corner_center_needs_room(self):
        """Test a corner placement of a too-large object is rejected."""
        with pytest.raises(ValidationError):
            SceneConfig(target_extent=14.0, object_center=(4.0, 4.0))


class TestEnvConfig:
    """Test environment configuration."""

    def test_defaults(self):
        """Test the published constants."""
        cfg = EnvConfig()
        assert cfg.g == 20
        assert cfg.voxel_size == 1.0
        assert cfg.grid_origin == (-10.0, -10.0, 0.0)
        assert cfg.max_steps == 50
        assert cfg.coverage_scale == 0.3
        assert cfg.penalty == 0.01
        assert cfg.face_target == 0.9
        assert cfg.height_schedule == [(0, 10.0), (40, 5.0), (45, 2.0)]

    def test_effective_values(self):
        """Test derived range and threshold defaults."""
        cfg = EnvConfig()
        assert cfg.effective_max_range == pytest.approx(20.0 * math.sqrt(3.0))
        assert cfg.effective_tau == 1.0
        assert EnvConfig(tau=0.5, max_range=12.0).effective_tau == 0.5
        assert EnvConfig(max_range=12.0).effective_max_range == 12.0

    @pytest.mark.parametrize(
        "schedule",
        [
            [],
            [(1, 10.0)],
            [(0, 10.0), (0, 5.0)],
            [(0, 5.0), (10, 8.0)],
            [(0, 0.0)],
        ],
    )
    def test_invalid_schedule(self, schedule):
        """Test malformed height schedules are rejected."""
        with pytest.raises(ValidationError):
            EnvConfig(height_schedule=schedule)

    @pytest.mark.parametrize("target", [0.0, 1.5])
    def test_invalid_face_target(self, target):
        """Test face targets outside (0, 1] are rejected."""
        with pytest.raises(ValidationError):
            EnvConfig(face_target=target)


class TestBenchSpec:
    """Test benchmark run settings."""

    def test_minimal(self):
        """Test defaults of a minimal spec."""
        spec = BenchSpec(scenes=["caches"], planners=["random"], output_dir="out")
        assert spec.object_centers == [0, 1, 2, 3, 4]
        assert spec.views_budget == 30
        assert spec.seeds == [0]

    def test_centers_sorted_unique(self):
        """Test center indices are deduplicated and sorted."""
        spec = BenchSpec(scenes=["a"], planners=["random"], output_dir="o", object_centers=[3, 1, 3])
        assert spec.object_centers == [1, 3]

    def test_center_out_of_range(self):
        """Test an unknown center index is rejected."""
        with pytest.raises(ValidationError):
            BenchSpec(scenes=["a"], planners=["random"], output_dir="o", object_centers=[5])

    def test_empty_planners(self):
        """Test an empty planner list is rejected."""
        with pytest.raises(ValidationError):
            BenchSpec(scenes=["a"], planners=[], output_dir="o")

    def test_budget_within_step_limit(self):
        """Test the view budget cannot exceed the episode step limit."""
        with pytest.raises(ValidationError):
            BenchSpec(
                scenes=["a"],
                planners=["random"],
                output_dir="o",
                views_budget=60,
            )

    def test_config_file_rejects_unknown_keys(self):
        """Test the config file accepts only its documented keys."""
        with pytest.raises(ValidationError):
            BenchConfigFile.model_validate({"envv": {}})
        cfg = BenchConfigFile.model_validate({"env": {"max_steps": 40}, "bench": {"seeds": [1]}})
        assert cfg.env.max_steps == 40


class TestWireModels:
    """Test wire protocol models."""

    def test_request_defaults(self):
        """Test request defaults."""
        request = WireRequest(type="hello")
        assert request.env_id == "default"
        assert request.payload == {}

    def test_request_blank_env_id(self):
        """Test a blank env_id is rejected."""
        with pytest.raises(ValidationError):
            WireRequest(type="reset", env_id="  ")

    def test_response_excludes_unset(self):
        """Test error responses serialize without a payload."""
        response = WireResponse(type="error", env_id="a", error={"code": "X", "message": "m"})
        dumped = response.model_dump(exclude_none=True)
        assert "payload" not in dumped
        assert dumped["error"] == {"code": "X", "message": "m"}

    def test_plan_response(self):
        """Test plan responses need finite triples."""
        plan = PlanResponse(action=[0.0, 1.0, -1.0], lookat=[0.0, 0.0, 4.0])
        assert plan.lookat[2] == 4.0
        with pytest.raises(ValidationError):
            PlanResponse(action=[0.0, 1.0], lookat=[0.0, 0.0, 4.0])
        with pytest.raises(ValidationError):
            PlanResponse(action=[0.0, float("inf"), 0.0], lookat=[0.0, 0.0, 4.0])


class TestRecords:
    """Test result records."""

    def test_step_record_defaults(self):
        """Test step record defaults."""
        rec = StepRecord(step=3, position=[0, 0, 1], yaw=0.0, pitch=0.0, lookat=[0, 0, 4], height_cap=10.0)
        assert rec.kind == "step"
        assert rec.m_col is True
        assert rec.termination_reason is None

    def test_step_record_rejects_unknown_reason(self):
        """Test termination reasons are restricted."""
        with pytest.raises(ValidationError):
            StepRecord(
                step=1,
                position=[0, 0, 1],
                yaw=0.0,
                pitch=0.0,
                lookat=[0, 0, 4],
                height_cap=10.0,
                termination_reason="crash",
            )
