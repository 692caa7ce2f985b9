"""
Custom exceptions for the voxel-nbv engine.
"""

from typing import Any, Dict, Optional


class VoxelNBVError(Exception):
    """Base exception for all voxel-nbv errors."""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.details = details

    def __str__(self) -> str:
        return self.message


class MeshLoadError(VoxelNBVError):
    """Raised when a mesh file cannot be parsed into a valid triangle mesh."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(
            message,
            "MESH_LOAD_ERROR",
            {"path": path} if path else None,
        )
        self.path = path


class DegenerateSceneError(VoxelNBVError):
    """Raised when geometry has no usable extent, area or visible surface."""

    def __init__(self, message: str):
        super().__init__(message, "DEGENERATE_SCENE")


class PlacementError(VoxelNBVError):
    """Raised when a placed mesh does not fit inside the grid volume."""

    def __init__(self, message: str, bounds: Optional[tuple] = None):
        super().__init__(
            message,
            "PLACEMENT_ERROR",
            {"bounds": bounds} if bounds is not None else None,
        )
        self.bounds = bounds


class CacheFormatError(VoxelNBVError):
    """Raised when a grid snapshot or ground-truth cache cannot be decoded."""

    def __init__(self, message: str):
        super().__init__(message, "CACHE_FORMAT_ERROR")


class UnschedulableViewpointError(VoxelNBVError):
    """Raised when no free voxel satisfies the height constraints."""

    def __init__(
        self,
        message: str = "No collision-free voxel satisfies the height constraints",
        height_cap: Optional[float] = None,
        floor_clearance: Optional[float] = None,
    ):
        details = None
        if height_cap is not None:
            details = {"height_cap": height_cap, "floor_clearance": floor_clearance}
        super().__init__(message, "UNSCHEDULABLE_VIEWPOINT", details)
        self.height_cap = height_cap
        self.floor_clearance = floor_clearance


class PoseError(VoxelNBVError):
    """Raised when a camera pose cannot be constructed."""

    def __init__(self, message: str):
        super().__init__(message, "POSE_ERROR")


class InvalidActionError(VoxelNBVError):
    """Raised for non-finite or malformed actions."""

    def __init__(self, message: str, action: Any = None):
        super().__init__(
            message,
            "INVALID_ACTION",
            {"action": action} if action is not None else None,
        )
        self.action = action


class EpisodeDoneError(VoxelNBVError):
    """Raised when stepping an environment whose episode has terminated."""

    def __init__(self, message: str = "Episode already terminated; call reset()"):
        super().__init__(message, "EPISODE_DONE")


class CoverageCompleteError(VoxelNBVError):
    """Raised when every ground-truth face has been seen and no look-at target remains."""

    def __init__(self, message: str = "All ground-truth faces have been observed"):
        super().__init__(message, "COVERAGE_COMPLETE")


class MetricError(VoxelNBVError):
    """Raised when metric preconditions are violated."""

    def __init__(self, message: str):
        super().__init__(message, "METRIC_ERROR")


class PlannerError(VoxelNBVError):
    """Raised when a planner cannot produce a decision."""

    def __init__(self, message: str, planner: Optional[str] = None):
        super().__init__(
            message,
            "PLANNER_ERROR",
            {"planner": planner} if planner else None,
        )
        self.planner = planner


class ProtocolError(VoxelNBVError):
    """Raised for malformed or rejected wire messages."""

    def __init__(self, message: str, error_code: str = "BAD_REQUEST"):
        super().__init__(message, error_code)


class EnvConnectionError(VoxelNBVError):
    """Raised when a remote environment or policy service cannot be reached."""

    def __init__(self, message: str = "Failed to connect to remote service"):
        super().__init__(message, "CONNECTION_ERROR")


class EnvTimeoutError(VoxelNBVError):
    """Raised when a remote environment or policy service does not answer in time."""

    def __init__(self, message: str = "Remote service timed out"):
        super().__init__(message, "TIMEOUT")


class ConfigError(VoxelNBVError):
    """Raised for invalid benchmark or CLI configuration."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, "INVALID_CONFIG", details)
