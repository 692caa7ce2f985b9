"""
voxel-nbv

Voxel next-best-view coverage simulation: a face-visibility voxel belief, a depth-camera
environment with collision-free action projection and height-capped viewpoints, reference
planners, reconstruction metrics and a coupon-collector coverage model.
"""

__version__ = "0.1.0"

from .camera import DepthImage, GrayImage, Pose, capture, pose_from_lookat, unproject
from .env import NBVEnv, Observation, StepResult, height_cap, scale_action
from .exceptions import VoxelNBVError
from .metrics import IncrementalCoverage, auc, chamfer_distance, coverage_ratio
from .models import BenchSpec, EnvConfig, Intrinsics, SceneConfig
from .planners import PlannerContext, PlannerDecision, make_planner
from .scene import PreparedScene, load_mesh, load_scene, prepare_scene, save_scene
from .voxel_grid import FaceMask, GridFrame, VoxelGrid

__all__ = [
    "__version__",
    "VoxelNBVError",
    # Configuration
    "EnvConfig",
    "SceneConfig",
    "Intrinsics",
    "BenchSpec",
    # Core
    "VoxelGrid",
    "GridFrame",
    "FaceMask",
    "Pose",
    "DepthImage",
    "GrayImage",
    "capture",
    "pose_from_lookat",
    "unproject",
    "PreparedScene",
    "load_mesh",
    "prepare_scene",
    "save_scene",
    "load_scene",
    "NBVEnv",
    "Observation",
    "StepResult",
    "scale_action",
    "height_cap",
    # Planning and evaluation
    "PlannerContext",
    "PlannerDecision",
    "make_planner",
    "IncrementalCoverage",
    "coverage_ratio",
    "chamfer_distance",
    "auc",
]
