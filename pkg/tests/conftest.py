"""
Pytest configuration and fixtures for voxel-nbv tests.
"""

from unittest.mock import Mock

import numpy as np
import pytest

from voxel_nbv.env import NBVEnv
from voxel_nbv.meshes import cube, write_obj
from voxel_nbv.models import EnvConfig, Intrinsics, SceneConfig
from voxel_nbv.scene import prepare_scene, save_scene
from voxel_nbv.voxel_grid import GridFrame, VoxelGrid


@pytest.fixture(scope="session")
def env_config():
    """Default environment constants with a small camera for fast tests."""
    return EnvConfig(intrinsics=Intrinsics(width=64, height=64))


@pytest.fixture(scope="session")
def frame(env_config):
    """The 20^3 scene grid."""
    return GridFrame.from_config(env_config)


@pytest.fixture(scope="session")
def scene_config():
    """Centered placement with a reduced ground-truth cloud."""
    return SceneConfig(surface_samples=4000)


@pytest.fixture(scope="session")
def cube_scene(frame, scene_config):
    """An 8 m cube resting on the ground at the scene center."""
    return prepare_scene(cube(), "cube", frame, scene_config, source="cube.obj")


@pytest.fixture
def env(cube_scene, env_config):
    """Fresh environment over the cube scene."""
    return NBVEnv(cube_scene, env_config)


@pytest.fixture
def empty_grid(frame):
    """All-unknown 20^3 belief."""
    return VoxelGrid(frame)


@pytest.fixture
def small_frame():
    """A 4^3 unit grid at the origin."""
    return GridFrame(4, (0.0, 0.0, 0.0), 1.0)


@pytest.fixture
def rng():
    """Seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def mesh_dir(tmp_path):
    """Directory holding cube.obj."""
    path = tmp_path / "meshes"
    path.mkdir()
    write_obj(cube(), path / "cube.obj")
    return path


@pytest.fixture
def cube_cache(tmp_path, cube_scene):
    """Ground-truth cache file of the cube scene."""
    path = tmp_path / "cube_c0.vnbv"
    save_scene(cube_scene, path)
    return path


@pytest.fixture
def mock_httpx_client():
    """Mock httpx client for unit tests."""
    mock_client = Mock()
    mock_response = Mock()
    mock_response.status_code = 200
    mock_response.json.return_value = {"action": [0.0, 0.5, -0.5], "lookat": [0.0, 0.0, 4.0]}
    mock_response.text = ""
    mock_client.request.return_value = mock_response
    mock_client.__enter__ = Mock(return_value=mock_client)
    mock_client.__exit__ = Mock(return_value=None)
    return mock_client
