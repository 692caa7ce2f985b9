"""
Integration tests replaying recorded episodes over the TCP protocol.
"""

import threading

import numpy as np
import pytest

from voxel_nbv.client import EnvClient
from voxel_nbv.env import NBVEnv
from voxel_nbv.planners import PlannerContext, RandomPlanner
from voxel_nbv.protocol import EnvServer, EnvTCPServer, decode_observation

pytestmark = pytest.mark.integration


def record_episode(scene, cfg, seed, steps):
    """In-process random episode; returns (actions, rewards, coverages, final grid bytes)."""
    env = NBVEnv(scene, cfg)
    env.reset(seed=seed)
    rng = np.random.default_rng(seed)
    planner = RandomPlanner()
    actions, rewards, coverages = [], [], []
    for _ in range(steps):
        decision = planner.plan(PlannerContext.from_env(env, rng))
        result = env.step(decision.action, decision.lookat)
        actions.append((decision.action.tolist(), decision.lookat.tolist()))
        rewards.append(result.reward)
        coverages.append(result.face_coverage)
        if result.terminated:
            break
    return actions, rewards, coverages, env.grid.to_bytes()


@pytest.fixture
def tcp_server(cube_scene, env_config):
    """TCP environment server on an ephemeral port."""
    cfg = env_config.model_copy(update={"terminate_on_target": False})
    server = EnvTCPServer(("127.0.0.1", 0), EnvServer({"cube": cube_scene}, cfg))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    server.server_close()


class TestProtocolReplay:
    """Test wire replay reproduces in-process episodes exactly."""

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_replay_matches_in_process(self, tcp_server, cube_scene, env_config, seed):
        """Test rewards, coverage and the final belief are identical over the wire."""
        cfg = env_config.model_copy(update={"terminate_on_target": False})
        actions, rewards, coverages, grid = record_episode(cube_scene, cfg, seed, 30)

        with EnvClient(port=tcp_server.port, env_id=f"replay-{seed}") as client:
            client.reset(seed=seed)
            wire_rewards, wire_coverages = [], []
            payload = None
            for action, lookat in actions:
                payload = client.step(action, lookat)
                wire_rewards.append(payload["reward"])
                wire_coverages.append(payload["face_coverage"])

        assert wire_rewards == rewards
        assert wire_coverages == coverages
        assert decode_observation(payload["observation"]).grid.to_bytes() == grid

    def test_parallel_sessions(self, tcp_server):
        """Test two clients on distinct env_ids proceed independently."""
        results = {}

        def drive(env_id, seed):
            with EnvClient(port=tcp_server.port, env_id=env_id) as client:
                client.reset(seed=seed)
                results[env_id] = client.step([0.0, -0.8, -0.5], [0.0, 0.0, 4.0])["reward"]

        threads = [threading.Thread(target=drive, args=(f"w{i}", i)) for i in range(2)]
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout=120)
        assert set(results) == {"w0", "w1"}
