"""
Newline-delimited JSON environment server.

Every request is one JSON object per line, ``{"type", "env_id", "payload"}``; every answer is
one line ``{"type", "env_id", "payload"}`` or ``{"type": "error", "env_id", "error": {...}}``.
Arrays travel as base64 of their little-endian bytes; scalars as JSON numbers, which Python
writes with shortest round-trip precision. See docs/protocol.md for the schema.
"""

import base64
import json
import logging
import socketserver
import sys
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, TextIO

import numpy as np
from pydantic import ValidationError

from .env import NBVEnv, Observation, StepResult
from .exceptions import ProtocolError, VoxelNBVError
from .models import PROTOCOL_VERSION, EnvConfig, WireError, WireRequest, WireResponse
from .scene import PreparedScene
from .utils import decode_array, encode_array, validate_env_id
from .voxel_grid import VoxelGrid

logger = logging.getLogger(__name__)

REQUEST_TYPES = ("hello", "reset", "step", "close")


def encode_observation(obs: Observation, include_depth: bool = False) -> Dict[str, Any]:
    """Wire form of an observation: gray bytes, M_t vector, grid snapshot and look-at."""
    payload = {
        "gray": encode_array(obs.gray.to_uint8()),
        "vector": encode_array(obs.vector.astype(np.float64)),
        "grid": base64.b64encode(obs.grid.to_bytes()).decode("ascii"),
        "lookat": encode_array(obs.lookat.astype(np.float64)),
    }
    if include_depth:
        payload["depth"] = encode_array(obs.depth.values.astype(np.float64))
    return payload


@dataclass
class DecodedObservation:
    gray: np.ndarray
    vector: np.ndarray
    grid: VoxelGrid
    lookat: np.ndarray
    depth: Optional[np.ndarray] = None


def decode_observation(payload: Dict[str, Any]) -> DecodedObservation:
    """
    Inverse of :func:`encode_observation`.

    Raises:
        ProtocolError: If a field is missing or malformed
    """
    try:
        grid = VoxelGrid.from_bytes(base64.b64decode(payload["grid"], validate=True))
        return DecodedObservation(
            gray=decode_array(payload["gray"]),
            vector=decode_array(payload["vector"]),
            grid=grid,
            lookat=decode_array(payload["lookat"]),
            depth=decode_array(payload["depth"]) if "depth" in payload else None,
        )
    except (KeyError, TypeError, ValueError, VoxelNBVError) as e:
        raise ProtocolError(f"Malformed observation: {e}") from e


def _labels(a_prime: Optional[np.ndarray], lookat: Optional[np.ndarray]) -> Dict[str, Any]:
    return {
        "a_prime": None if a_prime is None else [float(x) for x in a_prime],
        "gt_lookat": None if lookat is None else [float(x) for x in lookat],
    }


def encode_step(result: StepResult, include_depth: bool = False) -> Dict[str, Any]:
    return {
        "observation": encode_observation(result.obs, include_depth),
        "reward": result.reward,
        "coverage_reward": result.coverage_reward,
        "constraint_penalty": result.constraint_penalty,
        "m_col": result.m_col,
        "newly_seen_faces": result.newly_seen_faces,
        "face_coverage": result.face_coverage,
        "terminated": result.terminated,
        "termination_reason": result.termination_reason,
        "labels": _labels(result.a_prime, result.gt_lookat),
    }


@dataclass
class _Session:
    env: NBVEnv
    scene_id: str
    lock: threading.Lock = field(default_factory=threading.Lock)


class EnvServer:
    """
    Dispatches wire requests to one NBVEnv per env_id.

    Requests for the same env_id run under that session's lock; distinct env_ids proceed in
    parallel.

    Args:
        scenes: Prepared scenes by scene_id
        cfg: Environment configuration shared by every session
        default_scene: scene_id used when a reset names none (default: first)
    """

    def __init__(
        self,
        scenes: Dict[str, PreparedScene],
        cfg: Optional[EnvConfig] = None,
        default_scene: Optional[str] = None,
    ):
        if not scenes:
            raise ValueError("EnvServer needs at least one scene")
        self.scenes = scenes
        self.cfg = cfg or EnvConfig()
        self.default_scene = default_scene or next(iter(scenes))
        if self.default_scene not in scenes:
            raise ValueError(f"Unknown default scene: {self.default_scene}")
        self._sessions: Dict[str, _Session] = {}
        self._sessions_lock = threading.Lock()

    def hello(self) -> Dict[str, Any]:
        return {
            "version": PROTOCOL_VERSION,
            "g": self.cfg.g,
            "h": self.cfg.intrinsics.height,
            "w": self.cfg.intrinsics.width,
            "max_steps": self.cfg.max_steps,
            "scenes": sorted(self.scenes),
        }

    def _session(self, env_id: str, scene_id: Optional[str] = None) -> _Session:
        with self._sessions_lock:
            session = self._sessions.get(env_id)
            if scene_id is None:
                if session is None:
                    raise ProtocolError(f"No environment {env_id!r}; send reset first", "NO_SUCH_ENV")
                return session
            if scene_id not in self.scenes:
                raise ProtocolError(f"Unknown scene {scene_id!r}", "BAD_REQUEST")
            if session is None or session.scene_id != scene_id:
                session = _Session(NBVEnv(self.scenes[scene_id], self.cfg), scene_id)
                self._sessions[env_id] = session
            return session

    def _reset(self, env_id: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        seed = payload.get("seed")
        if seed is not None and not isinstance(seed, int):
            raise ProtocolError("seed must be an integer")
        session = self._session(env_id, payload.get("scene_id", self.default_scene))
        with session.lock:
            obs = session.env.reset(seed=seed)
            return {
                "observation": encode_observation(obs, bool(payload.get("depth", False))),
                "face_coverage": session.env.face_coverage,
                "labels": {"a_prime": None, **session.env.labels()},
            }

    def _step(self, env_id: str, payload: Dict[str, Any]) -> Dict[str, Any]:
        if "action" not in payload or "lookat" not in payload:
            raise ProtocolError("step needs 'action' and 'lookat'")
        session = self._session(env_id)
        with session.lock:
            result = session.env.step(payload["action"], payload["lookat"])
            return encode_step(result, bool(payload.get("depth", False)))

    def _close(self, env_id: str) -> Dict[str, Any]:
        with self._sessions_lock:
            closed = self._sessions.pop(env_id, None) is not None
        return {"closed": closed}

    def handle(self, request: WireRequest) -> WireResponse:
        """Answer one parsed request; errors become error responses."""
        try:
            if not validate_env_id(request.env_id):
                raise ProtocolError(f"Invalid env_id {request.env_id!r}")
            if request.type not in REQUEST_TYPES:
                raise ProtocolError(f"Unknown request type {request.type!r}", "UNKNOWN_TYPE")
            if request.type == "hello":
                payload = self.hello()
            elif request.type == "reset":
                payload = self._reset(request.env_id, request.payload)
            elif request.type == "step":
                payload = self._step(request.env_id, request.payload)
            else:
                payload = self._close(request.env_id)
        except VoxelNBVError as e:
            logger.debug(f"{request.type} on {request.env_id} failed: {e}")
            return _error(request.env_id, e.error_code or "BAD_REQUEST", e.message)
        except Exception as e:
            logger.exception(f"Unhandled error serving {request.type} on {request.env_id}")
            return _error(request.env_id, "INTERNAL", str(e))
        return WireResponse(type=request.type, env_id=request.env_id, payload=payload)

    def handle_line(self, line: str) -> str:
        """Parse one request line and return the response line (without newline)."""
        try:
            data = json.loads(line)
            if not isinstance(data, dict):
                raise ProtocolError("Request must be a JSON object")
            request = WireRequest.model_validate(data)
        except json.JSONDecodeError as e:
            response = _error(None, "BAD_REQUEST", f"Invalid JSON: {e}")
        except ValidationError as e:
            response = _error(None, "BAD_REQUEST", f"Invalid request: {e.errors()[0]['msg']}")
        except ProtocolError as e:
            response = _error(None, e.error_code or "BAD_REQUEST", e.message)
        else:
            response = self.handle(request)
        return json.dumps(response.model_dump(exclude_none=True))


def _error(env_id: Optional[str], code: str, message: str) -> WireResponse:
    return WireResponse(type="error", env_id=env_id, error=WireError(code=code, message=message))


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        env_server: EnvServer = self.server.env_server  # type: ignore[attr-defined]
        peer = f"{self.client_address[0]}:{self.client_address[1]}"
        logger.info(f"Client connected: {peer}")
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            self.wfile.write((env_server.handle_line(line) + "\n").encode("utf-8"))
            self.wfile.flush()
        logger.info(f"Client disconnected: {peer}")


class EnvTCPServer(socketserver.ThreadingTCPServer):
    """One thread per connection; each connection is answered strictly in order."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple, env_server: EnvServer):
        super().__init__(address, _LineHandler)
        self.env_server = env_server

    @property
    def port(self) -> int:
        return int(self.server_address[1])


def serve_tcp(env_server: EnvServer, host: str, port: int) -> None:
    """Serve until interrupted."""
    with EnvTCPServer((host, port), env_server) as server:
        logger.info(f"Serving {len(env_server.scenes)} scene(s) on {host}:{server.port}")
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            logger.info("Shutting down")


def serve_stdio(env_server: EnvServer, stdin: TextIO = sys.stdin, stdout: TextIO = sys.stdout) -> int:
    """Answer request lines from ``stdin`` until EOF; returns the number of requests served."""
    served = 0
    for raw in stdin:
        line = raw.strip()
        if not line:
            continue
        stdout.write(env_server.handle_line(line) + "\n")
        stdout.flush()
        served += 1
    return served
