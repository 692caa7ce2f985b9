"""
Clients for remote services: the NDJSON environment server and HTTP policy services.
"""

import json
import logging
import socket
from typing import Any, Dict, Optional, Sequence

import httpx
from pydantic import ValidationError
from tenacity import (
    RetryError,
    Retrying,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from .exceptions import EnvConnectionError, EnvTimeoutError, ProtocolError, VoxelNBVError
from .models import PlanResponse, WireRequest, WireResponse

logger = logging.getLogger(__name__)


def _retrying(max_retries: int, backoff_factor: float) -> Retrying:
    return Retrying(
        retry=retry_if_exception_type(EnvConnectionError),
        stop=stop_after_attempt(max_retries),
        wait=wait_exponential(multiplier=backoff_factor, min=0, max=10),
    )


def _unwrap(error: RetryError) -> VoxelNBVError:
    """Underlying typed exception of an exhausted retry."""
    underlying = error.last_attempt.exception()
    if isinstance(underlying, VoxelNBVError):
        return underlying
    return EnvConnectionError(str(underlying or error))


class EnvClient:
    """
    Synchronous client of the NDJSON environment server.

    Connecting retries with exponential backoff; requests on one client are answered in order.
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 7654,
        env_id: str = "default",
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff_factor: float = 0.5,
    ):
        self.host = host
        self.port = port
        self.env_id = env_id
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_factor = backoff_factor
        self._sock: Optional[socket.socket] = None
        self._file = None

    def __enter__(self) -> "EnvClient":
        self.connect()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.close()

    def _connect_once(self) -> None:
        try:
            self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        except socket.timeout as e:
            raise EnvConnectionError(f"Connection timeout: {e}") from e
        except OSError as e:
            raise EnvConnectionError(f"Connection error: {e}") from e
        self._file = self._sock.makefile("rwb")

    def connect(self) -> None:
        """
        Raises:
            EnvConnectionError: If the server stays unreachable after all retries
        """
        if self._sock is not None:
            return
        try:
            for attempt in _retrying(self.max_retries, self.backoff_factor):
                with attempt:
                    logger.debug(f"Connecting to {self.host}:{self.port}")
                    self._connect_once()
        except RetryError as e:
            raise _unwrap(e) from e

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def request(self, type: str, payload: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        Send one request and wait for its answer.

        Raises:
            ProtocolError: For error responses, carrying the server's error code
            EnvTimeoutError: If the server does not answer in time
        """
        self.connect()
        message = WireRequest(type=type, env_id=self.env_id, payload=payload or {})
        try:
            self._file.write((message.model_dump_json() + "\n").encode("utf-8"))
            self._file.flush()
            line = self._file.readline()
        except socket.timeout as e:
            raise EnvTimeoutError(f"No answer to {type}: {e}") from e
        except OSError as e:
            self.close()
            raise EnvConnectionError(f"Connection lost: {e}") from e
        if not line:
            self.close()
            raise EnvConnectionError("Server closed the connection")
        response = WireResponse.model_validate(json.loads(line))
        if response.error is not None:
            raise ProtocolError(response.error.message, response.error.code)
        return response.payload or {}

    def hello(self) -> Dict[str, Any]:
        return self.request("hello")

    def reset(self, seed: Optional[int] = None, scene_id: Optional[str] = None) -> Dict[str, Any]:
        payload: Dict[str, Any] = {}
        if seed is not None:
            payload["seed"] = seed
        if scene_id is not None:
            payload["scene_id"] = scene_id
        return self.request("reset", payload)

    def step(self, action: Sequence[float], lookat: Sequence[float]) -> Dict[str, Any]:
        return self.request("step", {"action": [float(a) for a in action], "lookat": [float(x) for x in lookat]})

    def close_env(self) -> Dict[str, Any]:
        return self.request("close")


class PolicyClient:
    """
    HTTP client of a policy service answering ``POST /plan`` with ``{"action", "lookat"}``.

    Connection failures and timeouts are retried with exponential backoff.
    """

    def __init__(
        self,
        base_url: str = "http://localhost:8000",
        timeout: int = 30,
        max_retries: int = 3,
        backoff_factor: float = 0.5,
        session: Optional[httpx.Client] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_factor = backoff_factor
        if session:
            self.session = session
        else:
            self.session = httpx.Client(timeout=httpx.Timeout(timeout), follow_redirects=True)

    def __enter__(self) -> "PolicyClient":
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.close()

    def close(self) -> None:
        if hasattr(self, "session") and self.session:
            self.session.close()

    def _request(self, method: str, endpoint: str, data: Optional[Dict[str, Any]] = None) -> httpx.Response:
        url = f"{self.base_url}/{endpoint.lstrip('/')}"
        logger.debug(f"Making {method} request to {url}")
        try:
            response = self.session.request(method, url, json=data, timeout=float(self.timeout))
        except httpx.TimeoutException as e:
            raise EnvConnectionError(f"Request timeout: {e}") from e
        except httpx.RequestError as e:
            raise EnvConnectionError(f"Request error: {e}") from e

        logger.debug(f"Response status: {response.status_code}")
        if response.status_code == 200:
            return response
        if response.status_code == 503:
            raise EnvConnectionError(f"Policy service unavailable: {response.text}")
        raise ProtocolError(f"HTTP error {response.status_code}: {response.text}", "HTTP_ERROR")

    def plan(self, payload: Dict[str, Any]) -> PlanResponse:
        """
        Ask the policy for the next action.

        Raises:
            EnvConnectionError: If the service stays unreachable after all retries
            EnvTimeoutError: If the last attempt timed out
            ProtocolError: For non-retryable HTTP errors or an invalid answer
        """
        try:
            for attempt in _retrying(self.max_retries, self.backoff_factor):
                with attempt:
                    response = self._request("POST", "/plan", payload)
        except RetryError as e:
            error = _unwrap(e)
            if "timeout" in str(error).lower():
                raise EnvTimeoutError(str(error)) from e
            raise error from e
        try:
            return PlanResponse.model_validate(response.json())
        except (ValueError, ValidationError) as e:
            raise ProtocolError(f"Invalid plan response: {e}", "BAD_RESPONSE") from e
