"""
Utility functions for the voxel-nbv engine.
"""

import base64
import csv
import json
import re
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel

PathLike = Union[str, Path]


def validate_env_id(env_id: str) -> bool:
    """
    Validate environment ID format (alphanumeric, hyphens, underscores, dots only).

    Args:
        env_id: Environment ID to validate

    Returns:
        True if valid, False otherwise
    """
    if not env_id or not env_id.strip():
        return False
    if len(env_id) > 100:
        return False
    return bool(re.match(r"^[a-zA-Z0-9_.-]+$", env_id))


def parse_bind_address(address: str) -> Tuple[str, int]:
    """
    Parse a ``host:port`` bind address.

    Args:
        address: Address string, e.g. ``127.0.0.1:7654``

    Returns:
        (host, port) tuple
    """
    if not address or ":" not in address:
        raise ValueError(f"Invalid bind address: {address!r}")
    host, _, port_text = address.rpartition(":")
    if not port_text.isdigit():
        raise ValueError(f"Invalid port in bind address: {address!r}")
    port = int(port_text)
    if not 0 <= port <= 65535:
        raise ValueError(f"Port out of range: {port}")
    return host or "127.0.0.1", port


def parse_centers(text: str) -> List[int]:
    """
    Parse a comma separated list of object-center indices.

    Args:
        text: e.g. ``"0,1,4"``

    Returns:
        Sorted unique indices
    """
    if not text or not text.strip():
        raise ValueError("Center list cannot be empty")
    indices = set()
    for part in text.split(","):
        part = part.strip()
        if not part.isdigit():
            raise ValueError(f"Invalid center index: {part!r}")
        indices.add(int(part))
    return sorted(indices)


def format_center(center: Sequence[float]) -> str:
    """Format an object-center offset as ``(x,y)`` with integral values kept short."""
    return "(" + ",".join(f"{float(c):g}" for c in center) + ")"


def sanitize_filename(filename: str) -> str:
    """
    Sanitize filename for safe file operations.

    Args:
        filename: Original filename

    Returns:
        Sanitized filename
    """
    safe_chars = re.sub(r"[^\w\-_\.]", "_", filename)
    safe_chars = re.sub(r"_+", "_", safe_chars)
    safe_chars = safe_chars.strip("_.")

    return safe_chars or "untitled"


def encode_array(array: np.ndarray) -> Dict[str, Any]:
    """
    Encode an array as base64 of its little-endian raw bytes.

    Args:
        array: Numeric array

    Returns:
        Dictionary with dtype, shape and base64 data
    """
    arr = np.ascontiguousarray(array)
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    return {
        "dtype": le.dtype.str,
        "shape": list(arr.shape),
        "data": base64.b64encode(le.tobytes()).decode("ascii"),
    }


def decode_array(encoded: Dict[str, Any]) -> np.ndarray:
    """
    Decode an array produced by :func:`encode_array`.

    Args:
        encoded: Dictionary with dtype, shape and base64 data

    Returns:
        The decoded array
    """
    try:
        raw = base64.b64decode(encoded["data"], validate=True)
        dtype = np.dtype(encoded["dtype"])
        shape = tuple(int(s) for s in encoded["shape"])
    except (KeyError, TypeError, ValueError) as e:
        raise ValueError(f"Invalid encoded array: {e}") from e
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def write_jsonl(path: PathLike, records: Iterable[Union[BaseModel, Dict[str, Any]]]) -> int:
    """
    Write records as newline-delimited JSON.

    Returns:
        Number of records written
    """
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            if isinstance(record, BaseModel):
                line = record.model_dump_json()
            else:
                line = json.dumps(record, sort_keys=True)
            fh.write(line + "\n")
            count += 1
    return count


def read_jsonl(path: PathLike) -> Iterator[Dict[str, Any]]:
    """Yield the JSON objects of a newline-delimited JSON file, skipping blank lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_csv(path: PathLike, rows: Sequence[BaseModel]) -> int:
    """
    Write pydantic rows as CSV with a header taken from the first row's fields.

    Returns:
        Number of data rows written
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if not rows:
            return 0
        fields = list(type(rows[0]).model_fields)
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(v) for k, v in row.model_dump().items()})
    return len(rows)


def _csv_value(value: Any) -> Any:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value
