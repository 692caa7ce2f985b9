"""
Writers for debug and result artifacts: PLY point clouds, PGM grayscale frames and PFM
depth frames.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np

from .camera import DepthImage, GrayImage

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_ply_points(path: PathLike, points: np.ndarray, binary: bool = True) -> int:
    """
    Write an xyz point cloud.

    Args:
        path: Destination file
        points: (n, 3) world points
        binary: binary_little_endian when True, ascii otherwise

    Returns:
        Number of vertices written
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {len(pts)}\n"
        "property double x\n"
        "property double y\n"
        "property double z\n"
        "end_header\n"
    ).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            fh.write(np.ascontiguousarray(pts, dtype="<f8").tobytes())
        else:
            for x, y, z in pts.tolist():
                fh.write(f"{x!r} {y!r} {z!r}\n".encode("ascii"))
    return len(pts)


def read_ply_points(path: PathLike) -> np.ndarray:
    """Read the vertex positions of a PLY file written by :func:`write_ply_points`."""
    from .scene import _parse_ply

    data = Path(path).read_bytes()
    vertices, _ = _parse_ply(data)
    return vertices


def write_pgm(path: PathLike, image: GrayImage) -> None:
    """Binary (P5) 8-bit PGM."""
    pixels = image.to_uint8()
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def _split_header(data: bytes) -> tuple:
    """Four whitespace-separated header tokens and the offset of the raster."""
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _split_header(data)
    if tokens[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=offset).reshape(h, w)


def write_pfm(path: PathLike, depth: DepthImage) -> None:
    """Single-channel little-endian PFM; rows are stored bottom to top. Misses stay +inf."""
    values = np.asarray(depth.values, dtype="<f4")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.ascontiguousarray(values[::-1]).tobytes())


def read_pfm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _split_header(data)
    if tokens[0] != b"Pf":
        raise ValueError(f"{path} is not a grayscale PFM")
    w, h = int(tokens[1]), int(tokens[2])
    dtype = "<f4" if float(tokens[3]) < 0 else ">f4"
    values = np.frombuffer(data, dtype=dtype, count=w * h, offset=offset).reshape(h, w)
    return values[::-1].astype(np.float64)
