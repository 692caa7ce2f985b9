"""
Procedural benchmark meshes: cube, icosphere, L-shape, torus and two shelled houses whose
roofs overhang the walls.
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np

from .scene import TriangleMesh

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_BOX_FACES = np.array(
    [
        [0, 2, 1], [0, 3, 2],  # -z
        [4, 5, 6], [4, 6, 7],  # +z
        [0, 1, 5], [0, 5, 4],  # -y
        [3, 7, 6], [3, 6, 2],  # +y
        [0, 4, 7], [0, 7, 3],  # -x
        [1, 2, 6], [1, 6, 5],  # +x
    ],
    dtype=np.int64,
)


def box(lo: Sequence[float], hi: Sequence[float]) -> TriangleMesh:
    """Closed axis-aligned box with outward winding."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    vertices = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ],
        dtype=np.float64,
    )
    return TriangleMesh(vertices, _BOX_FACES.copy())


def merge(*parts: TriangleMesh) -> TriangleMesh:
    vertices, triangles, offset = [], [], 0
    for part in parts:
        vertices.append(part.vertices)
        triangles.append(part.triangles + offset)
        offset += len(part.vertices)
    return TriangleMesh(np.concatenate(vertices), np.concatenate(triangles))


def cube() -> TriangleMesh:
    return box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def icosphere(subdivisions: int = 3) -> TriangleMesh:
    """Unit icosphere refined by midpoint subdivision."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    points = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: Dict[Tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = points[i] + points[j]
                points.append(m / np.linalg.norm(m))
                cache[key] = len(points) - 1
            return cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        faces = refined
    return TriangleMesh(np.array(points), np.array(faces, dtype=np.int64))


def l_shape() -> TriangleMesh:
    return merge(box((0, 0, 0), (3, 1, 1)), box((0, 0, 1), (1, 1, 3)))


def torus(major: float = 1.0, minor: float = 0.35, rings: int = 32, sides: int = 16) -> TriangleMesh:
    """Torus around +z lying flat on its side."""
    u = np.arange(rings) * 2.0 * math.pi / rings
    v = np.arange(sides) * 2.0 * math.pi / sides
    uu, vv = np.meshgrid(u, v, indexing="ij")
    radial = major + minor * np.cos(vv)
    vertices = np.stack(
        [radial * np.cos(uu), radial * np.sin(uu), minor * np.sin(vv)], axis=-1
    ).reshape(-1, 3)
    triangles = []
    for i in range(rings):
        for j in range(sides):
            a = i * sides + j
            b = ((i + 1) % rings) * sides + j
            c = ((i + 1) % rings) * sides + (j + 1) % sides
            d = i * sides + (j + 1) % sides
            triangles.append((a, b, c))
            triangles.append((a, c, d))
    return TriangleMesh(vertices, np.array(triangles, dtype=np.int64))


def _shell(lo: Sequence[float], hi: Sequence[float], wall: float) -> TriangleMesh:
    """Outer box plus an inset inner box; the cavity between is sealed."""
    inner_lo = [c + wall for c in lo]
    inner_hi = [c - wall for c in hi]
    inner = box(inner_lo, inner_hi)
    inner = TriangleMesh(inner.vertices, inner.triangles[:, ::-1].copy())
    return merge(box(lo, hi), inner)


def _gable_roof(
    x0: float, x1: float, y0: float, y1: float, base: float, ridge: float
) -> TriangleMesh:
    """Closed triangular prism along x; the bottom face is the soffit."""
    ym = (y0 + y1) / 2.0
    vertices = np.array(
        [
            [x0, y0, base], [x0, y1, base], [x0, ym, ridge],
            [x1, y0, base], [x1, y1, base], [x1, ym, ridge],
        ],
        dtype=np.float64,
    )
    triangles = np.array(
        [
            [0, 2, 1], [3, 4, 5],  # gables
            [0, 1, 4], [0, 4, 3],  # soffit
            [0, 3, 5], [0, 5, 2],  # slope -y
            [1, 2, 5], [1, 5, 4],  # slope +y
        ],
        dtype=np.int64,
    )
    return TriangleMesh(vertices, triangles)


def house_gable() -> TriangleMesh:
    """Hollow rectangular house with an overhanging gable roof."""
    body = _shell((0.0, 0.0, 0.0), (4.0, 3.0, 2.5), wall=0.2)
    roof = _gable_roof(-0.3, 4.3, -0.4, 3.4, 2.5, 4.0)
    return merge(body, roof)


def house_flat() -> TriangleMesh:
    """Hollow two-storey block with an overhanging flat roof slab and a chimney."""
    body = _shell((0.0, 0.0, 0.0), (3.0, 3.0, 3.0), wall=0.2)
    slab = box((-0.4, -0.4, 3.0), (3.4, 3.4, 3.3))
    chimney = box((2.2, 2.2, 3.3), (2.7, 2.7, 4.0))
    return merge(body, slab, chimney)


SUITE: Dict[str, Callable[[], TriangleMesh]] = {
    "cube": cube,
    "icosphere": icosphere,
    "l_shape": l_shape,
    "torus": torus,
    "house_gable": house_gable,
    "house_flat": house_flat,
}


def write_obj(mesh: TriangleMesh, path: PathLike) -> None:
    lines: List[str] = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_suite(output_dir: PathLike) -> List[Path]:
    """Write every suite mesh as ``<name>.obj``; returns the written paths."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, factory in SUITE.items():
        path = out / f"{name}.obj"
        write_obj(factory(), path)
        paths.append(path)
        logger.info(f"Wrote {path}")
    return paths
