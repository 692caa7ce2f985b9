"""
Mesh loading, normalization and placement, voxelization, exterior flood fill and the
ground-truth visible surface.

Ground-truth cache layout (little-endian)::

    magic b"VNBVGT" | uint16 version | uint8 voxelization mode
    uint32 meta length | meta (UTF-8 JSON)
    grid snapshot (voxel_grid layout; state = occupied / exterior free / sealed unknown,
                   faces = visible faces)
    uint32 point count | float64 xyz[count]
    uint32 vertex count | float64 xyz[count] | uint32 triangle count | int64 ijk[count]
"""

import json
import logging
import math
import struct
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numba
import numpy as np

from .bvh import MeshBVH
from .exceptions import (
    CacheFormatError,
    CoverageCompleteError,
    DegenerateSceneError,
    MeshLoadError,
    PlacementError,
)
from .models import SceneConfig
from .voxel_grid import (
    FACE_OFFSETS,
    FREE,
    OCCUPIED,
    POPCOUNT,
    UNKNOWN,
    GridFrame,
    VoxelGrid,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CACHE_MAGIC = b"VNBVGT"
CACHE_VERSION = 1
VOXELIZATION_MODES = {"conservative": 1}

# Overlaps thinner than this fraction of a voxel are treated as contact only.
OVERLAP_EPSILON = 1e-7

PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


@dataclass(eq=False)
class TriangleMesh:
    """Indexed triangle soup in world meters."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) == 0:
            raise ValueError("Mesh has no triangles")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("Mesh has non-finite vertices")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise ValueError("Triangle index out of range")

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        used = self.vertices[np.unique(self.triangles)]
        return used.min(axis=0), used.max(axis=0)

    @property
    def corners(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices
        t = self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def triangle_areas(self) -> np.ndarray:
        a, b, c = self.corners
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def translated(self, offset) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(offset, dtype=np.float64), self.triangles.copy())


def load_mesh(path: PathLike) -> TriangleMesh:
    """
    Load an OBJ or PLY (ascii / binary_little_endian) triangle mesh.

    Polygons are fan-triangulated; normals, UVs and materials are ignored.

    Raises:
        MeshLoadError: If the file cannot be read or holds no valid triangles
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise MeshLoadError(f"Cannot read mesh: {e}", str(path)) from e

    suffix = path.suffix.lower()
    try:
        if suffix == ".obj":
            vertices, triangles = _parse_obj(data.decode("utf-8", errors="replace"))
        elif suffix == ".ply":
            vertices, triangles = _parse_ply(data)
        else:
            raise MeshLoadError(f"Unsupported mesh format: {suffix or '<none>'}", str(path))
        mesh = TriangleMesh(vertices, triangles)
    except MeshLoadError:
        raise
    except (ValueError, IndexError, struct.error) as e:
        raise MeshLoadError(f"Cannot parse mesh: {e}", str(path)) from e

    logger.debug(f"Loaded {path.name}: {len(mesh.vertices)} vertices, {len(mesh.triangles)} triangles")
    return mesh


def _fan(polygon: List[int]) -> List[Tuple[int, int, int]]:
    return [(polygon[0], polygon[i], polygon[i + 1]) for i in range(1, len(polygon) - 1)]


def _parse_obj(text: str) -> Tuple[np.ndarray, np.ndarray]:
    vertices: List[Tuple[float, float, float]] = []
    triangles: List[Tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        if parts[0] == "v":
            if len(parts) < 4:
                raise ValueError(f"line {lineno}: vertex needs three coordinates")
            vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
        elif parts[0] == "f":
            polygon = []
            for token in parts[1:]:
                idx = int(token.split("/")[0])
                if idx < 0:
                    idx += len(vertices)
                else:
                    idx -= 1
                if not 0 <= idx < len(vertices):
                    raise ValueError(f"line {lineno}: face index out of range")
                polygon.append(idx)
            if len(polygon) < 3:
                raise ValueError(f"line {lineno}: face needs at least three vertices")
            triangles.extend(_fan(polygon))
    return np.array(vertices, dtype=np.float64).reshape(-1, 3), np.array(triangles).reshape(-1, 3)


def _parse_ply(data: bytes) -> Tuple[np.ndarray, np.ndarray]:
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ValueError("missing PLY header")
    body_start = data.index(b"\n", end) + 1
    header = data[:end].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements: List[Dict[str, Any]] = []
    for line in header:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append({"name": parts[1], "count": int(parts[2]), "props": []})
        elif parts[0] == "property":
            if not elements:
                raise ValueError("property before element")
            if parts[1] == "list":
                elements[-1]["props"].append(("list", PLY_TYPES[parts[2]], PLY_TYPES[parts[3]], parts[4]))
            else:
                elements[-1]["props"].append(("scalar", PLY_TYPES[parts[1]], None, parts[2]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise ValueError(f"unsupported PLY format {fmt}")

    vertices = np.empty((0, 3))
    polygons: List[List[int]] = []
    if fmt == "ascii":
        tokens = data[body_start:].decode("ascii").split()
        pos = 0
        for element in elements:
            rows = []
            for _ in range(element["count"]):
                row: Dict[str, Any] = {}
                for kind, count_type, item_type, name in element["props"]:
                    if kind == "list":
                        n = int(tokens[pos])
                        row[name] = [int(float(t)) for t in tokens[pos + 1 : pos + 1 + n]]
                        pos += 1 + n
                    else:
                        row[name] = float(tokens[pos])
                        pos += 1
                rows.append(row)
            if element["name"] == "vertex":
                vertices = np.array([[r["x"], r["y"], r["z"]] for r in rows], dtype=np.float64)
            elif element["name"] == "face":
                polygons = [_face_indices(r) for r in rows]
    else:
        offset = body_start
        for element in elements:
            props = element["props"]
            if all(kind == "scalar" for kind, *_ in props):
                dtype = np.dtype([(name, "<" + t) for _, t, _, name in props])
                table = np.frombuffer(data, dtype=dtype, count=element["count"], offset=offset)
                offset += dtype.itemsize * element["count"]
                if element["name"] == "vertex":
                    vertices = np.stack([table["x"], table["y"], table["z"]], axis=1).astype(np.float64)
                continue
            rows = []
            for _ in range(element["count"]):
                row = {}
                for kind, t, item_type, name in props:
                    if kind == "list":
                        n = int(np.frombuffer(data, "<" + t, 1, offset)[0])
                        offset += np.dtype(t).itemsize
                        row[name] = np.frombuffer(data, "<" + item_type, n, offset).astype(np.int64).tolist()
                        offset += np.dtype(item_type).itemsize * n
                    else:
                        row[name] = float(np.frombuffer(data, "<" + t, 1, offset)[0])
                        offset += np.dtype(t).itemsize
                rows.append(row)
            if element["name"] == "face":
                polygons = [_face_indices(r) for r in rows]

    triangles: List[Tuple[int, int, int]] = []
    for polygon in polygons:
        if len(polygon) < 3:
            raise ValueError("face needs at least three vertices")
        triangles.extend(_fan(polygon))
    return vertices, np.array(triangles, dtype=np.int64).reshape(-1, 3)


def _face_indices(row: Dict[str, Any]) -> List[int]:
    for key in ("vertex_indices", "vertex_index"):
        if key in row:
            return list(row[key])
    raise ValueError("face element has no vertex_indices list")


def normalize_and_place(mesh: TriangleMesh, cfg: SceneConfig) -> TriangleMesh:
    """
    Uniformly scale so the longest AABB edge equals ``cfg.target_extent`` and move the
    AABB so its base rests on ``cfg.ground_height`` centered over ``cfg.object_center``.

    Raises:
        DegenerateSceneError: If the AABB has zero extent on every axis
    """
    bmin, bmax = mesh.bounds
    extent = bmax - bmin
    longest = float(extent.max())
    if not longest > 0.0:
        raise DegenerateSceneError("Mesh bounding box has zero extent")
    scale = cfg.target_extent / longest
    size = extent * scale
    offset = np.array(
        [
            cfg.object_center[0] - size[0] / 2.0,
            cfg.object_center[1] - size[1] / 2.0,
            cfg.ground_height,
        ]
    )
    return TriangleMesh((mesh.vertices - bmin) * scale + offset, mesh.triangles.copy())


def voxelize(mesh: TriangleMesh, frame: GridFrame) -> np.ndarray:
    """
    Conservative voxelization: a voxel is occupied when a triangle overlaps its interior
    or covers part of one of its faces. Edge and corner contact does not count.

    Returns:
        Boolean occupancy array of shape (g, g, g)

    Raises:
        PlacementError: If the mesh leaves the grid volume
    """
    bmin, bmax = mesh.bounds
    lo = frame.origin_array
    hi = lo + frame.extent
    tol = OVERLAP_EPSILON * frame.voxel_size
    if np.any(bmin < lo - tol) or np.any(bmax > hi + tol):
        raise PlacementError(
            "Mesh extends outside the grid volume", bounds=(bmin.tolist(), bmax.tolist())
        )
    a, b, c = mesh.corners
    out = np.zeros(frame.shape, dtype=np.bool_)
    _voxelize_kernel(
        np.ascontiguousarray(a),
        np.ascontiguousarray(b),
        np.ascontiguousarray(c),
        lo,
        float(frame.voxel_size),
        out,
    )
    return out


def flood_exterior(occupied: np.ndarray) -> np.ndarray:
    """
    Breadth-first search over 6-connectivity from every non-occupied boundary voxel.

    Returns:
        Boolean mask of free voxels reachable from outside the grid
    """
    g0, g1, g2 = occupied.shape
    reached = np.zeros(occupied.shape, dtype=np.bool_)
    boundary = np.zeros(occupied.shape, dtype=np.bool_)
    boundary[[0, -1], :, :] = True
    boundary[:, [0, -1], :] = True
    boundary[:, :, [0, -1]] = True
    seeds = np.argwhere(boundary & ~occupied)

    queue = deque()
    for idx in seeds:
        t = (int(idx[0]), int(idx[1]), int(idx[2]))
        reached[t] = True
        queue.append(t)
    while queue:
        i, j, k = queue.popleft()
        for di, dj, dk in FACE_OFFSETS:
            n = (i + int(di), j + int(dj), k + int(dk))
            if not (0 <= n[0] < g0 and 0 <= n[1] < g1 and 0 <= n[2] < g2):
                continue
            if reached[n] or occupied[n]:
                continue
            reached[n] = True
            queue.append(n)
    return reached


def prune_invisible(
    occupied: np.ndarray, ground_occludes: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Visible faces of an occupancy grid.

    Face j of voxel v is visible when v is occupied and its j-neighbour is reachable
    exterior space or lies outside the grid, the floor included. With ``ground_occludes`` the
    grid floor is solid ground instead, so -z faces of the bottom layer are hidden.

    Returns:
        (visible face bytes (g, g, g) uint8, exterior mask)
    """
    occupied = np.asarray(occupied, dtype=np.bool_)
    exterior = flood_exterior(occupied)
    open_space = np.pad(exterior, 1, mode="constant", constant_values=True)
    if ground_occludes:
        open_space[:, :, 0] = False
    faces = np.zeros(occupied.shape, dtype=np.uint8)
    g0, g1, g2 = occupied.shape
    for j, (di, dj, dk) in enumerate(FACE_OFFSETS):
        neighbour = open_space[
            1 + di : 1 + di + g0,
            1 + dj : 1 + dj + g1,
            1 + dk : 1 + dk + g2,
        ]
        faces |= ((occupied & neighbour).astype(np.uint8) << j).astype(np.uint8)
    return faces, exterior


def sample_surface_points(mesh: TriangleMesh, n: int, seed: int) -> np.ndarray:
    """
    Area-uniform surface samples: cumulative-area inversion picks the triangle, square-root
    barycentric sampling picks the point.

    Raises:
        ValueError: If ``n`` < 1
        DegenerateSceneError: If the mesh has zero total area
    """
    if n < 1:
        raise ValueError("Sample count must be >= 1")
    areas = mesh.triangle_areas()
    total = float(areas.sum())
    if not total > 0.0:
        raise DegenerateSceneError("Mesh has zero surface area")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(areas) / total
    tri = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(areas) - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = mesh.corners
    return (
        (1.0 - r1)[:, None] * a[tri]
        + (r1 * (1.0 - r2))[:, None] * b[tri]
        + (r1 * r2)[:, None] * c[tri]
    )


@dataclass(eq=False)
class GroundTruth:
    """
    Reachable surface of a placed mesh.

    ``grid.state`` holds OCCUPIED for voxelized surface, FREE for exterior space and UNKNOWN
    for sealed cavities; ``grid.faces`` holds the visible faces.
    """

    grid: VoxelGrid
    surface_points: np.ndarray
    voxelization: str = "conservative"

    def __post_init__(self) -> None:
        if len(self.surface_points) == 0:
            raise DegenerateSceneError("Ground truth has no surface points")
        if np.any((self.grid.faces > 0) & (self.grid.state != OCCUPIED)):
            raise ValueError("Visible faces on a non-occupied voxel")

    @property
    def frame(self) -> GridFrame:
        return self.grid.frame

    @property
    def occupied(self) -> np.ndarray:
        return self.grid.state == OCCUPIED

    @property
    def exterior(self) -> np.ndarray:
        return self.grid.state == FREE

    @property
    def visible_faces(self) -> np.ndarray:
        return self.grid.faces

    @property
    def surface_voxels(self) -> np.ndarray:
        return self.grid.faces > 0

    @property
    def total_faces(self) -> int:
        return int(POPCOUNT[self.grid.faces].sum())


def gt_lookat(gt: GroundTruth, seen: np.ndarray) -> np.ndarray:
    """
    Face-count weighted centroid of voxels with uncaptured ground-truth faces.

    Args:
        gt: Ground truth
        seen: (g, g, g) uint8 face bytes of the current belief

    Raises:
        CoverageCompleteError: If every visible face has been seen
    """
    unseen = gt.visible_faces & ~np.asarray(seen, dtype=np.uint8)
    weights = POPCOUNT[unseen].reshape(-1)
    total = int(weights.sum())
    if total == 0:
        raise CoverageCompleteError()
    nz = np.flatnonzero(weights)
    centers = gt.frame.flat_centers[nz]
    return (weights[nz, None] * centers).sum(axis=0) / total


def restrict_to_visible(points: np.ndarray, gt_faces: np.ndarray, frame: GridFrame) -> np.ndarray:
    """Keep points lying in (the closure of) at least one voxel that has a visible face."""
    rel = (points - frame.origin_array) / frame.voxel_size
    base = np.floor(rel)
    lo = np.where(rel - base < OVERLAP_EPSILON, base - 1, base).astype(np.int64)
    hi = np.where(base + 1 - rel < OVERLAP_EPSILON, base + 1, base).astype(np.int64)
    g = frame.resolution
    visible = gt_faces > 0
    keep = np.zeros(len(points), dtype=np.bool_)
    for pick in range(8):
        idx = np.where([(pick >> a) & 1 for a in range(3)], hi, lo)
        inside = np.all((idx >= 0) & (idx < g), axis=1)
        hit = np.zeros(len(points), dtype=np.bool_)
        sel = np.flatnonzero(inside)
        hit[sel] = visible[idx[sel, 0], idx[sel, 1], idx[sel, 2]]
        keep |= hit
    return points[keep]


def build_ground_truth(
    mesh: TriangleMesh, frame: GridFrame, cfg: SceneConfig
) -> GroundTruth:
    """Voxelize, flood the exterior, label visible faces and sample the visible surface."""
    occupied = voxelize(mesh, frame)
    faces, exterior = prune_invisible(occupied, cfg.ground_occludes)
    if not np.any(faces):
        raise DegenerateSceneError("Placed mesh has no visible voxel faces")
    grid = VoxelGrid(frame)
    grid.state[exterior] = FREE
    grid.state[occupied] = OCCUPIED
    grid.faces = faces
    points = sample_surface_points(mesh, cfg.surface_samples, cfg.sample_seed)
    points = restrict_to_visible(points, faces, frame)
    logger.debug(
        f"Ground truth: {int(occupied.sum())} occupied voxels, "
        f"{int(POPCOUNT[faces].sum())} visible faces, {len(points)} surface points"
    )
    return GroundTruth(grid=grid, surface_points=points)


@dataclass(eq=False)
class PreparedScene:
    """Placed mesh plus its ground truth; immutable once built and shareable across episodes."""

    scene_id: str
    mesh: TriangleMesh
    gt: GroundTruth
    source: str = ""
    object_center: Tuple[float, float] = (0.0, 0.0)

    @cached_property
    def bvh(self) -> MeshBVH:
        return MeshBVH(self.mesh.vertices, self.mesh.triangles)

    @property
    def frame(self) -> GridFrame:
        return self.gt.frame

    @property
    def aabb_center(self) -> np.ndarray:
        bmin, bmax = self.mesh.bounds
        return (bmin + bmax) / 2.0

    @property
    def object_radius(self) -> float:
        bmin, bmax = self.mesh.bounds
        return float(np.linalg.norm(bmax - bmin) / 2.0)


def prepare_scene(
    mesh: TriangleMesh,
    scene_id: str,
    frame: GridFrame,
    cfg: SceneConfig,
    source: str = "",
) -> PreparedScene:
    """normalize_and_place -> voxelize -> prune_invisible -> sample_surface_points."""
    placed = normalize_and_place(mesh, cfg)
    gt = build_ground_truth(placed, frame, cfg)
    return PreparedScene(
        scene_id=scene_id,
        mesh=placed,
        gt=gt,
        source=source,
        object_center=cfg.object_center,
    )


def save_scene(scene: PreparedScene, path: PathLike) -> None:
    """Write the ground-truth cache file."""
    meta = json.dumps(
        {
            "scene_id": scene.scene_id,
            "source": scene.source,
            "object_center": list(scene.object_center),
        },
        sort_keys=True,
    ).encode("utf-8")
    points = np.ascontiguousarray(scene.gt.surface_points, dtype="<f8")
    vertices = np.ascontiguousarray(scene.mesh.vertices, dtype="<f8")
    triangles = np.ascontiguousarray(scene.mesh.triangles, dtype="<i8")
    parts = [
        CACHE_MAGIC,
        struct.pack("<HB", CACHE_VERSION, VOXELIZATION_MODES[scene.gt.voxelization]),
        struct.pack("<I", len(meta)),
        meta,
        scene.gt.grid.to_bytes(),
        struct.pack("<I", len(points)),
        points.tobytes(),
        struct.pack("<I", len(vertices)),
        vertices.tobytes(),
        struct.pack("<I", len(triangles)),
        triangles.tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def load_scene(path: PathLike) -> PreparedScene:
    """
    Read a ground-truth cache file.

    Raises:
        CacheFormatError: If the file is not a valid cache
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CacheFormatError(f"Cannot read cache {path}: {e}") from e
    if not data.startswith(CACHE_MAGIC):
        raise CacheFormatError(f"{path} is not a ground-truth cache")
    try:
        offset = len(CACHE_MAGIC)
        version, mode = struct.unpack_from("<HB", data, offset)
        offset += 3
        if version != CACHE_VERSION:
            raise CacheFormatError(f"Unsupported cache version {version}")
        modes = {v: k for k, v in VOXELIZATION_MODES.items()}
        if mode not in modes:
            raise CacheFormatError(f"Unknown voxelization mode {mode}")
        (meta_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        meta = json.loads(data[offset : offset + meta_len].decode("utf-8"))
        offset += meta_len
        grid, offset = VoxelGrid.read_from(data, offset)
        points, offset = _read_block(data, offset, "<f8", 3)
        vertices, offset = _read_block(data, offset, "<f8", 3)
        triangles, offset = _read_block(data, offset, "<i8", 3)
        if offset != len(data):
            raise CacheFormatError("Trailing bytes after cache body")
        mesh = TriangleMesh(vertices.astype(np.float64), triangles.astype(np.int64))
        gt = GroundTruth(grid=grid, surface_points=points.astype(np.float64), voxelization=modes[mode])
    except CacheFormatError:
        raise
    except (struct.error, ValueError, KeyError, UnicodeDecodeError, DegenerateSceneError) as e:
        raise CacheFormatError(f"Corrupt cache {path}: {e}") from e
    return PreparedScene(
        scene_id=meta["scene_id"],
        mesh=mesh,
        gt=gt,
        source=meta.get("source", ""),
        object_center=tuple(meta.get("object_center", (0.0, 0.0))),
    )


def _read_block(data: bytes, offset: int, dtype: str, width: int) -> Tuple[np.ndarray, int]:
    (count,) = struct.unpack_from("<I", data, offset)
    offset += 4
    size = np.dtype(dtype).itemsize * width * count
    if offset + size > len(data):
        raise CacheFormatError("Truncated cache section")
    block = np.frombuffer(data, dtype=dtype, count=width * count, offset=offset).reshape(count, width)
    return block.copy(), offset + size


@numba.njit(cache=True)
def _separates(ax, ay, az, a, b, c, h, eps):  # pragma: no cover - compiled
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n < 1e-9:
        return False
    ax /= n
    ay /= n
    az /= n
    p0 = ax * a[0] + ay * a[1] + az * a[2]
    p1 = ax * b[0] + ay * b[1] + az * b[2]
    p2 = ax * c[0] + ay * c[1] + az * c[2]
    r = h * (abs(ax) + abs(ay) + abs(az))
    return min(p0, min(p1, p2)) >= r - eps or max(p0, max(p1, p2)) <= -r + eps


@numba.njit(cache=True)
def _separates_2d(ux, uy, a0, a1, b0, b1, c0, c1, h, eps):  # pragma: no cover - compiled
    n = math.sqrt(ux * ux + uy * uy)
    if n < 1e-9:
        return False
    ux /= n
    uy /= n
    p0 = ux * a0 + uy * a1
    p1 = ux * b0 + uy * b1
    p2 = ux * c0 + uy * c1
    r = h * (abs(ux) + abs(uy))
    return min(p0, min(p1, p2)) >= r - eps or max(p0, max(p1, p2)) <= -r + eps


@numba.njit(cache=True)
def _face_contact(a, b, c, nx, ny, nz, h, eps):  # pragma: no cover - compiled
    normal = (nx, ny, nz)
    for q in range(3):
        if abs(normal[q]) < 1.0 - 1e-12:
            continue
        plane = (a[q] + b[q] + c[q]) / 3.0
        if abs(plane - h) > eps and abs(plane + h) > eps:
            return False
        u = (q + 1) % 3
        w = (q + 2) % 3
        if _separates_2d(1.0, 0.0, a[u], a[w], b[u], b[w], c[u], c[w], h, eps):
            return False
        if _separates_2d(0.0, 1.0, a[u], a[w], b[u], b[w], c[u], c[w], h, eps):
            return False
        if _separates_2d(a[w] - b[w], b[u] - a[u], a[u], a[w], b[u], b[w], c[u], c[w], h, eps):
            return False
        if _separates_2d(b[w] - c[w], c[u] - b[u], a[u], a[w], b[u], b[w], c[u], c[w], h, eps):
            return False
        if _separates_2d(c[w] - a[w], a[u] - c[u], a[u], a[w], b[u], b[w], c[u], c[w], h, eps):
            return False
        return True
    return False


@numba.njit(cache=True)
def _triangle_box_overlap(a, b, c, h, eps):  # pragma: no cover - compiled
    box_axis_separates = (
        _separates(1.0, 0.0, 0.0, a, b, c, h, eps)
        or _separates(0.0, 1.0, 0.0, a, b, c, h, eps)
        or _separates(0.0, 0.0, 1.0, a, b, c, h, eps)
    )

    edges = np.empty((3, 3))
    for d in range(3):
        edges[0, d] = b[d] - a[d]
        edges[1, d] = c[d] - b[d]
        edges[2, d] = a[d] - c[d]
    for e in range(3):
        n = math.sqrt(edges[e, 0] ** 2 + edges[e, 1] ** 2 + edges[e, 2] ** 2)
        if n > 0.0:
            for d in range(3):
                edges[e, d] /= n
    nx = edges[0, 1] * edges[1, 2] - edges[0, 2] * edges[1, 1]
    ny = edges[0, 2] * edges[1, 0] - edges[0, 0] * edges[1, 2]
    nz = edges[0, 0] * edges[1, 1] - edges[0, 1] * edges[1, 0]
    nn = math.sqrt(nx * nx + ny * ny + nz * nz)
    if nn > 1e-12:
        nx /= nn
        ny /= nn
        nz /= nn

    separated = box_axis_separates
    if not separated and _separates(nx, ny, nz, a, b, c, h, eps):
        separated = True
    if not separated:
        for e in range(3):
            ex = edges[e, 0]
            ey = edges[e, 1]
            ez = edges[e, 2]
            # e x unit axes
            if _separates(0.0, ez, -ey, a, b, c, h, eps):
                separated = True
                break
            if _separates(-ez, 0.0, ex, a, b, c, h, eps):
                separated = True
                break
            if _separates(ey, -ex, 0.0, a, b, c, h, eps):
                separated = True
                break
    if not separated:
        return True
    if nn > 1e-12:
        return _face_contact(a, b, c, nx, ny, nz, h, eps)
    return False


@numba.njit(cache=True)
def _voxelize_kernel(v0, v1, v2, origin, voxel_size, out):  # pragma: no cover - compiled
    g = out.shape[0]
    h = 0.5 * voxel_size
    eps = OVERLAP_EPSILON * voxel_size
    a = np.empty(3)
    b = np.empty(3)
    c = np.empty(3)
    lo = np.empty(3, dtype=np.int64)
    hi = np.empty(3, dtype=np.int64)
    for t in range(v0.shape[0]):
        for d in range(3):
            tmin = min(v0[t, d], min(v1[t, d], v2[t, d]))
            tmax = max(v0[t, d], max(v1[t, d], v2[t, d]))
            lo[d] = max(int(math.floor((tmin - origin[d]) / voxel_size)) - 1, 0)
            hi[d] = min(int(math.floor((tmax - origin[d]) / voxel_size)) + 1, g - 1)
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    if out[i, j, k]:
                        continue
                    cx = origin[0] + (i + 0.5) * voxel_size
                    cy = origin[1] + (j + 0.5) * voxel_size
                    cz = origin[2] + (k + 0.5) * voxel_size
                    a[0] = v0[t, 0] - cx
                    a[1] = v0[t, 1] - cy
                    a[2] = v0[t, 2] - cz
                    b[0] = v1[t, 0] - cx
                    b[1] = v1[t, 1] - cy
                    b[2] = v1[t, 2] - cz
                    c[0] = v2[t, 0] - cx
                    c[1] = v2[t, 1] - cy
                    c[2] = v2[t, 2] - cz
                    if _triangle_box_overlap(a, b, c, h, eps):
                        out[i, j, k] = True
