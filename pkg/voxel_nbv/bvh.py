"""
Bounding volume hierarchy over a triangle mesh and the compiled ray kernels.

The tree is built in Python (binned SAH with a median fallback, leaves of at most
``leaf_size`` triangles) and flattened into arrays; traversal runs in numba, one
independent ray per ``prange`` iteration so results do not depend on thread count.
"""

import logging
from typing import Optional, Tuple

import numba
import numpy as np

logger = logging.getLogger(__name__)

MAX_DEPTH = 60
STACK_SIZE = 128
HIT_EPSILON = 1e-9
PARALLEL_EPSILON = 1e-14


class MeshBVH:
    """
    Immutable BVH over a triangle soup.

    Triangles are stored reordered so every leaf addresses a contiguous range;
    ``tri_index`` maps a reordered slot back to the original triangle id.
    """

    def __init__(
        self,
        vertices: np.ndarray,
        triangles: np.ndarray,
        leaf_size: int = 4,
        bins: int = 12,
    ):
        vertices = np.asarray(vertices, dtype=np.float64)
        triangles = np.asarray(triangles, dtype=np.int64)
        if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
            raise ValueError("BVH needs at least one triangle")
        self.leaf_size = leaf_size
        self.bins = bins

        a = vertices[triangles[:, 0]]
        b = vertices[triangles[:, 1]]
        c = vertices[triangles[:, 2]]
        order = self._build(a, b, c)

        self.tri_index = order
        self.v0 = np.ascontiguousarray(a[order])
        self.e1 = np.ascontiguousarray(b[order] - a[order])
        self.e2 = np.ascontiguousarray(c[order] - a[order])
        normals = np.cross(self.e1, self.e2)
        lengths = np.linalg.norm(normals, axis=1)
        lengths[lengths == 0.0] = 1.0
        self.normals = np.ascontiguousarray(normals / lengths[:, None])
        logger.debug(
            f"Built BVH: {len(triangles)} triangles, {len(self.node_left)} nodes"
        )

    @property
    def triangle_count(self) -> int:
        return len(self.v0)

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.node_bmin[0].copy(), self.node_bmax[0].copy()

    def _build(self, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
        tri_min = np.minimum(np.minimum(a, b), c)
        tri_max = np.maximum(np.maximum(a, b), c)
        centroid = (a + b + c) / 3.0
        m = len(a)
        order = np.arange(m, dtype=np.int64)

        bmin, bmax, left, first, count = [], [], [], [], []

        def new_node() -> int:
            bmin.append(np.zeros(3))
            bmax.append(np.zeros(3))
            left.append(-1)
            first.append(0)
            count.append(0)
            return len(left) - 1

        root = new_node()
        stack = [(root, 0, m, 0)]
        while stack:
            nid, start, end, depth = stack.pop()
            idx = order[start:end]
            bmin[nid] = tri_min[idx].min(axis=0)
            bmax[nid] = tri_max[idx].max(axis=0)
            n = end - start
            if n <= self.leaf_size or depth >= MAX_DEPTH:
                first[nid], count[nid] = start, n
                continue

            cmin = centroid[idx].min(axis=0)
            extent = centroid[idx].max(axis=0) - cmin
            axis = int(np.argmax(extent))
            if extent[axis] <= 0.0:
                first[nid], count[nid] = start, n
                continue

            mask = self._sah_split(idx, axis, cmin[axis], extent[axis], centroid, tri_min, tri_max)
            if mask is None:
                sorted_idx = idx[np.argsort(centroid[idx, axis], kind="stable")]
                half = n // 2
                left_idx, right_idx = sorted_idx[:half], sorted_idx[half:]
            else:
                left_idx, right_idx = idx[mask], idx[~mask]
            order[start:end] = np.concatenate([left_idx, right_idx])
            mid = start + len(left_idx)

            lid = new_node()
            new_node()
            left[nid] = lid
            stack.append((lid + 1, mid, end, depth + 1))
            stack.append((lid, start, mid, depth + 1))

        self.node_bmin = np.ascontiguousarray(np.array(bmin, dtype=np.float64))
        self.node_bmax = np.ascontiguousarray(np.array(bmax, dtype=np.float64))
        self.node_left = np.array(left, dtype=np.int64)
        self.node_first = np.array(first, dtype=np.int64)
        self.node_count = np.array(count, dtype=np.int64)
        return order

    def _sah_split(
        self,
        idx: np.ndarray,
        axis: int,
        cmin: float,
        extent: float,
        centroid: np.ndarray,
        tri_min: np.ndarray,
        tri_max: np.ndarray,
    ) -> Optional[np.ndarray]:
        bins = self.bins
        which = np.minimum(((centroid[idx, axis] - cmin) / extent * bins).astype(np.int64), bins - 1)
        counts = np.bincount(which, minlength=bins)
        lo = np.full((bins, 3), np.inf)
        hi = np.full((bins, 3), -np.inf)
        for k in range(bins):
            sel = which == k
            if counts[k]:
                lo[k] = tri_min[idx[sel]].min(axis=0)
                hi[k] = tri_max[idx[sel]].max(axis=0)

        best_cost, best_split = np.inf, -1
        for split in range(bins - 1):
            n_left = counts[: split + 1].sum()
            n_right = counts[split + 1 :].sum()
            if n_left == 0 or n_right == 0:
                continue
            cost = _box_area(lo[: split + 1], hi[: split + 1]) * n_left + _box_area(
                lo[split + 1 :], hi[split + 1 :]
            ) * n_right
            if cost < best_cost:
                best_cost, best_split = cost, split
        if best_split < 0:
            return None
        return which <= best_split

    def intersect(
        self, origin: np.ndarray, directions: np.ndarray, max_range: float
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Cast rays from one origin.

        Args:
            origin: (3,) ray origin
            directions: (n, 3) unit directions
            max_range: hits farther than this are misses

        Returns:
            (distances, slots): distance is +inf and slot -1 for misses
        """
        return trace_rays(
            np.ascontiguousarray(origin, dtype=np.float64),
            np.ascontiguousarray(directions, dtype=np.float64),
            float(max_range),
            self.node_bmin,
            self.node_bmax,
            self.node_left,
            self.node_first,
            self.node_count,
            self.v0,
            self.e1,
            self.e2,
        )


def _box_area(lo: np.ndarray, hi: np.ndarray) -> float:
    mn = lo.min(axis=0)
    mx = hi.max(axis=0)
    d = mx - mn
    return float(2.0 * (d[0] * d[1] + d[1] * d[2] + d[2] * d[0]))


@numba.njit(cache=True)
def _intersect_one(
    ox, oy, oz, dx, dy, dz, tmax, node_bmin, node_bmax, node_left, node_first, node_count,
    v0, e1, e2, stack,
):  # pragma: no cover - compiled
    ix = 1.0 / dx if dx != 0.0 else 1e300
    iy = 1.0 / dy if dy != 0.0 else 1e300
    iz = 1.0 / dz if dz != 0.0 else 1e300
    best_t = tmax
    best = -1
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        n = stack[sp]
        t0 = (node_bmin[n, 0] - ox) * ix
        t1 = (node_bmax[n, 0] - ox) * ix
        lo = min(t0, t1)
        hi = max(t0, t1)
        t0 = (node_bmin[n, 1] - oy) * iy
        t1 = (node_bmax[n, 1] - oy) * iy
        lo = max(lo, min(t0, t1))
        hi = min(hi, max(t0, t1))
        t0 = (node_bmin[n, 2] - oz) * iz
        t1 = (node_bmax[n, 2] - oz) * iz
        lo = max(lo, min(t0, t1))
        hi = min(hi, max(t0, t1))
        if hi < lo or hi < 0.0 or lo > best_t:
            continue
        if node_left[n] < 0:
            for k in range(node_first[n], node_first[n] + node_count[n]):
                e1x, e1y, e1z = e1[k, 0], e1[k, 1], e1[k, 2]
                e2x, e2y, e2z = e2[k, 0], e2[k, 1], e2[k, 2]
                px = dy * e2z - dz * e2y
                py = dz * e2x - dx * e2z
                pz = dx * e2y - dy * e2x
                det = e1x * px + e1y * py + e1z * pz
                if abs(det) < PARALLEL_EPSILON:
                    continue
                inv_det = 1.0 / det
                tx = ox - v0[k, 0]
                ty = oy - v0[k, 1]
                tz = oz - v0[k, 2]
                u = (tx * px + ty * py + tz * pz) * inv_det
                if u < 0.0 or u > 1.0:
                    continue
                qx = ty * e1z - tz * e1y
                qy = tz * e1x - tx * e1z
                qz = tx * e1y - ty * e1x
                v = (dx * qx + dy * qy + dz * qz) * inv_det
                if v < 0.0 or u + v > 1.0:
                    continue
                t = (e2x * qx + e2y * qy + e2z * qz) * inv_det
                if t > HIT_EPSILON and t < best_t:
                    best_t = t
                    best = k
        else:
            stack[sp] = node_left[n]
            stack[sp + 1] = node_left[n] + 1
            sp += 2
    return best_t, best


@numba.njit(parallel=True, cache=True)
def trace_rays(
    origin, directions, tmax, node_bmin, node_bmax, node_left, node_first, node_count, v0, e1, e2
):  # pragma: no cover - compiled
    n = directions.shape[0]
    dist = np.empty(n, dtype=np.float64)
    slot = np.empty(n, dtype=np.int64)
    for r in numba.prange(n):
        stack = np.empty(STACK_SIZE, dtype=np.int64)
        t, k = _intersect_one(
            origin[0], origin[1], origin[2],
            directions[r, 0], directions[r, 1], directions[r, 2],
            tmax, node_bmin, node_bmax, node_left, node_first, node_count, v0, e1, e2, stack,
        )
        if k < 0:
            dist[r] = np.inf
        else:
            dist[r] = t
        slot[r] = k
    return dist, slot
