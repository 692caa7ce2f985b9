"""
Reconstruction metrics: coverage ratio (CR), Chamfer distance (CD) and the area under the
coverage curve (AUC).

CR is one-sided (ground truth -> reconstruction, completeness); CD is the symmetric mean of
mean Euclidean nearest-neighbour distances, in meters (``to_cm`` for reporting).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import MetricError

logger = logging.getLogger(__name__)

BRUTE_FORCE_CHUNK = 2048


def _as_cloud(points: np.ndarray) -> np.ndarray:
    return np.asarray(points, dtype=np.float64).reshape(-1, 3)


def nearest_distances(query: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Distance from every query point to its nearest reference point (k-d tree)."""
    query = _as_cloud(query)
    reference = _as_cloud(reference)
    if len(reference) == 0:
        return np.full(len(query), np.inf)
    if len(query) == 0:
        return np.empty(0)
    dist, _ = cKDTree(reference).query(query, k=1)
    return dist


def nearest_distances_brute(query: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Exhaustive O(n*m) nearest-neighbour distances."""
    query = _as_cloud(query)
    reference = _as_cloud(reference)
    if len(reference) == 0:
        return np.full(len(query), np.inf)
    out = np.empty(len(query))
    for start in range(0, len(query), BRUTE_FORCE_CHUNK):
        chunk = query[start : start + BRUTE_FORCE_CHUNK]
        diff = chunk[:, None, :] - reference[None, :, :]
        out[start : start + len(chunk)] = np.sqrt((diff * diff).sum(axis=2)).min(axis=1)
    return out


def coverage_ratio(recon: np.ndarray, gt: np.ndarray, tau: float) -> float:
    """
    Fraction of ground-truth points whose nearest reconstructed point lies within ``tau``.

    Raises:
        MetricError: If ``tau`` <= 0 or the ground truth is empty
    """
    if not tau > 0:
        raise MetricError(f"tau must be positive, got {tau}")
    gt = _as_cloud(gt)
    if len(gt) == 0:
        raise MetricError("Ground-truth cloud is empty")
    recon = _as_cloud(recon)
    if len(recon) == 0:
        return 0.0
    return float(np.count_nonzero(nearest_distances(gt, recon) <= tau) / len(gt))


def chamfer_distance(a: np.ndarray, b: np.ndarray) -> float:
    """
    Symmetric Chamfer distance 0.5 * mean_a min_b |a-b| + 0.5 * mean_b min_a |a-b| (meters).

    Raises:
        MetricError: If either cloud is empty
    """
    a = _as_cloud(a)
    b = _as_cloud(b)
    if len(a) == 0 or len(b) == 0:
        raise MetricError("Chamfer distance needs two non-empty clouds")
    return 0.5 * float(nearest_distances(a, b).mean()) + 0.5 * float(nearest_distances(b, a).mean())


def to_cm(meters: float) -> float:
    return meters * 100.0


@dataclass
class CoverageCurve:
    """Per-view CR values c_1..c_T."""

    values: List[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.values = [float(v) for v in self.values]
        for v in self.values:
            if not 0.0 <= v <= 1.0:
                raise MetricError(f"Coverage value {v} outside [0, 1]")
        for prev, cur in zip(self.values, self.values[1:]):
            if cur < prev:
                raise MetricError("Coverage curve must be non-decreasing")

    def append(self, value: float) -> None:
        if self.values and value < self.values[-1]:
            raise MetricError("Coverage curve must be non-decreasing")
        if not 0.0 <= value <= 1.0:
            raise MetricError(f"Coverage value {value} outside [0, 1]")
        self.values.append(float(value))

    @property
    def budget(self) -> int:
        return len(self.values)

    @property
    def final(self) -> float:
        if not self.values:
            raise MetricError("Coverage curve is empty")
        return self.values[-1]


def auc(curve: CoverageCurve) -> float:
    """Mean per-view CR (unit spacing, normalized by the budget)."""
    if not curve.values:
        raise MetricError("Coverage curve is empty")
    return float(np.mean(curve.values))


class IncrementalCoverage:
    """
    Tracks CR and CD of a growing reconstruction against a fixed ground-truth cloud.

    Each ``add`` queries only the new points, keeping per-GT-point minimum distances and the
    running sum of reconstruction -> GT distances; results equal a from-scratch evaluation of
    the accumulated cloud.
    """

    def __init__(self, gt_points: np.ndarray, tau: float):
        if not tau > 0:
            raise MetricError(f"tau must be positive, got {tau}")
        self.gt = _as_cloud(gt_points)
        if len(self.gt) == 0:
            raise MetricError("Ground-truth cloud is empty")
        self.tau = float(tau)
        self._gt_tree = cKDTree(self.gt)
        self._gt_min = np.full(len(self.gt), np.inf)
        self._recon_sum = 0.0
        self.recon_count = 0
        self.curve = CoverageCurve()

    def add(self, points: np.ndarray) -> float:
        """Add newly reconstructed points; returns the updated CR and appends it to the curve."""
        pts = _as_cloud(points)
        if len(pts):
            np.minimum(self._gt_min, nearest_distances(self.gt, pts), out=self._gt_min)
            to_gt, _ = self._gt_tree.query(pts, k=1)
            self._recon_sum += float(to_gt.sum())
            self.recon_count += len(pts)
        value = self.coverage_ratio
        self.curve.append(value)
        return value

    @property
    def coverage_ratio(self) -> float:
        return float(np.count_nonzero(self._gt_min <= self.tau) / len(self.gt))

    @property
    def chamfer(self) -> float:
        if self.recon_count == 0:
            raise MetricError("Reconstruction is empty")
        return 0.5 * float(self._gt_min.mean()) + 0.5 * self._recon_sum / self.recon_count

    @property
    def auc(self) -> float:
        return auc(self.curve)


def summarize(values: Sequence[float]) -> float:
    """Arithmetic mean used for over-centers aggregation."""
    if len(values) == 0:
        raise MetricError("Nothing to aggregate")
    return float(np.mean(values))
