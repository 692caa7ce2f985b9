"""
Unit tests for reconstruction metrics.
"""

import numpy as np
import pytest

from voxel_nbv.exceptions import MetricError
from voxel_nbv.metrics import (
    CoverageCurve,
    IncrementalCoverage,
    auc,
    chamfer_distance,
    coverage_ratio,
    nearest_distances,
    nearest_distances_brute,
    summarize,
    to_cm,
)


def brute_coverage(recon, gt, tau):
    return float(np.mean(nearest_distances_brute(gt, recon) <= tau))


def brute_chamfer(a, b):
    return 0.5 * nearest_distances_brute(a, b).mean() + 0.5 * nearest_distances_brute(b, a).mean()


class TestNearestDistances:
    """Test nearest-neighbour queries."""

    def test_matches_brute_force(self, rng):
        """Test the k-d tree agrees with exhaustive search."""
        for _ in range(100):
            a = rng.normal(size=(int(rng.integers(1, 60)), 3))
            b = rng.normal(size=(int(rng.integers(1, 60)), 3))
            np.testing.assert_allclose(nearest_distances(a, b), nearest_distances_brute(a, b))

    def test_empty_reference(self):
        """Test an empty reference is infinitely far."""
        assert np.all(np.isinf(nearest_distances(np.zeros((2, 3)), np.empty((0, 3)))))
        assert nearest_distances(np.empty((0, 3)), np.zeros((2, 3))).shape == (0,)


class TestCoverageRatio:
    """Test the coverage ratio."""

    def test_hand_computed(self):
        """Test a two-point example with the threshold inclusive."""
        gt = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        recon = np.array([[0.5, 0.0, 0.0]])
        assert coverage_ratio(recon, gt, 1.0) == 0.5
        assert coverage_ratio(recon, gt, 0.5) == 0.5
        assert coverage_ratio(recon, gt, 1.5) == 1.0

    def test_matches_brute_force(self, rng):
        """Test CR against an exhaustive oracle."""
        for _ in range(100):
            gt = rng.uniform(-1, 1, size=(50, 3))
            recon = rng.uniform(-1, 1, size=(int(rng.integers(1, 50)), 3))
            tau = float(rng.uniform(0.05, 0.5))
            assert coverage_ratio(recon, gt, tau) == brute_coverage(recon, gt, tau)

    def test_identical(self, rng):
        """Test a perfect reconstruction covers everything."""
        gt = rng.normal(size=(30, 3))
        assert coverage_ratio(gt, gt, 1e-9) == 1.0

    def test_empty_reconstruction(self):
        """Test an empty reconstruction covers nothing."""
        assert coverage_ratio(np.empty((0, 3)), np.zeros((3, 3)), 1.0) == 0.0

    @pytest.mark.parametrize("tau", [0.0, -1.0])
    def test_invalid_tau(self, tau):
        """Test non-positive thresholds."""
        with pytest.raises(MetricError):
            coverage_ratio(np.zeros((1, 3)), np.zeros((1, 3)), tau)

    def test_empty_ground_truth(self):
        """Test an empty ground truth is rejected."""
        with pytest.raises(MetricError):
            coverage_ratio(np.zeros((1, 3)), np.empty((0, 3)), 1.0)


class TestChamfer:
    """Test the Chamfer distance."""

    def test_hand_computed(self):
        """Test a two-point example and the centimeter conversion."""
        gt = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
        recon = np.array([[0.5, 0.0, 0.0]])
        assert chamfer_distance(recon, gt) == pytest.approx(0.75)
        assert to_cm(chamfer_distance(recon, gt)) == pytest.approx(75.0)

    def test_symmetric_and_brute(self, rng):
        """Test symmetry and agreement with an exhaustive oracle."""
        for _ in range(100):
            a = rng.normal(size=(int(rng.integers(1, 40)), 3))
            b = rng.normal(size=(int(rng.integers(1, 40)), 3))
            assert chamfer_distance(a, b) == pytest.approx(chamfer_distance(b, a))
            assert chamfer_distance(a, b) == pytest.approx(brute_chamfer(a, b))

    def test_identical(self, rng):
        """Test identical clouds are at distance zero."""
        a = rng.normal(size=(20, 3))
        assert chamfer_distance(a, a) == 0.0

    def test_empty(self):
        """Test empty clouds are rejected."""
        with pytest.raises(MetricError):
            chamfer_distance(np.empty((0, 3)), np.zeros((1, 3)))


class TestCoverageCurve:
    """Test coverage curves and AUC."""

    def test_auc(self):
        """Test AUC is the mean per-view coverage."""
        curve = CoverageCurve([0.2, 0.4, 0.6])
        assert auc(curve) == pytest.approx(0.4)
        assert curve.budget == 3
        assert curve.final == 0.6

    def test_flat_curve(self):
        """Test a constant curve has AUC equal to its value."""
        assert auc(CoverageCurve([0.5] * 10)) == pytest.approx(0.5)

    @pytest.mark.parametrize("values", [[0.5, 0.4], [0.2, 1.2], [-0.1]])
    def test_invalid_curve(self, values):
        """Test decreasing or out-of-range curves."""
        with pytest.raises(MetricError):
            CoverageCurve(values)

    def test_append(self):
        """Test appending keeps the curve non-decreasing."""
        curve = CoverageCurve([0.3])
        curve.append(0.3)
        with pytest.raises(MetricError):
            curve.append(0.2)
        assert curve.values == [0.3, 0.3]

    def test_empty(self):
        """Test empty curves have no AUC or final value."""
        with pytest.raises(MetricError):
            auc(CoverageCurve())
        with pytest.raises(MetricError):
            CoverageCurve().final


class TestIncrementalCoverage:
    """Test incremental metric tracking."""

    def test_matches_from_scratch(self, rng):
        """Test incremental CR and CD equal a from-scratch evaluation."""
        gt = rng.uniform(-1, 1, size=(300, 3))
        tracker = IncrementalCoverage(gt, tau=0.2)
        seen = []
        for _ in range(6):
            chunk = rng.uniform(-1, 1, size=(int(rng.integers(0, 40)), 3))
            seen.append(chunk)
            value = tracker.add(chunk)
            recon = np.concatenate(seen)
            assert value == coverage_ratio(recon, gt, 0.2)
            if len(recon):
                assert tracker.chamfer == pytest.approx(chamfer_distance(recon, gt))
        assert tracker.curve.budget == 6
        assert tracker.auc == pytest.approx(np.mean(tracker.curve.values))

    def test_empty_reconstruction(self):
        """Test CD is undefined before any point is added."""
        tracker = IncrementalCoverage(np.zeros((2, 3)), tau=1.0)
        assert tracker.add(np.empty((0, 3))) == 0.0
        with pytest.raises(MetricError):
            tracker.chamfer

    def test_invalid(self):
        """Test invalid construction."""
        with pytest.raises(MetricError):
            IncrementalCoverage(np.zeros((2, 3)), tau=0.0)
        with pytest.raises(MetricError):
            IncrementalCoverage(np.empty((0, 3)), tau=1.0)


class TestSummarize:
    """Test aggregation."""

    def test_mean(self):
        """Test the arithmetic mean."""
        assert summarize([0.5, 0.7, 0.9]) == pytest.approx(0.7)

    def test_empty(self):
        """Test nothing to aggregate."""
        with pytest.raises(MetricError):
            summarize([])
