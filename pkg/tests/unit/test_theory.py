"""
Unit tests for the coupon-collector coverage model.
"""

import math

import numpy as np
import pytest

from voxel_nbv.theory import (
    CoverageExperiment,
    conditional_unseen_fraction,
    expected_rays_all_cubes,
    expected_rays_all_faces,
    harmonic,
    refined_expectation,
    run_theory_sweep,
    simulate_fixed_budget,
    simulate_scenario1,
    simulate_scenario2,
    unseen_fraction_closed_form,
)

EULER_GAMMA = 0.5772156649


class TestClosedForms:
    """Test analytic expectations."""

    def test_harmonic(self):
        """Test harmonic numbers."""
        assert harmonic(1) == 1.0
        assert harmonic(4) == pytest.approx(25.0 / 12.0)

    def test_expected_rays_all_cubes(self):
        """Test k H_k against its asymptotic expansion."""
        k = 8000
        assert expected_rays_all_cubes(k) == pytest.approx(k * math.log(k) + EULER_GAMMA * k, rel=0.01)
        assert expected_rays_all_cubes(1) == 1.0

    def test_expected_rays_all_faces(self):
        """Test 6k H_6k."""
        assert expected_rays_all_faces(1) == pytest.approx(14.7)

    @pytest.mark.parametrize("k, value", [(4096, 0.25), (64, 0.5), (8000, 8000 ** (-1 / 6))])
    def test_unseen_closed_form(self, k, value):
        """Test the k^(-1/6) law."""
        assert unseen_fraction_closed_form(k) == pytest.approx(value)

    def test_invalid_k(self):
        """Test out-of-domain arguments."""
        with pytest.raises(ValueError):
            unseen_fraction_closed_form(1)
        with pytest.raises(ValueError):
            expected_rays_all_cubes(0)


class TestConditionalFraction:
    """Test the exact conditional unseen fraction."""

    def test_single_cube(self):
        """Test one cube is done after one ray with five faces unseen."""
        assert conditional_unseen_fraction(1, 1) == pytest.approx(5.0 / 6.0)

    def test_one_hit_per_cube(self):
        """Test k rays for k cubes leave five of six faces unseen."""
        assert conditional_unseen_fraction(5, 5) == pytest.approx(5.0 / 6.0)

    def test_three_cubes_four_rays(self):
        """Test a case small enough to enumerate by hand."""
        s = 5.0 / 6.0
        expected = (2 * (s + s * s) / 2 + s) / 3
        assert conditional_unseen_fraction(3, 4) == pytest.approx(expected)

    def test_decreasing_in_rays(self):
        """Test more rays leave fewer faces unseen."""
        values = [conditional_unseen_fraction(16, r) for r in range(16, 120, 8)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_invalid(self):
        """Test fewer rays than cubes."""
        with pytest.raises(ValueError):
            conditional_unseen_fraction(4, 3)


class TestSimulation:
    """Test the Monte Carlo experiments."""

    def test_single_cube_scenario1(self):
        """Test one cube stops after its first ray."""
        exp = simulate_scenario1(1, trials=20)
        assert np.all(exp.rays == 1)
        assert exp.mean_unseen == pytest.approx(5.0 / 6.0)

    def test_single_cube_scenario2(self):
        """Test the all-faces stopping time for one cube is 6 H_6 on average."""
        exp = simulate_scenario2(1, trials=400, seed=3)
        assert np.all(exp.unseen == 0.0)
        assert abs(exp.mean_rays - expected_rays_all_faces(1)) <= 4 * exp.std_rays / math.sqrt(400)

    def test_fixed_budget(self):
        """Test the k ln k budget leaves (1 - 1/6k)^budget of the faces unseen."""
        k = 64
        exp = simulate_fixed_budget(k, trials=200, seed=1)
        budget = round(k * math.log(k))
        assert np.all(exp.rays == budget)
        expected = (1.0 - 1.0 / (6 * k)) ** budget
        assert expected == pytest.approx(0.4998, abs=1e-3)
        assert abs(exp.mean_unseen - expected) <= 4 * exp.stderr_unseen

    def test_scenario1_matches_refined_expectation(self):
        """Test the simulated unseen fraction agrees with the exact conditional mean."""
        exp = simulate_scenario1(64, trials=200, seed=2)
        assert np.all(exp.rays >= 64)
        assert abs(exp.mean_unseen - refined_expectation(exp)) <= 4 * exp.stderr_unseen

    def test_reproducible(self):
        """Test equal seeds give equal experiments."""
        a = simulate_scenario1(16, trials=10, seed=5)
        b = simulate_scenario1(16, trials=10, seed=5)
        np.testing.assert_array_equal(a.rays, b.rays)
        np.testing.assert_array_equal(a.unseen, b.unseen)

    def test_invalid_experiment(self):
        """Test malformed experiment records."""
        with pytest.raises(ValueError):
            CoverageExperiment(k=2, trials=2, seed=0, scenario="scenario1", rays=np.ones(1), unseen=np.zeros(1))
        with pytest.raises(ValueError):
            simulate_scenario1(0)


class TestSweep:
    """Test the sweep rows."""

    def test_rows(self):
        """Test one row per k with the closed form only where defined."""
        rows = run_theory_sweep([1, 8], trials=10)
        assert [row.k for row in rows] == [1, 8]
        assert rows[0].closed_form is None
        assert rows[1].closed_form == pytest.approx(8 ** (-1 / 6))
        assert rows[1].expected_rays == pytest.approx(8 * harmonic(8))
        assert rows[1].trials == 10
