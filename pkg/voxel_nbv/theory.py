"""
Coupon-collector model of single-ray sampling over k unit cubes.

Every ray hits a uniformly random cube and a uniformly random face of it, i.e. one draw
from N = 6k faces. Scenario 1 stops once every cube has been hit, Scenario 2 once every
face has been hit. The fixed-budget variant casts exactly round(k ln k) rays, the ray count
the closed form k^(-1/6) is derived from.

Each trial t uses its own generator seeded with ``seed + t``.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from .models import TheoryRow

logger = logging.getLogger(__name__)

FACES_PER_CUBE = 6


def harmonic(n: int) -> float:
    return math.fsum(1.0 / i for i in range(1, n + 1))


def expected_rays_all_cubes(k: int) -> float:
    """Exact coupon-collector expectation k * H_k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return k * harmonic(k)


def expected_rays_all_faces(k: int) -> float:
    """6k * H_6k, the expected Scenario 2 stopping time."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = FACES_PER_CUBE * k
    return n * harmonic(n)


def unseen_fraction_closed_form(k: int) -> float:
    """k^(-1/6): unseen face fraction after k ln k rays (asymptotic regime, k >= 2)."""
    if k < 2:
        raise ValueError("closed form needs k >= 2")
    return float(k) ** (-1.0 / 6.0)


@dataclass
class CoverageExperiment:
    k: int
    trials: int
    seed: int
    scenario: str
    rays: np.ndarray
    unseen: np.ndarray

    def __post_init__(self) -> None:
        if self.k < 1 or self.trials < 1:
            raise ValueError("k and trials must be >= 1")
        if len(self.rays) != self.trials or len(self.unseen) != self.trials:
            raise ValueError("one result per trial expected")
        if np.any(self.unseen < 0) or np.any(self.unseen > 1):
            raise ValueError("unseen fractions must lie in [0, 1]")

    @property
    def mean_unseen(self) -> float:
        return float(self.unseen.mean())

    @property
    def std_unseen(self) -> float:
        return float(self.unseen.std(ddof=1)) if self.trials > 1 else 0.0

    @property
    def stderr_unseen(self) -> float:
        return self.std_unseen / math.sqrt(self.trials)

    @property
    def mean_rays(self) -> float:
        return float(self.rays.mean())

    @property
    def std_rays(self) -> float:
        return float(self.rays.std(ddof=1)) if self.trials > 1 else 0.0


def _collect(
    rng: np.random.Generator, outcomes: int, group_size: int
) -> Tuple[int, np.ndarray]:
    """
    Draw uniform outcomes until every group of ``group_size`` consecutive outcomes has
    appeared at least once.

    Returns:
        (rays used, per-outcome seen mask at the stopping time)
    """
    groups = outcomes // group_size
    seen = np.zeros(outcomes, dtype=np.bool_)
    group_seen = np.zeros(groups, dtype=np.bool_)
    remaining = groups
    drawn = 0
    chunk = max(1024, 2 * groups)
    while True:
        draws = rng.integers(0, outcomes, size=chunk)
        uniq, first = np.unique(draws // group_size, return_index=True)
        fresh = ~group_seen[uniq]
        n_fresh = int(np.count_nonzero(fresh))
        if n_fresh == remaining:
            stop = int(first[fresh].max())
            seen[draws[: stop + 1]] = True
            return drawn + stop + 1, seen
        group_seen[uniq] = True
        remaining -= n_fresh
        seen[draws] = True
        drawn += chunk


def _run(k: int, trials: int, seed: int, scenario: str) -> CoverageExperiment:
    if k < 1 or trials < 1:
        raise ValueError("k and trials must be >= 1")
    outcomes = FACES_PER_CUBE * k
    rays = np.empty(trials, dtype=np.int64)
    unseen = np.empty(trials)
    budget = max(1, round(k * math.log(k)))
    for t in range(trials):
        rng = np.random.default_rng(seed + t)
        if scenario == "fixed_budget":
            draws = rng.integers(0, outcomes, size=budget)
            seen_count = int(np.count_nonzero(np.bincount(draws, minlength=outcomes)))
            rays[t] = budget
        else:
            group_size = FACES_PER_CUBE if scenario == "scenario1" else 1
            rays[t], seen = _collect(rng, outcomes, group_size)
            seen_count = int(np.count_nonzero(seen))
        unseen[t] = 1.0 - seen_count / outcomes
    return CoverageExperiment(k=k, trials=trials, seed=seed, scenario=scenario, rays=rays, unseen=unseen)


def simulate_scenario1(k: int, trials: int = 200, seed: int = 0) -> CoverageExperiment:
    """Sample until every cube is hit; record rays used and the fraction of faces never hit."""
    return _run(k, trials, seed, "scenario1")


def simulate_scenario2(k: int, trials: int = 200, seed: int = 0) -> CoverageExperiment:
    """Sample until every face is hit; the unseen fraction is zero by construction."""
    return _run(k, trials, seed, "scenario2")


def simulate_fixed_budget(k: int, trials: int = 200, seed: int = 0) -> CoverageExperiment:
    """Cast exactly round(k ln k) rays (at least one)."""
    return _run(k, trials, seed, "fixed_budget")


def conditional_unseen_fraction(k: int, rays: int) -> float:
    """
    Exact expected unseen face fraction given the Scenario 1 stopping time.

    The last ray is the first hit of its cube; the other ``rays - 1`` rays cover the
    remaining k - 1 cubes with none missed. Inclusion-exclusion over empty cubes gives the
    expected (5/6)^m per covered cube with m its hit count.
    """
    if k < 1 or rays < k:
        raise ValueError("need k >= 1 and rays >= k")
    s = 1.0 - 1.0 / FACES_PER_CUBE
    if k == 1:
        return s
    n = rays - 1
    cubes = k - 1
    others = k - 2
    i = np.arange(others + 1)
    log_choose = gammaln(others + 1) - gammaln(i + 1) - gammaln(others - i + 1)
    sign = np.where(i % 2 == 0, 1.0, -1.0)
    with np.errstate(divide="ignore"):
        log_a = n * np.log((others - i + s) / cubes)
        log_b = n * np.log((others - i) / cubes)
    numerator = float(np.sum(sign * (np.exp(log_choose + log_a) - np.exp(log_choose + log_b))))

    j = np.arange(cubes + 1)
    log_choose_all = gammaln(cubes + 1) - gammaln(j + 1) - gammaln(cubes - j + 1)
    sign_all = np.where(j % 2 == 0, 1.0, -1.0)
    with np.errstate(divide="ignore"):
        log_c = n * np.log((cubes - j) / cubes)
    denominator = float(np.sum(sign_all * np.exp(log_choose_all + log_c)))
    per_cube = numerator / denominator
    return (cubes * per_cube + s) / k


def refined_expectation(experiment: CoverageExperiment) -> float:
    """Mean of the exact conditional unseen fraction over the simulated stopping times."""
    values = [conditional_unseen_fraction(experiment.k, int(r)) for r in experiment.rays]
    return float(np.mean(values))


def run_theory_sweep(ks: Sequence[int], trials: int = 200, seed: int = 0) -> List[TheoryRow]:
    """One row per k comparing the closed form with both scenarios and the fixed budget."""
    rows = []
    for k in ks:
        s1 = simulate_scenario1(k, trials, seed)
        s2 = simulate_scenario2(k, trials, seed)
        fixed = simulate_fixed_budget(k, trials, seed)
        rows.append(
            TheoryRow(
                k=k,
                closed_form=unseen_fraction_closed_form(k) if k >= 2 else None,
                empirical_mean=s1.mean_unseen,
                empirical_std=s1.std_unseen,
                fixed_budget_mean=fixed.mean_unseen,
                fixed_budget_std=fixed.std_unseen,
                trials=trials,
                expected_rays=expected_rays_all_cubes(k),
                scenario1_mean_rays=s1.mean_rays,
                scenario2_mean_rays=s2.mean_rays,
            )
        )
        logger.info(
            f"k={k}: stop-at-all-cubes unseen={s1.mean_unseen:.4f}, "
            f"k ln k budget unseen={fixed.mean_unseen:.4f}"
        )
    return rows
