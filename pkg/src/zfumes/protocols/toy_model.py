"""Reshuffling toy model of Z-FUMES and the closed-form scaling estimates.

Between measurements every active sublattice is assumed to be completely
reshuffled: a unit-filled sublattice of K sites is found in configuration n with
the multinomial probability ``K! / (K^K n_1! ... n_K!)`` (or uniformly, for
comparison). Exact formulas use integer/rational arithmetic.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..config import Distribution, ToyConfig
from ..errors import BasisError, ConfigurationError, MeasurementBudgetExceeded
from ..logger import logger
from ..physics.fock import FockState, dim_unit_filling, enumerate_basis
from ..physics.measurement import LatticePartition, apply_locks, lockable_sites


def multinomial_prob_exact(n: Sequence[int]) -> Fraction:
    L = len(n)
    if L == 0 or sum(n) != L:
        raise BasisError(f"configuration {tuple(n)} is not unit filled")
    weight = math.prod(math.factorial(k) for k in n)
    return Fraction(math.factorial(L), L**L * weight)


def multinomial_prob(n: Sequence[int]) -> float:
    """Probability of configuration ``n`` when L balls fall into L boxes."""
    return float(multinomial_prob_exact(n))


def sample_configuration(
    L: int, distribution: Distribution, rng: np.random.Generator
) -> FockState:
    """Draw a unit-filled configuration of L sites.

    ``MULTINOMIAL`` drops L particles independently and uniformly into L sites;
    ``UNIFORM`` picks one of the ``C(2L-1, L)`` compositions with equal weight.
    """
    if L < 1:
        raise ConfigurationError(f"toy model needs L >= 1, got {L}")
    if L == 1:
        return (1,)
    if distribution is Distribution.MULTINOMIAL:
        return tuple(int(k) for k in rng.multinomial(L, np.full(L, 1.0 / L)))
    # stars and bars: L-1 bars among 2L-1 slots
    bars = np.sort(rng.choice(2 * L - 1, size=L - 1, replace=False))
    edges = np.concatenate(([-1], bars, [2 * L - 1]))
    return tuple(int(k) for k in np.diff(edges) - 1)


@dataclass
class ToyRun:
    """Measurement count and the sites locked at each measurement."""

    measurements: int
    lock_history: list[list[int]] = field(default_factory=list)
    outcomes: list[FockState] = field(default_factory=list)


def run_toy_zfumes(config: ToyConfig, rng: np.random.Generator) -> ToyRun:
    """Z-FUMES on reshuffled sublattices until every site is locked.

    Raises
    ------
    MeasurementBudgetExceeded
        If ``config.max_measurements`` measurements do not lock every site
    """
    partition = LatticePartition.full(config.L)
    run = ToyRun(measurements=0)
    while not partition.is_complete:
        if run.measurements >= config.max_measurements:
            raise MeasurementBudgetExceeded(
                f"toy Z-FUMES with L={config.L} not converged after {run.measurements} measurements"
            )
        occupations = [1] * config.L
        for start, stop in partition.sublattices:
            occupations[start:stop] = sample_configuration(stop - start, config.distribution, rng)
        outcome = tuple(occupations)
        sites = lockable_sites(outcome, partition)
        partition = apply_locks(partition, sites, outcome)
        run.measurements += 1
        run.lock_history.append(sorted(sites))
        run.outcomes.append(outcome)
    logger.debug(f"toy Z-FUMES L={config.L} converged after {run.measurements} measurements")
    return run


def run_toy_fumes(config: ToyConfig, rng: np.random.Generator) -> ToyRun:
    """Measure the whole reshuffled lattice until the unit-filled outcome appears."""
    target = (1,) * config.L
    run = ToyRun(measurements=0)
    while True:
        if run.measurements >= config.max_measurements:
            raise MeasurementBudgetExceeded(
                f"toy FUMES with L={config.L} not converged after {run.measurements} measurements"
            )
        outcome = sample_configuration(config.L, config.distribution, rng)
        run.measurements += 1
        if outcome == target:
            run.lock_history.append(list(range(config.L)))
            return run
        run.lock_history.append([])


def mf_exact_fraction(L: int) -> Fraction:
    return Fraction(L**L, math.factorial(L))


def mf_exact(L: int) -> float:
    """Expected FUMES measurement count ``L^L / L!``."""
    if L < 1:
        raise ConfigurationError(f"L must be positive, got {L}")
    return float(mf_exact_fraction(L))


def mf_asymptotic(L: int) -> float:
    """Stirling form ``e^L / sqrt(2 pi L)``."""
    if L < 1:
        raise ConfigurationError(f"L must be positive, got {L}")
    return math.exp(L) / math.sqrt(2 * math.pi * L)


def mz_bound(L: int) -> float:
    """Z-FUMES estimate ``16 sqrt(L / pi)``."""
    if L < 1:
        raise ConfigurationError(f"L must be positive, got {L}")
    return 16.0 * math.sqrt(L / math.pi)


def mz_bound_sum(L: int) -> float:
    """Discrete form ``sum_{K=1..L} 8 / sqrt(pi K)``."""
    if L < 1:
        raise ConfigurationError(f"L must be positive, got {L}")
    return float(sum(8.0 / math.sqrt(math.pi * K) for K in range(1, L + 1)))


def _unit_filling_count(N: int) -> int:
    return 1 if N == 0 else dim_unit_filling(N)


def p_lock_uniform_exact(site: int, L: int) -> Fraction:
    if not 0 <= site < L:
        raise BasisError(f"site {site} out of range for L={L}")
    return Fraction(
        _unit_filling_count(site) * _unit_filling_count(L - 1 - site), _unit_filling_count(L)
    )


def p_lock_uniform(site: int, L: int) -> float:
    """Probability that a uniformly drawn configuration allows locking ``site``.

    ``C(s) C(L-1-s) / C(L)`` for the 0-based site s, with ``C(0) = 1``; the edge
    sites give ``L / (2 (2L - 1))``.
    """
    return float(p_lock_uniform_exact(site, L))


def p_lock_uniform_stirling(site: int, L: int) -> float:
    """Large-L form ``(1/8) sqrt(L / (pi s (L-1-s)))`` for interior 0-based sites."""
    if not 0 < site < L - 1:
        raise BasisError(f"Stirling form only holds for interior sites, got {site} of {L}")
    return 0.125 * math.sqrt(L / (math.pi * site * (L - 1 - site)))


def p_avg(L: int) -> tuple[float, float]:
    """Site-averaged uniform lock probability: (exact, three-term expansion)."""
    if L < 3:
        raise ConfigurationError(f"p_avg needs L >= 3, got {L}")
    exact = sum(p_lock_uniform_exact(site, L) for site in range(L)) / L
    expansion = (
        0.125 * math.sqrt(math.pi / L)
        + 1.0 / (2 * L)
        - 1.0 / (2 * math.sqrt(math.pi) * L**1.5)
    )
    return float(exact), expansion


def exact_lock_probabilities(L: int, distribution: Distribution) -> np.ndarray:
    """Per-site lock probability on the full lattice by enumerating every outcome."""
    basis = enumerate_basis(L, L)
    partition = LatticePartition.full(L)
    totals = np.zeros(L)
    for state in basis.states:
        weight = (
            multinomial_prob(state)
            if distribution is Distribution.MULTINOMIAL
            else 1.0 / basis.dim
        )
        for site in lockable_sites(state, partition):
            totals[site] += weight
    return totals


def lock_histogram(
    L: int, distribution: Distribution, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Empirical per-site lock frequency over ``n_samples`` full-lattice draws."""
    partition = LatticePartition.full(L)
    counts = np.zeros(L)
    for _ in range(n_samples):
        for site in lockable_sites(sample_configuration(L, distribution, rng), partition):
            counts[site] += 1
    return counts / n_samples
