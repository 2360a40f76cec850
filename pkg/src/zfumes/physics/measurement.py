"""Projective site-occupation measurements and the Zeno-lock rule.

A site may be locked only when it holds one particle and the particles to its
left (inside its active sublattice) exactly fill the sites to its left. Under
unit filling that leaves the right-hand side unit filled as well, so every
sublattice created by a lock can still reach the target state.
"""

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from ..errors import BasisError, LockRuleError
from .fock import NORM_TOLERANCE, FockState, StateVector, same_basis

Sublattice = tuple[int, int]


@dataclass(frozen=True)
class LatticePartition:
    """Locked sites plus the contiguous active sublattices between them.

    Attributes
    ----------
    L : int
        Number of sites
    locked : Mapping[int, int]
        Locked site -> locked occupancy (always 1 here)
    sublattices : tuple of (start, stop)
        Half-open site ranges of unlocked sites, in lattice order
    """

    L: int
    locked: Mapping[int, int] = field(default_factory=dict)
    sublattices: tuple[Sublattice, ...] = ()

    @classmethod
    def full(cls, L: int) -> "LatticePartition":
        return cls(L=L, locked={}, sublattices=((0, L),))

    @classmethod
    def from_locked(cls, L: int, locked: Mapping[int, int]) -> "LatticePartition":
        """Partition whose sublattices are the maximal unlocked runs."""
        sublattices = []
        start = None
        for site in range(L + 1):
            free = site < L and site not in locked
            if free and start is None:
                start = site
            elif not free and start is not None:
                sublattices.append((start, site))
                start = None
        return cls(L=L, locked=dict(locked), sublattices=tuple(sublattices))

    @property
    def is_complete(self) -> bool:
        return not self.sublattices

    @property
    def locked_sites(self) -> frozenset[int]:
        return frozenset(self.locked)

    def __hash__(self) -> int:
        return hash((self.L, tuple(sorted(self.locked.items())), self.sublattices))


@dataclass(frozen=True)
class MeasurementOutcome:
    """Occupations over the full lattice at the time of a measurement."""

    occupations: FockState
    time: float = 0.0


def born_probabilities(state: StateVector) -> np.ndarray:
    """Outcome probabilities ``|amplitude_k|^2`` over the basis.

    Raises
    ------
    NormalizationError
        If the state is not normalized within 1e-9
    """
    state.require_normalized(NORM_TOLERANCE)
    return state.populations()


def sample_index(probabilities: np.ndarray, rng: np.random.Generator) -> int:
    """Draw a basis index; probabilities are renormalized against round-off."""
    p = np.clip(probabilities, 0.0, None)
    return int(rng.choice(len(p), p=p / p.sum()))


def measure_all_sites(
    state: StateVector, rng: np.random.Generator, time: float = 0.0
) -> tuple[MeasurementOutcome, StateVector]:
    """Simultaneous occupation measurement of every site with full collapse."""
    probabilities = born_probabilities(state)
    index = sample_index(probabilities, rng)
    outcome = state.basis.state_of(index)
    return MeasurementOutcome(occupations=outcome, time=time), state.basis.basis_vector(outcome)


def _check_consistent(outcome: Sequence[int], partition: LatticePartition) -> None:
    if len(outcome) != partition.L:
        raise LockRuleError(f"outcome has {len(outcome)} sites, partition has {partition.L}")
    for site, value in partition.locked.items():
        if outcome[site] != value:
            raise LockRuleError(f"locked site {site} reports {outcome[site]}, locked at {value}")
    for start, stop in partition.sublattices:
        if sum(outcome[start:stop]) != stop - start:
            raise LockRuleError(
                f"sublattice [{start}, {stop}) holds {sum(outcome[start:stop])} particles on {stop - start} sites"
            )


def lockable_sites(
    outcome: Union[MeasurementOutcome, Sequence[int]], partition: LatticePartition
) -> frozenset[int]:
    """Sites of the active sublattices that satisfy the lock rule for ``outcome``.

    Within a sublattice with local occupations ``(n_0, ..., n_{k-1})`` the local
    site j qualifies iff ``n_j == 1`` and ``n_0 + ... + n_{j-1} == j``.
    """
    occupations = outcome.occupations if isinstance(outcome, MeasurementOutcome) else tuple(outcome)
    _check_consistent(occupations, partition)
    sites = set()
    for start, stop in partition.sublattices:
        left = 0
        for j, site in enumerate(range(start, stop)):
            if occupations[site] == 1 and left == j:
                sites.add(site)
            left += occupations[site]
    return frozenset(sites)


def apply_locks(
    partition: LatticePartition,
    sites: Iterable[int],
    outcome: Union[MeasurementOutcome, Sequence[int]],
) -> LatticePartition:
    """Lock ``sites`` at occupancy 1 and split the sublattices around them.

    Raises
    ------
    LockRuleError
        If a site is already locked or a new sublattice would not be unit filled
    """
    occupations = outcome.occupations if isinstance(outcome, MeasurementOutcome) else tuple(outcome)
    sites = set(sites)
    if not sites:
        return partition
    already = sites & partition.locked_sites
    if already:
        raise LockRuleError(f"sites {sorted(already)} are already locked")
    if any(not 0 <= s < partition.L for s in sites):
        raise LockRuleError(f"sites {sorted(sites)} outside lattice of {partition.L} sites")
    if any(occupations[s] != 1 for s in sites):
        raise LockRuleError("only singly occupied sites can be locked")

    locked = dict(partition.locked)
    locked.update({s: 1 for s in sites})
    new = LatticePartition.from_locked(partition.L, locked)
    for start, stop in new.sublattices:
        if sum(occupations[start:stop]) != stop - start:
            raise LockRuleError(
                f"locking {sorted(sites)} leaves [{start}, {stop}) with {sum(occupations[start:stop])} particles on {stop - start} sites"
            )
    return new


def fidelity(state: StateVector, target: Union[FockState, StateVector]) -> float:
    """Squared overlap ``|<target|psi>|^2``."""
    if isinstance(target, StateVector):
        if not same_basis(state.basis, target.basis):
            raise BasisError("state and target live on different bases")
        overlap = np.vdot(target.amplitudes, state.amplitudes)
    else:
        overlap = state.amplitudes[state.basis.index_of(target)]
    return float(min(1.0, abs(overlap) ** 2))
