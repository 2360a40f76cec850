"""Bosonic occupation-number bases and state vectors.

A basis for N particles on L sites lists every composition of N into L parts in
lexicographically descending order, so ``(N, 0, ..., 0)`` has index 0 and
``(0, ..., 0, N)`` is last.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Protocol, Sequence, Union

import numpy as np

from ..config import MAX_PARTICLES, MAX_SITES
from ..errors import BasisError, DimensionOverflowError, NormalizationError

FockState = tuple[int, ...]

NORM_TOLERANCE = 1e-9

# dimensions beyond this cannot be addressed by int64 indices
_INT64_MAX = np.iinfo(np.int64).max


class Basis(Protocol):
    """Anything a StateVector can live on."""

    @property
    def dim(self) -> int: ...

    @property
    def key(self) -> tuple: ...


def same_basis(a: Basis, b: Basis) -> bool:
    return a is b or a.key == b.key


def _compositions(N: int, L: int) -> list[FockState]:
    """All compositions of N into L parts, lexicographically descending."""
    if L == 1:
        return [(N,)]
    states: list[FockState] = []
    for first in range(N, -1, -1):
        for rest in _compositions(N - first, L - 1):
            states.append((first, *rest))
    return states


@dataclass(frozen=True, eq=False)
class FockBasis:
    """Ordered Fock basis for N bosons on L sites.

    Attributes
    ----------
    L : int
        Number of sites
    N : int
        Number of particles
    states : tuple of FockState
        Basis states in canonical order
    occupations : np.ndarray
        ``(dim, L)`` array of occupations, row k is ``states[k]``
    """

    L: int
    N: int
    states: tuple[FockState, ...]
    occupations: np.ndarray = field(repr=False)
    _index: dict[FockState, int] = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return len(self.states)

    def index_of(self, state: Sequence[int]) -> int:
        key = tuple(int(n) for n in state)
        try:
            return self._index[key]
        except KeyError:
            raise BasisError(
                f"state {key} is not in the basis L={self.L}, N={self.N}"
            ) from None

    def state_of(self, index: int) -> FockState:
        if not 0 <= index < self.dim:
            raise BasisError(f"index {index} out of range for dimension {self.dim}")
        return self.states[index]

    def lookup(self, key: Union[Sequence[int], int]) -> Union[int, FockState]:
        """Index for a state, or state for an index."""
        if isinstance(key, (int, np.integer)):
            return self.state_of(int(key))
        return self.index_of(key)

    def basis_vector(self, state: Sequence[int]) -> "StateVector":
        amplitudes = np.zeros(self.dim, dtype=complex)
        amplitudes[self.index_of(state)] = 1.0
        return StateVector(self, amplitudes)

    def mott_state(self) -> FockState:
        """The unit-filled state (1, ..., 1); requires N == L."""
        if self.N != self.L:
            raise BasisError(f"no unit-filled state for L={self.L}, N={self.N}")
        return (1,) * self.L

    @property
    def key(self) -> tuple:
        return ("fock", self.L, self.N)


def dim_unit_filling(N: int) -> int:
    """Number of ways to place N bosons on N sites, ``(2N)! / (2 N!^2)``.

    Raises
    ------
    DimensionOverflowError
        If the count does not fit a 64-bit index
    """
    if N < 1:
        raise ValueError("dim_unit_filling requires N >= 1")
    count = comb(2 * N, N) // 2
    if count > _INT64_MAX:
        raise DimensionOverflowError(f"C({N}) = {count} exceeds the int64 index range")
    return count


@lru_cache(maxsize=None)
def enumerate_basis(
    L: int, N: int, max_sites: int = MAX_SITES, max_particles: int = MAX_PARTICLES
) -> FockBasis:
    """Enumerate the Fock basis of N bosons on L sites.

    Parameters
    ----------
    L : int
        Number of sites, at least 1
    N : int
        Number of particles, at least 0
    max_sites, max_particles : int
        Dimension guard

    Returns
    -------
    FockBasis
        Basis of ``C(N+L-1, N)`` states in descending lexicographic order
    """
    if L < 1:
        raise BasisError(f"a lattice needs at least one site, got L={L}")
    if N < 0:
        raise BasisError(f"particle number must be non-negative, got N={N}")
    if L > max_sites or N > max_particles:
        raise DimensionOverflowError(
            f"L={L}, N={N} exceeds the cap L<={max_sites}, N<={max_particles}"
        )

    states = tuple(_compositions(N, L))
    occupations = np.array(states, dtype=np.uint8).reshape(len(states), L)
    index = {state: k for k, state in enumerate(states)}
    return FockBasis(L=L, N=N, states=states, occupations=occupations, _index=index)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitudes over a Fock (or labeled) basis."""

    basis: Basis
    amplitudes: np.ndarray

    def __post_init__(self):
        amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if amplitudes.shape != (self.basis.dim,):
            raise BasisError(
                f"amplitude length {amplitudes.shape} does not match basis dimension {self.basis.dim}"
            )
        object.__setattr__(self, "amplitudes", amplitudes)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol: float = NORM_TOLERANCE) -> bool:
        return abs(self.norm - 1.0) <= tol

    def require_normalized(self, tol: float = NORM_TOLERANCE) -> "StateVector":
        if not self.is_normalized(tol):
            raise NormalizationError(f"state norm {self.norm:.12g} differs from 1")
        return self

    def normalized(self) -> "StateVector":
        norm = self.norm
        if not np.isfinite(norm) or norm == 0.0:
            raise NormalizationError(f"cannot normalize a state of norm {norm}")
        return StateVector(self.basis, self.amplitudes / norm)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2
