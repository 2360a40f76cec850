"""State transfer on random Hamiltonians with commuting degenerate observables.

The Hilbert space of dimension ``B**L`` is labeled by digit tuples
``(q_0, ..., q_{L-1})`` with ``q_0`` the most significant digit. Observable
``Q_i`` is diagonal with eigenvalue ``q_i``, so every eigenvalue is
``B**(L-1)``-fold degenerate and a joint measurement resolves a single state.
Locking a set of observables confines the evolution to
``exp(-i P H P t)`` on the subspace of matching labels.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np

from ..config import MAX_GENERAL_DIM, Protocol, StrategyConfig
from ..errors import (
    BasisError,
    ConfigurationError,
    DimensionOverflowError,
    ZeroCouplingError,
)
from ..logger import logger
from ..physics.bose_hubbard import HermitianOperator, Propagator
from ..physics.fock import StateVector
from ..physics.measurement import born_probabilities, sample_index
from .commons import FidelitySampler, MeasurementEvent, TrajectoryRecord, scan_grid, scan_peak, success_series

Label = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class LabeledBasis:
    """Mixed-radix labels of ``B**L`` orthonormal states."""

    L: int
    B: int
    labels: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.B**self.L

    @property
    def key(self) -> tuple:
        return ("labeled", self.L, self.B)

    def index_of(self, label: Sequence[int]) -> int:
        label = tuple(int(q) for q in label)
        if len(label) != self.L or any(not 0 <= q < self.B for q in label):
            raise BasisError(f"label {label} is not a valid (L={self.L}, B={self.B}) label")
        index = 0
        for q in label:
            index = index * self.B + q
        return index

    def label_of(self, index: int) -> Label:
        if not 0 <= index < self.dim:
            raise BasisError(f"index {index} out of range for dimension {self.dim}")
        return tuple(int(q) for q in self.labels[index])

    def basis_vector(self, label: Sequence[int]) -> StateVector:
        amplitudes = np.zeros(self.dim, dtype=complex)
        amplitudes[self.index_of(label)] = 1.0
        return StateVector(self, amplitudes)


@lru_cache(maxsize=64)
def labeled_basis(L: int, B: int) -> LabeledBasis:
    if L < 1 or B < 2:
        raise ConfigurationError(f"need L >= 1 and B >= 2, got L={L}, B={B}")
    if B**L > MAX_GENERAL_DIM:
        raise DimensionOverflowError(f"B**L = {B**L} exceeds cap {MAX_GENERAL_DIM}")
    labels = np.array(np.unravel_index(np.arange(B**L), (B,) * L)).T
    return LabeledBasis(L=L, B=B, labels=labels)


@dataclass(frozen=True)
class ObservableSet:
    """Commuting diagonal observables ``Q_0, ..., Q_{L-1}``."""

    basis: LabeledBasis
    operators: tuple[HermitianOperator, ...]

    def __len__(self) -> int:
        return len(self.operators)


@dataclass(frozen=True)
class GeneralLockState:
    """Locked observables and their locked eigenvalues."""

    locked: Mapping[int, int] = field(default_factory=dict)

    def mask(self, basis: LabeledBasis) -> np.ndarray:
        selected = np.ones(basis.dim, dtype=bool)
        for i, value in self.locked.items():
            selected &= basis.labels[:, i] == value
        return selected

    def subspace_dim(self, basis: LabeledBasis) -> int:
        return basis.B ** (basis.L - len(self.locked))

    def admits(self, label: Sequence[int]) -> bool:
        return all(label[i] == value for i, value in self.locked.items())

    def with_lock(self, observable: int, value: int) -> "GeneralLockState":
        if observable in self.locked:
            raise ConfigurationError(f"observable {observable} is already locked")
        return GeneralLockState({**self.locked, observable: value})

    @property
    def key(self) -> tuple:
        return tuple(sorted(self.locked.items()))


def sample_gue(dim: int, rng: np.random.Generator, basis=None) -> HermitianOperator:
    """GUE matrix with element variance ``1/dim`` (spectrum close to ``[-2, 2]``)."""
    if dim < 2:
        raise ConfigurationError(f"GUE sample needs dim >= 2, got {dim}")
    if basis is None:
        basis = LabeledBasis(L=1, B=dim, labels=np.arange(dim)[:, None])
    elif basis.dim != dim:
        raise BasisError(f"basis dimension {basis.dim} does not match {dim}")
    M = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    H = (M + M.conj().T) / (2.0 * math.sqrt(dim))
    return HermitianOperator(basis, H)


def build_observables(L: int, B: int) -> tuple[LabeledBasis, ObservableSet]:
    basis = labeled_basis(L, B)
    operators = tuple(
        HermitianOperator.from_diagonal(basis, basis.labels[:, i].astype(float)) for i in range(L)
    )
    return basis, ObservableSet(basis, operators)


def measure_observables(
    state: StateVector, obs: ObservableSet, rng: np.random.Generator
) -> tuple[Label, StateVector]:
    """Joint measurement of every observable with full collapse."""
    index = sample_index(born_probabilities(state), rng)
    label = obs.basis.label_of(index)
    return label, obs.basis.basis_vector(label)


@dataclass(frozen=True)
class _Subspace:
    """Rows of a parent basis kept by a lock."""

    parent_key: tuple
    lock_key: tuple
    dim: int

    @property
    def key(self) -> tuple:
        return ("subspace", self.parent_key, self.lock_key)


class ZenoDynamics:
    """Per-lock propagators of ``P H P`` restricted to the locked subspace."""

    def __init__(self, H: HermitianOperator, basis: LabeledBasis):
        self.H = H.dense()
        self.basis = basis
        self._cache: dict[tuple, tuple[np.ndarray, Propagator]] = {}

    def __call__(self, lock: GeneralLockState) -> tuple[np.ndarray, Propagator]:
        if lock.key not in self._cache:
            indices = np.flatnonzero(lock.mask(self.basis))
            block = self.H[np.ix_(indices, indices)]
            subspace = _Subspace(self.basis.key, lock.key, len(indices))
            self._cache[lock.key] = (
                indices,
                Propagator.from_operator(HermitianOperator(subspace, block)),
            )
        return self._cache[lock.key]


def coupling_check(
    current: StateVector,
    target: Sequence[int],
    H: HermitianOperator,
    candidate: GeneralLockState,
    epsilon_o: float,
    horizon: float,
    step: float = 0.05,
    dynamics: Optional[ZenoDynamics] = None,
) -> bool:
    """Whether the target stays reachable with ``candidate`` locked.

    True iff ``max_t |<target| exp(-i P H P t) |psi>| > epsilon_o`` over a grid
    on ``[0, horizon]``.
    """
    basis = current.basis
    if not candidate.admits(target):
        return False
    dynamics = dynamics or ZenoDynamics(H, basis)
    indices, propagator = dynamics(candidate)
    amplitudes = current.amplitudes[indices]
    if np.linalg.norm(amplitudes) == 0.0:
        return False
    target_amplitudes = np.zeros(len(indices), dtype=complex)
    target_amplitudes[np.searchsorted(indices, basis.index_of(target))] = 1.0
    overlaps = np.abs(propagator.overlap_series(amplitudes, target_amplitudes, scan_grid(horizon, step)))
    return bool(overlaps.max() > epsilon_o)


def run_general_trajectory(
    H: HermitianOperator,
    obs: ObservableSet,
    target: Sequence[int],
    protocol: Protocol,
    epsilon_o: float,
    config: StrategyConfig,
    rng: np.random.Generator,
    coupling_horizon: float = 20.0,
    max_measurements: Optional[int] = None,
) -> TrajectoryRecord:
    """FUMES or Z-FUMES transfer from a random basis state to ``target``.

    Z-FUMES admits locks greedily in ascending observable order, each one only
    if :func:`coupling_check` passes with all locks admitted so far. Candidates
    that fail are re-evaluated at every later measurement.
    """
    basis = obs.basis
    target = tuple(int(q) for q in target)
    target_index = basis.index_of(target)
    if basis.dim < 2:
        raise ConfigurationError("state transfer needs at least two states")
    budget = max_measurements or config.max_measurements

    start = int(rng.integers(basis.dim - 1))
    start += start >= target_index
    state = basis.basis_vector(basis.label_of(start))

    dynamics = ZenoDynamics(H, basis)
    lock = GeneralLockState()
    sampler = FidelitySampler(config.grid_step, config.max_time)
    events: list[MeasurementEvent] = []
    t = 0.0
    converged_at = None
    stalled = False

    while len(events) < budget:
        indices, propagator = dynamics(lock)
        local = state.amplitudes[indices]
        local_target = np.zeros(len(indices), dtype=complex)
        local_target[np.searchsorted(indices, target_index)] = 1.0
        scan = [(propagator, local, local_target)]
        try:
            wait = scan_peak(scan, config)
        except ZeroCouplingError:
            logger.warning(f"target decoupled under locks {dict(lock.locked)}; trajectory stalled")
            stalled = True
            break
        sampler.fill(t, t + wait, lambda tau: success_series(scan, tau))
        amplitudes = np.zeros(basis.dim, dtype=complex)
        amplitudes[indices] = propagator.evolve(local, wait)
        t += wait

        label, state = measure_observables(StateVector(basis, amplitudes), obs, rng)
        admitted: list[int] = []
        if protocol is Protocol.ZFUMES:
            for i in range(basis.L):
                if i in lock.locked or label[i] != target[i]:
                    continue
                candidate = lock.with_lock(i, target[i])
                if coupling_check(
                    state, target, H, candidate, epsilon_o, coupling_horizon, dynamics=dynamics
                ):
                    lock = candidate
                    admitted.append(i)
        if events and t <= events[-1].time:
            t = float(np.nextafter(events[-1].time, np.inf))
        events.append(MeasurementEvent(time=t, outcome=list(label), locked=admitted))
        logger.debug(f"t={t:.3f} M={len(events)} label={label} locked={sorted(lock.locked)}")
        if label == target:
            converged_at = t
            break
    else:
        stalled = True
        logger.warning(f"no convergence within {budget} measurements")

    if converged_at is not None:
        sampler.fill_constant(converged_at, 1.0)
    return TrajectoryRecord(
        protocol=protocol.value,
        sites=basis.L,
        grid_step=config.grid_step,
        fidelity_series=sampler.series(),
        events=events,
        converged_at=converged_at,
        measurement_count=len(events),
        stalled=stalled,
    )


def mz_general(B: int, L: int) -> tuple[float, float]:
    """Z-FUMES estimate ``B * H_L`` and its large-L form ``B ln L``."""
    if B < 2 or L < 1:
        raise ConfigurationError(f"need B >= 2 and L >= 1, got B={B}, L={L}")
    harmonic = math.fsum(1.0 / K for K in range(1, L + 1))
    return B * harmonic, B * math.log(L)


def mf_general(B: int, L: int) -> float:
    """FUMES estimate ``B**L`` for uniform outcome statistics."""
    if B < 2 or L < 1:
        raise ConfigurationError(f"need B >= 2 and L >= 1, got B={B}, L={L}")
    return float(B**L)
