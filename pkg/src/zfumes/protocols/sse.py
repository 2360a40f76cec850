"""Continuous homodyne monitoring of site occupations.

The diffusive stochastic Schrodinger equation is integrated with Euler-Maruyama
on its unnormalized (linear) form and renormalized after every step::

    d|psi> = dt [ -iH + sum_j ( -(g_j/2) c_j^2 + I_j c_j ) ] |psi>
    I_j    = g_j <c_j + c_j+> + sqrt(g_j) dW_j / dt,   dW_j ~ Normal(0, dt)

with ``c_j = n_j``. During a measurement window the lattice is quenched to
``J = 0, U = J_d`` so every ``n_j`` is conserved.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..config import BHParams, SSEConfig, StrategyConfig
from ..errors import ConfigurationError, NumericalInstabilityError
from ..logger import logger
from ..physics.bose_hubbard import (
    HermitianOperator,
    Propagator,
    build_hamiltonian,
    number_operator,
    superfluid_state,
)
from ..physics.fock import FockBasis, StateVector, enumerate_basis
from ..physics.measurement import (
    LatticePartition,
    MeasurementOutcome,
    apply_locks,
    lockable_sites,
)
from .commons import (
    FidelitySampler,
    HomodyneRecord,
    MeasurementEvent,
    TrajectoryRecord,
    scan_peak,
    success_series,
)

# per-step norm growth beyond this factor is treated as a blow-up
_BLOWUP = 1e6


class HomodyneIntegrator:
    """Euler-Maruyama stepper for a fixed Hamiltonian and measurement set.

    Parameters
    ----------
    hamiltonian : HermitianOperator
        Generator of the coherent part
    meas_ops : sequence of (HermitianOperator, float)
        Measured operators ``c_j`` with strengths ``gamma_j``
    dt : float
        Time step
    """

    def __init__(
        self,
        hamiltonian: HermitianOperator,
        meas_ops: Sequence[tuple[HermitianOperator, float]],
        dt: float,
    ):
        if dt <= 0:
            raise ConfigurationError(f"dt must be positive, got {dt}")
        self.dt = dt
        self.gammas = np.array([gamma for _, gamma in meas_ops], dtype=float)
        if np.any(self.gammas < 0):
            raise ConfigurationError("measurement strengths must be non-negative")
        self._diagonal_h = hamiltonian.diagonal() if hamiltonian.is_diagonal else None
        self._h = hamiltonian.matrix
        self._ops = [op for op, _ in meas_ops]
        self._diagonal_c = all(op.is_diagonal for op in self._ops)
        if self._diagonal_c and self._ops:
            self._c = np.real(np.array([op.diagonal() for op in self._ops]))
        else:
            self._c = None
        self._sqrt_gammas = np.sqrt(self.gammas)

    def _coherent(self, psi: np.ndarray) -> np.ndarray:
        if self._diagonal_h is not None:
            return -1j * self._diagonal_h * psi
        return -1j * (self._h @ psi)

    def linear_step(
        self, psi: np.ndarray, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        """Euler-Maruyama update of the linear equation, before renormalization."""
        dt = self.dt
        increment = self._coherent(psi)
        if not len(self.gammas):
            currents = np.zeros(0)
        elif self._c is not None:
            populations = np.abs(psi) ** 2
            expectations = self._c @ populations
            noise = rng.normal(0.0, np.sqrt(dt), size=len(self.gammas))
            currents = 2.0 * self.gammas * expectations + self._sqrt_gammas * noise / dt
            coefficient = (
                -0.5 * self.gammas[:, None] * self._c**2 + currents[:, None] * self._c
            ).sum(axis=0)
            increment = increment + coefficient * psi
        else:
            applied = [op.apply(psi) for op in self._ops]
            expectations = np.array([np.real(np.vdot(psi, c_psi)) for c_psi in applied])
            noise = rng.normal(0.0, np.sqrt(dt), size=len(self.gammas))
            currents = 2.0 * self.gammas * expectations + self._sqrt_gammas * noise / dt
            for op, c_psi, gamma, current in zip(self._ops, applied, self.gammas, currents):
                increment = increment - 0.5 * gamma * op.apply(c_psi) + current * c_psi
        return psi + dt * increment, currents

    def step(self, psi: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Advance normalized amplitudes by one step; returns (psi, currents)."""
        updated, currents = self.linear_step(psi, rng)
        norm = np.linalg.norm(updated)
        if not np.isfinite(norm) or norm == 0.0 or norm > _BLOWUP:
            raise NumericalInstabilityError(
                f"SSE step diverged (norm {norm:.3g}, dt={self.dt}, max gamma={self.gammas.max(initial=0):.3g})"
            )
        return updated / norm, currents


def sse_step(
    state: StateVector,
    H: HermitianOperator,
    meas_ops: Sequence[tuple[HermitianOperator, float]],
    dt: float,
    rng: np.random.Generator,
) -> tuple[StateVector, np.ndarray]:
    """One Euler-Maruyama step of the homodyne SSE followed by renormalization."""
    state.require_normalized()
    psi, currents = HomodyneIntegrator(H, meas_ops, dt).step(state.amplitudes, rng)
    return StateVector(state.basis, psi), currents


@dataclass
class WindowResult:
    """Outcome of a measurement window."""

    outcome: MeasurementOutcome
    state: StateVector
    record: HomodyneRecord
    resolved: bool
    duration: float


StepObserver = Callable[[float, np.ndarray], None]


def sector_mask(basis: FockBasis, partition: LatticePartition) -> np.ndarray:
    """Basis states with locked sites at their value and unit-filled sublattices."""
    occupations = basis.occupations.astype(int)
    mask = np.ones(basis.dim, dtype=bool)
    for site, value in partition.locked.items():
        mask &= occupations[:, site] == value
    for start, stop in partition.sublattices:
        mask &= occupations[:, start:stop].sum(axis=1) == stop - start
    return mask


def project_sector(state: StateVector, partition: LatticePartition) -> StateVector:
    amplitudes = np.where(sector_mask(state.basis, partition), state.amplitudes, 0.0)
    return StateVector(state.basis, amplitudes).normalized()


def window_step(config: SSEConfig) -> float:
    """Integrator step inside measurement windows, which run at gamma only."""
    if config.gamma <= 0:
        return config.dt
    return min(config.dt if config.ideal_lock else 1e-3, 0.1 / config.gamma)


def quench_hamiltonian(basis: FockBasis, config: SSEConfig) -> HermitianOperator:
    params = BHParams(L=basis.L, N=basis.N, J=0.0, U=config.j_d)
    return build_hamiltonian(params, basis)


def _collapsed(psi: np.ndarray, purity_cut: float) -> bool:
    return float(np.max(np.abs(psi) ** 2)) >= 1.0 - purity_cut


def measurement_window(
    state: StateVector,
    config: SSEConfig,
    rng: np.random.Generator,
    partition: Optional[LatticePartition] = None,
    observer: Optional[StepObserver] = None,
) -> WindowResult:
    """Monitor the lattice at strength gamma until the state collapses.

    With ideal locks the state is projected onto the locked sector first and only
    unlocked sites are monitored. With finite locks nothing is projected and every
    site is read out, so population that leaked out of a locked site shows up as
    an outcome outside the sector. The quenched Hamiltonian conserves every
    occupation in both cases. The window closes when the largest basis
    population exceeds ``1 - purity_cut`` or after ``max_window``; a timeout is
    returned with ``resolved=False``.
    """
    basis = state.basis
    partition = partition or LatticePartition.full(basis.L)
    if partition.locked and config.ideal_lock:
        state = project_sector(state, partition)
    psi = state.amplitudes
    record = HomodyneRecord()
    if config.ideal_lock:
        monitored = [site for start, stop in partition.sublattices for site in range(start, stop)]
    else:
        monitored = list(range(basis.L))

    def result(psi: np.ndarray, resolved: bool, elapsed: float) -> WindowResult:
        index = int(np.argmax(np.abs(psi) ** 2))
        outcome = MeasurementOutcome(occupations=basis.state_of(index), time=elapsed)
        return WindowResult(outcome, StateVector(basis, psi), record, resolved, elapsed)

    if _collapsed(psi, config.purity_cut):
        return result(psi, True, 0.0)

    hamiltonian = quench_hamiltonian(basis, config)
    if config.gamma <= 0 or not monitored:
        # nothing is monitored: only phases accumulate for the whole window
        psi = np.exp(-1j * hamiltonian.diagonal() * config.max_window) * psi
        if observer is not None:
            observer(config.max_window, psi)
        return result(psi, False, config.max_window)

    dt = window_step(config)
    integrator = HomodyneIntegrator(
        hamiltonian, [(number_operator(site, basis), config.gamma) for site in monitored], dt
    )
    n_steps = int(np.ceil(config.max_window / dt))
    currents_full = np.zeros(basis.L)
    for k in range(1, n_steps + 1):
        psi, currents = integrator.step(psi, rng)
        elapsed = k * dt
        if config.record_stride and k % config.record_stride == 0:
            currents_full[monitored] = currents
            record.times.append(elapsed)
            record.currents.append(currents_full.tolist())
        if observer is not None:
            observer(elapsed, psi)
        if _collapsed(psi, config.purity_cut):
            return result(psi, True, elapsed)
    logger.debug(f"measurement window timed out after {n_steps * dt:.3f}")
    return result(psi, False, n_steps * dt)


class _GridObserver:
    """Writes the target fidelity into a sampler whenever a grid time is crossed."""

    def __init__(self, sampler: FidelitySampler, target_index: int, max_time: float):
        self.sampler = sampler
        self.target_index = target_index
        self.max_time = max_time
        self.offset = 0.0

    def __call__(self, elapsed: float, psi: np.ndarray):
        now = self.offset + elapsed
        self.sampler.fill_constant(
            now - self.sampler.step + 1e-12,
            float(abs(psi[self.target_index]) ** 2),
            stop=min(now, self.max_time) + 1e-12,
        )


def _zeno_propagator(params: BHParams, partition: LatticePartition) -> Propagator:
    """Full-lattice ``exp(-i P H P t)`` for the sector selected by ``partition``."""
    key = ("zeno", params.L, params.N, params.J, params.U, tuple(sorted(partition.locked)))

    def build() -> HermitianOperator:
        basis = enumerate_basis(params.L, params.N)
        hamiltonian = build_hamiltonian(params, basis)
        projector = sector_mask(basis, partition).astype(float)
        matrix = hamiltonian.matrix.multiply(projector[:, None]).multiply(projector[None, :])
        return HermitianOperator(basis, matrix, params)

    return Propagator.cached(key, build)


def _consistent(outcome, partition: LatticePartition) -> bool:
    occupations = outcome.occupations
    if any(occupations[site] != value for site, value in partition.locked.items()):
        return False
    return all(sum(occupations[start:stop]) == stop - start for start, stop in partition.sublattices)


def run_continuous_trajectory(
    params: BHParams,
    sse_config: SSEConfig,
    strategy_config: StrategyConfig,
    rng: np.random.Generator,
) -> TrajectoryRecord:
    """Z-FUMES with homodyne measurement windows in place of projections.

    Free evolution runs at ``J = J_d``; windows at peak times decide outcomes.
    Locked sites are then either enforced as exact projections
    (``ideal_lock``) or monitored at ``gamma_lock`` during free evolution. A
    finite-lock window that reads out a leaked configuration releases every lock.
    Protocol time includes the window durations, and a window that completes the
    target after ``max_time`` does not count as convergence.
    """
    if not params.unit_filling:
        raise ConfigurationError(
            f"Mott target needs unit filling, got L={params.L}, N={params.N}"
        )
    free = params.model_copy(update={"J": sse_config.j_d})
    L = params.L
    basis = enumerate_basis(L, L)
    mott = (1,) * L
    target_index = basis.index_of(mott)
    target = basis.basis_vector(mott).amplitudes
    max_time = strategy_config.max_time

    sampler = FidelitySampler(strategy_config.grid_step, max_time)
    observer = _GridObserver(sampler, target_index, max_time)
    keep_record = sse_config.record_stride > 0
    homodyne = HomodyneRecord() if keep_record else None

    partition = LatticePartition.full(L)
    state = superfluid_state(free, basis)
    events: list[MeasurementEvent] = []
    t = 0.0
    converged_at = 0.0 if abs(state.amplitudes[target_index]) ** 2 >= 1.0 - 1e-12 else None

    while converged_at is None and t < max_time and len(events) < strategy_config.max_measurements:
        propagator = _zeno_propagator(free, partition)
        scan = [(propagator, state.amplitudes, target)]
        wait = min(scan_peak(scan, strategy_config), max_time - t)

        if sse_config.ideal_lock or not partition.locked:
            sampler.fill(t, t + wait, lambda tau: success_series(scan, tau))
            state = StateVector(basis, propagator.evolve(state.amplitudes, wait))
        else:
            state = _monitored_free_evolution(
                state, free, partition, sse_config, wait, rng, observer, t, homodyne
            )
        t += wait
        if t >= max_time:
            break

        observer.offset = t
        window = measurement_window(state, sse_config, rng, partition, observer)
        state = window.state
        t += window.duration
        if homodyne is not None:
            homodyne.times.extend(t - window.duration + s for s in window.record.times)
            homodyne.currents.extend(window.record.currents)

        outcome = window.outcome
        newly_locked: frozenset[int] = frozenset()
        resolved = window.resolved
        if resolved and not _consistent(outcome, partition):
            logger.warning(
                f"window outcome {outcome.occupations} left the locked sector; locks released"
            )
            partition = LatticePartition.full(L)
            resolved = False
        if resolved:
            newly_locked = lockable_sites(outcome, partition)
            partition = apply_locks(partition, newly_locked, outcome)
            if sse_config.ideal_lock and partition.locked:
                state = project_sector(state, partition)
        if events and t <= events[-1].time:
            t = np.nextafter(events[-1].time, np.inf)
        events.append(
            MeasurementEvent(
                time=t,
                outcome=list(outcome.occupations),
                locked=sorted(newly_locked),
                resolved=resolved,
                duration=window.duration,
            )
        )
        logger.debug(
            f"t={t:.3f} window={window.duration:.3f} outcome={outcome.occupations} "
            f"resolved={resolved} locked={sorted(newly_locked)}"
        )
        if resolved and partition.is_complete and t <= max_time:
            converged_at = t

    if converged_at is not None:
        sampler.fill_constant(converged_at, 1.0)

    return TrajectoryRecord(
        protocol="zfumes",
        sites=L,
        grid_step=strategy_config.grid_step,
        fidelity_series=sampler.series(),
        events=events,
        converged_at=converged_at,
        measurement_count=len(events),
        homodyne=homodyne,
    )


def _monitored_free_evolution(
    state: StateVector,
    free: BHParams,
    partition: LatticePartition,
    config: SSEConfig,
    duration: float,
    rng: np.random.Generator,
    observer: _GridObserver,
    start: float,
    homodyne: Optional[HomodyneRecord],
) -> StateVector:
    """Tunneling at ``J_d`` with the locked sites monitored at ``gamma_lock``."""
    basis = state.basis
    hamiltonian = build_hamiltonian(free, basis)
    locked = sorted(partition.locked)
    integrator = HomodyneIntegrator(
        hamiltonian, [(number_operator(site, basis), config.gamma_lock) for site in locked], config.dt
    )
    observer.offset = start
    psi = state.amplitudes
    n_steps = int(round(duration / config.dt))
    currents_full = np.zeros(basis.L)
    for k in range(1, n_steps + 1):
        psi, currents = integrator.step(psi, rng)
        observer(k * config.dt, psi)
        if homodyne is not None and k % config.record_stride == 0:
            currents_full[:] = 0.0
            currents_full[locked] = currents
            homodyne.times.append(start + k * config.dt)
            homodyne.currents.append(currents_full.tolist())
    return StateVector(basis, psi)


__all__ = [
    "HomodyneIntegrator",
    "WindowResult",
    "measurement_window",
    "run_continuous_trajectory",
    "sse_step",
]
