"""FUMES and Z-FUMES with projective measurements on the Bose-Hubbard chain.

The trajectory state is kept as a product over the active sublattices. Every
block is a unit-filled chain evolving under its own cached propagator; locked
sites are exact constraints holding one particle each.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import expm_multiply

from ..config import BHParams, Protocol, StrategyConfig
from ..errors import ConfigurationError
from ..logger import logger
from ..physics.bose_hubbard import Propagator, build_hamiltonian, superfluid_state
from ..physics.fock import FockState, StateVector, enumerate_basis
from ..physics.measurement import (
    LatticePartition,
    apply_locks,
    fidelity,
    lockable_sites,
    measure_all_sites,
)
from .commons import (
    FidelitySampler,
    MeasurementEvent,
    TrajectoryRecord,
    find_measurement_time,
    scan_peak,
    success_series,
)

# fidelity at which a state counts as the target
TARGET_TOLERANCE = 1e-12


@dataclass
class SublatticeBlock:
    """Local state of one active sublattice ``[start, stop)``."""

    start: int
    stop: int
    propagator: Propagator
    state: StateVector

    @property
    def target(self) -> np.ndarray:
        vector = np.zeros(self.state.basis.dim, dtype=complex)
        vector[self.state.basis.index_of((1,) * (self.stop - self.start))] = 1.0
        return vector

    def as_scan_block(self):
        return (self.propagator, self.state.amplitudes, self.target)

    def evolve(self, t: float):
        self.state = StateVector(self.state.basis, self.propagator.evolve(self.state.amplitudes, t))


def _blocks_for(
    partition: LatticePartition, outcome: FockState, params: BHParams
) -> list[SublatticeBlock]:
    blocks = []
    for start, stop in partition.sublattices:
        sites = stop - start
        basis = enumerate_basis(sites, sites)
        blocks.append(
            SublatticeBlock(
                start=start,
                stop=stop,
                propagator=Propagator.for_bose_hubbard(params.sublattice(sites)),
                state=basis.basis_vector(outcome[start:stop]),
            )
        )
    return blocks


def _measure_blocks(
    blocks: list[SublatticeBlock], partition: LatticePartition, rng: np.random.Generator
) -> FockState:
    occupations = [1] * partition.L
    for block in blocks:
        local, collapsed = measure_all_sites(block.state.normalized(), rng)
        occupations[block.start : block.stop] = local.occupations
        block.state = collapsed
    return tuple(occupations)


def run_trajectory(
    params: BHParams, config: StrategyConfig, rng: np.random.Generator
) -> TrajectoryRecord:
    """Run one FUMES or Z-FUMES trajectory from the superfluid state.

    Parameters
    ----------
    params : BHParams
        Chain parameters; ``U`` applies during free evolution
    config : StrategyConfig
        Protocol, peak rule and time limits
    rng : np.random.Generator
        Private random stream of this trajectory

    Returns
    -------
    TrajectoryRecord
        Events, fidelity on the grid, convergence time and measurement count
    """
    if not params.unit_filling:
        raise ConfigurationError(
            f"Mott target needs unit filling, got L={params.L}, N={params.N}"
        )
    if params.J <= 0:
        raise ConfigurationError(f"free evolution needs J > 0, got J={params.J}")

    L = params.L
    mott = (1,) * L
    basis = enumerate_basis(L, L)
    sampler = FidelitySampler(config.grid_step, config.max_time)
    events: list[MeasurementEvent] = []
    partition = LatticePartition.full(L)
    blocks = [
        SublatticeBlock(0, L, Propagator.for_bose_hubbard(params), superfluid_state(params, basis))
    ]

    t = 0.0
    converged_at = None
    if fidelity(blocks[0].state, mott) >= 1.0 - TARGET_TOLERANCE:
        converged_at = 0.0

    while converged_at is None and len(events) < config.max_measurements:
        scan = [block.as_scan_block() for block in blocks]
        wait = scan_peak(scan, config)
        if t + wait > config.max_time:
            sampler.fill(t, config.max_time + config.grid_step, lambda tau: success_series(scan, tau))
            t = config.max_time
            break
        sampler.fill(t, t + wait, lambda tau: success_series(scan, tau))

        for block in blocks:
            block.evolve(wait)
        t += wait

        outcome = _measure_blocks(blocks, partition, rng)
        newly_locked: frozenset[int] = frozenset()
        if config.protocol is Protocol.ZFUMES:
            newly_locked = lockable_sites(outcome, partition)
            partition = apply_locks(partition, newly_locked, outcome)
        events.append(MeasurementEvent(time=t, outcome=list(outcome), locked=sorted(newly_locked)))
        logger.debug(f"t={t:.3f} M={len(events)} outcome={outcome} locked={sorted(newly_locked)}")

        if outcome == mott:
            converged_at = t
            break
        if config.protocol is Protocol.ZFUMES:
            blocks = _blocks_for(partition, outcome, params)

    if converged_at is not None:
        sampler.fill_constant(converged_at, 1.0)

    return TrajectoryRecord(
        protocol=config.protocol.value,
        sites=L,
        grid_step=config.grid_step,
        fidelity_series=sampler.series(),
        events=events,
        converged_at=converged_at,
        measurement_count=len(events),
    )


def fidelity_envelope(params: BHParams, times: np.ndarray) -> np.ndarray:
    """Mott fidelity of the superfluid under free evolution, no measurements."""
    basis = enumerate_basis(params.L, params.N)
    state = superfluid_state(params, basis)
    propagator = Propagator.for_bose_hubbard(params)
    target = basis.basis_vector(basis.mott_state()).amplitudes
    return success_series([(propagator, state.amplitudes, target)], np.asarray(times, dtype=float))


def linear_ramp(
    params: BHParams, T_total: float, U_final_over_J: float = 30.0, n_steps: int = 200
) -> float:
    """Final Mott fidelity after ramping U linearly from 0 to ``U_final_over_J * J``.

    The ramp is split into ``n_steps`` slices of constant U (slice midpoints),
    each propagated exactly.
    """
    if T_total <= 0:
        raise ConfigurationError(f"ramp duration must be positive, got {T_total}")
    if n_steps < 1:
        raise ConfigurationError(f"ramp needs at least one slice, got {n_steps}")
    basis = enumerate_basis(params.L, params.N)
    mott = basis.mott_state()
    state = superfluid_state(params, basis).amplitudes
    hopping = build_hamiltonian(params.model_copy(update={"U": 0.0}), basis).matrix
    interaction = build_hamiltonian(
        params.model_copy(update={"J": 0.0, "U": 1.0}), basis
    ).matrix
    dt = T_total / n_steps
    U_final = U_final_over_J * params.J
    for k in range(n_steps):
        U = U_final * (k + 0.5) / n_steps
        state = expm_multiply(-1j * dt * (hopping + U * interaction), state)
    state = state / np.linalg.norm(state)
    return float(abs(state[basis.index_of(mott)]) ** 2)


__all__ = [
    "find_measurement_time",
    "fidelity_envelope",
    "linear_ramp",
    "run_trajectory",
]
