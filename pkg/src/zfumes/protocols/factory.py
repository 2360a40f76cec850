"""Trajectory runner factory

Maps a validated JobSpec to a picklable callable ``runner(rng) -> TrajectoryRecord``
so the ensemble can ship it to worker processes.
"""

from functools import partial
from typing import Callable

import numpy as np

from ..config import BHParams, GeneralConfig, JobSpec, Protocol, StrategyConfig
from ..errors import ConfigurationError
from ..physics.fock import enumerate_basis
from .commons import TrajectoryRecord
from .general_control import build_observables, run_general_trajectory, sample_gue
from .sse import run_continuous_trajectory
from .strategy import run_trajectory

TrajectoryRunner = Callable[[np.random.Generator], TrajectoryRecord]


def check_chain(params: BHParams) -> None:
    """Reject chains no trajectory could run, before any trajectory starts.

    Raises
    ------
    DimensionOverflowError
        If the Fock basis exceeds the enumeration cap
    ConfigurationError
        Without unit filling or with a non-positive tunneling rate
    """
    enumerate_basis(params.L, params.N)
    if not params.unit_filling:
        raise ConfigurationError(f"Mott target needs unit filling, got L={params.L}, N={params.N}")
    if params.J <= 0:
        raise ConfigurationError(f"free evolution needs J > 0, got J={params.J}")


def create_projective_runner(job: JobSpec) -> TrajectoryRunner:
    """FUMES or Z-FUMES with projective measurements on the chain in ``job.bh``."""
    check_chain(job.bh)
    return partial(run_trajectory, job.bh, job.strategy)


def create_continuous_runner(job: JobSpec) -> TrajectoryRunner:
    """Z-FUMES with homodyne measurement windows."""
    if job.strategy.protocol is not Protocol.ZFUMES:
        raise ConfigurationError("continuous monitoring is only implemented for zfumes")
    check_chain(job.bh.model_copy(update={"J": job.sse.j_d}))
    return partial(run_continuous_trajectory, job.bh, job.sse, job.strategy)


def random_hamiltonian_trajectory(
    general: GeneralConfig, strategy: StrategyConfig, rng: np.random.Generator
) -> TrajectoryRecord:
    """Draw a GUE Hamiltonian, then transfer a random basis state to ``(1, ..., 1)``.

    The Hamiltonian comes first out of ``rng``, so FUMES and Z-FUMES runs with
    the same seed see the same Hamiltonian.
    """
    basis, observables = build_observables(general.observables, general.outcomes)
    H = sample_gue(basis.dim, rng, basis)
    return run_general_trajectory(
        H,
        observables,
        (1,) * general.observables,
        strategy.protocol,
        general.epsilon_o,
        strategy,
        rng,
        coupling_horizon=general.coupling_horizon,
        max_measurements=general.max_measurements,
    )


def create_random_hamiltonian_runner(job: JobSpec) -> TrajectoryRunner:
    return partial(random_hamiltonian_trajectory, job.general, job.strategy)


_RUNNERS: dict[str, Callable[[JobSpec], TrajectoryRunner]] = {
    "bh-projective": create_projective_runner,
    "bh-continuous": create_continuous_runner,
    "random-ham": create_random_hamiltonian_runner,
}


def create_runner(job: JobSpec) -> TrajectoryRunner:
    """Runner for the trajectory-based subcommands.

    Raises
    ------
    ConfigurationError
        If the subcommand does not run trajectories
    """
    try:
        factory = _RUNNERS[job.subcommand]
    except KeyError:
        raise ConfigurationError(
            f"subcommand {job.subcommand!r} has no trajectory runner"
        ) from None
    return factory(job)
