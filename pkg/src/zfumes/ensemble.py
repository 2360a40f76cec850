"""Reproducible trajectory batches and their statistics.

Trajectory ``k`` of a batch always draws from
``default_rng(SeedSequence([base_seed, k]))``, and results are collected in index
order, so every statistic is identical for any worker count.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Any, Callable, Iterable, Iterator, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from .config import Distribution, JobSpec, Protocol, ToyConfig
from .errors import EnsembleFailure, ZfumesError
from .logger import logger
from .physics.measurement import LatticePartition, lockable_sites
from .protocols.commons import TrajectoryRecord
from .protocols.factory import create_runner
from .protocols.general_control import mf_general, mz_general
from .protocols.strategy import linear_ramp
from .protocols.toy_model import mf_exact, mz_bound, run_toy_fumes, run_toy_zfumes


def trajectory_rng(base_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, index]))


def _run_indexed(task: Callable[[np.random.Generator], Any], base_seed: int, index: int):
    try:
        return task(trajectory_rng(base_seed, index)), None
    except ZfumesError as e:
        return None, f"{type(e).__name__}: {e}"


def map_trajectories(
    task: Callable[[np.random.Generator], Any], n_traj: int, base_seed: int, workers: int = 1
) -> tuple[list[Any], int]:
    """Run ``task`` on ``n_traj`` seeded streams; returns (results, failure count).

    Results keep trajectory order. Trajectories raising a ``ZfumesError`` are
    logged and counted, never silently dropped.
    """
    if n_traj < 1:
        raise ValueError(f"n_traj must be at least 1, got {n_traj}")
    job = partial(_run_indexed, task, base_seed)
    if workers <= 1:
        outputs = [job(k) for k in range(n_traj)]
    else:
        chunksize = max(1, n_traj // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(job, range(n_traj), chunksize=chunksize))

    results, failed = [], 0
    for k, (result, error) in enumerate(outputs):
        if error is None:
            results.append(result)
        else:
            failed += 1
            logger.warning(f"⚠️ trajectory {k} failed: {error}")
    if not results:
        raise EnsembleFailure(f"all {n_traj} trajectories failed")
    return results, failed


class EnsembleStats(BaseModel):
    """Ensemble averages on the common fidelity grid.

    ``expected_measurements`` is only set when every trajectory converged;
    ``censored_mean_measurements`` always averages over all of them.
    """

    protocol: str
    sites: int
    n_traj: int
    n_failed: int = 0
    grid_step: float
    time: list[float]
    mean_fidelity: list[float]
    stderr: list[float]
    converged_fraction: list[float]
    t_conv: Optional[float] = None
    t_conv_stderr: Optional[float] = None
    expected_measurements: Optional[float] = None
    measurements_stderr: Optional[float] = None
    censored_mean_measurements: float
    lock_frequency: Optional[list[float]] = None


def _standard_error(values: np.ndarray, axis: int = 0) -> np.ndarray:
    n = values.shape[axis]
    if n < 2:
        return np.zeros(np.delete(values.shape, axis)) if values.ndim > 1 else np.zeros(())
    return values.std(axis=axis, ddof=1) / math.sqrt(n)


def crossing_time(
    times: np.ndarray, mean: np.ndarray, stderr: np.ndarray, threshold: float
) -> tuple[Optional[float], Optional[float]]:
    """First grid time with ``mean >= threshold`` and its delta-method error."""
    hits = np.flatnonzero(mean >= threshold)
    if not hits.size:
        return None, None
    g = int(hits[0])
    if g == 0:
        return float(times[0]), 0.0
    slope = (mean[g] - mean[g - 1]) / (times[g] - times[g - 1])
    error = float(stderr[g] / slope) if slope > 0 else None
    return float(times[g]), error


def aggregate(
    records: Sequence[TrajectoryRecord],
    n_failed: int = 0,
    threshold: float = 0.99,
    lock_histogram: bool = False,
) -> EnsembleStats:
    """Fold trajectory records into ensemble statistics."""
    first = records[0]
    series = np.array([record.fidelity_series for record in records], dtype=float)
    times = np.arange(series.shape[1]) * first.grid_step
    mean = series.mean(axis=0)
    stderr = _standard_error(series)
    converged_at = np.array(
        [np.inf if record.converged_at is None else record.converged_at for record in records]
    )
    converged_fraction = (converged_at[:, None] <= times[None, :] + 1e-12).mean(axis=0)
    t_conv, t_conv_stderr = crossing_time(times, mean, stderr, threshold)

    counts = np.array([record.measurement_count for record in records], dtype=float)
    all_converged = bool(np.isfinite(converged_at).all())
    return EnsembleStats(
        protocol=first.protocol,
        sites=first.sites,
        n_traj=len(records) + n_failed,
        n_failed=n_failed,
        grid_step=first.grid_step,
        time=times.tolist(),
        mean_fidelity=mean.tolist(),
        stderr=np.broadcast_to(stderr, mean.shape).tolist(),
        converged_fraction=converged_fraction.tolist(),
        t_conv=t_conv,
        t_conv_stderr=t_conv_stderr,
        expected_measurements=float(counts.mean()) if all_converged else None,
        measurements_stderr=float(_standard_error(counts)) if all_converged else None,
        censored_mean_measurements=float(counts.mean()),
        lock_frequency=estimate_lock_probabilities(records).tolist() if lock_histogram else None,
    )


def run_trajectories(job: JobSpec) -> tuple[list[TrajectoryRecord], int]:
    runner = create_runner(job)
    logger.info(
        f"🚀 {job.subcommand}: {job.n_traj} trajectories, seed {job.base_seed}, {job.workers} worker(s)"
    )
    return map_trajectories(runner, job.n_traj, job.base_seed, job.workers)


def run_ensemble(job: JobSpec) -> EnsembleStats:
    """Run ``job.n_traj`` trajectories of ``job`` and aggregate them."""
    records, failed = run_trajectories(job)
    stats = aggregate(
        records,
        failed,
        threshold=job.strategy.convergence_fidelity,
        lock_histogram=job.histogram,
    )
    logger.info(
        f"✅ {stats.protocol} L={stats.sites}: T_conv={stats.t_conv}, "
        f"converged {stats.converged_fraction[-1]:.3f}, failed {failed}"
    )
    return stats


def lock_frequency_of_outcomes(outcomes: Iterable[Sequence[int]], L: int) -> np.ndarray:
    """Per-site frequency of the lock rule holding on the full lattice."""
    partition = LatticePartition.full(L)
    counts = np.zeros(L)
    total = 0
    for outcome in outcomes:
        if len(outcome) != L or sum(outcome) != L:
            continue
        for site in lockable_sites(outcome, partition):
            counts[site] += 1
        total += 1
    return counts / total if total else counts


def full_lattice_outcomes(record: TrajectoryRecord) -> Iterator[list[int]]:
    """Resolved outcomes measured while no site of ``record`` was locked yet.

    FUMES never locks, so every resolved outcome qualifies. A Z-FUMES trajectory
    contributes its measurements up to and including the one that placed the
    first lock; later outcomes come from the reduced sublattices.
    """
    for event in record.events:
        if not event.resolved:
            continue
        yield event.outcome
        if event.locked:
            return


def estimate_lock_probabilities(trajectories: Iterable[TrajectoryRecord]) -> np.ndarray:
    """Per-site frequency of the lock rule over full-lattice measurements."""
    trajectories = list(trajectories)
    L = trajectories[0].sites
    outcomes = (outcome for record in trajectories for outcome in full_lattice_outcomes(record))
    return lock_frequency_of_outcomes(outcomes, L)


class ScalingRow(BaseModel):
    L: int
    t_conv: Optional[float]
    t_conv_stderr: Optional[float]
    expected_measurements: Optional[float]
    censored_mean_measurements: float
    converged_fraction: float
    censored: bool


def scaling_sweep(job: JobSpec, sites: Sequence[int]) -> list[ScalingRow]:
    """T_conv and measurement counts of ``job`` for each lattice size.

    Sizes whose mean fidelity never reaches the threshold within ``max_time``
    are reported with ``censored=True`` and no T_conv.
    """
    rows = []
    for L in sites:
        sized = job.model_copy(update={"bh": job.bh.model_copy(update={"L": L, "N": L})})
        stats = run_ensemble(sized)
        rows.append(
            ScalingRow(
                L=L,
                t_conv=stats.t_conv,
                t_conv_stderr=stats.t_conv_stderr,
                expected_measurements=stats.expected_measurements,
                censored_mean_measurements=stats.censored_mean_measurements,
                converged_fraction=stats.converged_fraction[-1],
                censored=stats.t_conv is None,
            )
        )
        if stats.t_conv is None:
            logger.warning(f"L={L}: mean fidelity below threshold up to max_time, T_conv censored")
    return rows


class GeneralRow(BaseModel):
    N: int
    B: int
    L: int
    protocol: str
    expected_measurements: Optional[float]
    measurements_stderr: Optional[float]
    censored_mean_measurements: float
    stalled_fraction: float
    mz_sum: float
    mz_log: float
    mf_estimate: float


def general_sweep(job: JobSpec, observables: Sequence[int]) -> list[GeneralRow]:
    """E[M] on random Hamiltonians for each number of observables at fixed B."""
    B = job.general.outcomes
    rows = []
    for L in observables:
        sized = job.model_copy(
            update={"general": job.general.model_copy(update={"observables": L})}
        )
        records, failed = run_trajectories(sized)
        stats = aggregate(records, failed)
        mz_sum, mz_log = mz_general(B, L)
        rows.append(
            GeneralRow(
                N=B**L,
                B=B,
                L=L,
                protocol=job.strategy.protocol.value,
                expected_measurements=stats.expected_measurements,
                measurements_stderr=stats.measurements_stderr,
                censored_mean_measurements=stats.censored_mean_measurements,
                stalled_fraction=float(np.mean([record.stalled for record in records])),
                mz_sum=mz_sum,
                mz_log=mz_log,
                mf_estimate=mf_general(B, L),
            )
        )
    return rows


class ToyRow(BaseModel):
    L: int
    distribution: str
    protocol: str
    n_traj: int
    n_failed: int
    expected_measurements: float
    measurements_stderr: float
    estimate: float


def toy_measurements(
    config: ToyConfig, protocol: Protocol, rng: np.random.Generator
) -> int:
    run = run_toy_zfumes if protocol is Protocol.ZFUMES else run_toy_fumes
    return run(config, rng).measurements


def toy_sweep(
    config: ToyConfig,
    protocol: Protocol,
    sites: Sequence[int],
    n_traj: int,
    base_seed: int = 0,
    workers: int = 1,
) -> list[ToyRow]:
    """Mean measurement count of the toy model next to its closed-form estimate.

    The estimate is ``16 sqrt(L / pi)`` for Z-FUMES and ``L^L / L!`` for FUMES.
    """
    rows = []
    for L in sites:
        sized = config.model_copy(update={"L": L})
        counts, failed = map_trajectories(
            partial(toy_measurements, sized, protocol), n_traj, base_seed, workers
        )
        counts = np.array(counts, dtype=float)
        rows.append(
            ToyRow(
                L=L,
                distribution=Distribution(sized.distribution).value,
                protocol=protocol.value,
                n_traj=n_traj,
                n_failed=failed,
                expected_measurements=float(counts.mean()),
                measurements_stderr=float(_standard_error(counts)),
                estimate=mz_bound(L) if protocol is Protocol.ZFUMES else mf_exact(L),
            )
        )
        logger.info(f"toy {protocol.value} L={L}: E[M]={counts.mean():.3f} (estimate {rows[-1].estimate:.3f})")
    return rows


class RampRow(BaseModel):
    T_total: float
    final_fidelity: float
    u_final: float
    ramp_steps: int


def ramp_sweep(job: JobSpec) -> list[RampRow]:
    """Final Mott fidelity of the linear-ramp baseline for every duration in the job."""
    rows = [
        RampRow(
            T_total=T,
            final_fidelity=linear_ramp(job.bh, T, job.u_final, job.ramp_steps),
            u_final=job.u_final,
            ramp_steps=job.ramp_steps,
        )
        for T in job.ramp_times
    ]
    logger.info(f"ramp L={job.bh.L}: {len(rows)} durations")
    return rows
