import numpy as np
import pytest
import scipy.linalg as la
from pydantic import ValidationError
from scipy.stats import chisquare

from zfumes.config import BHParams, JobSpec, SSEConfig, StrategyConfig
from zfumes.ensemble import run_trajectories
from zfumes.errors import NumericalInstabilityError
from zfumes.physics.bose_hubbard import (
    build_hamiltonian,
    number_operator,
    propagate,
    superfluid_state,
)
from zfumes.physics.fock import StateVector, enumerate_basis
from zfumes.physics.measurement import LatticePartition, MeasurementOutcome
from zfumes.protocols import sse
from zfumes.protocols.commons import HomodyneRecord
from zfumes.protocols.strategy import fidelity_envelope
from zfumes.protocols.sse import (
    HomodyneIntegrator,
    WindowResult,
    measurement_window,
    project_sector,
    quench_hamiltonian,
    run_continuous_trajectory,
    sector_mask,
    sse_step,
    window_step,
)


def test_unmonitored_step_follows_schrodinger(rng):
    basis = enumerate_basis(2, 2)
    H = build_hamiltonian(BHParams(L=2, N=2), basis)
    state = basis.basis_vector((2, 0))
    dt, steps = 1e-3, 500
    evolved = state
    for _ in range(steps):
        evolved, currents = sse_step(evolved, H, [], dt, rng)
    assert currents.size == 0
    exact = propagate(state, H, dt * steps)
    assert np.allclose(evolved.amplitudes, exact.amplitudes, atol=5e-3)


def test_fock_state_is_a_fixed_point(rng):
    basis = enumerate_basis(3, 3)
    config = SSEConfig(gamma=2.0)
    H = quench_hamiltonian(basis, config)
    ops = [(number_operator(site, basis), config.gamma) for site in range(3)]
    state = basis.basis_vector((2, 0, 1))
    for _ in range(100):
        state, _ = sse_step(state, H, ops, 1e-3, rng)
    assert np.allclose(state.populations(), basis.basis_vector((2, 0, 1)).populations())


def test_current_mean_tracks_occupation(rng):
    basis = enumerate_basis(2, 2)
    gamma, dt, steps = 1.0, 1e-3, 10_000
    integrator = HomodyneIntegrator(
        quench_hamiltonian(basis, SSEConfig(gamma=gamma)),
        [(number_operator(0, basis), gamma)],
        dt,
    )
    psi = basis.basis_vector((2, 0)).amplitudes
    total = 0.0
    for _ in range(steps):
        psi, currents = integrator.step(psi, rng)
        total += currents[0]
    sigma = np.sqrt(gamma / dt) / np.sqrt(steps)
    assert abs(total / steps - 2 * gamma * 2) < 4 * sigma


def test_blow_up_is_reported(rng):
    basis = enumerate_basis(2, 2)
    integrator = HomodyneIntegrator(
        quench_hamiltonian(basis, SSEConfig(gamma=1.0)),
        [(number_operator(0, basis), 1e9)],
        1.0,
    )
    psi = superfluid_state(BHParams(L=2, N=2), basis).amplitudes
    with pytest.raises(NumericalInstabilityError):
        integrator.step(psi, rng)


def test_step_bound_validation():
    with pytest.raises(ValidationError):
        SSEConfig(gamma=1000.0, dt=1e-3)
    assert SSEConfig(ideal_lock=False).dt == 1e-5
    assert SSEConfig(gamma=10.0).dt == 1e-3
    assert SSEConfig(gamma=100.0).dt == pytest.approx(1e-3)


def test_window_step_respects_gamma():
    assert window_step(SSEConfig(gamma=50.0)) == pytest.approx(0.1 / 50.0)
    assert window_step(SSEConfig(gamma=1.0, ideal_lock=False)) == 1e-3


def test_window_on_fock_state_is_immediate(rng):
    basis = enumerate_basis(3, 3)
    result = measurement_window(basis.basis_vector((0, 2, 1)), SSEConfig(gamma=1.0), rng)
    assert result.resolved
    assert result.duration == 0.0
    assert result.outcome.occupations == (0, 2, 1)


def test_window_times_out_without_monitoring(rng):
    basis = enumerate_basis(2, 2)
    state = superfluid_state(BHParams(L=2, N=2), basis)
    result = measurement_window(state, SSEConfig(gamma=0.0, max_window=3.0), rng)
    assert not result.resolved
    assert result.duration == 3.0
    assert np.allclose(result.state.populations(), state.populations())


def test_window_conserves_particle_number(rng):
    basis = enumerate_basis(3, 3)
    state = superfluid_state(BHParams(L=3, N=3), basis)
    totals = []

    def observer(elapsed, psi):
        totals.append(float(np.abs(psi) ** 2 @ basis.occupations.sum(axis=1)))

    result = measurement_window(state, SSEConfig(gamma=10.0), rng, observer=observer)
    assert result.resolved
    assert totals
    assert np.allclose(totals, 3.0)



def test_window_holds_locked_sites(rng):
    basis = enumerate_basis(3, 3)
    partition = LatticePartition.from_locked(3, {0: 1})
    state = superfluid_state(BHParams(L=3, N=3), basis)
    result = measurement_window(state, SSEConfig(gamma=10.0), rng, partition)
    assert result.outcome.occupations[0] == 1
    assert sum(result.outcome.occupations[1:]) == 2
    for current in result.record.currents:
        assert current[0] == 0.0


def test_project_sector():
    basis = enumerate_basis(3, 3)
    partition = LatticePartition.from_locked(3, {1: 1})
    state = superfluid_state(BHParams(L=3, N=3), basis)
    projected = project_sector(state, partition)
    mask = sector_mask(basis, partition)
    assert projected.is_normalized()
    assert np.all(projected.populations()[~mask] == 0.0)
    for index in np.flatnonzero(mask):
        assert basis.state_of(index)[1] == 1


def test_ideal_continuous_trajectory_converges():
    record = run_continuous_trajectory(
        BHParams(L=3, N=3),
        SSEConfig(gamma=10.0, max_window=20.0),
        StrategyConfig(max_time=200.0),
        np.random.default_rng(5),
    )
    assert record.converged
    assert record.protocol == "zfumes"
    assert all(event.duration >= 0.0 for event in record.events)
    resolved = [event for event in record.events if event.resolved]
    assert resolved[-1].outcome == [1, 1, 1]
    assert record.fidelity_series[-1] == 1.0


def test_unmonitored_trajectory_never_converges(rng):
    record = run_continuous_trajectory(
        BHParams(L=2, N=2),
        SSEConfig(gamma=0.0, max_window=5.0),
        StrategyConfig(horizon=10.0, max_time=30.0),
        rng,
    )
    assert not record.converged
    assert record.events
    assert not any(event.resolved for event in record.events)
    assert not any(event.locked for event in record.events)


def test_trajectory_keeps_homodyne_record():
    record = run_continuous_trajectory(
        BHParams(L=2, N=2),
        SSEConfig(gamma=10.0, record_stride=10),
        StrategyConfig(max_time=50.0),
        np.random.default_rng(2),
    )
    assert record.homodyne is not None
    assert record.homodyne.times == sorted(record.homodyne.times)
    assert all(len(row) == 2 for row in record.homodyne.currents)



def test_linear_step_drift_shrinks_with_dt():
    basis = enumerate_basis(2, 2)
    psi = superfluid_state(BHParams(L=2, N=2), basis).amplitudes
    gamma = 1.0
    occupation = number_operator(0, basis)
    mean_n = occupation.expectation(psi)
    drifts = {}
    for dt in (2e-3, 1e-3):
        integrator = HomodyneIntegrator(
            quench_hamiltonian(basis, SSEConfig(gamma=gamma)), [(occupation, gamma)], dt
        )
        rng = np.random.default_rng(3)
        norms = [np.linalg.norm(integrator.linear_step(psi, rng)[0]) ** 2 for _ in range(100_000)]
        drifts[dt] = float(np.mean(norms)) - 1.0
        # E |psi + dpsi|^2 - 1 = 4 gamma <n>^2 dt to first order
        assert drifts[dt] == pytest.approx(4 * gamma * mean_n**2 * dt, rel=0.25)
    assert drifts[2e-3] / drifts[1e-3] == pytest.approx(2.0, rel=0.25)


def _two_branch_state(basis):
    amplitudes = np.zeros(basis.dim, dtype=complex)
    amplitudes[basis.index_of((1, 2, 0))] = np.sqrt(0.5)
    amplitudes[basis.index_of((2, 1, 0))] = np.sqrt(0.5)
    return StateVector(basis, amplitudes)


@pytest.mark.parametrize("ideal_lock", [True, False])
def test_finite_lock_windows_read_out_leaked_population(ideal_lock):
    basis = enumerate_basis(3, 3)
    partition = LatticePartition.from_locked(3, {0: 1})
    config = SSEConfig(gamma=10.0, ideal_lock=ideal_lock)
    rng = np.random.default_rng(31)
    leaked = 0
    for _ in range(100):
        result = measurement_window(_two_branch_state(basis), config, rng, partition)
        assert result.resolved
        leaked += result.outcome.occupations[0] != 1
    if ideal_lock:
        assert leaked == 0
    else:
        assert 30 <= leaked <= 70


def test_leaked_outcome_releases_locks(monkeypatch):
    basis = enumerate_basis(3, 3)
    outcomes = iter([(1, 2, 0), (2, 1, 0), (1, 1, 1)])

    def scripted_window(state, config, rng, partition=None, observer=None):
        occupations = next(outcomes)
        return WindowResult(
            MeasurementOutcome(occupations=occupations, time=0.1),
            basis.basis_vector(occupations),
            HomodyneRecord(),
            True,
            0.1,
        )

    monkeypatch.setattr(sse, "measurement_window", scripted_window)
    record = run_continuous_trajectory(
        BHParams(L=3, N=3), SSEConfig(gamma=1.0), StrategyConfig(), np.random.default_rng(0)
    )
    first, leaked, last = record.events
    assert first.locked == [0]
    assert not leaked.resolved and leaked.locked == []
    assert last.locked == [0, 1, 2]
    assert record.converged_at == last.time


def test_convergence_after_max_time_is_not_counted():
    max_time = 2.5
    late = 0
    for seed in range(40):
        record = run_continuous_trajectory(
            BHParams(L=2, N=2),
            SSEConfig(gamma=0.5),
            StrategyConfig(horizon=max_time, max_time=max_time),
            np.random.default_rng(seed),
        )
        if record.converged:
            assert record.converged_at <= max_time
            assert record.converged_at == record.events[-1].time
        elif record.events and record.events[-1].outcome == [1, 1]:
            assert record.events[-1].time > max_time
            late += 1
    assert late > 0


def test_unmonitored_trajectory_stays_within_envelope(rng):
    params = BHParams(L=3, N=3, U=0.5)
    max_time = 40.0
    # a window of 2 pi / J_d leaves every quench phase at 1
    record = run_continuous_trajectory(
        params,
        SSEConfig(gamma=0.0, max_window=2 * np.pi),
        StrategyConfig(max_time=max_time),
        rng,
    )
    envelope = fidelity_envelope(params, np.arange(0.0, max_time, 1e-3))
    assert not record.converged
    assert max(record.fidelity_series) <= envelope.max() + 1e-4


def _lindblad_generator(H: np.ndarray, jump: np.ndarray, gamma: float) -> np.ndarray:
    """Column-stacked generator of -i[H, rho] + gamma (c rho c - {c^2, rho} / 2)."""
    eye = np.eye(H.shape[0])
    squared = jump @ jump
    return -1j * (np.kron(eye, H) - np.kron(H.T, eye)) + gamma * (
        np.kron(jump.T, jump) - 0.5 * np.kron(eye, squared) - 0.5 * np.kron(squared.T, eye)
    )


def test_zeno_lock_holds_mean_occupation():
    config = SSEConfig(ideal_lock=False)
    basis = enumerate_basis(3, 3)
    H = build_hamiltonian(BHParams(L=3, N=3, J=config.j_d), basis).dense()
    lock = number_operator(0, basis).dense().real
    # ensemble average of the monitored free evolution, up to J_d t = 20
    propagator = la.expm(0.5 * _lindblad_generator(H, lock, config.gamma_lock))
    mott = basis.basis_vector((1, 1, 1)).amplitudes
    vec = np.outer(mott, mott.conj()).reshape(-1, order="F")
    deviations = []
    for _ in range(40):
        vec = propagator @ vec
        rho = vec.reshape(basis.dim, basis.dim, order="F")
        deviations.append(abs(np.trace(rho @ lock).real - 1.0))
    assert max(deviations) < 0.01


@pytest.mark.slow
def test_strong_monitoring_suppresses_leakage(rng):
    basis = enumerate_basis(3, 3)
    config = SSEConfig(ideal_lock=False)
    H = build_hamiltonian(BHParams(L=3, N=3, J=config.j_d), basis)
    integrator = HomodyneIntegrator(H, [(number_operator(0, basis), config.gamma_lock)], config.dt)
    psi = basis.basis_vector((1, 1, 1)).amplitudes
    for _ in range(int(round(1.0 / config.dt))):
        psi, _ = integrator.step(psi, rng)
    locked = basis.occupations[:, 0] == 1
    assert float(np.sum(np.abs(psi[~locked]) ** 2)) < 0.05


@pytest.mark.slow
def test_window_outcomes_follow_born_rule():
    basis = enumerate_basis(2, 2)
    state = superfluid_state(BHParams(L=2, N=2), basis)
    config = SSEConfig(gamma=10.0, dt=2e-4)
    rng = np.random.default_rng(11)
    counts = np.zeros(basis.dim)
    for _ in range(10_000):
        result = measurement_window(state, config, rng)
        assert result.resolved
        counts[basis.index_of(result.outcome.occupations)] += 1
    assert np.allclose(state.populations(), [0.25, 0.5, 0.25])
    assert chisquare(counts, state.populations() * counts.sum()).pvalue > 0.01


@pytest.mark.slow
def test_collapse_time_scales_inversely_with_gamma():
    basis = enumerate_basis(2, 2)
    state = superfluid_state(BHParams(L=2, N=2), basis)
    medians = {}
    for gamma in (1.0, 2.0):
        rng = np.random.default_rng(7)
        durations = [
            measurement_window(state, SSEConfig(gamma=gamma), rng).duration for _ in range(300)
        ]
        medians[gamma] = np.median(durations)
    assert medians[1.0] / medians[2.0] == pytest.approx(2.0, rel=0.3)


@pytest.mark.slow
def test_convergence_time_does_not_grow_with_gamma():
    max_time = 100.0
    means, errors = [], []
    for gamma in (0.5, 2.0, 10.0):
        job = JobSpec(
            subcommand="bh-continuous",
            bh=BHParams(L=3, N=3),
            sse=SSEConfig(gamma=gamma),
            strategy=StrategyConfig(max_time=max_time),
            n_traj=100,
            base_seed=4,
            workers=1,
        )
        records, _ = run_trajectories(job)
        times = np.array([r.converged_at if r.converged else max_time for r in records])
        means.append(times.mean())
        errors.append(times.std(ddof=1) / np.sqrt(len(times)))
    for k in range(2):
        assert means[k + 1] <= means[k] + 2 * np.hypot(errors[k], errors[k + 1])
