import numpy as np
import pytest

from zfumes.config import BHParams, Protocol, StrategyConfig
from zfumes.errors import ConfigurationError, ZeroCouplingError
from zfumes.physics.bose_hubbard import build_hamiltonian, superfluid_state
from zfumes.physics.fock import enumerate_basis
from zfumes.physics.measurement import fidelity
from zfumes.protocols.commons import (
    FidelitySampler,
    MeasurementEvent,
    TrajectoryRecord,
    find_measurement_time,
    pick_peak,
)
from zfumes.protocols.strategy import fidelity_envelope, linear_ramp, run_trajectory

CONFIG = StrategyConfig()


def _dimer():
    params = BHParams(L=2, N=1, J=1.0)
    basis = enumerate_basis(2, 1)
    return basis, build_hamiltonian(params, basis)


def test_peak_time_dimer():
    basis, H = _dimer()
    t = find_measurement_time([basis.basis_vector((1, 0))], [H], [(0, 1)], CONFIG)
    assert t == pytest.approx(np.pi / 2, abs=CONFIG.scan_step)


def test_peak_at_start_when_on_target():
    basis, H = _dimer()
    assert find_measurement_time([basis.basis_vector((1, 0))], [H], [(1, 0)], CONFIG) == 0.0


def test_product_peak_of_identical_blocks():
    basis, H = _dimer()
    state = basis.basis_vector((1, 0))
    t = find_measurement_time([state, state], [H, H], [(0, 1), (0, 1)], CONFIG)
    assert t == pytest.approx(np.pi / 2, abs=CONFIG.scan_step)


def test_zero_coupling_detected():
    params = BHParams(L=2, N=1, J=0.0)
    basis = enumerate_basis(2, 1)
    H = build_hamiltonian(params, basis)
    with pytest.raises(ZeroCouplingError):
        find_measurement_time([basis.basis_vector((1, 0))], [H], [(0, 1)], CONFIG)


def test_pick_peak_rule():
    values = np.array([0.0, 0.5, 0.2, 0.95, 0.1, 1.0, 0.0])
    assert pick_peak(values, 0.9) == 3
    assert pick_peak(values, 0.99) == 5
    assert pick_peak(np.array([0.0, 0.1, 0.2, 0.3]), 0.9) == 3


def test_strategy_config_time_ordering():
    with pytest.raises(ValueError):
        StrategyConfig(horizon=200.0, max_time=100.0)
    with pytest.raises(ValueError):
        StrategyConfig(scan_step=20.0, horizon=10.0)


def test_fidelity_sampler_forward_fill():
    sampler = FidelitySampler(0.5, 2.0)
    sampler.fill(0.0, 1.0, lambda tau: tau)
    assert sampler.series() == [0.0, 0.5, 0.5, 0.5, 0.5]
    sampler.fill_constant(1.5, 1.0)
    assert sampler.series()[-2:] == [1.0, 1.0]


def test_event_times_must_increase():
    with pytest.raises(ValueError):
        TrajectoryRecord(
            protocol="zfumes",
            sites=2,
            grid_step=0.1,
            events=[
                MeasurementEvent(time=1.0, outcome=[1, 1]),
                MeasurementEvent(time=1.0, outcome=[2, 0]),
            ],
        )


def test_single_site_converges_immediately(rng):
    record = run_trajectory(BHParams(L=1, N=1), CONFIG, rng)
    assert record.converged_at == 0.0
    assert record.measurement_count == 0
    assert all(value == 1.0 for value in record.fidelity_series)


@pytest.mark.parametrize("protocol", list(Protocol))
def test_small_trajectory(protocol, rng):
    config = StrategyConfig(protocol=protocol, max_time=60.0)
    record = run_trajectory(BHParams(L=3, N=3), config, rng)
    times = [event.time for event in record.events]
    assert times == sorted(times)
    assert record.measurement_count == len(record.events)
    assert len(record.fidelity_series) == int(round(60.0 / config.grid_step)) + 1
    assert all(0.0 <= value <= 1.0 for value in record.fidelity_series)
    if record.converged:
        assert record.events[-1].outcome == [1, 1, 1]
        start = int(np.ceil(record.converged_at / config.grid_step - 1e-9))
        assert all(value == 1.0 for value in record.fidelity_series[start:])
    if protocol is Protocol.FUMES:
        assert all(event.locked == [] for event in record.events)


def test_zfumes_locks_only_grow(rng):
    record = run_trajectory(BHParams(L=5, N=5), StrategyConfig(max_time=100.0), rng)
    seen = set()
    for event in record.events:
        assert seen.isdisjoint(event.locked)
        seen.update(event.locked)
        assert all(event.outcome[site] == 1 for site in seen)


def test_fumes_and_zfumes_agree_until_first_lock():
    params = BHParams(L=4, N=4)
    fumes = run_trajectory(params, StrategyConfig(protocol=Protocol.FUMES), np.random.default_rng(3))
    zfumes = run_trajectory(params, StrategyConfig(protocol=Protocol.ZFUMES), np.random.default_rng(3))
    for left, right in zip(fumes.events, zfumes.events):
        assert left.time == right.time
        assert left.outcome == right.outcome
        if right.locked:
            break


def test_trajectory_needs_unit_filling(rng):
    with pytest.raises(ConfigurationError):
        run_trajectory(BHParams(L=3, N=2), CONFIG, rng)


def test_fidelity_envelope_starts_at_superfluid_overlap():
    params = BHParams(L=3, N=3)
    state = superfluid_state(params, enumerate_basis(3, 3))
    envelope = fidelity_envelope(params, np.array([0.0, 1.0, 2.0]))
    assert envelope[0] == pytest.approx(fidelity(state, (1, 1, 1)))
    assert np.all((envelope >= 0) & (envelope <= 1))


def test_ramp_short_limit():
    params = BHParams(L=3, N=3)
    state = superfluid_state(params, enumerate_basis(3, 3))
    assert linear_ramp(params, 1e-9) == pytest.approx(fidelity(state, (1, 1, 1)), abs=1e-6)


def test_ramp_adiabatic_limit():
    assert linear_ramp(BHParams(L=3, N=3), 200.0, n_steps=2000) > 0.98


def test_ramp_discretization_converges():
    params = BHParams(L=3, N=3)
    coarse = linear_ramp(params, 5.0, n_steps=2000)
    fine = linear_ramp(params, 5.0, n_steps=4000)
    assert abs(coarse - fine) < 1e-4


def test_ramp_rejects_bad_duration():
    with pytest.raises(ConfigurationError):
        linear_ramp(BHParams(L=2, N=2), 0.0)
