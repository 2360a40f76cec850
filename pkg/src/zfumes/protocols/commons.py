"""Common records and utilities shared by the measurement protocols."""

from typing import Callable, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, model_validator

from ..config import StrategyConfig
from ..errors import ZeroCouplingError
from ..physics.bose_hubbard import HermitianOperator, Propagator
from ..physics.fock import FockState, StateVector

# success probabilities below this count as no coupling at all
ZERO_COUPLING = 1e-14


class MeasurementEvent(BaseModel):
    """One global measurement along a trajectory."""

    time: float
    outcome: list[int]
    locked: list[int] = []
    resolved: bool = True
    duration: float = 0.0


class HomodyneRecord(BaseModel):
    """Sampled measurement currents ``I_j(t)`` of a continuous trajectory."""

    times: list[float] = []
    currents: list[list[float]] = []
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _aligned(self) -> "HomodyneRecord":
        if len(self.times) != len(self.currents):
            raise ValueError("record times and currents differ in length")
        return self


class TrajectoryRecord(BaseModel):
    """Outcome of a single protocol run.

    Attributes
    ----------
    protocol : str
        ``fumes`` or ``zfumes``
    sites : int
        Lattice sites (or observables in the random-Hamiltonian setting)
    grid_step : float
        Spacing of ``fidelity_series``
    fidelity_series : list of float
        Target fidelity sampled at ``k * grid_step``
    events : list of MeasurementEvent
        Measurements in time order
    converged_at : float, optional
        Protocol time of convergence
    measurement_count : int
        Number of global measurements performed
    """

    protocol: str
    sites: int
    grid_step: float
    fidelity_series: list[float] = []
    events: list[MeasurementEvent] = []
    converged_at: Optional[float] = None
    measurement_count: int = 0
    stalled: bool = False
    homodyne: Optional[HomodyneRecord] = None

    @model_validator(mode="after")
    def _ordered_events(self) -> "TrajectoryRecord":
        times = [event.time for event in self.events]
        if any(later <= earlier for earlier, later in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")
        return self

    @property
    def converged(self) -> bool:
        return self.converged_at is not None


def as_propagator(op: Union[HermitianOperator, Propagator]) -> Propagator:
    return op if isinstance(op, Propagator) else Propagator.from_operator(op)


def target_amplitudes(state: StateVector, target: Union[FockState, StateVector]) -> np.ndarray:
    if isinstance(target, StateVector):
        return target.amplitudes
    vector = np.zeros(state.basis.dim, dtype=complex)
    vector[state.basis.index_of(target)] = 1.0
    return vector


def success_series(
    blocks: Sequence[tuple[Propagator, np.ndarray, np.ndarray]], times: np.ndarray
) -> np.ndarray:
    """Product over blocks of ``|<target|exp(-iHt)|psi>|^2`` on ``times``.

    Each block is ``(propagator, amplitudes, target amplitudes)``.
    """
    series = np.ones(len(times))
    for propagator, amplitudes, target in blocks:
        series *= np.abs(propagator.overlap_series(amplitudes, target, times)) ** 2
    return np.minimum(series, 1.0)


def pick_peak(values: np.ndarray, threshold: float) -> int:
    """First local maximum reaching ``threshold * max``; the global maximum otherwise."""
    best = float(values.max())
    floor = threshold * best
    left = np.concatenate(([-np.inf], values[:-1]))
    right = np.concatenate((values[1:], [np.inf]))
    peaks = np.flatnonzero((values >= left) & (values >= right) & (values >= floor))
    if peaks.size:
        return int(peaks[0])
    return int(np.argmax(values))


def find_measurement_time(
    states: Sequence[StateVector],
    hamiltonians: Sequence[Union[HermitianOperator, Propagator]],
    targets: Sequence[Union[FockState, StateVector]],
    config: StrategyConfig,
) -> float:
    """Time of the first success-probability peak above the relative threshold.

    The success probability is the product over the independent blocks of the
    target fidelity under deterministic evolution, scanned on
    ``[0, config.horizon]`` in steps of ``config.scan_step``.

    Raises
    ------
    ZeroCouplingError
        If the success probability vanishes over the whole horizon
    """
    blocks = [
        (as_propagator(op), state.amplitudes, target_amplitudes(state, target))
        for state, op, target in zip(states, hamiltonians, targets, strict=True)
    ]
    return scan_peak(blocks, config)


def scan_peak(
    blocks: Sequence[tuple[Propagator, np.ndarray, np.ndarray]], config: StrategyConfig
) -> float:
    times = scan_grid(config.horizon, config.scan_step)
    values = success_series(blocks, times)
    if values.max() <= ZERO_COUPLING:
        raise ZeroCouplingError(
            f"success probability vanishes over the {config.horizon} horizon"
        )
    return float(times[pick_peak(values, config.peak_threshold)])


def scan_grid(horizon: float, step: float) -> np.ndarray:
    count = int(np.floor(horizon / step + 1e-9)) + 1
    return np.arange(count) * step


class FidelitySampler:
    """Collects the target fidelity on the uniform grid ``k * step < max_time``."""

    def __init__(self, step: float, max_time: float):
        self.step = step
        self.times = scan_grid(max_time, step)
        self.values = np.full(len(self.times), np.nan)

    def _slice(self, start: float, stop: float) -> slice:
        first = int(np.searchsorted(self.times, start - 1e-12, side="left"))
        last = int(np.searchsorted(self.times, stop - 1e-12, side="left"))
        return slice(first, last)

    def fill(self, start: float, stop: float, fidelity_at: Callable[[np.ndarray], np.ndarray]):
        """Sample ``fidelity_at(t - start)`` for grid times in ``[start, stop)``."""
        window = self._slice(start, stop)
        if window.stop > window.start:
            self.values[window] = fidelity_at(self.times[window] - start)

    def fill_constant(self, start: float, value: float, stop: Optional[float] = None):
        window = self._slice(start, np.inf if stop is None else stop)
        self.values[window] = value

    def series(self) -> list[float]:
        values = self.values.copy()
        # unvisited trailing points keep the last sampled value
        for k in range(len(values)):
            if np.isnan(values[k]):
                values[k] = values[k - 1] if k else 0.0
        return values.tolist()
