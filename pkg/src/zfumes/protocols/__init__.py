"""Measurement-based preparation protocols."""

from .commons import (
    FidelitySampler,
    HomodyneRecord,
    MeasurementEvent,
    TrajectoryRecord,
    find_measurement_time,
    pick_peak,
)
from .factory import TrajectoryRunner, create_runner
from .general_control import (
    GeneralLockState,
    LabeledBasis,
    ObservableSet,
    build_observables,
    coupling_check,
    measure_observables,
    mf_general,
    mz_general,
    run_general_trajectory,
    sample_gue,
)
from .sse import measurement_window, run_continuous_trajectory, sse_step
from .strategy import fidelity_envelope, linear_ramp, run_trajectory
from .toy_model import (
    ToyRun,
    exact_lock_probabilities,
    lock_histogram,
    mf_asymptotic,
    mf_exact,
    multinomial_prob,
    mz_bound,
    mz_bound_sum,
    p_avg,
    p_lock_uniform,
    p_lock_uniform_stirling,
    run_toy_fumes,
    run_toy_zfumes,
    sample_configuration,
)

__all__ = [
    # commons
    "FidelitySampler",
    "HomodyneRecord",
    "MeasurementEvent",
    "TrajectoryRecord",
    "find_measurement_time",
    "pick_peak",
    # factory
    "TrajectoryRunner",
    "create_runner",
    # strategy
    "fidelity_envelope",
    "linear_ramp",
    "run_trajectory",
    # sse
    "measurement_window",
    "run_continuous_trajectory",
    "sse_step",
    # toy model
    "ToyRun",
    "exact_lock_probabilities",
    "lock_histogram",
    "mf_asymptotic",
    "mf_exact",
    "multinomial_prob",
    "mz_bound",
    "mz_bound_sum",
    "p_avg",
    "p_lock_uniform",
    "p_lock_uniform_stirling",
    "run_toy_fumes",
    "run_toy_zfumes",
    "sample_configuration",
    # general control
    "GeneralLockState",
    "LabeledBasis",
    "ObservableSet",
    "build_observables",
    "coupling_check",
    "measure_observables",
    "mf_general",
    "mz_general",
    "run_general_trajectory",
    "sample_gue",
]
