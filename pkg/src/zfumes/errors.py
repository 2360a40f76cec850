"""Exception hierarchy for zfumes.

Validation problems derive from ``ValueError`` and runtime/numeric failures from
``RuntimeError`` so the CLI can map them to distinct exit codes.
"""


class ZfumesError(Exception):
    """Base class for all zfumes errors."""


class ConfigurationError(ZfumesError, ValueError):
    """Invalid parameter combination."""


class BasisError(ZfumesError, ValueError):
    """Unknown state, out-of-range index or basis mismatch."""


class DimensionOverflowError(ZfumesError, OverflowError):
    """Requested Hilbert-space dimension exceeds the configured cap."""


class NonHermitianError(ZfumesError, ValueError):
    """Operator is not equal to its conjugate transpose."""


class NormalizationError(ZfumesError, ValueError):
    """State vector is not normalized."""


class LockRuleError(ZfumesError, ValueError):
    """Lock request violates the unit-filling lock rule."""


class ZeroCouplingError(ZfumesError, RuntimeError):
    """Success probability vanishes over the whole scan horizon."""


class NumericalInstabilityError(ZfumesError, RuntimeError):
    """Integrator produced NaN/inf or a vanishing norm."""


class DegenerateGroundStateError(ZfumesError, RuntimeError):
    """Ground space is degenerate, the ground state is ill defined."""


class MeasurementBudgetExceeded(ZfumesError, RuntimeError):
    """Protocol did not converge within the allowed number of measurements."""


class EnsembleFailure(ZfumesError, RuntimeError):
    """Every trajectory of an ensemble failed."""
