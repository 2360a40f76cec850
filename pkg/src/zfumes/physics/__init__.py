"""Lattice physics: Fock bases, Bose-Hubbard operators and measurements."""

from .bose_hubbard import (
    HermitianOperator,
    Propagator,
    build_hamiltonian,
    embed_product_state,
    number_operator,
    project_hamiltonian,
    propagate,
    superfluid_state,
    total_number_operator,
)
from .fock import (
    FockBasis,
    FockState,
    StateVector,
    dim_unit_filling,
    enumerate_basis,
)
from .measurement import (
    LatticePartition,
    MeasurementOutcome,
    apply_locks,
    born_probabilities,
    fidelity,
    lockable_sites,
    measure_all_sites,
)

__all__ = [
    # fock
    "FockBasis",
    "FockState",
    "StateVector",
    "dim_unit_filling",
    "enumerate_basis",
    # bose_hubbard
    "HermitianOperator",
    "Propagator",
    "build_hamiltonian",
    "embed_product_state",
    "number_operator",
    "project_hamiltonian",
    "propagate",
    "superfluid_state",
    "total_number_operator",
    # measurement
    "LatticePartition",
    "MeasurementOutcome",
    "apply_locks",
    "born_probabilities",
    "fidelity",
    "lockable_sites",
    "measure_all_sites",
]
