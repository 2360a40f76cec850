"""Bose-Hubbard operators, ground state and exact time evolution.

Hamiltonian (open chain, hbar = 1)::

    H = -J sum_{j<L} (a+_j a_{j+1} + h.c.) + U/2 sum_j n_j (n_j - 1)
"""

from dataclasses import dataclass, field
from typing import Callable, ClassVar, Hashable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from ..config import BHParams
from ..errors import (
    BasisError,
    ConfigurationError,
    DegenerateGroundStateError,
    LockRuleError,
    NonHermitianError,
)
from ..logger import logger
from .fock import Basis, FockBasis, StateVector, enumerate_basis, same_basis
from .measurement import LatticePartition

HERMITIAN_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Operator stored as a sparse matrix in a given basis.

    Attributes
    ----------
    basis : Basis
        Basis the matrix is written in
    matrix : scipy.sparse.csr_matrix
        Matrix elements
    params : BHParams, optional
        Bose-Hubbard parameters the operator was built from, if any
    """

    basis: Basis
    matrix: sp.csr_matrix = field(repr=False)
    params: Optional[BHParams] = None

    def __post_init__(self):
        matrix = sp.csr_matrix(self.matrix, dtype=complex)
        if matrix.shape != (self.basis.dim, self.basis.dim):
            raise BasisError(
                f"matrix shape {matrix.shape} does not match basis dimension {self.basis.dim}"
            )
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_diagonal(
        cls, basis: Basis, diagonal: np.ndarray, params: Optional[BHParams] = None
    ) -> "HermitianOperator":
        return cls(basis, sp.diags(np.asarray(diagonal, dtype=complex), format="csr"), params)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_defect(self) -> float:
        residual = self.matrix - self.matrix.conj().T
        return float(abs(residual).max()) if residual.nnz else 0.0

    def is_hermitian(self, tol: float = HERMITIAN_TOLERANCE) -> bool:
        return self.hermiticity_defect() <= tol

    @property
    def is_diagonal(self) -> bool:
        coo = self.matrix.tocoo()
        return bool(np.all((coo.row == coo.col) | (coo.data == 0)))

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def apply(self, amplitudes: np.ndarray) -> np.ndarray:
        return self.matrix @ amplitudes

    def expectation(self, amplitudes: np.ndarray) -> float:
        return float(np.real(np.vdot(amplitudes, self.matrix @ amplitudes)))


def _hopping_entries(basis: FockBasis, J: float):
    rows, cols, values = [], [], []
    for k, state in enumerate(basis.states):
        for j in range(basis.L - 1):
            # a+_j a_{j+1} together with its conjugate
            if state[j + 1] == 0:
                continue
            target = list(state)
            target[j] += 1
            target[j + 1] -= 1
            m = basis.index_of(target)
            amplitude = -J * np.sqrt((state[j] + 1) * state[j + 1])
            rows += [m, k]
            cols += [k, m]
            values += [amplitude, amplitude]
    return rows, cols, values


def build_hamiltonian(params: BHParams, basis: FockBasis) -> HermitianOperator:
    """Bose-Hubbard Hamiltonian with open boundary conditions.

    Parameters
    ----------
    params : BHParams
        Chain parameters; ``(L, N)`` must match the basis
    basis : FockBasis
        Fock basis to write the matrix in

    Returns
    -------
    HermitianOperator
        Sparse Hamiltonian matrix
    """
    if (params.L, params.N) != (basis.L, basis.N):
        raise BasisError(
            f"params (L={params.L}, N={params.N}) do not match basis (L={basis.L}, N={basis.N})"
        )
    rows, cols, values = _hopping_entries(basis, params.J)
    n = basis.occupations.astype(float)
    onsite = 0.5 * params.U * np.sum(n * (n - 1.0), axis=1)
    rows += list(range(basis.dim))
    cols += list(range(basis.dim))
    values += list(onsite)
    matrix = sp.coo_matrix((values, (rows, cols)), shape=(basis.dim, basis.dim)).tocsr()
    return HermitianOperator(basis, matrix, params)


def number_operator(site: int, basis: FockBasis) -> HermitianOperator:
    """Diagonal occupation operator of a single (0-based) site."""
    if not 0 <= site < basis.L:
        raise BasisError(f"site {site} out of range for L={basis.L}")
    return HermitianOperator.from_diagonal(basis, basis.occupations[:, site].astype(float))


@dataclass(frozen=True, eq=False)
class Propagator:
    """Cached eigendecomposition ``H = V diag(w) V+`` for exact evolution.

    Instances built through :meth:`cached` are shared per key, the same way a
    toolset is reused for identical arguments; use :meth:`clear_cache` in tests.
    """

    basis: Basis
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    # Class-level cache to store instances by their arguments
    _instances: ClassVar[dict[Hashable, "Propagator"]] = {}

    @classmethod
    def from_operator(cls, op: HermitianOperator) -> "Propagator":
        defect = op.hermiticity_defect()
        if defect > HERMITIAN_TOLERANCE * max(1.0, float(abs(op.matrix).max() or 0.0)):
            raise NonHermitianError(f"operator is not Hermitian (max |H - H+| = {defect:.3g})")
        eigenvalues, eigenvectors = la.eigh(op.dense())
        return cls(op.basis, eigenvalues, eigenvectors)

    @classmethod
    def cached(cls, key: Hashable, builder: Callable[[], HermitianOperator]) -> "Propagator":
        """Return the propagator stored under ``key``, building it on first use."""
        if key in cls._instances:
            return cls._instances[key]
        instance = cls.from_operator(builder())
        cls._instances[key] = instance
        logger.debug(f"🆕 Cached propagator {key} (dim {instance.dim})")
        return instance

    @classmethod
    def for_bose_hubbard(cls, params: BHParams) -> "Propagator":
        """Shared propagator of the chain Hamiltonian for ``params``."""
        key = ("bose_hubbard", params.L, params.N, params.J, params.U)
        return cls.cached(key, lambda: build_hamiltonian(params, enumerate_basis(params.L, params.N)))

    @classmethod
    def clear_cache(cls):
        cls._instances.clear()
        logger.debug("🧹 Propagator cache cleared")

    @classmethod
    def get_cache_info(cls) -> dict:
        return {
            "cached_instances": len(cls._instances),
            "cached_keys": list(cls._instances.keys()),
        }

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T

    def evolve(self, amplitudes: np.ndarray, t: float) -> np.ndarray:
        coefficients = self.eigenvectors.conj().T @ amplitudes
        return self.eigenvectors @ (np.exp(-1j * self.eigenvalues * t) * coefficients)

    def overlap_series(
        self, amplitudes: np.ndarray, target: np.ndarray, times: np.ndarray
    ) -> np.ndarray:
        """``<target| exp(-iHt) |psi>`` for every t in ``times``."""
        coefficients = self.eigenvectors.conj().T @ amplitudes
        weights = np.conj(self.eigenvectors.conj().T @ target) * coefficients
        phases = np.exp(-1j * np.outer(np.asarray(times, dtype=float), self.eigenvalues))
        return phases @ weights


def propagate(
    state: StateVector, op: Union[HermitianOperator, Propagator], t: float
) -> StateVector:
    """Exact evolution ``exp(-iHt)|psi>``.

    Raises
    ------
    NonHermitianError
        If ``op`` is a non-Hermitian operator
    """
    if not np.isfinite(t):
        raise ConfigurationError(f"evolution time must be finite, got {t}")
    propagator = op if isinstance(op, Propagator) else Propagator.from_operator(op)
    if not same_basis(state.basis, propagator.basis):
        raise BasisError("state and operator live on different bases")
    return StateVector(state.basis, propagator.evolve(state.amplitudes, t))


def superfluid_state(params: BHParams, basis: FockBasis) -> StateVector:
    """Ground state of the U = 0 chain.

    The global phase is fixed so every amplitude is real and non-negative.

    Raises
    ------
    DegenerateGroundStateError
        If the two lowest levels coincide
    """
    if params.J <= 0:
        raise ConfigurationError(f"superfluid state needs J > 0, got J={params.J}")
    hamiltonian = build_hamiltonian(params.model_copy(update={"U": 0.0}), basis)
    if basis.dim == 1:
        return StateVector(basis, np.ones(1, dtype=complex))
    eigenvalues, eigenvectors = la.eigh(hamiltonian.dense(), subset_by_index=[0, 1])
    if eigenvalues[1] - eigenvalues[0] < 1e-9 * max(1.0, abs(params.J)):
        raise DegenerateGroundStateError(
            f"ground space degenerate for L={params.L}, N={params.N} (gap {eigenvalues[1] - eigenvalues[0]:.3g})"
        )
    ground = eigenvectors[:, 0]
    pivot = ground[np.argmax(np.abs(ground))]
    ground = ground * (abs(pivot) / pivot)
    return StateVector(basis, ground).normalized()


def project_hamiltonian(
    op: HermitianOperator, partition: LatticePartition
) -> list[tuple[FockBasis, HermitianOperator]]:
    """Zeno-projected dynamics split into independent sublattice Hamiltonians.

    Locked sites cut the hopping bonds around them, so ``P H P`` restricted to the
    locked-occupation sector is a sum of chain Hamiltonians, one per active
    sublattice, each at unit filling. The constant on-site energy of locked sites
    is dropped.
    """
    params = op.params
    if params is None:
        raise ConfigurationError("project_hamiltonian needs a Bose-Hubbard operator")
    if partition.L != params.L:
        raise BasisError(f"partition has L={partition.L}, operator has L={params.L}")
    if not params.unit_filling:
        raise LockRuleError(
            f"Zeno-locked sublattices need unit filling, operator has L={params.L}, N={params.N}"
        )
    blocks = []
    for start, stop in partition.sublattices:
        sites = stop - start
        basis = enumerate_basis(sites, sites)
        blocks.append((basis, build_hamiltonian(params.sublattice(sites), basis)))
    return blocks


def total_number_operator(basis: FockBasis) -> HermitianOperator:
    return HermitianOperator.from_diagonal(basis, basis.occupations.sum(axis=1).astype(float))


def embed_product_state(
    states: Sequence[StateVector], partition: LatticePartition, basis: FockBasis
) -> StateVector:
    """Full-lattice amplitudes of a product over sublattice states.

    Locked sites carry one particle each; ``states`` follow ``partition.sublattices``.
    """
    amplitudes = np.zeros(basis.dim, dtype=complex)
    locked = sorted(partition.locked)
    for k, occupation in enumerate(basis.states):
        if any(occupation[s] != 1 for s in locked):
            continue
        value = 1.0 + 0j
        for (start, stop), local in zip(partition.sublattices, states):
            piece = occupation[start:stop]
            if sum(piece) != stop - start:
                value = 0.0
                break
            value *= local.amplitudes[local.basis.index_of(piece)]
        amplitudes[k] = value
    return StateVector(basis, amplitudes)
