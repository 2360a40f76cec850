from math import comb

import numpy as np
import pytest

from zfumes.errors import BasisError, DimensionOverflowError, NormalizationError
from zfumes.physics.fock import StateVector, dim_unit_filling, enumerate_basis


def test_two_sites_two_particles():
    basis = enumerate_basis(2, 2)
    assert basis.states == ((2, 0), (1, 1), (0, 2))
    assert basis.dim == 3


def test_unit_filling_seven_sites():
    assert enumerate_basis(7, 7).dim == 1716


def test_single_site():
    assert enumerate_basis(1, 5).states == ((5,),)


def test_zero_sites_rejected():
    with pytest.raises(BasisError):
        enumerate_basis(0, 3)


def test_dimension_cap():
    with pytest.raises(DimensionOverflowError):
        enumerate_basis(13, 1)


@pytest.mark.parametrize("L", range(1, 7))
@pytest.mark.parametrize("N", range(0, 7))
def test_stars_and_bars_count(L, N):
    basis = enumerate_basis(L, N)
    assert basis.dim == comb(N + L - 1, N)
    assert len(set(basis.states)) == basis.dim
    assert list(basis.states) == sorted(basis.states, reverse=True)
    assert all(sum(state) == N for state in basis.states)
    assert np.array_equal(basis.occupations.astype(int), np.array(basis.states))


@pytest.mark.parametrize("N, expected", [(1, 1), (3, 10), (7, 1716)])
def test_dim_unit_filling_values(N, expected):
    assert dim_unit_filling(N) == expected


@pytest.mark.parametrize("N", range(1, 9))
def test_dim_unit_filling_matches_enumeration(N):
    assert dim_unit_filling(N) == enumerate_basis(N, N).dim


def test_dim_unit_filling_overflow():
    with pytest.raises(DimensionOverflowError):
        dim_unit_filling(40)


def test_lookup_round_trip():
    basis = enumerate_basis(4, 4)
    for k in range(basis.dim):
        assert basis.lookup(basis.lookup(k)) == k
    assert basis.state_of(basis.lookup((1, 1, 1, 1))) == (1, 1, 1, 1)


def test_lookup_errors():
    basis = enumerate_basis(2, 2)
    with pytest.raises(BasisError):
        basis.lookup((2, 1))
    with pytest.raises(BasisError):
        basis.lookup(basis.dim)


def test_mott_state_needs_unit_filling():
    assert enumerate_basis(3, 3).mott_state() == (1, 1, 1)
    with pytest.raises(BasisError):
        enumerate_basis(3, 2).mott_state()


def test_state_vector_normalization():
    basis = enumerate_basis(2, 2)
    state = StateVector(basis, np.array([1.0, 1.0, 0.0]))
    with pytest.raises(NormalizationError):
        state.require_normalized()
    assert state.normalized().is_normalized()
    with pytest.raises(BasisError):
        StateVector(basis, np.ones(2))
