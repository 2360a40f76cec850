import numpy as np
import pytest
from scipy import stats

from zfumes.config import BHParams, Distribution
from zfumes.errors import BasisError, LockRuleError, NormalizationError
from zfumes.physics.bose_hubbard import superfluid_state
from zfumes.physics.fock import StateVector, enumerate_basis
from zfumes.physics.measurement import (
    LatticePartition,
    MeasurementOutcome,
    apply_locks,
    born_probabilities,
    fidelity,
    lockable_sites,
    measure_all_sites,
)
from zfumes.protocols.toy_model import sample_configuration


@pytest.fixture
def superfluid_two():
    return superfluid_state(BHParams(L=2, N=2), enumerate_basis(2, 2))


def test_born_probabilities_superfluid(superfluid_two):
    assert np.allclose(born_probabilities(superfluid_two), [0.25, 0.5, 0.25])


def test_born_probabilities_basis_state():
    basis = enumerate_basis(3, 3)
    p = born_probabilities(basis.basis_vector((0, 2, 1)))
    assert p[basis.index_of((0, 2, 1))] == 1.0
    assert p.sum() == 1.0


def test_born_rejects_unnormalized():
    basis = enumerate_basis(2, 2)
    with pytest.raises(NormalizationError):
        born_probabilities(StateVector(basis, np.ones(3)))


def test_born_chi_square(rng):
    basis = enumerate_basis(3, 3)
    state = superfluid_state(BHParams(L=3, N=3), basis)
    p = born_probabilities(state)
    draws = 20_000
    counts = np.zeros(basis.dim)
    for _ in range(draws):
        outcome, _ = measure_all_sites(state, rng)
        counts[basis.index_of(outcome.occupations)] += 1
    assert stats.chisquare(counts, p * draws).pvalue > 0.01


def test_measure_mott_state(rng):
    basis = enumerate_basis(3, 3)
    outcome, collapsed = measure_all_sites(basis.basis_vector((1, 1, 1)), rng)
    assert outcome.occupations == (1, 1, 1)
    assert fidelity(collapsed, (1, 1, 1)) == 1.0


def test_measure_frequency(superfluid_two, rng):
    hits = sum(measure_all_sites(superfluid_two, rng)[0].occupations == (1, 1) for _ in range(10_000))
    assert abs(hits / 10_000 - 0.5) < 0.015


def test_measure_seeded_determinism(superfluid_two):
    def draw(seed):
        gen = np.random.default_rng(seed)
        return [measure_all_sites(superfluid_two, gen)[0].occupations for _ in range(50)]

    assert draw(7) == draw(7)


def test_collapse_idempotent(superfluid_two, rng):
    outcome, collapsed = measure_all_sites(superfluid_two, rng)
    for _ in range(20):
        again, _ = measure_all_sites(collapsed, rng)
        assert again.occupations == outcome.occupations


def test_lockable_mott_outcome():
    partition = LatticePartition.full(5)
    assert lockable_sites(MeasurementOutcome((1,) * 5), partition) == frozenset(range(5))


def test_lockable_examples():
    partition = LatticePartition.full(3)
    assert lockable_sites((2, 0, 1), partition) == {2}
    assert lockable_sites((0, 1, 2), partition) == frozenset()


def test_lockable_inside_sublattices():
    partition = LatticePartition.from_locked(7, {0: 1, 6: 1})
    assert partition.sublattices == ((1, 6),)
    assert lockable_sites((1, 2, 0, 1, 1, 1, 1), partition) == {3, 4, 5}


def test_lockable_rejects_inconsistent_outcome():
    partition = LatticePartition.from_locked(3, {0: 1})
    with pytest.raises(LockRuleError):
        lockable_sites((2, 1, 0), partition)


@pytest.mark.parametrize("L", [1, 2, 3, 4])
def test_lockable_matches_global_condition(L):
    partition = LatticePartition.full(L)
    for state in enumerate_basis(L, L).states:
        expected = {
            j
            for j in range(L)
            if state[j] == 1 and sum(state[:j]) == j and sum(state[j + 1 :]) == L - 1 - j
        }
        assert lockable_sites(state, partition) == expected


def test_apply_locks_examples():
    outcome = (1,) * 7
    partition = apply_locks(LatticePartition.full(7), {0, 6}, outcome)
    assert partition.sublattices == ((1, 6),)
    split = apply_locks(LatticePartition.full(7), {3}, outcome)
    assert split.sublattices == ((0, 3), (4, 7))
    complete = apply_locks(LatticePartition.full(7), range(7), outcome)
    assert complete.is_complete


def test_apply_locks_rejects_bad_split():
    with pytest.raises(LockRuleError):
        apply_locks(LatticePartition.full(3), {1}, (2, 1, 0))
    with pytest.raises(LockRuleError):
        apply_locks(LatticePartition.full(3), {0}, (2, 1, 0))
    locked = apply_locks(LatticePartition.full(3), {0}, (1, 1, 1))
    with pytest.raises(LockRuleError):
        apply_locks(locked, {0}, (1, 1, 1))


@pytest.mark.parametrize("distribution", list(Distribution))
def test_fuzzed_lock_sequences_keep_unit_filling(distribution, rng):
    for _ in range(2_000):
        L = int(rng.integers(1, 11))
        partition = LatticePartition.full(L)
        locked_history = set()
        while not partition.is_complete:
            outcome = [1] * L
            for start, stop in partition.sublattices:
                outcome[start:stop] = sample_configuration(stop - start, distribution, rng)
            partition = apply_locks(partition, lockable_sites(outcome, partition), outcome)
            assert locked_history <= partition.locked_sites
            locked_history = set(partition.locked_sites)
            for start, stop in partition.sublattices:
                assert sum(outcome[start:stop]) == stop - start


def test_fidelity_examples(superfluid_two):
    basis = superfluid_two.basis
    assert fidelity(superfluid_two, superfluid_two) == pytest.approx(1.0)
    assert fidelity(basis.basis_vector((2, 0)), (0, 2)) == 0.0
    assert fidelity(superfluid_two, (1, 1)) == pytest.approx(0.5)
    with pytest.raises(BasisError):
        fidelity(superfluid_two, enumerate_basis(2, 1).basis_vector((1, 0)))
