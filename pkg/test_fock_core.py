"""
Tests for the truncated four-mode Fock space: basis, ladder operators,
sparse operator algebra, states and expectation values.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import InvalidStateError, NumericalGuardError, TruncationMismatchError
from fock_core import (
    MODES,
    Beam,
    LadderKind,
    ModeId,
    OccupationState,
    Polarization,
    QuantumState,
    SparseOperator,
    Truncation,
    adjoint,
    basis_index,
    commutator,
    compose,
    enumerate_basis,
    expectation,
    fock_state,
    is_block_diagonal,
    iter_blocks,
    ladder,
    number_op,
    occupation_at,
)


def random_pure(truncation, seed):
    rng = np.random.default_rng(seed)
    vec = rng.standard_normal(truncation.dimension) + 1j * rng.standard_normal(truncation.dimension)
    return QuantumState.pure(vec / np.linalg.norm(vec), truncation)


def dense_lowering(mode: ModeId, truncation: Truncation) -> np.ndarray:
    """Brute-force a_mode from the enumerated basis."""
    basis = enumerate_basis(truncation)
    position = {"AH": 0, "AV": 1, "BH": 2, "BV": 3}[mode.label]
    out = np.zeros((len(basis), len(basis)), dtype=complex)
    for col, occ in enumerate(basis):
        n = occ[position]
        if n == 0:
            continue
        target = list(occ)
        target[position] -= 1
        out[basis_index(OccupationState(*target), truncation), col] = np.sqrt(n)
    return out


@pytest.mark.parametrize("n_max", range(6))
def test_basis_size_and_order(n_max):
    t = Truncation(n_max)
    basis = enumerate_basis(t)
    assert len(basis) == t.dimension == ((n_max + 1) * (n_max + 2) // 2) ** 2
    keys = [(o.n_A, o.n_AH, o.n_B, o.n_BH) for o in basis]
    assert keys == sorted(keys)
    assert all(o.n_A <= n_max and o.n_B <= n_max for o in basis)


def test_index_bijection():
    t = Truncation(3)
    for k in range(t.dimension):
        assert basis_index(occupation_at(k, t), t) == k
    with pytest.raises(IndexError):
        occupation_at(t.dimension, t)


def test_basis_index_outside_truncation():
    with pytest.raises(InvalidStateError):
        basis_index(OccupationState(2, 1, 0, 0), Truncation(2))


def test_truncation_rejects_negative():
    with pytest.raises(ValueError):
        Truncation(-1)


@pytest.mark.parametrize("n_max", [0, 1, 3])
def test_ladder_matches_brute_force(n_max):
    t = Truncation(n_max)
    for mode in MODES:
        lower = ladder(mode, LadderKind.LOWER, t).to_scipy().toarray()
        raise_ = ladder(mode, LadderKind.RAISE, t).to_scipy().toarray()
        assert_allclose(lower, dense_lowering(mode, t), atol=1e-14)
        assert_allclose(raise_, lower.conj().T, atol=1e-14)


def test_commutator_is_identity_below_cap():
    t = Truncation(3)
    mode = ModeId(Beam.A, Polarization.V)
    a = ladder(mode, LadderKind.LOWER, t)
    ad = ladder(mode, LadderKind.RAISE, t)
    comm = commutator(a, ad).to_scipy().toarray()
    below = [k for k, o in enumerate(enumerate_basis(t)) if o.n_A < t.n_max_per_beam]
    assert_allclose(comm[np.ix_(below, below)], np.eye(len(below)), atol=1e-14)


def test_number_operator_diagonal():
    t = Truncation(2)
    diag = number_op(Beam.B, t).to_scipy().diagonal()
    assert_allclose(diag, [o.n_B for o in enumerate_basis(t)])


def test_block_diagonal_detection():
    t = Truncation(2)
    a_h = ladder(ModeId(Beam.A, Polarization.H), LadderKind.LOWER, t)
    ad_v = ladder(ModeId(Beam.A, Polarization.V), LadderKind.RAISE, t)
    assert is_block_diagonal(number_op(Beam.A, t))
    assert is_block_diagonal(compose(ad_v, a_h))
    assert not is_block_diagonal(a_h)


def test_truncation_mismatch():
    with pytest.raises(TruncationMismatchError):
        number_op(Beam.A, Truncation(1)) @ number_op(Beam.A, Truncation(2))
    with pytest.raises(TruncationMismatchError):
        expectation(fock_state(OccupationState(0, 0, 0, 0), Truncation(1)), number_op(Beam.A, Truncation(2)))


def test_operator_algebra_matches_dense():
    t = Truncation(2)
    a_h = ladder(ModeId(Beam.A, Polarization.H), LadderKind.LOWER, t)
    b_v = ladder(ModeId(Beam.B, Polarization.V), LadderKind.RAISE, t)
    op = (a_h @ b_v + b_v.adjoint() * 2.0) - number_op(Beam.A, t)
    dense_a = a_h.to_scipy().toarray()
    dense_b = b_v.to_scipy().toarray()
    expected = dense_a @ dense_b + 2.0 * dense_b.conj().T - number_op(Beam.A, t).to_scipy().toarray()
    assert_allclose(op.to_scipy().toarray(), expected, atol=1e-14)
    assert_allclose(op.trace(), np.trace(expected), atol=1e-12)
    psi = random_pure(t, 3).vector
    assert_allclose(op.apply(psi), expected @ psi, atol=1e-12)


def random_operator(truncation, rng, terms=2):
    dim = truncation.beam_dimension
    def factor():
        return rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return sum((SparseOperator.product(factor(), factor(), truncation) for _ in range(terms)),
               SparseOperator.zero(truncation))


def test_adjoint_is_an_involution():
    t = Truncation(2)
    op = random_operator(t, np.random.default_rng(1)) @ ladder(ModeId(Beam.A, Polarization.V), LadderKind.RAISE, t)
    twice = adjoint(adjoint(op)).to_scipy()
    assert (twice != op.to_scipy()).nnz == 0


@pytest.mark.parametrize("seed", range(5))
def test_compose_is_associative(seed):
    t = Truncation(1)
    rng = np.random.default_rng(seed)
    x, y, z = (random_operator(t, rng) for _ in range(3))
    left = compose(compose(x, y), z).to_scipy().toarray()
    right = compose(x, compose(y, z)).to_scipy().toarray()
    assert_allclose(left, right, atol=1e-12)


def test_expectation_pure_and_mixed_agree():
    t = Truncation(2)
    state = random_pure(t, 11)
    hop = (ladder(ModeId(Beam.A, Polarization.H), LadderKind.RAISE, t)
           @ ladder(ModeId(Beam.B, Polarization.V), LadderKind.LOWER, t))
    op = (hop + hop.adjoint()).mark_hermitian()
    dense = op.to_scipy().toarray()
    exact = np.vdot(state.vector, dense @ state.vector).real
    assert_allclose(expectation(state, op), exact, atol=1e-12)
    assert_allclose(expectation(state.as_mixed(), op), exact, atol=1e-12)


def test_expectation_guard_on_complex_value():
    t = Truncation(1)
    vec = np.zeros(t.dimension, dtype=complex)
    vec[basis_index(OccupationState(0, 0, 0, 0), t)] = 1 / np.sqrt(2)
    vec[basis_index(OccupationState(1, 0, 0, 0), t)] = 1j / np.sqrt(2)
    state = QuantumState.pure(vec, t)
    fake = ladder(ModeId(Beam.A, Polarization.H), LadderKind.RAISE, t).mark_hermitian(check=False)
    with pytest.raises(NumericalGuardError):
        expectation(state, fake)


def test_mark_hermitian_checks():
    t = Truncation(1)
    with pytest.raises(NumericalGuardError):
        ladder(ModeId(Beam.A, Polarization.H), LadderKind.RAISE, t).mark_hermitian()


def test_entries_of_hermitian_operator():
    t = Truncation(2)
    raise_ah = ladder(ModeId(Beam.A, Polarization.H), LadderKind.RAISE, t)
    hop = raise_ah @ ladder(ModeId(Beam.B, Polarization.V), LadderKind.LOWER, t)
    op = (hop + hop.adjoint()).mark_hermitian()
    entries = op.entries()
    dense = op.to_scipy().toarray()
    assert len(entries) == np.count_nonzero(dense)
    for (r, c), value in entries.items():
        assert value == dense[r, c]
        assert abs(value - np.conj(entries[(c, r)])) <= 1e-14


class TestQuantumState:
    def test_pure_norm_enforced(self):
        t = Truncation(1)
        with pytest.raises(InvalidStateError):
            QuantumState.pure(np.ones(t.dimension), t)

    def test_mixed_trace_and_psd_enforced(self):
        t = Truncation(1)
        with pytest.raises(InvalidStateError):
            QuantumState.mixed(np.eye(t.dimension), t)
        bad = np.zeros((t.dimension, t.dimension))
        bad[0, 0], bad[1, 1] = 1.5, -0.5
        with pytest.raises(InvalidStateError):
            QuantumState.mixed(bad, t)

    def test_non_finite_entries_trip_guard(self):
        t = Truncation(1)
        vector = np.zeros(t.dimension, dtype=complex)
        vector[0] = np.nan
        with pytest.raises(NumericalGuardError):
            QuantumState.pure(vector, t)
        rho = np.zeros((t.dimension, t.dimension))
        rho[0, 0] = np.inf
        with pytest.raises(NumericalGuardError):
            QuantumState.mixed(rho, t)

    def test_fidelity_and_purity(self):
        t = Truncation(1)
        psi = random_pure(t, 5)
        assert_allclose(psi.fidelity(psi.as_mixed()), 1.0, atol=1e-12)
        assert_allclose(psi.as_mixed().purity(), 1.0, atol=1e-12)
        other = random_pure(t, 6)
        assert 0.0 <= psi.fidelity(other) < 1.0

    def test_fock_state(self):
        t = Truncation(2)
        state = fock_state(OccupationState(1, 1, 0, 2), t)
        assert_allclose(expectation(state, number_op(Beam.A, t)), 2.0)
        assert_allclose(expectation(state, number_op(Beam.B, t)), 2.0)


def test_iter_blocks_partition():
    t = Truncation(3)
    seen = np.concatenate([idx for _, _, idx in iter_blocks(t)])
    assert sorted(seen.tolist()) == list(range(t.dimension))
    basis = enumerate_basis(t)
    for n_a, n_b, idx in iter_blocks(t):
        assert all(basis[k].n_A == n_a and basis[k].n_B == n_b for k in idx)


def test_local_operator_kron_layout():
    t = Truncation(1)
    op = SparseOperator.local(Beam.B, np.diag([0.0, 1.0, 2.0]), t)
    diag = op.to_scipy().diagonal().real
    assert_allclose(diag, np.tile([0.0, 1.0, 2.0], 3))
