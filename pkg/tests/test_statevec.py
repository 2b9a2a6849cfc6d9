import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from qauction.statevec import (
    NotUnitaryError,
    RegisterLayout,
    StateVector,
    UnitaryMatrix,
    apply_diagonal_phase,
    apply_local,
    apply_product,
    measure,
    outcome_distribution,
)
from conftest import within_3sigma


def kron_embed(op, layout):
    """Explicit I (x) U (x) I, the reference for block application."""
    dim, left, right = layout.span(op.acts_on)
    return np.kron(np.kron(np.eye(left), op.matrix), np.eye(right))


def random_state(layout, rng):
    a = rng.normal(size=layout.size) + 1j * rng.normal(size=layout.size)
    return StateVector(a / np.linalg.norm(a), layout)


def test_layout_digits_round_trip():
    lay = RegisterLayout(3, 2)
    for x in range(lay.size):
        assert lay.index(lay.digits(x)) == x
    assert lay.digits(0b01_10_11) == (1, 2, 3)
    assert (lay.digit_table[0b01_10_11] == [1, 2, 3]).all()


def test_layout_cap(monkeypatch):
    with pytest.raises(ValueError, match="cap"):
        RegisterLayout(7, 3)
    monkeypatch.setenv("QAUCTION_MAX_QUBITS", "22")
    assert RegisterLayout(11, 2).n_qubits == 22


def test_span_requires_contiguous_group():
    lay = RegisterLayout(3, 1)
    assert lay.span((1, 2)) == (4, 2, 1)
    with pytest.raises(ValueError):
        lay.span((0, 2))


def test_non_unitary_rejected():
    with pytest.raises(NotUnitaryError):
        UnitaryMatrix(np.array([[1, 0], [0, 1.001]]))
    with pytest.raises(ValueError):
        UnitaryMatrix(np.ones((2, 3)))


def test_dimension_mismatch_rejected():
    lay = RegisterLayout(2, 2)
    with pytest.raises(ValueError, match="dim"):
        apply_local(StateVector.basis(lay), UnitaryMatrix.identity(2, (0,)))


def test_identity_leaves_state(rng, backend):
    lay = RegisterLayout(3, 2)
    s = random_state(lay, rng)
    out = apply_local(s, UnitaryMatrix.identity(4, (1,)))
    assert np.array_equal(out.amplitudes, s.amplitudes)


def test_two_bidder_product_state(backend):
    lay = RegisterLayout(2, 2)
    u = np.eye(4, dtype=complex)
    u[:, [0, 2]] = np.array([[1, 1], [0, 0], [1, -1], [0, 0]]) / np.sqrt(2)
    ops = [UnitaryMatrix(u, (0,)), UnitaryMatrix(u, (1,))]
    out = apply_product(StateVector.basis(lay), ops)
    expect = np.zeros(16)
    expect[[0, 2, 8, 10]] = 0.5
    assert np.allclose(out.amplitudes, expect, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 3), b=st.integers(1, 3), seed=st.integers(0, 2**32 - 1), data=st.data())
def test_block_application_matches_kron(n, b, seed, data):
    rng = np.random.default_rng(seed)
    lay = RegisterLayout(n, b)
    first = data.draw(st.integers(0, n - 1))
    width = data.draw(st.integers(1, n - first))
    group = tuple(range(first, first + width))
    op = UnitaryMatrix(unitary_group.rvs(2 ** (b * width), random_state=rng), group)
    s = random_state(lay, rng)
    dense = kron_embed(op, lay)
    assert np.max(np.abs(apply_local(s, op).amplitudes - dense @ s.amplitudes)) <= 1e-10
    assert np.max(np.abs(apply_local(s, op, adjoint=True).amplitudes - dense.conj().T @ s.amplitudes)) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), j=st.integers(0, 2))
def test_adjoint_inverts(seed, j):
    rng = np.random.default_rng(seed)
    lay = RegisterLayout(3, 2)
    op = UnitaryMatrix.random(4, rng, (j,))
    s = random_state(lay, rng)
    back = apply_local(apply_local(s, op), op, adjoint=True)
    assert np.max(np.abs(back.amplitudes - s.amplitudes)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), ops=st.lists(st.integers(0, 3), min_size=1, max_size=12))
def test_norm_conserved_over_sequences(seed, ops):
    rng = np.random.default_rng(seed)
    lay = RegisterLayout(3, 2)
    s = random_state(lay, rng)
    for kind in ops:
        if kind == 3:
            s = apply_diagonal_phase(s, rng.uniform(-4, 4, lay.size))
        else:
            s = apply_local(s, UnitaryMatrix.random(4, rng, (kind,)), adjoint=bool(rng.integers(2)))
    assert abs(s.norm - 1) <= 1e-9


def test_phase_zero_and_pi(rng):
    lay = RegisterLayout(2, 2)
    s = random_state(lay, rng)
    assert np.array_equal(apply_diagonal_phase(s, np.zeros(lay.size)).amplitudes, s.amplitudes)
    flipped = apply_diagonal_phase(s, lambda x: np.full(x.shape, np.pi))
    assert np.allclose(flipped.amplitudes, -s.amplitudes, atol=1e-15)
    assert np.allclose(flipped.probabilities, s.probabilities, atol=1e-15)


def test_phase_matches_dense_diagonal(rng, cfg22, backend):
    from qauction.allocation import cost

    lay = cfg22.layout
    s = random_state(lay, rng)
    c = np.array([cost(x, cfg22) for x in range(lay.size)])
    phases = 0.5 * c * 1.0
    dense = np.diag(np.exp(-1j * phases)) @ s.amplitudes
    assert np.max(np.abs(apply_diagonal_phase(s, phases).amplitudes - dense)) <= 1e-12


def test_measure_basis_and_support():
    lay = RegisterLayout(2, 2)
    g = np.random.default_rng(0)
    assert all(measure(StateVector.basis(lay, 7), g) == 7 for _ in range(50))
    a = np.zeros(16, complex)
    a[[0, 2]] = 1 / np.sqrt(2)
    assert {measure(StateVector(a, lay), g) for _ in range(200)} == {0, 2}


def test_measure_frequencies_uniform():
    lay = RegisterLayout(1, 2)
    s = StateVector(np.full(4, 0.5), lay)
    g = np.random.default_rng(2024)
    draws = np.array([measure(s, g) for _ in range(10000)])
    for k in range(4):
        assert within_3sigma(np.sum(draws == k), 10000, 0.25)


def test_measure_reproducible_and_rejects_unnormalized(rng):
    lay = RegisterLayout(2, 2)
    s = random_state(lay, rng)
    a = [measure(s, np.random.default_rng(9)) for _ in range(5)]
    assert len(set(a)) == 1
    with pytest.raises(ValueError):
        measure(StateVector(s.amplitudes * 1.01, lay), rng)


def test_outcome_distribution(rng):
    lay = RegisterLayout(2, 2)
    assert outcome_distribution(StateVector.basis(lay)) == {0: 1.0}
    a = np.zeros(16, complex)
    a[[0, 2, 8, 10]] = 0.5
    assert outcome_distribution(StateVector(a, lay)) == {0: 0.25, 2: 0.25, 8: 0.25, 10: 0.25}
    assert abs(sum(outcome_distribution(random_state(lay, rng)).values()) - 1) <= 1e-9


def test_state_is_immutable(rng):
    s = random_state(RegisterLayout(1, 2), rng)
    with pytest.raises(ValueError):
        s.amplitudes[0] = 0
