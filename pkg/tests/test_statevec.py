import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qscgrn import statevec as sv
from qscgrn.statevec import StateVector


def random_state(n, rng):
    a = rng.normal(size=1 << n)
    return StateVector(n, a / np.linalg.norm(a))


def basis(n, index):
    a = np.zeros(1 << n)
    a[index] = 1.0
    return StateVector(n, a)


def apply(state, gate):
    kind, *args = gate
    fn = {"ry": sv.apply_ry, "r": sv.apply_r, "cry": sv.apply_cry, "cnot": sv.apply_cnot}[kind]
    return fn(state, *args)


def all_gates(n, theta):
    for q in range(n):
        yield ("ry", q, theta)
        yield ("r", q, theta)
    for c, t in itertools.permutations(range(n), 2):
        yield ("cry", c, t, theta)
        yield ("cnot", c, t)


@pytest.mark.parametrize("n, expected", [
    (1, [1, 0]),
    (2, [1, 0, 0, 0]),
    (3, [1, 0, 0, 0, 0, 0, 0, 0]),
])
def test_zero_state(n, expected):
    np.testing.assert_array_equal(sv.new_zero_state(n).amplitudes, expected)


def test_zero_state_capacity(monkeypatch):
    with pytest.raises(sv.CapacityError):
        sv.new_zero_state(0)
    with pytest.raises(sv.CapacityError):
        sv.new_zero_state(25)
    monkeypatch.setenv("QSCGRN_MAX_QUBITS", "3")
    with pytest.raises(sv.CapacityError):
        sv.new_zero_state(4)
    assert len(sv.new_zero_state(3)) == 8


def test_ket_prints_highest_qubit_first():
    assert sv.ket(2, 2) == "|10>"
    assert sv.ket(1, 3) == "|001>"


@pytest.mark.parametrize("theta", [0.3, -1.7, np.pi / 3, 4.0])
def test_ry_on_zero(theta):
    s = sv.apply_ry(sv.new_zero_state(1), 0, theta)
    np.testing.assert_allclose(s.amplitudes, [np.cos(theta / 2), np.sin(theta / 2)], atol=1e-15)


def test_ry_pi_flips():
    s = sv.apply_ry(sv.new_zero_state(1), 0, np.pi)
    np.testing.assert_allclose(s.amplitudes, [0, 1], atol=1e-12)


def test_ry_zero_is_identity():
    rng = np.random.default_rng(1)
    s = random_state(3, rng)
    before = s.amplitudes.copy()
    sv.apply_ry(s, 1, 0.0)
    np.testing.assert_array_equal(s.amplitudes, before)


def test_ry_rejects_bad_qubit():
    with pytest.raises(IndexError):
        sv.apply_ry(sv.new_zero_state(2), 2, 0.1)


@pytest.mark.parametrize("theta", [0.4, 2.2, -3.0])
def test_table_mapping(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    # |00> -> |00>, |01> -> |01>, |10> -> c|10> + s|11>, |11> -> -s|10> + c|11>
    expected = {0: [1, 0, 0, 0], 1: [0, 1, 0, 0], 2: [0, 0, c, s], 3: [0, 0, -s, c]}
    for index, amps in expected.items():
        out = sv.apply_cry(basis(2, index), 1, 0, theta)
        np.testing.assert_allclose(out.amplitudes, amps, atol=1e-15)


def test_cry_rejects_same_qubit():
    with pytest.raises(ValueError):
        sv.apply_cry(sv.new_zero_state(2), 1, 1, 0.2)
    with pytest.raises(ValueError):
        sv.apply_cnot(sv.new_zero_state(2), 0, 0)


def test_cnot_basics():
    np.testing.assert_array_equal(sv.apply_cnot(basis(2, 2), 1, 0).amplitudes, basis(2, 3).amplitudes)
    np.testing.assert_array_equal(sv.apply_cnot(basis(2, 1), 1, 0).amplitudes, basis(2, 1).amplitudes)
    rng = np.random.default_rng(5)
    s = random_state(3, rng)
    before = s.amplitudes.copy()
    sv.apply_cnot(sv.apply_cnot(s, 0, 2), 0, 2)
    np.testing.assert_array_equal(s.amplitudes, before)


@pytest.mark.parametrize("c", [0.0, 0.3, -1.1, 2.5])
def test_r_is_ry_of_double_angle(c):
    np.testing.assert_allclose(sv.r_matrix(c), sv.ry_matrix(2 * c), atol=1e-15)
    rng = np.random.default_rng(2)
    s = random_state(2, rng)
    a = sv.apply_r(s.copy(), 1, c).amplitudes
    b = sv.apply_ry(s.copy(), 1, 2 * c).amplitudes
    np.testing.assert_array_equal(a, b)


def test_probabilities():
    np.testing.assert_array_equal(sv.probabilities(sv.new_zero_state(2)), [1, 0, 0, 0])
    s = sv.apply_ry(sv.new_zero_state(1), 0, np.pi / 2)
    np.testing.assert_allclose(sv.probabilities(s), [0.5, 0.5], atol=1e-15)


def test_oracle_matches_printed_matrices():
    for theta in np.linspace(-2 * np.pi, 2 * np.pi, 9):
        ctrl1_tgt0, ctrl0_tgt1 = sv.printed_cry_matrices(theta)
        np.testing.assert_allclose(sv.dense_unitary_oracle(("cry", 1, 0, theta), 2), ctrl1_tgt0, atol=1e-15)
        np.testing.assert_allclose(sv.dense_unitary_oracle(("cry", 0, 1, theta), 2), ctrl0_tgt1, atol=1e-15)


def test_oracle_tensor_order():
    theta = 0.7
    ry = sv.ry_matrix(theta)
    # qubit 0 is the rightmost kron factor
    np.testing.assert_allclose(sv.dense_unitary_oracle(("ry", 0, theta), 2), np.kron(np.eye(2), ry))
    np.testing.assert_allclose(sv.dense_unitary_oracle(("ry", 1, theta), 2), np.kron(ry, np.eye(2)))


def test_oracle_capacity():
    with pytest.raises(sv.CapacityError):
        sv.dense_unitary_oracle(("ry", 0, 0.1), 6)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_kernels_match_oracle(n):
    rng = np.random.default_rng(100 + n)
    thetas = rng.uniform(-2 * np.pi, 2 * np.pi, size=4)
    worst = 0.0
    for theta in thetas:
        for gate in all_gates(n, theta):
            u = sv.dense_unitary_oracle(gate, n)
            for _ in range(25):
                s = random_state(n, rng)
                expected = u @ s.amplitudes
                worst = max(worst, np.max(np.abs(apply(s, gate).amplitudes - expected)))
    assert worst < 1e-12


@pytest.mark.parametrize("theta", np.linspace(-2 * np.pi, 2 * np.pi, 32))
def test_cnot_decomposition(theta):
    # R(theta/4) CNOT R(-theta/4) CNOT, rightmost first; R on the target q0, control q1.
    n = 2
    seq = [("cnot", 1, 0), ("r", 0, -theta / 4), ("cnot", 1, 0), ("r", 0, theta / 4)]
    total = np.eye(4)
    for gate in seq:
        total = sv.dense_unitary_oracle(gate, n) @ total
    np.testing.assert_allclose(total, sv.dense_unitary_oracle(("cry", 1, 0, theta), n), atol=1e-12)
    for index in range(4):
        s = basis(n, index)
        for gate in seq:
            apply(s, gate)
        ref = sv.apply_cry(basis(n, index), 1, 0, theta)
        np.testing.assert_allclose(s.amplitudes, ref.amplitudes, atol=1e-12)


def test_cry_derivative_matches_finite_difference():
    rng = np.random.default_rng(7)
    s = random_state(3, rng)
    theta, h = 0.9, 1e-6
    d = sv.cry_derivative(s, 2, 0, theta).amplitudes
    up = sv.apply_cry(s.copy(), 2, 0, theta + h).amplitudes
    down = sv.apply_cry(s.copy(), 2, 0, theta - h).amplitudes
    np.testing.assert_allclose(d, (up - down) / (2 * h), atol=1e-9)


gate_strategy = st.one_of(
    st.tuples(st.just("ry"), st.integers(0, 3), st.floats(-10, 10)),
    st.tuples(st.just("cry"), st.integers(0, 3), st.integers(0, 3), st.floats(-10, 10)),
    st.tuples(st.just("cnot"), st.integers(0, 3), st.integers(0, 3)),
    st.tuples(st.just("r"), st.integers(0, 3), st.floats(-10, 10)),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(gate_strategy, max_size=30), st.integers(0, 2**32 - 1))
def test_norm_preserved(gates, seed):
    s = random_state(4, np.random.default_rng(seed))
    for gate in gates:
        if gate[0] in ("cry", "cnot") and gate[1] == gate[2]:
            continue
        apply(s, gate)
    assert abs(s.norm() - 1.0) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(-7, 7), st.floats(-7, 7), st.integers(0, 2**32 - 1))
def test_shared_control_gates_commute(a, b, seed):
    s = random_state(3, np.random.default_rng(seed))
    one = sv.apply_cry(sv.apply_cry(s.copy(), 0, 1, a), 0, 2, b)
    two = sv.apply_cry(sv.apply_cry(s.copy(), 0, 2, b), 0, 1, a)
    np.testing.assert_allclose(one.amplitudes, two.amplitudes, atol=1e-12)
