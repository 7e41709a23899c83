"""Real-amplitude statevector simulation for the Ry / c-Ry / CNOT / R gate set.

Qubit ``k`` is bit ``k`` of the basis index (q_0 least significant). Every
gate here is a real orthogonal matrix, so amplitudes are float64.

Kernels update the amplitude vector in place through reshaped views: for a
target qubit ``t`` the vector is viewed as ``(2**(n-1-t), 2, 2**t)`` and the
middle axis selects the pair partner. Controlled gates add a second split on
the control bit. Nothing larger than ``2**n`` is ever allocated outside the
``n <= 5`` dense oracle used by the tests.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_MAX_QUBITS = 24
ORACLE_MAX_QUBITS = 5


class CapacityError(ValueError):
    """Requested register is larger than the configured cap."""


def max_qubits() -> int:
    """Qubit cap, overridable through ``QSCGRN_MAX_QUBITS``."""
    raw = os.environ.get("QSCGRN_MAX_QUBITS")
    if raw is None:
        return DEFAULT_MAX_QUBITS
    try:
        cap = int(raw)
    except ValueError:
        raise CapacityError(f"QSCGRN_MAX_QUBITS must be an integer, got {raw!r}") from None
    if cap < 1:
        raise CapacityError(f"QSCGRN_MAX_QUBITS must be >= 1, got {cap}")
    return cap


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.float64)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got shape {self.amplitudes.shape}"
            )

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.dot(self.amplitudes, self.amplitudes))

    def __len__(self) -> int:
        return self.amplitudes.shape[0]


def ket(index: int, n: int) -> str:
    """Render a basis index as ``|q_{n-1} ... q_0>``."""
    if not 0 <= index < (1 << n):
        raise IndexError(f"basis index {index} out of range for {n} qubits")
    return "|" + format(index, f"0{n}b") + ">"


def new_zero_state(n: int) -> StateVector:
    cap = max_qubits()
    if not 1 <= n <= cap:
        raise CapacityError(f"number of qubits must be in [1, {cap}], got {n}")
    amps = np.zeros(1 << n)
    amps[0] = 1.0
    return StateVector(n, amps)


def _check_qubit(state: StateVector, qubit: int, what: str = "qubit") -> None:
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(f"{what} {qubit} out of range for {state.n_qubits} qubits")


def _check_pair(state: StateVector, control: int, target: int) -> None:
    _check_qubit(state, control, "control")
    _check_qubit(state, target, "target")
    if control == target:
        raise ValueError(f"control and target must differ (both {control})")


def _pair_views(amps: np.ndarray, n: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    v = amps.reshape(1 << (n - 1 - target), 2, 1 << target)
    return v[:, 0, :], v[:, 1, :]


def _controlled_pair_views(
    amps: np.ndarray, n: int, control: int, target: int
) -> tuple[np.ndarray, np.ndarray]:
    # Views onto the control=1 subspace, split on the target bit.
    hi, lo = max(control, target), min(control, target)
    v = amps.reshape(1 << (n - 1 - hi), 2, 1 << (hi - 1 - lo), 2, 1 << lo)
    if control > target:
        return v[:, 1, :, 0, :], v[:, 1, :, 1, :]
    return v[:, 0, :, 1, :], v[:, 1, :, 1, :]


def _rotate(a0: np.ndarray, a1: np.ndarray, cos: float, sin: float) -> None:
    t0 = a0.copy()
    a0 *= cos
    a0 -= sin * a1
    a1 *= cos
    a1 += sin * t0


def apply_ry(state: StateVector, qubit: int, theta: float) -> StateVector:
    """Apply Ry(theta) to ``qubit`` in place and return ``state``."""
    _check_qubit(state, qubit)
    if not np.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta}")
    a0, a1 = _pair_views(state.amplitudes, state.n_qubits, qubit)
    _rotate(a0, a1, np.cos(theta / 2), np.sin(theta / 2))
    return state


def apply_r(state: StateVector, qubit: int, c: float) -> StateVector:
    """Plain rotation R(c) = [[cos c, -sin c], [sin c, cos c]], i.e. Ry(2c)."""
    return apply_ry(state, qubit, 2.0 * c)


def apply_cry(state: StateVector, control: int, target: int, theta: float) -> StateVector:
    """Apply Ry(theta) to ``target`` on the subspace where ``control`` is 1."""
    _check_pair(state, control, target)
    if not np.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta}")
    a0, a1 = _controlled_pair_views(state.amplitudes, state.n_qubits, control, target)
    _rotate(a0, a1, np.cos(theta / 2), np.sin(theta / 2))
    return state


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    _check_pair(state, control, target)
    a0, a1 = _controlled_pair_views(state.amplitudes, state.n_qubits, control, target)
    t0 = a0.copy()
    a0[...] = a1
    a1[...] = t0
    return state


def cry_derivative(state: StateVector, control: int, target: int, theta: float) -> StateVector:
    """Return d/dtheta of c-Ry(theta) applied to ``state`` as a new vector.

    dRy(theta)/dtheta = Ry(theta + pi) / 2, restricted to the control-1
    subspace; the control-0 block is constant and differentiates to zero.
    """
    _check_pair(state, control, target)
    n = state.n_qubits
    out = np.zeros_like(state.amplitudes)
    s0, s1 = _controlled_pair_views(state.amplitudes, n, control, target)
    d0, d1 = _controlled_pair_views(out, n, control, target)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    # 0.5 * [[-s, -c], [c, -s]]
    d0[...] = -0.5 * (s * s0 + c * s1)
    d1[...] = 0.5 * (c * s0 - s * s1)
    return StateVector(n, out)


def probabilities(state: StateVector) -> np.ndarray:
    """Squared amplitudes, indexed by basis state."""
    return state.amplitudes * state.amplitudes


# --- dense oracle (tests only) ---------------------------------------------

def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]])


def r_matrix(c: float) -> np.ndarray:
    return np.array([[np.cos(c), -np.sin(c)], [np.sin(c), np.cos(c)]])


_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_P0 = np.diag([1.0, 0.0])
_P1 = np.diag([0.0, 1.0])


def _embed(ops: dict[int, np.ndarray], n: int) -> np.ndarray:
    # Qubit n-1 is the leftmost kron factor, qubit 0 the rightmost.
    out = np.ones((1, 1))
    for q in range(n - 1, -1, -1):
        out = np.kron(out, ops.get(q, np.eye(2)))
    return out


def dense_unitary_oracle(gate: Sequence, n: int) -> np.ndarray:
    """Full ``2**n x 2**n`` matrix of one gate, built from explicit tensor products.

    ``gate`` is one of ``("ry", q, theta)``, ``("r", q, c)``,
    ``("cry", control, target, theta)`` or ``("cnot", control, target)``.
    """
    if not 1 <= n <= ORACLE_MAX_QUBITS:
        raise CapacityError(f"dense oracle supports 1..{ORACLE_MAX_QUBITS} qubits, got {n}")
    kind, *args = gate
    if kind == "ry":
        q, theta = args
        return _embed({q: ry_matrix(theta)}, n)
    if kind == "r":
        q, c = args
        return _embed({q: r_matrix(c)}, n)
    if kind in ("cry", "cnot"):
        control, target = args[0], args[1]
        if control == target:
            raise ValueError("control and target must differ")
        u = ry_matrix(args[2]) if kind == "cry" else _X
        return _embed({control: _P0}, n) + _embed({control: _P1, target: u}, n)
    raise ValueError(f"unknown gate kind {kind!r}")


def printed_cry_matrices(theta: float) -> tuple[np.ndarray, np.ndarray]:
    """The two 4x4 controlled-Ry matrices written out entry by entry.

    First: control q_1, target q_0. Second: control q_0, target q_1.
    """
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    ctrl1_tgt0 = np.array([
        [1, 0, 0, 0],
        [0, 1, 0, 0],
        [0, 0, c, -s],
        [0, 0, s, c],
    ])
    ctrl0_tgt1 = np.array([
        [1, 0, 0, 0],
        [0, c, 0, -s],
        [0, 0, 1, 0],
        [0, s, 0, c],
    ])
    return ctrl1_tgt0, ctrl0_tgt1
