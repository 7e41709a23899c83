"""The qscGRN circuit: an Ry encoder layer followed by one c-Ry regulation layer per qubit.

``theta`` is an ``n x n`` float array. ``theta[k, k]`` is the encoder angle of
qubit ``k``; ``theta[k, p]`` (``k != p``) is the c-Ry angle with control ``k``
and target ``p``. The circuit applied to ``|0>_n`` is::

    L_enc, then L_0, L_1, ..., L_{n-1}

with L_k = c-Ry(k -> 0), c-Ry(k -> 1), ... (targets ascending, k skipped).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from qscgrn import statevec
from qscgrn.statevec import StateVector


class DegenerateDistributionError(ValueError):
    """All probability mass sits on the excluded all-zeros state."""


# Below this, 1 - P(|0>_n) is treated as zero.
DEGENERATE_TOL = 1e-12


class Gate(NamedTuple):
    control: int | None  # None for encoder Ry gates
    target: int

    @property
    def param(self) -> tuple[int, int]:
        """Index into theta holding this gate's angle."""
        if self.control is None:
            return (self.target, self.target)
        return (self.control, self.target)


@dataclass(frozen=True)
class CircuitPlan:
    n: int
    gates: tuple[Gate, ...]

    @property
    def n_parameters(self) -> int:
        return len(self.gates)

    def layers(self) -> list[tuple[Gate, ...]]:
        """Split into [L_enc, L_0, ..., L_{n-1}]."""
        n = self.n
        out = [self.gates[:n]]
        for k in range(n):
            start = n + k * (n - 1)
            out.append(self.gates[start:start + n - 1])
        return out


def check_theta(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ValueError(f"theta must be a square matrix, got shape {theta.shape}")
    if theta.shape[0] < 2:
        raise ValueError(f"theta needs at least 2 genes, got {theta.shape[0]}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta contains non-finite entries")
    return theta


def build_plan(theta_or_n) -> CircuitPlan:
    """Gate order for an n-qubit model; accepts a theta matrix or n itself."""
    if isinstance(theta_or_n, (int, np.integer)):
        n = int(theta_or_n)
        if n < 2:
            raise ValueError(f"the model needs at least 2 qubits, got {n}")
    else:
        n = check_theta(theta_or_n).shape[0]
    gates = [Gate(None, k) for k in range(n)]
    for k in range(n):
        gates.extend(Gate(k, i) for i in range(n) if i != k)
    return CircuitPlan(n, tuple(gates))


def apply_gate(state: StateVector, gate: Gate, angle: float) -> StateVector:
    if gate.control is None:
        return statevec.apply_ry(state, gate.target, angle)
    return statevec.apply_cry(state, gate.control, gate.target, angle)


def run_plan(plan: CircuitPlan, theta: np.ndarray, gates=None) -> StateVector:
    """Apply ``gates`` (default: the whole plan) to ``|0>_n``."""
    state = statevec.new_zero_state(plan.n)
    for gate in plan.gates if gates is None else gates:
        apply_gate(state, gate, theta[gate.param])
    return state


def forward(theta) -> StateVector:
    theta = check_theta(theta)
    return run_plan(build_plan(theta.shape[0]), theta)


def zero_and_rescale(probs: np.ndarray) -> np.ndarray:
    """Drop the all-zeros state and renormalize the rest to sum to 1."""
    probs = np.asarray(probs, dtype=np.float64)
    rest = probs[1:].sum()
    if rest <= DEGENERATE_TOL:
        raise DegenerateDistributionError(
            "all probability mass is on |0...0>; cannot rescale the remaining states"
        )
    out = probs / rest
    out[0] = 0.0
    return out


def output_distribution(theta) -> np.ndarray:
    return zero_and_rescale(statevec.probabilities(forward(theta)))


def smoothing_scale(n: int, m: float, alpha: float) -> tuple[float, float]:
    """(a, b) such that the smoothed distribution is a * p + b."""
    denom = m + (1 << n) * alpha
    return m / denom, alpha / denom


def loss_and_gradient(
    theta,
    p_obs_smoothed: np.ndarray,
    m: float,
    alpha: float,
    method: str = "adjoint",
) -> tuple[float, np.ndarray, np.ndarray]:
    """KL loss, its gradient in theta, and the unsmoothed output distribution.

    The loss chains squared amplitudes -> zero-and-rescale -> Laplace
    smoothing -> KL(p_out_hat || p_obs_hat). Only off-diagonal entries get a
    gradient; the diagonal of the returned matrix is exactly zero.

    ``method`` picks how derivative states are propagated: ``"adjoint"``
    sweeps the circuit backwards once; ``"forward"`` pushes one tangent
    state per parameter through the remaining gates. Both are exact.
    """
    theta = check_theta(theta)
    n = theta.shape[0]
    plan = build_plan(n)
    a, b = smoothing_scale(n, m, alpha)

    states = [statevec.new_zero_state(n)]
    for gate in plan.gates:
        states.append(apply_gate(states[-1].copy(), gate, theta[gate.param]))
    psi = states[-1].amplitudes

    probs = psi * psi
    rest = probs[1:].sum()
    if rest <= DEGENERATE_TOL:
        raise DegenerateDistributionError(
            "all probability mass is on |0...0>; cannot rescale the remaining states"
        )
    p_out = probs / rest
    p_out[0] = 0.0
    p_hat = a * p_out + b
    log_ratio = np.log(p_hat / p_obs_smoothed)
    loss = float(np.dot(p_hat, log_ratio))

    # dL/dP_x for x != 0, with the rescale denominator taken as sum_{x != 0} P_x.
    u = log_ratio + 1.0
    dl_dp = (a / rest) * (u - np.dot(u[1:], p_out[1:]))
    dl_dp[0] = 0.0
    cotangent = 2.0 * psi * dl_dp

    grad = np.zeros_like(theta)
    if method == "adjoint":
        lam = StateVector(n, cotangent)
        for g in range(len(plan.gates) - 1, n - 1, -1):
            gate = plan.gates[g]
            angle = theta[gate.param]
            d = statevec.cry_derivative(states[g], gate.control, gate.target, angle)
            grad[gate.param] = np.dot(lam.amplitudes, d.amplitudes)
            # Gates are orthogonal: transpose = inverse = c-Ry(-angle).
            statevec.apply_cry(lam, gate.control, gate.target, -angle)
    elif method == "forward":
        for g in range(n, len(plan.gates)):
            gate = plan.gates[g]
            d = statevec.cry_derivative(states[g], gate.control, gate.target, theta[gate.param])
            for later in plan.gates[g + 1:]:
                apply_gate(d, later, theta[later.param])
            grad[gate.param] = np.dot(cotangent, d.amplitudes)
    else:
        raise ValueError(f"unknown gradient method {method!r}")
    return loss, grad, p_out


def loss_gradient(theta, p_obs: np.ndarray, m: float, alpha: float = 1.0,
                  method: str = "adjoint") -> np.ndarray:
    """Gradient of the smoothed KL loss against an (unsmoothed) observed distribution."""
    p_obs = np.asarray(p_obs, dtype=np.float64)
    n = np.asarray(theta).shape[0]
    a, b = smoothing_scale(n, m, alpha)
    return loss_and_gradient(theta, a * p_obs + b, m, alpha, method)[1]


# --- ThetaMatrix CSV --------------------------------------------------------

def save_theta(path, theta) -> None:
    theta = check_theta(theta)
    lines = [",".join(f"{v:.17g}" for v in row) for row in theta]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_theta(path) -> np.ndarray:
    rows = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric theta entry") from None
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValueError(f"{path}: theta must be a square n x n matrix")
    return check_theta(np.array(rows))
