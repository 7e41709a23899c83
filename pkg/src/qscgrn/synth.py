"""Synthetic single-cell data sampled from a known circuit, for closed-loop checks."""
from __future__ import annotations

import logging

import numpy as np
from scipy.optimize import least_squares

from qscgrn import model, statevec
from qscgrn.ingest import BinarizedMatrix

logger = logging.getLogger(__name__)

MAX_DRAWS = 100


def qubit_marginals(theta) -> np.ndarray:
    """P(q_k = 1) of the full output state, for every qubit k."""
    probs = statevec.probabilities(model.forward(theta))
    n = np.asarray(theta).shape[0]
    idx = np.arange(1 << n)
    return np.array([probs[(idx >> k) & 1 == 1].sum() for k in range(n)])


def _balance(theta: np.ndarray) -> tuple[np.ndarray, float]:
    # Re-solve one incoming edge per target (control (p+1) % n -> p) so every
    # output marginal equals the encoder's sin^2(theta_pp / 2).
    n = theta.shape[0]
    slots = [((p + 1) % n, p) for p in range(n)]
    goal = np.sin(np.diag(theta) / 2) ** 2

    def residual(x):
        t = theta.copy()
        for (k, p), v in zip(slots, x):
            t[k, p] = v
        return qubit_marginals(t) - goal

    fit = least_squares(residual, [theta[s] for s in slots], bounds=(-1.5, 1.5),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    out = theta.copy()
    for (k, p), v in zip(slots, fit.x):
        out[k, p] = v
    return out, float(np.max(np.abs(fit.fun)))


def random_theta(n: int, rng: np.random.Generator, offdiag_range: float = 0.5,
                 diag_range: tuple[float, float] = (0.8, 2.4), consistent: bool = True,
                 min_gap: float = 0.05) -> np.ndarray:
    """Draw a ground-truth theta.

    With ``consistent=True`` the draw is adjusted to lie in the family the
    inference pipeline can reach: the output marginal of each qubit equals
    sin^2(theta_kk / 2), and those marginals decrease with k by at least
    ``min_gap``. That way the frozen encoder fitted from data matches the
    true diagonal and the activation-ratio reordering is the identity.
    Draws that cannot be balanced are rejected and redrawn from ``rng``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    for _ in range(MAX_DRAWS):
        theta = rng.uniform(-offdiag_range, offdiag_range, size=(n, n))
        np.fill_diagonal(theta, np.sort(rng.uniform(*diag_range, size=n))[::-1])
        if not consistent:
            return theta
        act = np.sin(np.diag(theta) / 2) ** 2
        if np.any(-np.diff(act) < min_gap):
            continue
        theta, resid = _balance(theta)
        if resid < 1e-10:
            return theta
    raise RuntimeError(f"no encoder-consistent theta found in {MAX_DRAWS} draws")


def sample_cells(theta, m: int, rng: np.random.Generator,
                 gene_names: list[str] | None = None) -> BinarizedMatrix:
    """Sample m i.i.d. cell labels from |<x|psi(theta)>|^2, all-zeros state included."""
    theta = model.check_theta(theta)
    n = theta.shape[0]
    probs = statevec.probabilities(model.forward(theta))
    labels = rng.choice(1 << n, size=m, p=probs / probs.sum())
    bits = (labels[None, :] >> np.arange(n)[:, None]) & 1
    names = gene_names or [f"g{k}" for k in range(n)]
    return BinarizedMatrix(names, bits)
