"""Parameter initialization, smoothing, loss/error metrics and the gradient-descent loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from qscgrn import model

logger = logging.getLogger(__name__)

INIT_STRATEGIES = ("zeros", "uniform", "normal")


class DivergenceError(FloatingPointError):
    def __init__(self, iteration: int, what: str):
        super().__init__(f"non-finite {what} at iteration {iteration}")
        self.iteration = iteration


@dataclass
class InitStrategy:
    """How the regulation (off-diagonal) angles start out.

    ``zeros`` is the reproducible default. ``uniform`` draws from
    [low, high) and ``normal`` from N(mean, sd); both need a seed.
    """

    kind: str = "zeros"
    seed: int | None = None
    low: float = -0.1
    high: float = 0.1
    mean: float = 0.0
    sd: float = 0.1

    def __post_init__(self):
        if self.kind not in INIT_STRATEGIES:
            raise ValueError(f"init strategy must be one of {INIT_STRATEGIES}, got {self.kind!r}")
        if self.kind != "zeros" and self.seed is None:
            raise ValueError(f"init strategy {self.kind!r} requires a seed")


@dataclass
class TrainConfig:
    learning_rate: float = 1.0
    max_iterations: int = 50_000
    loss_threshold: float | None = None  # None -> 2**n * 1e-6
    alpha: float = 1.0
    init: InitStrategy = field(default_factory=InitStrategy)
    log_every: int = 100

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")

    def threshold_for(self, n: int) -> float:
        if self.loss_threshold is None:
            return (1 << n) * 1e-6
        return self.loss_threshold

    def to_dict(self) -> dict:
        return asdict(self)


def init_theta(activation_ratios, strategy: InitStrategy | None = None) -> np.ndarray:
    """Encoder angles 2*asin(sqrt(act_k)) on the diagonal, regulation angles per strategy."""
    strategy = strategy or InitStrategy()
    act = np.asarray(activation_ratios, dtype=np.float64)
    if np.any((act < 0) | (act > 1)):
        raise ValueError("activation ratios must lie in [0, 1]")
    for k in np.flatnonzero((act == 0) | (act == 1)):
        logger.warning("gene %d has activation ratio %g; its qubit is deterministic after encoding",
                       k, act[k])
    n = act.shape[0]
    if strategy.kind == "zeros":
        theta = np.zeros((n, n))
    else:
        rng = np.random.default_rng(strategy.seed)
        if strategy.kind == "uniform":
            theta = rng.uniform(strategy.low, strategy.high, size=(n, n))
        else:
            theta = rng.normal(strategy.mean, strategy.sd, size=(n, n))
    np.fill_diagonal(theta, 2.0 * np.arcsin(np.sqrt(act)))
    return theta


def smooth(p, m: float, alpha: float = 1.0) -> np.ndarray:
    """Laplace smoothing with occurrence counts taken as ``m * p``."""
    p = np.asarray(p, dtype=np.float64)
    if alpha == 0 and np.any(p == 0):
        logger.warning("alpha=0 leaves zero entries; the KL loss will be undefined")
    return (m * p + alpha) / (m + p.shape[0] * alpha)


def kl_loss(p_out_hat, p_obs_hat) -> float:
    p = np.asarray(p_out_hat, dtype=np.float64)
    q = np.asarray(p_obs_hat, dtype=np.float64)
    if np.any(p <= 0) or np.any(q <= 0):
        raise ValueError("KL loss needs strictly positive distributions (smooth first)")
    return float(np.sum(p * np.log(p / q)))


def sq_error(p_out, p_obs) -> float:
    p = np.asarray(p_out, dtype=np.float64)
    q = np.asarray(p_obs, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.sum((p - q) ** 2))


@dataclass
class TrainHistory:
    n: int
    iterations: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    errors: list[float] = field(default_factory=list)
    thetas: list[np.ndarray] = field(default_factory=list)

    def record(self, iteration: int, loss: float, error: float, theta: np.ndarray) -> None:
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError("history iterations must be strictly increasing")
        self.iterations.append(iteration)
        self.losses.append(loss)
        self.errors.append(error)
        self.thetas.append(theta.copy())

    def __len__(self) -> int:
        return len(self.iterations)

    def trace(self, k: int, p: int) -> np.ndarray:
        return np.array([t[k, p] for t in self.thetas])

    def write_csv(self, path) -> None:
        n = self.n
        head = ["iteration", "loss", "error"]
        head += [f"theta_{k}_{p}" for k in range(n) for p in range(n)]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(head) + "\n")
            for it, loss, err, th in zip(self.iterations, self.losses, self.errors, self.thetas):
                vals = [f"{loss:.17g}", f"{err:.17g}"] + [f"{v:.17g}" for v in th.ravel()]
                fh.write(f"{it}," + ",".join(vals) + "\n")


@dataclass
class TrainResult:
    theta: np.ndarray
    history: TrainHistory
    stop_reason: str  # "threshold", "max_iterations"
    iterations: int
    final_loss: float | None
    final_error: float | None
    final_p_out: np.ndarray | None


def optimize(p_obs, m: float, config: TrainConfig, theta_init,
             counts=None, callback=None) -> TrainResult:
    """Plain gradient descent on the off-diagonal angles.

    Stops as soon as the loss drops below the threshold, otherwise after
    ``config.max_iterations`` updates. ``counts`` is accepted for callers
    that carry raw label counts; the loss only needs ``m * p_obs``.
    """
    theta = model.check_theta(theta_init).copy()
    n = theta.shape[0]
    p_obs = np.asarray(p_obs, dtype=np.float64)
    if p_obs.shape != (1 << n,):
        raise ValueError(f"p_obs has {p_obs.shape[0]} entries, expected {1 << n}")
    if counts is not None and int(np.sum(counts)) != int(m):
        logger.warning("raw counts sum to %d but m=%g", int(np.sum(counts)), m)

    p_obs_hat = smooth(p_obs, m, config.alpha)
    threshold = config.threshold_for(n)
    offdiag = ~np.eye(n, dtype=bool)
    history = TrainHistory(n)
    lr = config.learning_rate

    stop_reason = "max_iterations"
    final = None
    t = 0
    for t in range(config.max_iterations + 1):
        loss, grad, p_out = model.loss_and_gradient(theta, p_obs_hat, m, config.alpha)
        if not math.isfinite(loss):
            raise DivergenceError(t, "loss")
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(t, "gradient")
        converged = loss < threshold
        last = converged or t == config.max_iterations
        if t % config.log_every == 0 or last:
            if t > 0 or config.max_iterations > 0:
                history.record(t, loss, sq_error(p_out, p_obs), theta)
        if callback is not None:
            callback(t, loss, theta)
        if converged:
            stop_reason = "threshold"
        if last:
            final = (loss, sq_error(p_out, p_obs), p_out)
            break
        theta[offdiag] -= lr * grad[offdiag]
        if not np.all(np.isfinite(theta)):
            raise DivergenceError(t + 1, "theta")

    loss, error, p_out = final
    logger.info("stopped after %d iterations (%s), loss=%.6g error=%.6g",
                t, stop_reason, loss, error)
    return TrainResult(theta, history, stop_reason, t, loss, error, p_out)
