"""SGD over a shuffle stream with the decaying per-round schedule.

The learning rate is held constant inside a round (one buffer) and
decays as eta_t = 6 / (b * n * mu * (t + a)) across rounds, t counted
1-based. The reported solution is the weighted average of round-end
iterates with weights (t + a)^3, which is the quantity the convergence
analysis controls. Round indices are stored 0-based; the +1 happens
inside the schedule, nowhere else.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import objective as obj
from .errors import ContractError, DivergenceError, InsufficientDataError
from .shuffling import ShuffleStream
from .statistics import predict_h_prime

DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class SGDConfig:
    """Schedule and run parameters.

    n and b mirror the stream's buffer geometry (they set the schedule
    denominator). `a` is the schedule offset; it must be at least
    `a_lower_bound(...)` for the convergence guarantees to apply, but
    any positive value runs. `rounds` optionally caps how many of the
    stream's rounds are consumed. `eta_override` fixes a constant
    learning rate instead of the schedule (diagnostics only).
    `ball_center` anchors the trajectory-radius measurement (defaults to
    the problem's optimum); set it to the point the gradient bound's
    ball was computed around when that differs from the run's optimum.
    """

    n: int
    b: int
    mu: float
    a: float
    x0: np.ndarray
    rounds: Optional[int] = None
    eta_override: Optional[float] = None
    ball_center: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n < 1 or self.b < 1:
            raise ContractError(f"n and b must be >= 1, got n={self.n}, b={self.b}")
        if self.mu <= 0:
            raise ContractError(f"mu must be positive, got {self.mu}")
        if self.a <= 0:
            raise ContractError(f"schedule offset a must be positive, got {self.a}")
        if self.rounds is not None and self.rounds < 0:
            raise ContractError(f"rounds cap must be >= 0, got {self.rounds}")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=np.float64))
        if self.ball_center is not None:
            object.__setattr__(self, "ball_center", np.asarray(self.ball_center, dtype=np.float64))


@dataclass
class TrainResult:
    """Outcome of one training run."""

    final_x: np.ndarray
    weighted_avg_x: np.ndarray
    per_round_suboptimality: np.ndarray
    per_round_avg_suboptimality: np.ndarray
    per_round_eta: np.ndarray
    per_round_examples_seen: np.ndarray  # cumulative T after each round
    ledger_snapshot: dict
    max_distance_to_center: float

    @property
    def rounds(self) -> int:
        return len(self.per_round_suboptimality)


@dataclass(frozen=True)
class RateReport:
    """Convergence-rate summary across strategies on one problem."""

    alpha: float
    beta: float
    gamma: float
    h_D: float
    h_prime: float
    sigma2: float
    slopes: dict
    leading_coefficients: dict


def lr_schedule(cfg: SGDConfig, t: int) -> float:
    """Learning rate for 0-based round t: 6 / (b n mu (t + 1 + a))."""
    if t < 0:
        raise ContractError(f"round index must be >= 0, got {t}")
    if cfg.eta_override is not None:
        return float(cfg.eta_override)
    return 6.0 / (cfg.b * cfg.n * cfg.mu * (t + 1 + cfg.a))


def a_lower_bound(L: float, G: float, L_H: float, mu: float) -> float:
    """Smallest schedule offset the convergence guarantee allows:
    max{(8LG + 24L^2 + 28 L_H G) / mu^2, 24L / mu}."""
    if mu <= 0:
        raise ContractError(f"mu must be positive, got {mu}")
    return max((8 * L * G + 24 * L * L + 28 * L_H * G) / (mu * mu), 24 * L / mu)


def run_sgd(stream: ShuffleStream, problem: obj.QuadraticProblem, cfg: SGDConfig) -> TrainResult:
    """Sequential SGD through the stream.

    x steps through every item of a round at that round's learning rate
    and carries over to the next round. Records, per round: the end
    iterate's suboptimality, and the suboptimality of the running
    (t + a)^3-weighted average of round-end iterates. Aborts with
    `DivergenceError` if the iterate's norm exceeds 1e6 * (1 + ||x0||)
    or becomes non-finite.
    """
    x = np.array(cfg.x0, dtype=np.float64)
    if x.shape != (problem.d,):
        raise ContractError(f"x0 has shape {x.shape}, problem dimension is ({problem.d},)")
    optimum = problem.optimum
    center = optimum if cfg.ball_center is None else cfg.ball_center
    guard = DIVERGENCE_FACTOR * (1.0 + float(np.linalg.norm(x)))

    total_rounds = stream.num_rounds
    if cfg.rounds is not None:
        total_rounds = min(total_rounds, cfg.rounds)

    sub = np.empty(total_rounds)
    sub_avg = np.empty(total_rounds)
    etas = np.empty(total_rounds)
    seen = np.empty(total_rounds, dtype=np.int64)

    xbar = np.array(x)
    weight_sum = 0.0
    max_dist = float(np.linalg.norm(x - center))
    examples = 0

    for t in range(total_rounds):
        eta = lr_schedule(cfg, t)
        start, end = stream.rounds[t]
        for k in range(start, end):
            x = x - eta * (x - stream.items[k].payload)
            dist = float(np.linalg.norm(x - center))
            if dist > max_dist:
                max_dist = dist
        examples += end - start
        if not np.all(np.isfinite(x)) or float(np.linalg.norm(x)) > guard:
            raise DivergenceError(f"iterate diverged in round {t} (eta={eta})", round_index=t)
        weight = (t + 1 + cfg.a) ** 3
        weight_sum += weight
        xbar = xbar + (weight / weight_sum) * (x - xbar)
        sub[t] = obj.suboptimality(problem, x)
        sub_avg[t] = obj.suboptimality(problem, xbar)
        etas[t] = eta
        seen[t] = examples

    return TrainResult(
        final_x=x,
        weighted_avg_x=xbar,
        per_round_suboptimality=sub,
        per_round_avg_suboptimality=sub_avg,
        per_round_eta=etas,
        per_round_examples_seen=seen,
        ledger_snapshot=stream.ledger.snapshot(),
        max_distance_to_center=max_dist,
    )


def weighted_average_weights(rounds: int, a: float) -> np.ndarray:
    """Normalized averaging weights (t + a)^3 for 1-based t = 1..rounds."""
    if rounds < 1:
        raise ContractError("need at least one round")
    t = np.arange(1, rounds + 1, dtype=np.float64)
    w = (t + a) ** 3
    return w / w.sum()


def fit_loglog_slope(T: np.ndarray, values: np.ndarray, final_decade: bool = True) -> float:
    """Least-squares slope of log(values) against log(T).

    With final_decade=True only points with T >= max(T)/10 enter the
    fit. Non-positive values are excluded (they have no logarithm).
    """
    T = np.asarray(T, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if T.shape != values.shape or T.ndim != 1:
        raise ContractError("T and values must be 1-D arrays of equal length")
    mask = (values > 0) & (T > 0)
    if final_decade:
        mask &= T >= T.max() / 10.0
    if mask.sum() < 2:
        raise InsufficientDataError("fewer than 2 usable points for the slope fit")
    return float(np.polyfit(np.log(T[mask]), np.log(values[mask]), 1)[0])


def rate_report(
    results: dict[str, TrainResult],
    problem: obj.QuadraticProblem,
    *,
    N: int,
    n: int,
    b: int,
    h_D: float,
) -> RateReport:
    """Slopes and leading-term predictions for a matched set of runs.

    alpha = (n-1)/(N-1), beta = alpha^2 + (1-alpha)^2 (b-1)^2,
    gamma = n^3/N^3. The leading 1/T coefficients are
    (1-alpha) h sigma2 with h = h_D for the online-only strategy and
    h = h' for the two-phase one. Slopes are log-log fits of the
    weighted-average suboptimality over the final decade of T.
    """
    if len(results) < 2:
        raise ContractError("need results for at least 2 strategies")
    grids = [r.per_round_examples_seen for r in results.values()]
    for g in grids[1:]:
        if not np.array_equal(g, grids[0]):
            raise ContractError("strategies were not run on the same T grid")
    if grids[0].size < 10:
        raise InsufficientDataError(f"need at least 10 rounds to fit a rate, got {grids[0].size}")

    if N < 2:
        raise ContractError(f"need N >= 2 blocks, got {N}")
    alpha = (n - 1) / (N - 1)
    beta = alpha**2 + (1 - alpha) ** 2 * (b - 1) ** 2
    gamma = n**3 / N**3
    h_prime = predict_h_prime(h_D, n, b)
    sigma2 = problem.sigma2
    slopes = {
        name: fit_loglog_slope(r.per_round_examples_seen, r.per_round_avg_suboptimality)
        for name, r in results.items()
    }
    leading = {
        "corgipile": (1 - alpha) * h_D * sigma2,
        "corgi2": (1 - alpha) * h_prime * sigma2,
    }
    return RateReport(
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        h_D=h_D,
        h_prime=h_prime,
        sigma2=sigma2,
        slopes=slopes,
        leading_coefficients=leading,
    )
