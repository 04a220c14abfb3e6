"""Variance measurement, variance-reduction predictors, and shuffle
uniformity metrics.

Scalar-valued variance of vector samples, V(X) = E||X - mu||^2, is used
throughout (population convention, no Bessel correction). It reduces to
ordinary variance for d = 1 and satisfies the usual identities:
V = E[X'X] - mu'mu, V(aX) = a^2 V(X), additivity with cross-covariance,
and the law of total variance.

The blockwise gradient variance of a store is the mean squared distance
between per-block mean gradients and the full gradient; its
dimensionless form h = b * BV / sigma2 lies in [0, b] (b for constant
blocks, 0 for identical blocks). One offline re-mixing pass with buffer
size n maps h to 1 + (1/n - 1/(nb)) * h in expectation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats as sps

from . import objective as obj
from . import rng as rngmod
from .errors import ContractError, DimensionError, UndefinedRatioError
from .shuffling import ShuffleConfig, offline_corgi_shuffle
from .storage import BlockStore


class DegenerateVarianceWarning(UserWarning):
    """Dataset has zero gradient variance; homogeneity is undefined."""


@dataclass(frozen=True)
class VarianceReport:
    """Measured and predicted blockwise variance for one configuration."""

    sigma2: float
    blockwise_variance: float
    h_D: float
    predicted_h_prime: float
    mc_mean: float
    mc_halfwidth_95: float
    trials: int
    degenerate: bool = False


@dataclass(frozen=True)
class UniformityReport:
    """How close a permutation is to a uniform shuffle."""

    mean_abs_displacement: float
    spearman_to_identity: float
    position_ks: float


# -- generalized variance --------------------------------------------

def _as_matrix(samples: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    mat = np.asarray(samples, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat[:, None]
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise ContractError(f"need a non-empty (n, d) sample array, got shape {mat.shape}")
    return mat


def generalized_variance(samples: Sequence[np.ndarray] | np.ndarray) -> float:
    """V(X) = mean ||x - mean(x)||^2 over the samples."""
    mat = _as_matrix(samples)
    deltas = mat - mat.mean(axis=0)
    return float(np.mean(np.sum(deltas * deltas, axis=1)))


def cross_covariance(xs, ys) -> float:
    """Scalar cross-covariance E[(X - muX)'(Y - muY)] of paired samples."""
    xmat, ymat = _as_matrix(xs), _as_matrix(ys)
    if xmat.shape != ymat.shape:
        raise DimensionError(f"paired samples must match in shape: {xmat.shape} vs {ymat.shape}")
    xc = xmat - xmat.mean(axis=0)
    yc = ymat - ymat.mean(axis=0)
    return float(np.mean(np.sum(xc * yc, axis=1)))


# -- blockwise variance and homogeneity ------------------------------

def blockwise_variance(store: BlockStore, problem: obj.QuadraticProblem, x: np.ndarray) -> float:
    """Mean squared deviation of per-block mean gradients from the full
    gradient, evaluated at probe point x."""
    x = np.asarray(x, dtype=np.float64)
    full = obj.full_grad(problem, x)
    acc = 0.0
    ids = store.block_ids()
    for bid in ids:
        block = store.peek_block(bid)
        block_grad = x - block.payload_matrix().mean(axis=0)
        delta = block_grad - full
        acc += float(delta @ delta)
    return acc / len(ids)


def measure_h_D(store: BlockStore, problem: obj.QuadraticProblem) -> float:
    """Dimensionless blockwise homogeneity h = b * BV / sigma2.

    Evaluated at two probe points; for the quadratic the blockwise
    variance must be probe-independent, which doubles as a consistency
    check that the store really carries the problem's examples.
    """
    sigma2 = problem.sigma2
    if sigma2 == 0.0:
        warnings.warn("sigma2 = 0: homogeneity undefined, reporting h_D = 0", DegenerateVarianceWarning)
        return 0.0
    probe_a = np.zeros(problem.d)
    probe_b = np.zeros(problem.d)
    probe_b[0] = 1.0
    bv_a = blockwise_variance(store, problem, probe_a)
    bv_b = blockwise_variance(store, problem, probe_b)
    scale = max(abs(bv_a), abs(bv_b), 1e-300)
    if abs(bv_a - bv_b) / scale > 1e-9:
        raise ContractError(
            f"blockwise variance is probe-dependent ({bv_a} vs {bv_b}); store/problem mismatch?"
        )
    return store.b * bv_a / sigma2


# -- predictors -------------------------------------------------------

def predict_h_prime(h_D: float, n: int, b: int) -> float:
    """Expected homogeneity after one offline pass:
    h' = 1 + (1/n - 1/(nb)) * h."""
    _check_nb(n, b)
    if h_D < 0:
        raise ContractError(f"h_D must be >= 0, got {h_D}")
    return 1.0 + (1.0 / n - 1.0 / (n * b)) * h_D


def predict_h_prime_repeated(h_D: float, n: int, b: int, passes: int) -> float:
    """h after `passes` offline passes (formula iterated)."""
    if passes < 0:
        raise ContractError(f"passes must be >= 0, got {passes}")
    h = float(h_D)
    for _ in range(passes):
        h = predict_h_prime(h, n, b)
    return h


def variance_ratio(h_D: float, n: int, b: int) -> float:
    """h'/h = 1/h + (b-1)/(nb); undefined at h = 0."""
    _check_nb(n, b)
    if h_D <= 0:
        raise UndefinedRatioError(f"variance ratio undefined for h_D = {h_D}")
    return 1.0 / h_D + (b - 1.0) / (n * b)


def improvement_threshold(n: int, b: int) -> Optional[float]:
    """h value above which one offline pass is guaranteed to lower h:
    nb / ((n-1)b - 1). None when (n-1)b - 1 <= 0 (condition
    inapplicable: no h in [0, b] can satisfy it)."""
    _check_nb(n, b)
    denom = (n - 1) * b - 1
    if denom <= 0:
        return None
    return n * b / denom


def improves(h_D: float, n: int, b: int) -> Optional[bool]:
    """Whether the sufficient improvement condition h > nb/((n-1)b - 1)
    holds. Returns None when the condition is inapplicable.

    The condition is conservative: h'/h < 1 exactly when
    h > nb/((n-1)b + 1), a slightly lower threshold.
    """
    if h_D < 0:
        raise ContractError(f"h_D must be >= 0, got {h_D}")
    threshold = improvement_threshold(n, b)
    if threshold is None:
        return None
    return h_D > threshold


def _check_nb(n: int, b: int) -> None:
    if n < 1 or b < 1:
        raise ContractError(f"n and b must be >= 1, got n={n}, b={b}")


# -- Monte Carlo verification ------------------------------------------

def monte_carlo_offline_variance(
    store: BlockStore,
    problem: obj.QuadraticProblem,
    cfg: ShuffleConfig,
    trials: int,
    rng_seed: int,
) -> VarianceReport:
    """Direct simulation of the offline pass: repeat it with independent
    seeds on scratch copies and average the measured post-shuffle
    blockwise variance. The simulation is the oracle here; the closed
    form enters only through the `predicted_h_prime` field.

    Returns the trial mean with a 95% normal-approximation half-width.
    """
    if trials < 2:
        raise ContractError(f"need at least 2 trials, got {trials}")
    sigma2 = problem.sigma2
    if sigma2 == 0.0:
        warnings.warn("sigma2 = 0: nothing to measure, skipping trials", DegenerateVarianceWarning)
        return VarianceReport(
            sigma2=0.0,
            blockwise_variance=0.0,
            h_D=0.0,
            predicted_h_prime=float("nan"),
            mc_mean=float("nan"),
            mc_halfwidth_95=float("nan"),
            trials=0,
            degenerate=True,
        )
    probe = np.zeros(problem.d)
    bv_pre = blockwise_variance(store, problem, probe)
    h_D = measure_h_D(store, problem)
    passes = max(cfg.offline_passes, 1)  # this op measures the offline pass; 0 means "one"
    h_prime = predict_h_prime_repeated(h_D, cfg.n, store.b, passes)

    values = np.empty(trials)
    for k, seed in enumerate(rngmod.trial_seeds(rng_seed, trials)):
        scratch = store.clone()
        shuffled = scratch
        for p in range(passes):
            shuffled = offline_corgi_shuffle(shuffled, cfg, rngmod.derive_seed(seed, rngmod.OFFLINE, p))
        values[k] = blockwise_variance(shuffled, problem, probe)
    mean = float(values.mean())
    halfwidth = 1.96 * float(values.std(ddof=1)) / math.sqrt(trials)
    return VarianceReport(
        sigma2=sigma2,
        blockwise_variance=bv_pre,
        h_D=h_D,
        predicted_h_prime=h_prime,
        mc_mean=mean,
        mc_halfwidth_95=halfwidth,
        trials=trials,
    )


# -- uniformity --------------------------------------------------------

def uniformity_metrics(perm: Sequence[int] | np.ndarray) -> UniformityReport:
    """Displacement, rank-correlation, and positional-KS measures of how
    uniformly a permutation of {0..m-1} scatters its input.

    mean_abs_displacement is normalized by m twice (mean displacement as
    a fraction of the stream length); spearman_to_identity is the rank
    correlation against the identity; position_ks is the KS distance
    between the values landing in the first tenth of positions (as a
    fraction of m) and the uniform law on [0, 1].
    """
    perm = np.asarray(perm)
    m = perm.shape[0]
    if m < 2:
        raise ContractError("need a permutation of length >= 2")
    if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(m)):
        raise ContractError("input is not a permutation of {0..m-1}")
    positions = np.arange(m)
    displacement = float(np.abs(perm - positions).mean() / m)
    rho = float(sps.spearmanr(positions, perm).statistic)
    window = max(1, m // 10)
    ks = float(sps.kstest(perm[:window] / m, "uniform").statistic)
    return UniformityReport(
        mean_abs_displacement=displacement,
        spearman_to_identity=rho,
        position_ks=ks,
    )
