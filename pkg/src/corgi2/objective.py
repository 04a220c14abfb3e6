"""Synthetic strongly-convex objectives with exactly known constants.

The canonical problem is the quadratic f_i(x) = 0.5*||x - c_i||^2 over m
center vectors c_i. Everything the convergence theory needs is closed
form: the full objective F is minimized at the center mean, the gradient
noise (1/m) sum ||grad f_i - grad F||^2 equals the center variance at
every x, the Hessian is the identity (L = mu = 1, L_H = 0), and the
blockwise gradient variance is independent of the probe point. That
x-independence is what makes the variance-reduction predictions testable
without choosing evaluation points.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import ContractError, DimensionError
from .storage import BlockStore, ExampleRecord, create_store


@dataclass(frozen=True)
class QuadraticProblem:
    """Mean of squared distances to m fixed centers."""

    centers: np.ndarray  # shape (m, d)

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64)
        if centers.ndim != 2 or centers.size == 0:
            raise DimensionError(f"centers must be a non-empty (m, d) array, got shape {centers.shape}")
        object.__setattr__(self, "centers", centers)

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    @property
    def optimum(self) -> np.ndarray:
        """Minimizer of the averaged objective: the center mean."""
        return self.centers.mean(axis=0)

    @property
    def sigma2(self) -> float:
        """Gradient-noise variance: mean squared center deviation."""
        deltas = self.centers - self.optimum
        return float(np.mean(np.sum(deltas * deltas, axis=1)))


@dataclass(frozen=True)
class HomogeneitySpec:
    """Knobs for how strongly examples cluster by block.

    cluster_spread scales the dispersion of per-block means;
    within_spread scales the dispersion of examples around their block
    mean. within_spread = 0 gives maximally homogeneous blocks;
    cluster_spread = 0 gives perfectly balanced (identical) blocks.
    """

    cluster_spread: float
    within_spread: float

    def __post_init__(self):
        if self.cluster_spread < 0 or self.within_spread < 0:
            raise ContractError(
                f"spreads must be non-negative, got ({self.cluster_spread}, {self.within_spread})"
            )


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness/convexity/noise constants valid on the iterate ball."""

    L: float
    G: float
    L_H: float
    mu: float
    sigma2: float


def _store_from_centers(centers: np.ndarray, N: int, b: int, d: int) -> BlockStore:
    records = [ExampleRecord(index=i, payload=centers[i]) for i in range(N * b)]
    return create_store(N=N, b=b, d=d, records=records)


def make_ladder_dataset(N: int, b: int, d: int = 1) -> BlockStore:
    """Deterministic maximally-homogeneous dataset: block i holds b
    copies of the center (i+1, ..., i+1).

    Every block is constant, so the blockwise-variance parameter equals
    b exactly, and sigma2 equals the population variance of {1..N}
    times d: (N^2 - 1) / 12 * d.
    """
    if N < 1 or b < 1 or d < 1:
        raise ContractError(f"N, b, d must be >= 1, got ({N}, {b}, {d})")
    centers = np.repeat(np.arange(1, N + 1, dtype=np.float64), b)[:, None] * np.ones(d)
    return _store_from_centers(centers, N, b, d)


def make_clustered_dataset(N: int, b: int, d: int, spec: HomogeneitySpec, rng_seed: int) -> BlockStore:
    """Random dataset: block i's centers are mu_i + eps_ij with normal
    draws scaled by the two spreads.

    cluster_spread = 0 reuses one within-block offset pattern for every
    block, so all block means coincide and the blockwise variance is
    exactly zero (perfectly balanced blocks).
    """
    if N < 1 or b < 1 or d < 1:
        raise ContractError(f"N, b, d must be >= 1, got ({N}, {b}, {d})")
    spec = HomogeneitySpec(spec.cluster_spread, spec.within_spread)  # re-validate
    gen = rngmod.substream(rng_seed, rngmod.DATASET)
    if spec.cluster_spread == 0:
        pattern = spec.within_spread * gen.standard_normal((b, d))
        centers = np.tile(pattern, (N, 1))
    else:
        mus = spec.cluster_spread * gen.standard_normal((N, d))
        eps = spec.within_spread * gen.standard_normal((N * b, d))
        centers = np.repeat(mus, b, axis=0) + eps
    return _store_from_centers(centers, N, b, d)


def problem_from_store(store: BlockStore) -> QuadraticProblem:
    """Quadratic whose examples are the store's payloads, in block order."""
    return QuadraticProblem(centers=store.all_payloads())


def loss(problem: QuadraticProblem, i: int, x: np.ndarray) -> float:
    """f_i(x) = 0.5 * ||x - c_i||^2."""
    delta = _check_point(problem, x) - problem.centers[i]
    return 0.5 * float(delta @ delta)


def grad(problem: QuadraticProblem, i: int, x: np.ndarray) -> np.ndarray:
    """grad f_i(x) = x - c_i."""
    return _check_point(problem, x) - problem.centers[i]


def grad_from_payload(problem: QuadraticProblem, payload: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient of the example carried by a stream item (payload = center).

    Streams may contain re-sampled duplicates; the payload, not the
    origin index, is authoritative for the gradient.
    """
    return _check_point(problem, x) - payload


def full_grad(problem: QuadraticProblem, x: np.ndarray) -> np.ndarray:
    """grad F(x) = x - mean(c)."""
    return _check_point(problem, x) - problem.optimum


def objective_value(problem: QuadraticProblem, x: np.ndarray) -> float:
    x = _check_point(problem, x)
    deltas = x - problem.centers
    return 0.5 * float(np.mean(np.sum(deltas * deltas, axis=1)))


def suboptimality(problem: QuadraticProblem, x: np.ndarray) -> float:
    """F(x) - F(x*) = 0.5 * ||x - mean(c)||^2."""
    delta = _check_point(problem, x) - problem.optimum
    return 0.5 * float(delta @ delta)


def constants(problem: QuadraticProblem, domain_radius: float) -> ProblemConstants:
    """Exact constants on the ball ||x - x*|| <= domain_radius.

    The quadratic has identity Hessian (L = mu = 1, L_H = 0). A global
    gradient bound cannot exist, so G is taken over the stated iterate
    ball; training code asserts post hoc that the trajectory stayed in.
    """
    if domain_radius <= 0:
        raise ContractError(f"domain_radius must be positive, got {domain_radius}")
    deltas = problem.centers - problem.optimum
    max_center_dist = float(np.max(np.linalg.norm(deltas, axis=1)))
    return ProblemConstants(
        L=1.0,
        G=domain_radius + max_center_dist,
        L_H=0.0,
        mu=1.0,
        sigma2=problem.sigma2,
    )


def _check_point(problem: QuadraticProblem, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (problem.d,):
        raise DimensionError(f"point has shape {x.shape}, problem dimension is ({problem.d},)")
    return x
