"""Seed derivation for reproducible, parallel-safe randomness.

Every stochastic component draws from its own generator, derived from
(root seed, path of integer tags). Paths never collide across phases,
passes, epochs, rounds, or Monte Carlo trials, so identical root seeds
reproduce identical runs while independent trials can execute in
parallel without sharing generator state.
"""
from __future__ import annotations

import numpy as np

# Path tags. Keep values stable: they are part of run reproducibility.
DATASET = 0
OFFLINE = 1
ONLINE_PICK = 2
ONLINE_PERM = 3
BASELINE = 4
TRIAL = 5
TRAINER = 6


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the sub-stream identified by (seed, path)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(path)))


def derive_seed(seed: int, *path: int) -> int:
    """Plain integer seed for the sub-stream identified by (seed, path).

    Used where an API takes a scalar seed (e.g. per-trial shuffle seeds).
    """
    state = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(path)).generate_state(2, dtype=np.uint64)
    return int(state[0])


def trial_seeds(seed: int, trials: int) -> list[int]:
    """Independent scalar seeds for `trials` Monte Carlo repetitions."""
    return [derive_seed(seed, TRIAL, k) for k in range(trials)]


def fisher_yates(items: list, rng: np.random.Generator) -> None:
    """Uniform in-place shuffle of `items` (descending-index swaps)."""
    for i in range(len(items) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        items[i], items[j] = items[j], items[i]
