"""Keyed random streams derived from a single master seed."""

from __future__ import annotations

import numpy as np


class SeededRng:
    """Master seed plus integer keys -> independent, reproducible generators.

    ``SeededRng(7).generator(3, 12)`` always yields the same stream no matter
    which other streams were drawn before it or on which thread.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in key))
        return np.random.default_rng(ss)

    def child(self, *key: int) -> "SeededRng":
        # Child seed is itself derived, so nested keys never collide with siblings.
        state = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in key))
        return SeededRng(int(state.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)))

    def __repr__(self) -> str:
        return f"SeededRng({self.seed})"


def categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw: row ``k`` of ``probs`` sampled with uniform ``u[k]``."""
    cdf = np.cumsum(probs, axis=-1)
    idx = (cdf < u[..., None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)
