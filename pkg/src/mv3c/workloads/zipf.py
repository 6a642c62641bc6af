"""Seeded Zipf sampler over ranks 1..n with P(k) proportional to k**-alpha."""

import numpy as np


class ZipfGenerator:
    def __init__(self, n: int, alpha: float, seed: int = 0) -> None:
        if n < 1:
            raise ValueError("n must be positive")
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.n = n
        self.alpha = alpha
        self.seed = seed
        weights = np.arange(1, n + 1, dtype=np.float64) ** -alpha
        self.pmf = weights / weights.sum()
        self.cdf = np.cumsum(self.pmf)
        self.cdf[-1] = 1.0
        self.rng = np.random.default_rng(seed)

    def probability(self, k: int) -> float:
        return float(self.pmf[k - 1])

    def sample(self, size: int | None = None):
        """One rank (int) or an int64 array of ``size`` ranks."""
        u = self.rng.random(size)
        ranks = np.searchsorted(self.cdf, u, side="right") + 1
        if size is None:
            return int(ranks)
        return ranks
