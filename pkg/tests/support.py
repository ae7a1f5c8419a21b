"""Shared test oracles and helpers, kept independent of the package paths
they are used to check."""

from __future__ import annotations

import numpy as np


def naive_crp_distinct(n_requests: int, theta: float, nu: float,
                       rng: np.random.Generator) -> int:
    """Reference two-parameter seating process, one categorical draw per
    arrival; returns the number of distinct contents requested."""
    counts: list[int] = []
    total = 0
    for _ in range(n_requests):
        k = len(counts)
        if rng.random() < (nu * k + theta) / (total + theta):
            counts.append(1)
        else:
            weights = np.asarray(counts, dtype=float) - nu
            j = rng.choice(k, p=weights / weights.sum())
            counts[j] += 1
        total += 1
    return len(counts)


def wasserstein1_grid(samples: np.ndarray, nodes: np.ndarray,
                      weights: np.ndarray) -> float:
    """1-Wasserstein distance between an empirical sample and a discrete
    density on a uniform node array, via integrated CDF difference."""
    qs = np.sort(np.asarray(samples, dtype=float))
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    pts = np.linspace(nodes[0], nodes[-1], 2001)
    cdf_emp = np.searchsorted(qs, pts, side="right") / qs.size
    cdf_grid = np.interp(pts, nodes, np.cumsum(w))
    return float(np.trapezoid(np.abs(cdf_emp - cdf_grid), pts))


class ConstantPolicy:
    """Caches a fixed fraction of every content at every step."""

    def __init__(self, level: float):
        self.level = level

    def __call__(self, ctx, rng=None):
        return np.full(ctx.x_hat.shape, self.level)
