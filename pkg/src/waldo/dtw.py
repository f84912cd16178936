"""Dynamic time warping between |S11| signatures.

Used to line a simulated signature up with a measured golden one before
simulated data is trusted for training.
"""
from __future__ import annotations

import numpy as np

from .exceptions import DomainError


def _as_seq(a, name):
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise DomainError(f"{name} is empty")
    return a


def _accumulate(a, b):
    n, m = len(a), len(b)
    cost = np.abs(a[:, None] - b[None, :])
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row, prev, c = acc[i], acc[i - 1], cost[i - 1]
        for j in range(1, m + 1):
            row[j] = c[j - 1] + min(prev[j - 1], prev[j], row[j - 1])
    return acc


def dtw_distance(a, b) -> float:
    """Total absolute-difference cost of the optimal warping path."""
    a, b = _as_seq(a, "a"), _as_seq(b, "b")
    return float(_accumulate(a, b)[-1, -1])


def dtw_align(sim, golden) -> np.ndarray:
    """Optimal warping path as an ``(L, 2)`` array of ``(sim_index, golden_index)``.

    Backtracking prefers the diagonal step, then the step along ``sim``.
    """
    sim, golden = _as_seq(sim, "sim"), _as_seq(golden, "golden")
    acc = _accumulate(sim, golden)
    i, j = len(sim), len(golden)
    path = [(i - 1, j - 1)]
    while (i, j) != (1, 1):
        steps = ((acc[i - 1, j - 1], i - 1, j - 1), (acc[i - 1, j], i - 1, j),
                 (acc[i, j - 1], i, j - 1))
        _, i, j = min(steps, key=lambda s: s[0])
        path.append((i - 1, j - 1))
    return np.array(path[::-1], dtype=int)


def path_cost(sim, golden, path) -> float:
    sim, golden = np.asarray(sim, dtype=float), np.asarray(golden, dtype=float)
    path = np.asarray(path)
    return float(np.abs(sim[path[:, 0]] - golden[path[:, 1]]).sum())


def warp_to(sim, golden) -> np.ndarray:
    """Resample ``sim`` onto ``golden``'s index axis along the DTW path.

    Each golden sample receives the mean of the sim samples matched to it.
    """
    sim = _as_seq(sim, "sim")
    path = dtw_align(sim, golden)
    n = len(np.asarray(golden).ravel())
    total = np.bincount(path[:, 1], weights=sim[path[:, 0]], minlength=n)
    return total / np.bincount(path[:, 1], minlength=n)
