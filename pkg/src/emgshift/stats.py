"""Wilcoxon rank-sum test and Bonferroni adjustment."""
from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata


def _exact_sum_distribution(doubled_ranks: np.ndarray, k: int) -> dict[int, int]:
    """Counts of k-subset sums of the (integer) doubled ranks."""
    # table[j] maps sum -> number of j-subsets of the items seen so far
    table: list[dict[int, int]] = [{0: 1}] + [{} for _ in range(k)]
    for r in doubled_ranks.astype(np.int64).tolist():
        for j in range(min(k, len(table) - 1), 0, -1):
            src = table[j - 1]
            if not src:
                continue
            dst = table[j]
            for s, c in src.items():
                dst[s + r] = dst.get(s + r, 0) + c
    return table[k]


def wilcoxon_rank_sum(a, b, method: str = "auto") -> tuple[float, float]:
    """Two-sided rank-sum test.

    Returns ``(W, p)`` where ``W`` is the sum of the pooled midranks of ``a``.
    ``method="exact"`` enumerates the null distribution of ``W`` over all
    assignments of the pooled ranks; ``"normal"`` uses the tie-corrected
    normal approximation with continuity correction.  ``"auto"`` is exact
    when either sample has fewer than 8 values.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    n1, n2 = a.size, b.size
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    ranks = rankdata(pooled)  # midranks
    W = float(ranks[:n1].sum())
    if np.all(pooled == pooled[0]):
        return W, 1.0
    N = n1 + n2
    if method == "auto":
        method = "exact" if min(n1, n2) < 8 else "normal"
    if method == "exact":
        doubled = np.rint(2 * ranks).astype(np.int64)
        dist = _exact_sum_distribution(doubled, n1)
        total = math.comb(N, n1)
        centre2 = n1 * (N + 1)  # expected W, in doubled units
        obs = abs(int(doubled[:n1].sum()) - centre2)
        hits = sum(c for s, c in dist.items() if abs(s - centre2) >= obs)
        return W, min(1.0, hits / total)
    if method == "normal":
        _, counts = np.unique(pooled, return_counts=True)
        tie = float(np.sum(counts**3 - counts)) / (N * (N - 1))
        var = n1 * n2 / 12.0 * ((N + 1) - tie)
        dev = abs(W - n1 * (N + 1) / 2.0) - 0.5
        if dev <= 0 or var <= 0:
            return W, 1.0
        z = dev / math.sqrt(var)
        return W, min(1.0, math.erfc(z / math.sqrt(2.0)))
    raise ValueError(f"unknown method {method!r}")


def bonferroni(pvals, m: int | None = None) -> np.ndarray:
    """``min(1, p * m)``; ``m`` defaults to the number of p-values."""
    p = np.asarray(pvals, dtype=np.float64)
    if m is None:
        m = p.size
    if m < p.size:
        raise ValueError("m must be at least the number of tests")
    return np.minimum(1.0, p * m)
