"""Mann-Whitney U test and descriptive statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EXACT_MAX_N = 20
ALTERNATIVES = ("two-sided", "greater", "less")


@dataclass(frozen=True)
class MannWhitneyResult:
    u_statistic: float
    p_value: float
    n1: int
    n2: int
    alternative: str
    method: str


def midranks(values) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _subset_sum_counts(weights: np.ndarray, k: int) -> np.ndarray:
    """``counts[t]`` = number of size-``k`` subsets of ``weights`` summing to ``t``.

    Python ints, so counts stay exact at any sample size.
    """
    total = int(weights.sum())
    table = [[0] * (total + 1) for _ in range(k + 1)]
    table[0][0] = 1
    for w in weights.tolist():
        for size in range(k, 0, -1):
            prev, cur = table[size - 1], table[size]
            for t in range(total, w - 1, -1):
                if prev[t - w]:
                    cur[t] += prev[t - w]
    return table[k]


def _exact_p(ranks: np.ndarray, n1: int, u: float, alternative: str) -> float:
    # doubled midranks are integers, so the rank-sum distribution is a subset-sum count
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    counts = _subset_sum_counts(doubled, n1)
    total = math.comb(len(ranks), n1)
    offset = n1 * (n1 + 1)  # 2 * n1(n1+1)/2
    target = int(round(2.0 * u)) + offset
    p_ge = sum(counts[target:]) / total
    p_le = sum(counts[: target + 1]) / total
    if alternative == "greater":
        return p_ge
    if alternative == "less":
        return p_le
    return min(1.0, 2.0 * min(p_ge, p_le))


def _normal_p(ranks: np.ndarray, n1: int, n2: int, u: float, alternative: str) -> float:
    n = n1 + n2
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1))
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0
    sd = math.sqrt(var)
    mu = n1 * n2 / 2.0
    if alternative == "greater":
        z = (u - mu - 0.5) / sd
        return 0.5 * math.erfc(z / math.sqrt(2))
    if alternative == "less":
        z = (u - mu + 0.5) / sd
        return 0.5 * math.erfc(-z / math.sqrt(2))
    z = (abs(u - mu) - 0.5) / sd
    return min(1.0, math.erfc(z / math.sqrt(2)))


def mann_whitney_u(x, y, alternative: str = "two-sided", method: str = "auto") -> MannWhitneyResult:
    """Rank-sum test for ``x`` stochastically different from ``y``.

    ``U`` is the statistic of ``x``: pairs with ``x > y`` plus half the ties.
    ``alternative="greater"`` tests whether ``x`` tends to be larger. With
    ``method="auto"`` the p-value is exact for ``n1 + n2 <= 20`` and uses the
    tie-corrected, continuity-corrected normal approximation above that.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    ranks = midranks(np.concatenate([x, y]))
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    if method == "auto":
        method = "exact" if n1 + n2 <= EXACT_MAX_N else "normal"
    if np.all(ranks == ranks[0]):
        p = 1.0
    elif method == "exact":
        p = _exact_p(ranks, n1, u, alternative)
    elif method == "normal":
        p = _normal_p(ranks, n1, n2, u, alternative)
    else:
        raise ValueError(f"unknown method {method!r}")
    return MannWhitneyResult(u, float(min(max(p, 0.0), 1.0)), n1, n2, alternative, method)


def descriptive(x) -> dict:
    """Mean, sample standard deviation (``n - 1``), and count."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if len(x) == 0:
        raise ValueError("empty sample")
    sd = float(np.std(x, ddof=1)) if len(x) > 1 else 0.0
    return {"mean": float(np.mean(x)), "sd": sd, "n": len(x)}
