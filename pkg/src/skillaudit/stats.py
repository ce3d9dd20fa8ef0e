"""One-sided Mann-Whitney U test with rank-biserial effect size.

U counts treatment-over-control wins with ties as one half, so the rank-biserial
correlation is ``2U / (n1 n2) - 1``: +1 when every treatment value beats every
control value, -1 for the reverse.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

DEFAULT_EXACT_CUTOFF = 400

SMALL, MEDIUM, LARGE = 0.11, 0.28, 0.43


def size_label(r: float) -> str:
    a = abs(r)
    if a >= LARGE:
        return "large"
    if a >= MEDIUM:
        return "medium"
    if a >= SMALL:
        return "small"
    return "negligible"


@dataclass(frozen=True)
class StatResult:
    u_statistic: float
    p_value: float
    effect_size_r: float
    n_treatment: int
    n_control: int
    method: str
    size_label: str
    p_two_sided: float | None = None

    def significant(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha


def midranks(values: Sequence[float]) -> list[float]:
    """1-based ranks with tied values sharing the mean of their positions."""
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    n = len(order)
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def u_statistic(treatment: Sequence[float], control: Sequence[float]) -> float:
    """Treatment U from the rank sum: R1 - n1(n1+1)/2."""
    n1 = len(treatment)
    ranks = midranks(list(treatment) + list(control))
    return sum(ranks[:n1]) - n1 * (n1 + 1) / 2


@lru_cache(maxsize=256)
def _u_counts(n1: int, n2: int) -> tuple[int, ...]:
    """Number of arrangements giving each U in 0..n1*n2 (no ties).

    Counts partitions fitting in an n1 x n2 box, built by the recurrence
    f(n1, n2; u) = f(n1-1, n2; u-n2) + f(n1, n2-1; u), computed row by row.
    """
    # table[b] holds the count vector for (a, b) while sweeping a upward
    table = [[1] for _ in range(n2 + 1)]  # a = 0: only u = 0
    for a in range(1, n1 + 1):
        new = [[1]]  # b = 0: only u = 0
        for b in range(1, n2 + 1):
            size = a * b + 1
            row = [0] * size
            left = new[b - 1]        # f(a, b-1)
            up = table[b]            # f(a-1, b), shifted by b
            for u, c in enumerate(left):
                row[u] += c
            for u, c in enumerate(up):
                row[u + b] += c
            new.append(row)
        table = new
    return tuple(table[n2])


def exact_p_greater(u: float, n1: int, n2: int) -> float:
    """P(U >= u) under the null for tie-free samples."""
    counts = _u_counts(n1, n2)
    k = math.ceil(u - 1e-9)
    total = sum(counts)
    return sum(counts[max(k, 0):]) / total


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2))


def _tie_term(values: Sequence[float]) -> float:
    return sum(t ** 3 - t for t in Counter(values).values())


def normal_p_greater(u: float, n1: int, n2: int, tie_term: float = 0.0) -> float:
    """P(U >= u) by the normal approximation with tie-corrected variance
    and a 0.5 continuity correction."""
    n = n1 + n2
    mean = n1 * n2 / 2
    var = n1 * n2 / 12 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return 0.5
    z = (u - mean - 0.5) / math.sqrt(var)
    return _norm_sf(z)


def _two_sided(u: float, n1: int, n2: int, method: str, tie_term: float) -> float:
    mirror = n1 * n2 - u
    if method == "exact":
        p = 2 * min(exact_p_greater(u, n1, n2), exact_p_greater(mirror, n1, n2))
    else:
        p = 2 * min(normal_p_greater(u, n1, n2, tie_term), normal_p_greater(mirror, n1, n2, tie_term))
    return min(1.0, p)


def mann_whitney_one_sided(treatment: Sequence[float], control: Sequence[float],
                           exact_cutoff: int = DEFAULT_EXACT_CUTOFF,
                           method: str = "auto") -> StatResult:
    """Test whether ``treatment`` is stochastically greater than ``control``.

    ``method="auto"`` uses the exact null distribution when n1*n2 <= exact_cutoff
    and there are no ties, otherwise the normal approximation. If every value in
    both samples is identical the result is r = 0, p = 0.5.
    """
    n1, n2 = len(treatment), len(control)
    if n1 == 0 or n2 == 0:
        raise ValueError("both samples must be non-empty")
    pooled = list(treatment) + list(control)
    if any(not math.isfinite(x) for x in pooled):
        raise ValueError("samples must be finite")

    u = u_statistic(treatment, control)
    r = 2 * u / (n1 * n2) - 1
    ties = _tie_term(pooled)

    if method == "auto":
        method = "exact" if (n1 * n2 <= exact_cutoff and ties == 0) else "normal_approx"
    elif method == "normal":
        method = "normal_approx"
    if method not in ("exact", "normal_approx"):
        raise ValueError(f"unknown method {method!r}")
    if method == "exact" and ties:
        raise ValueError("exact null distribution requires tie-free samples")

    if len(set(pooled)) == 1:
        p, p2 = 0.5, 1.0
    elif method == "exact":
        p = exact_p_greater(u, n1, n2)
        p2 = _two_sided(u, n1, n2, "exact", ties)
    else:
        p = normal_p_greater(u, n1, n2, ties)
        p2 = _two_sided(u, n1, n2, "normal_approx", ties)

    return StatResult(
        u_statistic=u,
        p_value=min(1.0, max(0.0, p)),
        effect_size_r=r,
        n_treatment=n1,
        n_control=n2,
        method=method,
        size_label=size_label(r),
        p_two_sided=p2,
    )
