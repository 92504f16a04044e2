"""Median/IQR bands and pointwise Mann-Whitney U tests over attainment series.

The U test uses midranks for ties. Its p-value is exact (from the null
distribution of U) when there are no ties and the smaller sample has at most
``EXACT_MAX_SMALLER`` values; otherwise the normal approximation with tie and
continuity corrections is used. Quartiles use linear interpolation between
order statistics (Hyndman-Fan type 7, numpy's default).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

EXACT_MAX_SMALLER = 8

COMPARISON_COLUMNS = [
    "checkpoint_budget",
    "median_a",
    "q25_a",
    "q75_a",
    "median_b",
    "q25_b",
    "q75_b",
    "p_value",
    "significant",
]


def rankdata(values: Sequence[float]) -> list:
    """1-based ranks; tied values share the mean of their ranks."""
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        i = j + 1
    return ranks


@lru_cache(maxsize=256)
def _u_counts(n: int, m: int) -> tuple:
    """Number of arrangements giving each U in ``0..n*m`` (n <= m).

    These are the coefficients of the Gaussian binomial ``[n+m choose n]_q``,
    built as ``prod_i (1 - q^(m+i)) / (1 - q^i)`` with exact integers.
    """
    size = n * m + 1
    poly = [0] * size
    poly[0] = 1
    for i in range(1, n + 1):
        # multiply by (1 - q^(m+i)), then divide by (1 - q^i)
        shift = m + i
        for u in range(size - 1, shift - 1, -1):
            poly[u] -= poly[u - shift]
        for u in range(i, size):
            poly[u] += poly[u - i]
    return tuple(poly)


def _exact_tail(u: float, n: int, m: int, upper: bool) -> float:
    counts = _u_counts(min(n, m), max(n, m))
    total = math.comb(n + m, n)
    k = int(round(u))
    if upper:
        return sum(counts[k:]) / total
    return sum(counts[: k + 1]) / total


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float], alternative: str = "two-sided"):
    """Return ``(U_a, p_value)`` for the Mann-Whitney U test.

    ``U_a`` counts pairs where the ``a`` value exceeds the ``b`` value (ties
    count one half). ``alternative`` is ``"two-sided"``, ``"greater"`` (``a``
    tends to be larger) or ``"less"``.
    """
    a = [float(v) for v in sample_a]
    b = [float(v) for v in sample_b]
    if not a or not b:
        raise ValueError("both samples must be nonempty")
    if not all(math.isfinite(v) for v in a + b):
        raise ValueError("samples must be finite")
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    n, m = len(a), len(b)
    ranks = rankdata(a + b)
    u = sum(ranks[:n]) - n * (n + 1) / 2
    N = n + m
    mu = n * m / 2

    tied = len(set(a + b)) < N
    if not tied and min(n, m) <= EXACT_MAX_SMALLER:
        if alternative == "greater":
            p = _exact_tail(u, n, m, upper=True)
        elif alternative == "less":
            p = _exact_tail(u, n, m, upper=False)
        else:
            p = 2 * min(_exact_tail(u, n, m, True), _exact_tail(u, n, m, False))
        return u, min(1.0, p)

    counts: dict = {}
    for v in a + b:
        counts[v] = counts.get(v, 0) + 1
    tie_term = sum(c ** 3 - c for c in counts.values())
    var = n * m / 12 * ((N + 1) - tie_term / (N * (N - 1))) if N > 1 else 0.0
    if var <= 0:
        return u, 1.0
    sd = math.sqrt(var)
    if alternative == "greater":
        p = _norm_sf((u - mu - 0.5) / sd)
    elif alternative == "less":
        p = _norm_sf((mu - u - 0.5) / sd)
    else:
        p = 2 * _norm_sf((abs(u - mu) - 0.5) / sd)
    return u, min(1.0, max(0.0, p))


def mann_whitney_two_sided(sample_a: Sequence[float], sample_b: Sequence[float]) -> float:
    return mann_whitney_u(sample_a, sample_b, "two-sided")[1]


@dataclass
class PointwiseComparison:
    checkpoint_budget: int
    median_a: Optional[float]
    q25_a: Optional[float]
    q75_a: Optional[float]
    median_b: Optional[float]
    q25_b: Optional[float]
    q75_b: Optional[float]
    p_value: Optional[float]
    significant: bool


def quartiles(values: Sequence[float]):
    """``(median, q25, q75)`` with linear interpolation, or Nones if empty."""
    if len(values) == 0:
        return None, None, None
    q25, med, q75 = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(med), float(q25), float(q75)


def compare_trajectories(
    runs_a: Sequence[Sequence[Optional[float]]],
    runs_b: Sequence[Sequence[Optional[float]]],
    budgets: Sequence[int],
    alpha: float = 0.01,
) -> list:
    """Pointwise comparison of two groups of attainment series.

    ``runs_a[r][j]`` is repetition ``r``'s best objective at ``budgets[j]``,
    or ``None`` when nothing had been fully evaluated yet. ``None`` cells are
    dropped; a checkpoint with fewer than two values in either group gets no
    p-value.
    """
    width = len(budgets)
    if any(len(r) != width for r in list(runs_a) + list(runs_b)):
        raise ValueError("checkpoint grids differ")
    out = []
    for j, budget in enumerate(budgets):
        va = [r[j] for r in runs_a if r[j] is not None]
        vb = [r[j] for r in runs_b if r[j] is not None]
        ma, qa1, qa3 = quartiles(va)
        mb, qb1, qb3 = quartiles(vb)
        p = mann_whitney_two_sided(va, vb) if len(va) >= 2 and len(vb) >= 2 else None
        out.append(
            PointwiseComparison(budget, ma, qa1, qa3, mb, qb1, qb3, p, p is not None and p < alpha)
        )
    return out


def comparison_csv_text(rows: Sequence[PointwiseComparison]) -> str:
    def cell(x):
        return "" if x is None else repr(float(x))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARISON_COLUMNS)
    for r in rows:
        w.writerow(
            [
                r.checkpoint_budget,
                cell(r.median_a),
                cell(r.q25_a),
                cell(r.q75_a),
                cell(r.median_b),
                cell(r.q25_b),
                cell(r.q75_b),
                cell(r.p_value),
                int(r.significant),
            ]
        )
    return buf.getvalue()


def write_comparison_csv(path, rows: Sequence[PointwiseComparison]) -> None:
    Path(path).write_text(comparison_csv_text(rows), encoding="utf-8", newline="")
