import itertools
import math
import random

import numpy as np
import pytest

from gespkit.stats import (
    compare_trajectories,
    comparison_csv_text,
    mann_whitney_two_sided,
    mann_whitney_u,
    quartiles,
    rankdata,
)


def permutation_p(a, b, alternative="two-sided"):
    """Oracle: enumerate every split of the pooled ranks (no ties)."""
    pooled = sorted(a + b)
    rank = {v: i + 1 for i, v in enumerate(pooled)}
    n, m = len(a), len(b)
    u_obs = sum(rank[v] for v in a) - n * (n + 1) / 2
    us = [sum(c) - n * (n + 1) / 2 for c in itertools.combinations(range(1, n + m + 1), n)]
    total = len(us)
    upper = sum(u >= u_obs for u in us) / total
    lower = sum(u <= u_obs for u in us) / total
    if alternative == "greater":
        return u_obs, upper
    if alternative == "less":
        return u_obs, lower
    return u_obs, min(1.0, 2 * min(upper, lower))


def test_rankdata_midranks():
    assert rankdata([10, 20, 20, 5]) == [2.0, 3.5, 3.5, 1.0]
    assert rankdata([1.0]) == [1.0]


@pytest.mark.parametrize("n,m", [(1, 1), (2, 3), (3, 3), (4, 5), (6, 6), (3, 8)])
def test_exact_p_matches_enumeration(n, m):
    rng = random.Random(n * 100 + m)
    for _ in range(10):
        vals = rng.sample(range(1000), n + m)
        a, b = [float(v) for v in vals[:n]], [float(v) for v in vals[n:]]
        for alt in ("two-sided", "greater", "less"):
            u, p = mann_whitney_u(a, b, alt)
            u_o, p_o = permutation_p(a, b, alt)
            assert u == u_o
            assert p == pytest.approx(p_o, abs=1e-12)


def test_asymptotic_path_matches_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(3)
    for _ in range(30):
        a = list(rng.normal(0, 1, 30).round(1))  # rounding forces ties
        b = list(rng.normal(0.3, 1, 25).round(1))
        for alt in ("two-sided", "greater", "less"):
            u, p = mann_whitney_u(a, b, alt)
            ref = scipy_stats.mannwhitneyu(a, b, alternative=alt, method="asymptotic", use_continuity=True)
            assert u == pytest.approx(ref.statistic)
            assert p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-15)


def test_exact_path_matches_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(4)
    for _ in range(30):
        a, b = list(rng.normal(size=7)), list(rng.normal(0.5, 1, 8))
        ref = scipy_stats.mannwhitneyu(a, b, alternative="two-sided", method="exact")
        assert mann_whitney_two_sided(a, b) == pytest.approx(ref.pvalue, rel=1e-12)


def test_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = list(rng.normal(size=12)), list(rng.normal(size=9))
        ua, p_ab = mann_whitney_u(a, b)
        ub, p_ba = mann_whitney_u(b, a)
        assert p_ab == pytest.approx(p_ba)
        assert ua + ub == len(a) * len(b)
        assert mann_whitney_u(a, b, "greater")[1] == pytest.approx(mann_whitney_u(b, a, "less")[1])


def test_identical_samples():
    assert mann_whitney_two_sided([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0
    assert mann_whitney_two_sided([5.0] * 10, [5.0] * 7) == 1.0


def test_complete_separation_is_significant():
    a = [float(i) for i in range(30)]
    b = [float(i) + 100 for i in range(30)]
    assert mann_whitney_two_sided(a, b) < 1e-9
    assert mann_whitney_u(a, b, "less")[1] < 1e-9
    assert mann_whitney_u(a, b, "greater")[1] > 0.99


def test_invalid_input():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])
    with pytest.raises(ValueError):
        mann_whitney_u([1.0], [math.nan])
    with pytest.raises(ValueError):
        mann_whitney_u([1.0], [2.0], "sideways")


def test_false_positive_rate_under_the_null():
    rng = np.random.default_rng(2024)
    hits = sum(
        mann_whitney_two_sided(list(rng.normal(size=30)), list(rng.normal(size=30))) < 0.05 for _ in range(1000)
    )
    # binomial(1000, 0.05) has sd ~ 6.9; allow three sd of slack
    assert hits <= 71


def test_quartiles_type7():
    values = [1.0, 2.0, 3.0, 4.0]
    # type 7: position 1 + p (n - 1)
    assert quartiles(values) == (2.5, 1.75, 3.25)
    assert quartiles([7.0]) == (7.0, 7.0, 7.0)
    assert quartiles([]) == (None, None, None)


def test_compare_trajectories_handles_missing_cells():
    runs_a = [[None, 1.0, 2.0], [None, 1.5, 2.5], [0.5, 2.0, 3.0]]
    runs_b = [[None, None, 0.0], [None, 0.1, 0.2], [None, 0.3, 0.4]]
    rows = compare_trajectories(runs_a, runs_b, [10, 20, 30], alpha=0.5)
    assert rows[0].p_value is None and rows[0].median_b is None
    assert rows[0].median_a == 0.5
    assert rows[1].p_value is not None
    assert rows[2].p_value == pytest.approx(permutation_p([2.0, 2.5, 3.0], [0.0, 0.2, 0.4])[1])
    assert rows[2].significant == (rows[2].p_value < 0.5)
    text = comparison_csv_text(rows)
    lines = text.splitlines()
    assert lines[0].startswith("checkpoint_budget,median_a")
    assert lines[1].split(",")[4] == ""  # median_b missing
    assert text.endswith("\n") and "\r" not in text
    with pytest.raises(ValueError):
        compare_trajectories([[1.0]], [[1.0, 2.0]], [1])
