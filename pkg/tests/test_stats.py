import itertools
import math
import random

import pytest
from scipy import stats as sps

from skillaudit.stats import (exact_p_greater, mann_whitney_one_sided, midranks, size_label, u_statistic)


def brute_force_p(u, n1, n2):
    """P(U >= u) by listing every way to pick the treatment ranks."""
    n = n1 + n2
    hits = total = 0
    for combo in itertools.combinations(range(1, n + 1), n1):
        total += 1
        if sum(combo) - n1 * (n1 + 1) / 2 >= u - 1e-9:
            hits += 1
    return hits / total


def test_complete_separation():
    res = mann_whitney_one_sided([4, 5, 6], [1, 2, 3])
    assert res.u_statistic == 9
    assert res.effect_size_r == 1.0
    assert res.p_value == pytest.approx(1 / 20)
    assert res.method == "exact"


def test_same_multiset_gives_zero_effect():
    res = mann_whitney_one_sided([1, 5, 9], [9, 1, 5])
    assert res.effect_size_r == 0.0


def test_all_tied():
    res = mann_whitney_one_sided([2, 2], [2, 2])
    assert (res.u_statistic, res.effect_size_r, res.p_value) == (2, 0.0, 0.5)


def test_empty_sample_is_an_error():
    with pytest.raises(ValueError):
        mann_whitney_one_sided([], [1.0])


def test_non_finite_is_an_error():
    with pytest.raises(ValueError):
        mann_whitney_one_sided([math.nan], [1.0])


def test_exact_on_ties_is_an_error():
    with pytest.raises(ValueError):
        mann_whitney_one_sided([1, 2], [2, 3], method="exact")


def test_ties_switch_to_normal():
    assert mann_whitney_one_sided([1, 2, 3], [3, 4, 5]).method == "normal_approx"


def test_large_samples_switch_to_normal():
    rng = random.Random(1)
    a = [rng.random() for _ in range(21)]
    b = [rng.random() for _ in range(20)]
    assert mann_whitney_one_sided(a, b).method == "normal_approx"


def test_midranks():
    assert midranks([3, 1, 3, 2]) == [3.5, 1.0, 3.5, 2.0]


def test_u_with_ties_counts_half():
    assert u_statistic([1, 2], [2, 3]) == 0.5


@pytest.mark.parametrize("n1,n2", [(3, 3), (4, 5), (6, 2)])
def test_exact_matches_enumeration(n1, n2):
    for u in range(n1 * n2 + 1):
        assert exact_p_greater(u, n1, n2) == pytest.approx(brute_force_p(u, n1, n2), abs=1e-12)


def test_normal_matches_scipy_with_ties():
    rng = random.Random(5)
    for _ in range(50):
        a = [rng.randint(0, 8) for _ in range(rng.randint(5, 25))]
        b = [rng.randint(0, 8) for _ in range(rng.randint(5, 25))]
        if len(set(a + b)) == 1:
            continue
        ours = mann_whitney_one_sided(a, b, method="normal")
        ref = sps.mannwhitneyu(a, b, alternative="greater", method="asymptotic", use_continuity=True)
        assert ours.u_statistic == ref.statistic
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-12)


def test_exact_matches_scipy():
    rng = random.Random(6)
    for _ in range(30):
        a = rng.sample(range(1000), rng.randint(1, 12))
        b = rng.sample(sorted(set(range(1000)) - set(a)), rng.randint(1, 12))
        ours = mann_whitney_one_sided(a, b)
        ref = sps.mannwhitneyu(a, b, alternative="greater", method="exact")
        assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_two_sided_is_twice_the_smaller_tail():
    res = mann_whitney_one_sided([1, 2, 3], [4, 5, 6])
    assert res.p_two_sided == pytest.approx(2 / 20)


def test_significance_flag():
    assert mann_whitney_one_sided([4, 5, 6, 7], [0, 1, 2, 3]).significant()
    assert not mann_whitney_one_sided([1, 2], [3, 4]).significant()


@pytest.mark.parametrize("r,label", [
    (0.0, "negligible"), (0.1099, "negligible"), (0.11, "small"), (0.2799, "small"),
    (0.28, "medium"), (0.4299, "medium"), (0.43, "large"), (-0.5, "large"), (1.0, "large"),
])
def test_size_label(r, label):
    assert size_label(r) == label
