import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynasto.errors import ContractError
from dynasto.stats import (EXACT_BELOW, cliffs_delta, compare, effect_band, effect_dots,
                           mann_whitney_u, significance_stars)

small = st.lists(st.integers(0, 6), min_size=1, max_size=5)


def brute_u(a, b):
    return sum((x > y) + 0.5 * (x == y) for x in a for y in b)


def brute_exact_p(a, b):
    """Relabel the pooled sample in every way and count splits at least as extreme."""
    pooled = list(a) + list(b)
    n, m = len(a), len(b)
    obs = abs(brute_u(a, b) - n * m / 2)
    hits = total = 0
    for idx in itertools.combinations(range(n + m), n):
        xa = [pooled[i] for i in idx]
        xb = [pooled[i] for i in range(n + m) if i not in idx]
        total += 1
        hits += abs(brute_u(xa, xb) - n * m / 2) >= obs - 1e-9
    return hits / total


def normal_p(a, b):
    """Tie-corrected normal approximation with continuity correction, from the textbook formula."""
    n, m = len(a), len(b)
    u = brute_u(a, b)
    pooled = np.concatenate([a, b])
    _, counts = np.unique(pooled, return_counts=True)
    N = n + m
    var = n * m / 12 * ((N + 1) - np.sum(counts ** 3 - counts) / (N * (N - 1)))
    z = (abs(u - n * m / 2) - 0.5) / math.sqrt(var)
    return min(1.0, math.erfc(max(z, 0) / math.sqrt(2)))


def test_complete_separation():
    u, p = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert u == 0.0
    assert p == pytest.approx(0.1, abs=1e-12)  # 2 of 20 splits are this extreme
    assert cliffs_delta([1, 2, 3], [4, 5, 6]) == -1.0
    assert cliffs_delta([4, 5, 6], [1, 2, 3]) == 1.0


def test_identical_samples_are_not_significant():
    _, p = mann_whitney_u([3, 3, 3, 3], [3, 3, 3, 3])
    assert p >= 0.99
    _, p = mann_whitney_u(np.arange(10), np.arange(10))
    assert p >= 0.99


@given(small, small)
@settings(max_examples=150, deadline=None)
def test_exact_p_matches_enumeration(a, b):
    u, p = mann_whitney_u(a, b)
    assert u == brute_u(a, b)
    assert p == pytest.approx(brute_exact_p(a, b), abs=1e-12)


@given(st.lists(st.integers(0, 30), min_size=EXACT_BELOW, max_size=15),
       st.lists(st.integers(0, 30), min_size=EXACT_BELOW, max_size=15))
@settings(max_examples=100, deadline=None)
def test_large_samples_use_normal_approximation(a, b):
    if len(set(a + b)) == 1:
        return
    _, p = mann_whitney_u(a, b)
    assert p == pytest.approx(normal_p(np.array(a, float), np.array(b, float)), abs=1e-9)


@given(small, small)
@settings(max_examples=100, deadline=None)
def test_symmetry(a, b):
    ua, pa = mann_whitney_u(a, b)
    ub, pb = mann_whitney_u(b, a)
    assert ua + ub == len(a) * len(b)
    assert pa == pytest.approx(pb)
    assert cliffs_delta(a, b) == -cliffs_delta(b, a)
    assert cliffs_delta(a, b) == pytest.approx((2 * brute_u(a, b) - len(a) * len(b)) / (len(a) * len(b)))


def test_empty_sample_rejected():
    with pytest.raises(ContractError):
        mann_whitney_u([], [1])
    with pytest.raises(ContractError):
        cliffs_delta([1], [])


def test_effect_bands_and_notation():
    assert [effect_band(d) for d in (0.1, -0.2, 0.4, -0.9)] == ["negligible", "small", "medium", "large"]
    assert effect_band(0.147) == "small" and effect_band(0.474) == "large"
    assert (significance_stars(0.005), significance_stars(0.03), significance_stars(0.2)) == ("**", "*", "")
    assert (effect_dots(0.8), effect_dots(0.4), effect_dots(0.2)) == ("..", ".", "")


def test_compare_record():
    stat = compare("dynasto-ga", [10, 12, 14, 15, 20], "varl", [1, 2, 3, 4, 5])
    d = stat.to_dict()
    assert d["a"] == "dynasto-ga" and d["U"] == 25.0 and d["cliffs_delta"] == 1.0
    assert d["significance"] == "**" and d["effect_mark"] == ".." and d["effect"] == "large"
