"""Mann-Whitney U test and Cliff's delta for comparing per-seed outcomes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ContractError

EXACT_BELOW = 8  # exact enumeration when min(n, m) < 8


def _u_statistic(a, b) -> float:
    """U of ``a``: pairs with a_i > b_j plus half the ties."""
    diff = np.subtract.outer(a, b)
    return float(np.sum(diff > 0) + 0.5 * np.sum(diff == 0))


def mann_whitney_u(a, b) -> tuple[float, float]:
    """Two-sided Mann-Whitney test; returns ``(U_a, p)``.

    Small samples use the exact permutation distribution of U (ties included),
    with p = P(|U - nm/2| >= |U_obs - nm/2|). Larger samples use the
    tie-corrected normal approximation with continuity correction.
    """
    a = np.asarray(a, float).ravel()
    b = np.asarray(b, float).ravel()
    if a.size == 0 or b.size == 0:
        raise ContractError("both samples must be non-empty")
    u = _u_statistic(a, b)
    if min(a.size, b.size) >= EXACT_BELOW:
        res = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic",
                                 use_continuity=True)
        return u, float(min(res.pvalue, 1.0))
    return u, _exact_p(a, b, u)


def _exact_p(a: np.ndarray, b: np.ndarray, u_obs: float) -> float:
    """Enumerate every split of the pooled sample into groups of the original sizes."""
    pooled = np.concatenate([a, b])
    n, total = a.size, pooled.size
    idx = np.array(list(itertools.combinations(range(total), n)))
    mask = np.zeros((len(idx), total), dtype=bool)
    mask[np.arange(len(idx))[:, None], idx] = True
    # U of the first group = rank sum minus n(n+1)/2, with midranks for ties
    ranks = stats.rankdata(pooled)
    u = (mask * ranks).sum(axis=1) - n * (n + 1) / 2.0
    half = n * b.size / 2.0
    extreme = np.abs(u - half) >= abs(u_obs - half) - 1e-9
    return float(np.mean(extreme))


def cliffs_delta(a, b) -> float:
    a = np.asarray(a, float).ravel()
    b = np.asarray(b, float).ravel()
    if a.size == 0 or b.size == 0:
        raise ContractError("both samples must be non-empty")
    diff = np.subtract.outer(a, b)
    return float((np.sum(diff > 0) - np.sum(diff < 0)) / diff.size)


def effect_band(delta: float) -> str:
    d = abs(delta)
    if d < 0.147:
        return "negligible"
    if d < 0.33:
        return "small"
    if d < 0.474:
        return "medium"
    return "large"


def significance_stars(p: float) -> str:
    return "**" if p < 0.01 else "*" if p < 0.05 else ""


def effect_dots(delta: float) -> str:
    return {"large": "..", "medium": "."}.get(effect_band(delta), "")


@dataclass(frozen=True)
class PairStat:
    method_a: str
    method_b: str
    u: float
    p: float
    delta: float

    @property
    def band(self) -> str:
        return effect_band(self.delta)

    def to_dict(self) -> dict:
        return {"a": self.method_a, "b": self.method_b, "U": self.u, "p": self.p,
                "cliffs_delta": self.delta, "significance": significance_stars(self.p),
                "effect": self.band, "effect_mark": effect_dots(self.delta)}


def compare(name_a: str, a, name_b: str, b) -> PairStat:
    u, p = mann_whitney_u(a, b)
    return PairStat(name_a, name_b, u, p, cliffs_delta(a, b))
