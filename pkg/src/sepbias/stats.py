"""Nonparametric test machinery: Mann-Whitney U, Holm-Bonferroni, Kendall tau.

Implemented directly rather than wrapped, because the exact behaviour at small
sample sizes (enumeration path, tie handling, continuity correction) is part
of this package's contract and is cross-checked against independent oracles in
the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np

from .errors import DomainError

__all__ = [
    "TestResult",
    "midranks",
    "mann_whitney_u",
    "holm_bonferroni",
    "kendall_tau",
    "TESTS_CSV_COLUMNS",
    "test_result_csv_row",
]

DEFAULT_ALPHA = 0.05
ALTERNATIVES = ("less", "greater", "two_sided")

# The exact Mann-Whitney null is enumerated when the combined sample is at
# most this large (and tie-free); beyond it the normal approximation is used.
EXACT_ENUMERATION_LIMIT = 16

TESTS_CSV_COLUMNS = ("comparison_id", "statistic", "p", "p_adj", "method", "significant")


@dataclass(frozen=True)
class TestResult:
    """Outcome of one hypothesis test.

    ``method`` records which computation produced the p-value (mw_exact,
    mw_normal or kendall_normal). ``significant`` compares the adjusted
    p-value, when one has been attached, and the raw one otherwise, against
    ``alpha``.
    """

    statistic: float
    p_value: float
    method: str
    adjusted_p: float | None = None
    alpha: float = DEFAULT_ALPHA

    @property
    def significant(self) -> bool:
        effective = self.adjusted_p if self.adjusted_p is not None else self.p_value
        return effective < self.alpha

    def with_adjusted(self, adjusted_p: float) -> "TestResult":
        return replace(self, adjusted_p=float(adjusted_p))


def _validate_sample(name: str, values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"{name} must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must contain only finite values")
    return arr


def midranks(values) -> np.ndarray:
    """Ranks starting at 1, with tied values all given the mean of their ranks."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DomainError("values must be 1-d")
    order = np.argsort(arr, kind="mergesort")
    ranks = np.empty(arr.size, dtype=np.float64)
    sorted_vals = arr[order]
    i = 0
    while i < arr.size:
        j = i
        while j < arr.size and sorted_vals[j] == sorted_vals[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)
        i = j
    return ranks


def _normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _tie_sizes(values: np.ndarray) -> np.ndarray:
    _, counts = np.unique(values, return_counts=True)
    return counts


def _mw_exact_pvalues(n_a: int, n_b: int, u_obs: int) -> tuple[float, float]:
    """(P(U <= u_obs), P(U >= u_obs)) by enumerating every rank assignment."""
    n = n_a + n_b
    offset = n_a * (n_a + 1) // 2
    total = math.comb(n, n_a)
    count_le = 0
    count_ge = 0
    for ranks in combinations(range(1, n + 1), n_a):
        u = sum(ranks) - offset
        if u <= u_obs:
            count_le += 1
        if u >= u_obs:
            count_ge += 1
    return count_le / total, count_ge / total


def _mw_normal_pvalues(n_a: int, n_b: int, u_obs: float, tie_counts: np.ndarray) -> tuple[float, float]:
    """Tie-corrected, continuity-corrected normal approximation of the U null."""
    n = n_a + n_b
    mean = 0.5 * n_a * n_b
    tie_term = float(np.sum(tie_counts.astype(np.float64) ** 3 - tie_counts)) if n > 1 else 0.0
    var = (n_a * n_b / 12.0) * ((n + 1.0) - tie_term / (n * (n - 1.0)))
    if var <= 0.0:
        # Every value tied with every other: the statistic is constant.
        return 1.0, 1.0
    sd = math.sqrt(var)
    p_less = _normal_cdf((u_obs - mean + 0.5) / sd)
    p_greater = 1.0 - _normal_cdf((u_obs - mean - 0.5) / sd)
    return p_less, p_greater


def mann_whitney_u(a, b, alternative: str = "two_sided", alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Rank-sum test of whether sample ``a`` tends to smaller or larger values than ``b``.

    The statistic is U_a, the number of (a, b) pairs where a wins, ties worth
    half. ``alternative="less"`` asks whether a tends below b (small U_a),
    "greater" the opposite, "two_sided" either. When the combined sample has
    at most 16 values and no ties the p-value comes from full enumeration of
    the null (method "mw_exact"); otherwise from a normal approximation with
    tie correction and a 0.5 continuity correction (method "mw_normal").
    """
    if alternative not in ALTERNATIVES:
        raise DomainError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")
    arr_a = _validate_sample("a", a)
    arr_b = _validate_sample("b", b)
    n_a, n_b = arr_a.size, arr_b.size
    combined = np.concatenate([arr_a, arr_b])
    ranks = midranks(combined)
    u_a = float(np.sum(ranks[:n_a]) - n_a * (n_a + 1) / 2.0)
    tie_counts = _tie_sizes(combined)
    has_ties = bool(np.any(tie_counts > 1))
    if n_a + n_b <= EXACT_ENUMERATION_LIMIT and not has_ties:
        p_less, p_greater = _mw_exact_pvalues(n_a, n_b, int(round(u_a)))
        method = "mw_exact"
    else:
        p_less, p_greater = _mw_normal_pvalues(n_a, n_b, u_a, tie_counts)
        method = "mw_normal"
    if alternative == "less":
        p = p_less
    elif alternative == "greater":
        p = p_greater
    else:
        p = min(1.0, 2.0 * min(p_less, p_greater))
    return TestResult(statistic=u_a, p_value=float(min(1.0, max(0.0, p))), method=method, alpha=alpha)


def holm_bonferroni(p_values) -> list[float]:
    """Step-down Holm adjustment; returns adjusted p-values in the input order.

    Sorting the inputs ascending, the i-th order statistic (1-based) becomes
    min(1, max over j <= i of (m - j + 1) * p_(j)), which enforces the
    monotonicity of the step-down procedure before mapping back.
    """
    values = list(p_values)
    for p in values:
        if not isinstance(p, (int, float)) or isinstance(p, bool) or not math.isfinite(p) or not 0.0 <= p <= 1.0:
            raise DomainError(f"p-values must lie in [0, 1], got {p!r}")
    m = len(values)
    if m == 0:
        return []
    order = sorted(range(m), key=lambda i: values[i])
    adjusted = [0.0] * m
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, (m - rank) * values[idx])
        adjusted[idx] = min(1.0, running)
    return adjusted


def kendall_tau(x, y, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Kendall rank correlation (tau-b, tie corrected) with a normal-approximation p.

    The statistic is tau-b; the two-sided p-value approximates the null
    distribution of the concordance count S = C - D with the tie-adjusted
    normal variance (method "kendall_normal"). Raises DomainError when either
    input is constant, since tau is undefined there.
    """
    arr_x = _validate_sample("x", x)
    arr_y = _validate_sample("y", y)
    if arr_x.size != arr_y.size:
        raise DomainError(f"x and y must have equal lengths, got {arr_x.size} and {arr_y.size}")
    n = arr_x.size
    if n < 2:
        raise DomainError("kendall_tau needs at least two points")
    dx = np.sign(arr_x[:, None] - arr_x[None, :])
    dy = np.sign(arr_y[:, None] - arr_y[None, :])
    iu = np.triu_indices(n, k=1)
    s = float(np.sum(dx[iu] * dy[iu]))
    n0 = n * (n - 1) / 2.0
    ties_x = _tie_sizes(arr_x)
    ties_y = _tie_sizes(arr_y)
    n1 = float(np.sum(ties_x * (ties_x - 1) / 2.0))
    n2 = float(np.sum(ties_y * (ties_y - 1) / 2.0))
    denom = math.sqrt((n0 - n1) * (n0 - n2))
    if denom == 0.0:
        raise DomainError("kendall_tau is undefined for constant input")
    tau = s / denom

    def _v(counts: np.ndarray, k: int) -> float:
        c = counts.astype(np.float64)
        if k == 0:
            return float(np.sum(c * (c - 1) * (2 * c + 5)))
        if k == 1:
            return float(np.sum(c * (c - 1)))
        return float(np.sum(c * (c - 1) * (c - 2)))

    v0 = n * (n - 1) * (2 * n + 5)
    vt = _v(ties_x, 0)
    vu = _v(ties_y, 0)
    var_s = (v0 - vt - vu) / 18.0
    var_s += _v(ties_x, 1) * _v(ties_y, 1) / (2.0 * n * (n - 1))
    if n > 2:
        var_s += _v(ties_x, 2) * _v(ties_y, 2) / (9.0 * n * (n - 1) * (n - 2))
    if var_s <= 0.0:
        p = 1.0
    else:
        z = s / math.sqrt(var_s)
        p = min(1.0, 2.0 * (1.0 - _normal_cdf(abs(z))))
    return TestResult(statistic=float(tau), p_value=float(p), method="kendall_normal", alpha=alpha)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def test_result_csv_row(result: TestResult, comparison_id: str) -> list[str]:
    """One tests.csv row: comparison_id, statistic, p, p_adj, method, significant."""
    return [
        comparison_id,
        _fmt(result.statistic),
        _fmt(result.p_value),
        _fmt(result.adjusted_p),
        result.method,
        _fmt(result.significant),
    ]
