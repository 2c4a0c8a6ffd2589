"""Exact and resampling statistics kernel.

Five procedures: two-sided Fisher exact, Benjamini-Hochberg step-up,
one-sided Mann-Whitney U, percentile bootstrap CI, and tie-aware ROC AUC.
Fisher and the exact Mann-Whitney path work on integer counts, so their
p-values are exact rational numbers rounded once to float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import EmptyInput, SingleClass

# Mann-Whitney uses exact arrangement counting only for small tie-free
# samples: the smaller side must be at most EXACT_MIN_SIDE (the convention
# of standard implementations, which the published group comparisons
# follow) and the pair count at most EXACT_PAIR_LIMIT (cost bound).
EXACT_MIN_SIDE = 8
EXACT_PAIR_LIMIT = 400


@dataclass(frozen=True)
class ContingencyTable2x2:
    """Row 1 = condition A (pass, fail); row 2 = condition B (pass, fail)."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("counts must be non-negative")
        if self.a + self.b + self.c + self.d == 0:
            raise ValueError("table total must be positive")


@dataclass(frozen=True)
class StatResult:
    statistic: float
    p_value: float
    method: str  # "exact" | "normal_approx"
    note: str | None = None


def fisher_exact_two_sided(t: ContingencyTable2x2) -> StatResult:
    """Two-sided Fisher exact test under the point-probability rule.

    p is the sum of hypergeometric probabilities of all tables with the
    observed margins whose point probability does not exceed the observed
    table's. Point probabilities are compared as exact integers (numerators
    over the common denominator C(n, c1)), so no floating-point slack is
    needed; only the final p is rounded to float.
    """
    r1, r2 = t.a + t.b, t.c + t.d
    c1, c2 = t.a + t.c, t.b + t.d
    n = r1 + r2
    if r1 == 0 or r2 == 0 or c1 == 0 or c2 == 0:
        return StatResult(statistic=1.0, p_value=1.0, method="exact", note="degenerate_margins")

    lo = max(0, c1 - r2)
    hi = min(r1, c1)
    weight_obs = math.comb(r1, t.a) * math.comb(r2, c1 - t.a)
    total = math.comb(n, c1)
    acc = 0
    for x in range(lo, hi + 1):
        w = math.comb(r1, x) * math.comb(r2, c1 - x)
        if w <= weight_obs:
            acc += w
    return StatResult(
        statistic=float(Fraction(weight_obs, total)),
        p_value=float(Fraction(acc, total)),
        method="exact",
    )


def benjamini_hochberg(p_values: Sequence[float], alpha: float) -> tuple[list[bool], list[float]]:
    """Step-up BH procedure; returns (rejected, q_values) in input order.

    q(i) = min over j >= i (in ascending-p order) of m*p(j)/j, capped at 1.
    """
    m = len(p_values)
    if m == 0:
        raise EmptyInput("no p-values")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value {p} outside [0, 1]")

    order = sorted(range(m), key=lambda i: p_values[i])
    q_sorted = [0.0] * m
    running = 1.0
    for rank in range(m, 0, -1):
        idx = order[rank - 1]
        running = min(running, p_values[idx] * m / rank)
        q_sorted[rank - 1] = running

    k = 0
    for rank in range(1, m + 1):
        if p_values[order[rank - 1]] <= rank * alpha / m:
            k = rank

    rejected = [False] * m
    q_values = [0.0] * m
    for rank, idx in enumerate(order, start=1):
        q_values[idx] = q_sorted[rank - 1]
        rejected[idx] = rank <= k
    return rejected, q_values


def _mw_u_statistic(xs: Sequence[float], ys: Sequence[float]) -> float:
    u = 0.0
    for x in xs:
        for y in ys:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u


def _mw_exact_counts(m: int, n: int) -> list[int]:
    """count[u] = number of the C(m+n, m) group labelings with statistic u (no ties)."""
    u_max = m * n
    # N(m, n, u) = N(m-1, n, u-n) + N(m, n-1, u), iterated over n
    f = [[0] * (u_max + 1) for _ in range(m + 1)]
    f[0][0] = 1
    for j in range(1, m + 1):
        f[j][0] = 1  # all xs smaller than all ys
    for _n in range(1, n + 1):
        g = [[0] * (u_max + 1) for _ in range(m + 1)]
        g[0][0] = 1
        for j in range(1, m + 1):
            for u in range(u_max + 1):
                val = g[j - 1][u - _n] if u >= _n else 0
                g[j][u] = val + f[j][u]
        f = g
    return f[m]


def mann_whitney_u_greater(xs: Sequence[float], ys: Sequence[float]) -> StatResult:
    """One-sided Mann-Whitney U test of xs stochastically greater than ys.

    U counts pairs with x > y plus half the tied pairs. Exact permutation
    p-value by arrangement counting when the smaller sample has at most
    EXACT_MIN_SIDE values, the pair count is at most EXACT_PAIR_LIMIT, and
    the pooled sample is tie-free; otherwise a tie-corrected normal
    approximation with continuity correction.
    """
    if not xs or not ys:
        raise EmptyInput("both samples must be non-empty")
    m, n = len(xs), len(ys)
    u = _mw_u_statistic(xs, ys)

    pooled = list(xs) + list(ys)
    has_ties = len(set(pooled)) != len(pooled)

    if not has_ties and min(m, n) <= EXACT_MIN_SIDE and m * n <= EXACT_PAIR_LIMIT:
        counts = _mw_exact_counts(m, n)
        u_int = int(round(u))
        num = sum(counts[u_int:])
        p = float(Fraction(num, math.comb(m + n, m)))
        return StatResult(statistic=u, p_value=p, method="exact")

    mu = m * n / 2.0
    big_n = m + n
    _, tie_counts = np.unique(np.asarray(pooled, dtype=float), return_counts=True)
    tie_term = float(np.sum(tie_counts.astype(np.int64) ** 3 - tie_counts))
    var = m * n / 12.0 * ((big_n + 1) - tie_term / (big_n * (big_n - 1)))
    if var <= 0:
        return StatResult(statistic=u, p_value=1.0, method="normal_approx", note="zero_variance")
    z = (u - mu - 0.5) / math.sqrt(var)
    p = 0.5 * math.erfc(z / math.sqrt(2.0))
    return StatResult(statistic=u, p_value=min(1.0, p), method="normal_approx")


def bootstrap_resample_indices(seed: int, resample_index: int, n: int) -> np.ndarray:
    """Index multiset of one bootstrap resample.

    The draw contract is pinned so independent implementations agree:
    resample r uses Generator(PCG64(SeedSequence(seed, spawn_key=(r,))))
    and draws n integers in [0, n).
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(resample_index,))))
    return rng.integers(0, n, size=n)


def percentile_bootstrap_ci(
    values: Sequence[float], n_resamples: int, level: float, seed: int
) -> tuple[float, float, float]:
    """Percentile bootstrap CI for the mean; returns (lo, hi, half_width)."""
    if len(values) == 0:
        raise EmptyInput("no values")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    arr = np.asarray(values, dtype=float)
    n = arr.shape[0]
    means = np.empty(n_resamples, dtype=float)
    for r in range(n_resamples):
        means[r] = arr[bootstrap_resample_indices(seed, r, n)].mean()
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [tail, 1.0 - tail], method="linear")
    return float(lo), float(hi), float((hi - lo) / 2.0)


def roc_auc(labels: Sequence[bool], scores: Sequence[float]) -> float:
    """Tie-aware AUC: (#{pos>neg} + 0.5*#{pos==neg}) / (#pos * #neg) via mid-ranks."""
    y = np.asarray(labels, dtype=bool)
    s = np.asarray(scores, dtype=float)
    if y.shape[0] != s.shape[0]:
        raise ValueError("labels and scores must align")
    n_pos = int(y.sum())
    n_neg = int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("need at least one positive and one negative label")

    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s), dtype=float)
    sorted_scores = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # mid-rank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[y].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
