"""Inference toolbox: bootstrap CIs, rank tests, outlier filter, KDE.

Rank statistics use mid-ranks for ties throughout. P-values come from the
survival functions in :mod:`palmscape._special`; quantiles interpolate
linearly between order statistics at ``h = (n - 1) * p``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._special import chi2_sf, normal_sf, t_sf
from .errors import (
    DegenerateInput,
    EmptyInput,
    LengthMismatch,
    TooFewGroups,
    TooFewValues,
)

ADJUSTMENTS = ("none", "bonferroni", "holm")

# below this length the Spearman p-value enumerates all rank permutations
_SPEARMAN_EXACT_MAX_N = 9


@dataclass(frozen=True)
class BootstrapResult:
    observed_mean: float
    samples: int
    sample_size: int
    ci_level: float
    ci_low: float
    ci_high: float
    seed: int


@dataclass(frozen=True)
class RankTestResult:
    statistic: float
    p_value: float
    df: int
    tie_correction: float = 1.0


@dataclass(frozen=True)
class DunnMatrix:
    labels: tuple
    z: np.ndarray
    p_adjusted: np.ndarray
    adjustment: str


def midranks(values) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_sizes(pooled: np.ndarray) -> np.ndarray:
    _, counts = np.unique(pooled, return_counts=True)
    return counts[counts > 1]


def bootstrap_mean_ci(values, samples: int = 1000, sample_size: int = 17, ci_level: float = 0.80, seed: int = 0) -> BootstrapResult:
    """Percentile bootstrap CI for the mean.

    Draws ``samples`` resamples of ``sample_size`` with replacement and
    takes the (1-ci_level)/2 and 1-(1-ci_level)/2 quantiles of the
    resample means. Deterministic for a given seed.
    """
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        raise EmptyInput("bootstrap needs at least one value")
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not 0.0 < ci_level < 1.0:
        raise ValueError("ci_level must be in (0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    draws = rng.integers(0, v.size, size=(samples, sample_size))
    means = v[draws].mean(axis=1)
    alpha = (1.0 - ci_level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return BootstrapResult(
        observed_mean=float(v.mean()),
        samples=samples,
        sample_size=sample_size,
        ci_level=ci_level,
        ci_low=float(lo),
        ci_high=float(hi),
        seed=seed,
    )


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(np.dot(xc, xc)) * float(np.dot(yc, yc)))
    return float(np.dot(xc, yc)) / denom


def spearman(x, y) -> RankTestResult:
    """Spearman rank correlation with a two-sided p-value.

    Mid-ranks handle ties; rho is the Pearson correlation of the rank
    vectors. For n of 10 or more the p-value uses the t approximation
    with n - 2 degrees of freedom; below that every rank permutation is
    enumerated exactly.
    """
    x = np.asarray(list(x), dtype=np.float64)
    y = np.asarray(list(y), dtype=np.float64)
    if x.size != y.size:
        raise LengthMismatch(f"x has {x.size} values, y has {y.size}")
    n = x.size
    if n < 3:
        raise TooFewValues("need at least 3 pairs")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInput("correlation undefined for a constant vector")
    rx = midranks(x)
    ry = midranks(y)
    rho = _pearson(rx, ry)
    if n > _SPEARMAN_EXACT_MAX_N:
        r = min(max(rho, -1.0), 1.0)
        if abs(r) == 1.0:
            p = 0.0
        else:
            t = r * math.sqrt((n - 2) / (1.0 - r * r))
            p = 2.0 * t_sf(abs(t), n - 2)
    else:
        target = abs(rho) - 1e-12
        hits = 0
        total = 0
        for perm in itertools.permutations(range(n)):
            total += 1
            if abs(_pearson(rx, ry[list(perm)])) >= target:
                hits += 1
        p = hits / total
    return RankTestResult(statistic=rho, p_value=min(p, 1.0), df=n - 2)


def _check_groups(groups) -> list[np.ndarray]:
    groups = [np.asarray(list(g), dtype=np.float64) for g in groups]
    if len(groups) < 2:
        raise TooFewGroups("need at least two groups")
    if any(g.size == 0 for g in groups):
        raise ValueError("groups must be non-empty")
    if sum(g.size for g in groups) < 3:
        raise TooFewValues("need at least 3 observations in total")
    return groups


def kruskal_wallis(groups) -> RankTestResult:
    """Kruskal-Wallis H with tie correction; p from chi-square (k-1 df)."""
    groups = _check_groups(groups)
    pooled = np.concatenate(groups)
    n_total = pooled.size
    ranks = midranks(pooled)
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start : start + g.size]
        h += float(r.sum()) ** 2 / g.size
        start += g.size
    h = 12.0 / (n_total * (n_total + 1)) * h - 3.0 * (n_total + 1)
    ties = _tie_sizes(pooled)
    correction = 1.0 - float(np.sum(ties**3 - ties)) / (n_total**3 - n_total)
    if correction == 0.0:  # every value identical
        return RankTestResult(statistic=0.0, p_value=1.0, df=len(groups) - 1, tie_correction=0.0)
    h /= correction
    h = max(h, 0.0)
    return RankTestResult(
        statistic=h,
        p_value=chi2_sf(h, len(groups) - 1),
        df=len(groups) - 1,
        tie_correction=correction,
    )


def _holm(p: np.ndarray) -> np.ndarray:
    m = p.size
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[idx]))
        adjusted[idx] = running
    return adjusted


def dunn_posthoc(groups, adjustment: str = "holm") -> DunnMatrix:
    """Pairwise Dunn z tests on pooled mid-ranks after Kruskal-Wallis.

    z_ij = (Ri - Rj) / sqrt((N(N+1)/12 - T)(1/n_i + 1/n_j)) with the tie
    term T = sum(t^3 - t) / (12(N - 1)); two-sided normal p-values,
    adjusted by the chosen method.
    """
    if adjustment not in ADJUSTMENTS:
        raise ValueError(f"adjustment must be one of {ADJUSTMENTS}")
    groups = _check_groups(groups)
    k = len(groups)
    pooled = np.concatenate(groups)
    n_total = pooled.size
    ranks = midranks(pooled)
    mean_ranks = []
    start = 0
    for g in groups:
        mean_ranks.append(float(ranks[start : start + g.size].mean()))
        start += g.size
    ties = _tie_sizes(pooled)
    tie_term = float(np.sum(ties**3 - ties)) / (12.0 * (n_total - 1))
    base = n_total * (n_total + 1) / 12.0 - tie_term

    z = np.zeros((k, k))
    p_raw = []
    pairs = []
    for i in range(k):
        for j in range(i + 1, k):
            denom = math.sqrt(base * (1.0 / groups[i].size + 1.0 / groups[j].size))
            zij = (mean_ranks[i] - mean_ranks[j]) / denom if denom > 0 else 0.0
            z[i, j] = zij
            z[j, i] = -zij
            p_raw.append(2.0 * normal_sf(abs(zij)))
            pairs.append((i, j))
    p_raw_arr = np.minimum(np.array(p_raw), 1.0)
    if adjustment == "bonferroni":
        p_adj = np.minimum(p_raw_arr * len(p_raw_arr), 1.0)
    elif adjustment == "holm":
        p_adj = _holm(p_raw_arr)
    else:
        p_adj = p_raw_arr

    p_matrix = np.ones((k, k))
    for (i, j), p in zip(pairs, p_adj):
        p_matrix[i, j] = p
        p_matrix[j, i] = p
    return DunnMatrix(
        labels=tuple(range(k)), z=z, p_adjusted=p_matrix, adjustment=adjustment
    )


def iqr_filter(values, k: float = 1.5) -> tuple[np.ndarray, int]:
    """Keep values within [Q1 - k*IQR, Q3 + k*IQR]; returns (kept, removed)."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size < 4:
        raise TooFewValues("IQR filter needs at least 4 values")
    q1, q3 = np.quantile(v, [0.25, 0.75])
    iqr = q3 - q1
    keep = (v >= q1 - k * iqr) & (v <= q3 + k * iqr)
    return v[keep], int(np.count_nonzero(~keep))


def gaussian_kde(values, eval_points, bandwidth: float | None = None) -> np.ndarray:
    """Gaussian kernel density estimate at ``eval_points``.

    Bandwidth defaults to Scott's rule, sd * n^(-1/5), with the sample
    standard deviation (ddof=1).
    """
    v = np.asarray(list(values), dtype=np.float64)
    if v.size < 2:
        raise TooFewValues("KDE needs at least 2 values")
    if bandwidth is None:
        sd = float(np.std(v, ddof=1))
        if sd == 0.0:
            raise DegenerateInput("zero variance; pass an explicit bandwidth")
        bandwidth = sd * v.size ** (-1.0 / 5.0)
    elif bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    x = np.asarray(eval_points, dtype=np.float64)
    u = (x[:, None] - v[None, :]) / bandwidth
    dens = np.exp(-0.5 * u * u).sum(axis=1) / (v.size * bandwidth * math.sqrt(2.0 * math.pi))
    return dens
