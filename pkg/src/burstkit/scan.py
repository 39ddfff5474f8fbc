"""Windowed scan test for heightened activity, with a permutation null.

The statistic standardizes the excess of each window's pooled proportion
over the global proportion; its null distribution comes from reallocating
the pooled successes across days with the day totals as capacities, which
is exactly exchangeable when all days share one proportion.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BurstkitError, DegenerateSeriesError, ValidationError
from .streams import StreamSeries

DEFAULT_DELTA = 5


@dataclass(frozen=True)
class ScanTestResult:
    statistic_T: float
    profile: np.ndarray
    argmax_t: int
    p_value: float
    n_permutations: int
    seed: int


def _window_sums(values: np.ndarray, delta: int) -> np.ndarray:
    """Sum of values over {j : |j - i| <= delta} for every i, edges clipped."""
    N = values.size
    c = np.concatenate(([0.0], np.cumsum(values, dtype=np.float64)))
    idx = np.arange(N)
    lo = np.maximum(idx - delta, 0)
    hi = np.minimum(idx + delta, N - 1)
    return c[hi + 1] - c[lo]


def neighborhood_average(series: StreamSeries, i: int, delta: int) -> float:
    """Pooled proportion over the index window around i."""
    if not 0 <= i < len(series):
        raise ValidationError(f"index {i} out of range")
    if delta < 0:
        raise ValidationError("delta must be >= 0")
    lo = max(i - delta, 0)
    hi = min(i + delta, len(series) - 1)
    return float(series.y[lo:hi + 1].sum() / series.n[lo:hi + 1].sum())


def _profile(y: np.ndarray, n: np.ndarray, delta: int):
    yw = _window_sums(y.astype(np.float64), delta)
    nw = _window_sums(n.astype(np.float64), delta)
    p0 = y.sum() / n.sum()
    if p0 <= 0.0 or p0 >= 1.0:
        raise DegenerateSeriesError(
            f"global proportion {p0} leaves no variance under the null"
        )
    sigma = np.sqrt(p0 * (1.0 - p0) / nw)
    return (yw / nw - p0) / sigma


def scan_statistic(series: StreamSeries, delta: int = DEFAULT_DELTA):
    """Return (max standardized excess, per-index profile, argmax index)."""
    if delta < 0:
        raise ValidationError("delta must be >= 0")
    profile = _profile(series.y, series.n, delta)
    argmax = int(np.argmax(profile))
    return float(profile[argmax]), profile, argmax


def permutation_pvalue(series: StreamSeries, delta: int = DEFAULT_DELTA,
                       B: int = 1000, seed: int = 0) -> ScanTestResult:
    """Permutation p-value for the scan statistic.

    Each replicate reallocates the pooled successes across days via a
    multivariate hypergeometric draw with capacities n_t (equivalent to
    permuting document-level tag labels) and recomputes the maximum.
    Replicates are drawn in index order from a Philox stream keyed by the
    seed, so results are reproducible and independent of scheduling.
    """
    if B < 1:
        raise ValidationError("need at least one permutation")
    stat, profile, argmax = scan_statistic(series, delta)
    rng = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), 0]))
    total = int(series.y.sum())
    draws = rng.multivariate_hypergeometric(series.n, total, size=B)
    count = 0
    n = series.n
    for b in range(B):
        perm_profile = _profile(draws[b], n, delta)
        if perm_profile.max() >= stat:
            count += 1
    p = (1.0 + count) / (B + 1.0)
    return ScanTestResult(
        statistic_T=stat,
        profile=profile,
        argmax_t=argmax,
        p_value=p,
        n_permutations=B,
        seed=seed,
    )


@dataclass(frozen=True)
class ScreenResult:
    """Per-tag p-values (ascending) plus survivor counts per threshold."""

    pvalues: tuple[tuple[str, float], ...]
    survivor_counts: tuple[tuple[float, int], ...]
    errors: tuple[tuple[str, str], ...]


def batch_screen(streams, delta: int = DEFAULT_DELTA, B: int = 1000, seed: int = 0,
                 thresholds=()) -> ScreenResult:
    """Scan every stream; failures are logged per tag and skipped."""
    if not streams:
        raise ValidationError("no streams to screen")
    pvals = {}
    errors = []
    for tag in sorted(streams):
        try:
            pvals[tag] = permutation_pvalue(streams[tag], delta, B, seed).p_value
        except BurstkitError as exc:
            errors.append((tag, str(exc)))
    ordered = tuple(sorted(pvals.items(), key=lambda kv: (kv[1], kv[0])))
    counts = tuple(
        (float(thr), sum(1 for _, p in ordered if p < thr)) for thr in thresholds
    )
    return ScreenResult(pvalues=ordered, survivor_counts=counts, errors=tuple(errors))
