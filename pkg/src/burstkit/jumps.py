"""Sample-splitting p-values for candidate jumps.

Documents are thinned into train/test halves; jump locations come from a
fit on the train half and are scored on the test half with a two-window
likelihood-ratio statistic.  The null sample is built once per stream by
reallocating successes inside windows placed within quiet stretches (runs
where the train fit is constant and long enough to hold a full window).
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .errors import (EmptySeriesError, NullConstructionError, ValidationError,
                     WindowError)
from .likelihood import expit, logit_clamped
from .segmentation import (DEFAULT_JUMP_TOL, JumpLocation, SegmentedFit,
                           extract_jumps)
from .streams import StreamSeries

_MASK64 = 2**64 - 1
_SPLIT_STREAM = 1
_NULL_STREAM = 2


@dataclass(frozen=True)
class SplitPair:
    """Document-level halves; per day y and n totals are conserved."""

    train: StreamSeries
    test: StreamSeries
    seed: int


@dataclass(frozen=True)
class JumpRecord:
    """A candidate jump with its test-half score."""

    location: JumpLocation
    date_left: dt.date
    date_right: dt.date
    lrt_stat: float
    p_value: float
    null_sample_size: int


def split_sample(series: StreamSeries, seed: int) -> SplitPair:
    """Assign each document independently to the train half with probability 1/2.

    Tagged and untagged documents are thinned separately, which is the
    document-level assignment law; days whose half receives no documents
    are dropped from that half (their gaps widen).
    """
    rng = np.random.Generator(np.random.Philox(key=[seed & _MASK64, _SPLIT_STREAM]))
    y_tr = rng.binomial(series.y, 0.5)
    u_tr = rng.binomial(series.n - series.y, 0.5)
    n_tr = y_tr + u_tr
    y_te = series.y - y_tr
    n_te = series.n - n_tr

    def half(y, n):
        keep = np.flatnonzero(n > 0)
        if keep.size == 0:
            raise EmptySeriesError(f"stream {series.tag!r}: a split half is empty")
        return StreamSeries(series.tag, series.dates[keep], y[keep], n[keep])

    return SplitPair(train=half(y_tr, n_tr), test=half(y_te, n_te), seed=seed)


def _binom_ll(y: float, n: float, p: float) -> float:
    """y*log(p) + (n-y)*log(1-p) with the 0*log(0) = 0 convention."""
    ll = 0.0
    if y > 0:
        ll += y * np.log(p)
    if n - y > 0:
        ll += (n - y) * np.log1p(-p)
    return ll


def _lrt_from_counts(yl: float, nl: float, yr: float, nr: float) -> float:
    pl = yl / nl
    pr = yr / nr
    pp = (yl + yr) / (nl + nr)
    stat = 2.0 * (
        _binom_ll(yl, nl, pl) + _binom_ll(yr, nr, pr)
        - _binom_ll(yl, nl, pp) - _binom_ll(yr, nr, pp)
    )
    return max(stat, 0.0)


def jump_lrt(series: StreamSeries, t_hat: int, delta: int) -> float:
    """Two-window likelihood ratio for a level change at gap t_hat.

    The gap sits between points t_hat and t_hat+1; each window holds up to
    delta points.
    """
    N = len(series)
    if not 0 <= t_hat < N - 1:
        raise WindowError(f"gap index {t_hat} out of range for {N} points")
    if delta < 1:
        raise ValidationError("delta must be >= 1")
    lo = max(t_hat - delta + 1, 0)
    hi = min(t_hat + delta, N - 1)
    left = slice(lo, t_hat + 1)
    right = slice(t_hat + 1, hi + 1)
    nl = series.n[left].sum()
    nr = series.n[right].sum()
    if nl == 0 or nr == 0:
        raise WindowError(f"empty window around gap {t_hat}")
    return _lrt_from_counts(
        float(series.y[left].sum()), float(nl),
        float(series.y[right].sum()), float(nr),
    )


def quiet_stretches(fit: SegmentedFit, delta: int,
                    jump_tol: float = DEFAULT_JUMP_TOL) -> list[tuple[int, int]]:
    """Maximal constant runs of the fit long enough to hold a 2*delta window.

    Runs are split at candidate gaps, so no stretch overlaps a candidate
    jump; only runs of at least 2*delta+1 points qualify.
    """
    jumps = extract_jumps(fit, jump_tol)
    N = fit.p_hat.size
    cuts = [-1] + [j.index for j in jumps] + [N - 1]
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        start, end = a + 1, b
        if end - start + 1 >= 2 * delta + 1:
            out.append((start, end))
    return out


def _indices_by_dates(series: StreamSeries, date_lo, date_hi) -> tuple[int, int]:
    lo = int(np.searchsorted(series.dates, date_lo, side="left"))
    hi = int(np.searchsorted(series.dates, date_hi, side="right")) - 1
    return lo, hi


def _gap_index_by_date(series: StreamSeries, date_left) -> int:
    """Gap in `series` at the same calendar cut: last point dated <= date_left."""
    pos = int(np.searchsorted(series.dates, date_left, side="right")) - 1
    if pos < 0 or pos >= len(series) - 1:
        raise WindowError(f"no gap at calendar cut {date_left} in {series.tag!r}")
    return pos


def jump_null_distribution(series: StreamSeries, stretches, delta: int,
                           B: int, seed: int) -> np.ndarray:
    """B sorted null statistics from window permutations inside stretches.

    Each replicate picks one of the feasible 2*delta-point window placements
    uniformly, reallocates the window's pooled successes across its days
    (capacities n_t), and scores the window's center gap.  Replicates are
    drawn in index order from a Philox stream keyed by the seed.
    """
    if B < 1:
        raise ValidationError("need at least one replicate")
    if delta < 1:
        raise ValidationError("delta must be >= 1")
    width = 2 * delta
    placements = []
    for a, b in stretches:
        a = max(a, 0)
        b = min(b, len(series) - 1)
        for s in range(a, b - width + 2):
            placements.append(s)
    if not placements:
        raise NullConstructionError(
            f"no window of {width} points fits inside any quiet stretch"
        )
    placements = np.asarray(placements, dtype=np.intp)
    rng = np.random.Generator(np.random.Philox(key=[seed & _MASK64, _NULL_STREAM]))
    choices = rng.integers(0, placements.size, size=B)
    stats = np.empty(B)
    for b_i in range(B):
        s = int(placements[choices[b_i]])
        n_win = series.n[s : s + width]
        y_tot = int(series.y[s : s + width].sum())
        y_perm = rng.multivariate_hypergeometric(n_win, y_tot)
        nl = float(n_win[:delta].sum())
        nr = float(n_win[delta:].sum())
        stats[b_i] = _lrt_from_counts(
            float(y_perm[:delta].sum()), nl, float(y_perm[delta:].sum()), nr
        )
    stats.sort()
    return stats


def pvalue_from_null(null_sorted: np.ndarray, observed: float) -> float:
    """(1 + #{null >= observed}) / (B + 1)."""
    B = null_sorted.size
    count = B - int(np.searchsorted(null_sorted, observed, side="left"))
    return (1.0 + count) / (B + 1.0)


def jump_pvalues(series: StreamSeries, train_fit: SegmentedFit, delta: int,
                 B: int, seed: int,
                 jump_tol: float = DEFAULT_JUMP_TOL) -> list[JumpRecord]:
    """Score the train fit's jumps on the test half of the seeded split.

    `train_fit` must be a fit of `split_sample(series, seed).train`; gaps
    and quiet stretches are carried to the test half by calendar date.  One
    shared null sample is reused for every jump so the ranks are
    comparable.  Records are sorted by ascending p-value, ties by
    descending |magnitude|.
    """
    split = split_sample(series, seed)
    train, test = split.train, split.test
    if len(train) != train_fit.p_hat.size:
        raise ValidationError("train_fit does not match the seeded split")
    jumps = extract_jumps(train_fit, jump_tol)
    if not jumps:
        return []
    train_days = train.dates.astype(object)
    stretches = quiet_stretches(train_fit, delta, jump_tol)
    test_stretches = []
    for a, b in stretches:
        lo, hi = _indices_by_dates(test, train.dates[a], train.dates[b])
        if hi - lo + 1 >= 2 * delta + 1:
            test_stretches.append((lo, hi))
    null_sorted = jump_null_distribution(test, test_stretches, delta, B, seed)
    records = []
    for jump in jumps:
        try:
            gap = _gap_index_by_date(test, train.dates[jump.index])
            stat = jump_lrt(test, gap, delta)
        except WindowError:
            continue  # this gap has no scorable window on the test half
        records.append(
            JumpRecord(
                location=jump,
                date_left=train_days[jump.index],
                date_right=train_days[jump.index + 1],
                lrt_stat=stat,
                p_value=pvalue_from_null(null_sorted, stat),
                null_sample_size=B,
            )
        )
    records.sort(key=lambda r: (r.p_value, -abs(r.location.magnitude)))
    return records


def restricted_mle_fit(series: StreamSeries, gap_dates) -> SegmentedFit:
    """Piecewise-constant MLE with segment boundaries at the given dates.

    Each date marks the left point of a kept gap; segment levels are the
    pooled proportions, which is the exact optimum for fixed boundaries.
    """
    cut_positions = sorted(
        {_gap_index_by_date(series, np.datetime64(d, "D")) for d in gap_dates}
    )
    bounds = [0] + [c + 1 for c in cut_positions] + [len(series)]
    theta = np.empty(len(series))
    for a, b in zip(bounds[:-1], bounds[1:]):
        p = series.y[a:b].sum() / series.n[a:b].sum()
        theta[a:b] = logit_clamped(p)
    return SegmentedFit(
        theta_hat=theta,
        p_hat=expit(theta),
        penalty="pruned",
        lam=0.0,
        iterations=0,
        converged=True,
        diagnostics={"segments": len(bounds) - 1},
    )


def prune_and_refit(series: StreamSeries, fit: SegmentedFit, alpha: float,
                    delta: int, B: int, seed: int,
                    records: list[JumpRecord] | None = None) -> SegmentedFit:
    """Drop jumps with p > alpha and refit segment-wise MLE on the full series.

    `fit` is the train-half fit whose jumps are the candidates; when
    `records` is omitted the scores are recomputed from (delta, B, seed),
    which reproduces the same split.  With no survivors the result is the
    constant global MLE.
    """
    if records is None:
        records = jump_pvalues(series, fit, delta, B, seed)
    survivors = [r for r in records if r.p_value <= alpha]
    refit = restricted_mle_fit(series, [r.date_left for r in survivors])
    refit.diagnostics.update(alpha=alpha, candidates=len(records), kept=len(survivors))
    return refit
