"""Above-baseline interval extraction, burst strength, and ranking.

A burst is a maximal run where the fitted proportion strictly exceeds the
stream baseline (global proportion plus one binomial standard error at the
mean daily trial count).  Its strength is the summed log-likelihood ratio
of the fitted signal against the baseline, so both the height and the
duration of the excursion count.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DegenerateSeriesError, ValidationError
from .likelihood import THETA_CLAMP, expit
from .segmentation import SegmentedFit
from .streams import StreamSeries, global_proportion

_P_LO = float(expit(-THETA_CLAMP))
_P_HI = float(expit(THETA_CLAMP))


@dataclass(frozen=True)
class BurstRecord:
    tag: str
    start: dt.date
    end: dt.date
    peak: dt.date
    strength: float
    baseline_p0: float


@dataclass(frozen=True)
class RankPolicy:
    """Ranking knobs: baseline estimator and optional row cap."""

    baseline: str = "mean"
    top: int | None = None

    def __post_init__(self):
        if self.baseline not in ("mean", "median"):
            raise ValidationError("baseline must be 'mean' or 'median'")
        if self.top is not None and self.top < 0:
            raise ValidationError("top must be >= 0")


def baseline(series: StreamSeries, estimator: str = "mean") -> float:
    """p0 = center + sqrt(center*(1-center)/mean_n).

    The center is the pooled proportion, or the median of the daily
    proportions with estimator='median'.
    """
    p_bar, n_bar = global_proportion(series)
    if estimator == "median":
        p_bar = float(np.median(series.y / series.n))
    elif estimator != "mean":
        raise ValidationError("estimator must be 'mean' or 'median'")
    if p_bar <= 0.0 or p_bar >= 1.0:
        raise DegenerateSeriesError(
            f"stream {series.tag!r}: baseline is degenerate (center={p_bar})"
        )
    return p_bar + np.sqrt(p_bar * (1.0 - p_bar) / n_bar)


def extract_bursts(fit: SegmentedFit, p0: float) -> list[tuple[int, int]]:
    """Maximal index intervals with fitted proportion strictly above p0."""
    above = fit.p_hat > p0
    out = []
    start = None
    for i, flag in enumerate(above):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            out.append((start, i - 1))
            start = None
    if start is not None:
        out.append((start, int(above.size) - 1))
    return out


def burst_strength(series: StreamSeries, fit: SegmentedFit,
                   interval: tuple[int, int], p0: float) -> float:
    """Summed log-likelihood ratio of the fit against the baseline.

    Binomial coefficients cancel, so only the y*log(p) + (n-y)*log(1-p)
    kernels enter; proportions are clamped consistently with the theta box.
    """
    a, b = interval
    if not 0 <= a <= b < len(series):
        raise ValidationError(f"interval {interval} out of range")
    y = series.y[a:b + 1].astype(np.float64)
    n = series.n[a:b + 1].astype(np.float64)
    p_hat = np.clip(fit.p_hat[a:b + 1], _P_LO, _P_HI)
    p_base = min(max(p0, _P_LO), _P_HI)
    return float(np.sum(
        y * (np.log(p_hat) - np.log(p_base))
        + (n - y) * (np.log1p(-p_hat) - np.log1p(-p_base))
    ))


def _peak_date(series: StreamSeries, interval: tuple[int, int]) -> dt.date:
    """Date of the highest raw proportion inside the interval, earliest on ties."""
    a, b = interval
    raw = series.y[a:b + 1] / series.n[a:b + 1]
    return series.dates.astype(object)[a + int(np.argmax(raw))]


def stream_bursts(series: StreamSeries, fit: SegmentedFit, p0: float) -> list[BurstRecord]:
    """All bursts of one fitted stream, in time order."""
    days = series.dates.astype(object)
    out = []
    for interval in extract_bursts(fit, p0):
        a, b = interval
        out.append(
            BurstRecord(
                tag=series.tag,
                start=days[a],
                end=days[b],
                peak=_peak_date(series, interval),
                strength=burst_strength(series, fit, interval, p0),
                baseline_p0=float(p0),
            )
        )
    return out


def rank_bursts(streams_with_fits: Mapping[str, tuple[StreamSeries, SegmentedFit, float]],
                policy: RankPolicy | None = None) -> list[BurstRecord]:
    """Merge all streams' bursts, strongest first.

    Entries map tag -> (series, fit, baseline p0).  Ties in strength order
    by (tag, start) so the ranking is a stable total order.
    """
    policy = policy or RankPolicy()
    records = []
    for tag in sorted(streams_with_fits):
        series, fit, p0 = streams_with_fits[tag]
        records.extend(stream_bursts(series, fit, p0))
    records.sort(key=lambda r: (-r.strength, r.tag, r.start))
    if policy.top is not None:
        records = records[: policy.top]
    return records
