"""Per-tag count series: ingestion, validation and preprocessing.

A stream is the daily pair (y_t, n_t): how many of the day's n_t documents
carry the stream's tag.  Days missing from the input are treated as removed
days, so they widen the spacing between retained observations instead of
contributing y = 0 points.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import EmptySeriesError, ParseError, ValidationError

CSV_HEADER = ("date", "tag", "count", "total")


@dataclass(frozen=True)
class ObservationPoint:
    """One retained day of a stream."""

    time: dt.date
    index: int
    y: int
    n: int


@dataclass(frozen=True)
class PreprocessConfig:
    """Preprocessing knobs; `min_daily_total` drops low-traffic days."""

    min_daily_total: int = 1

    def __post_init__(self):
        if self.min_daily_total < 1:
            raise ValidationError("min_daily_total must be >= 1")


class StreamSeries:
    """Immutable ordered series of (date, y, n) for one tag.

    `spacing[i]` is the calendar-day gap between points i and i+1; gaps
    widen across removed days.
    """

    __slots__ = ("tag", "dates", "y", "n", "spacing")

    def __init__(self, tag: str, dates, y, n):
        dates = np.asarray(dates, dtype="datetime64[D]")
        y = np.asarray(y, dtype=np.int64)
        n = np.asarray(n, dtype=np.int64)
        if dates.ndim != 1 or dates.shape != y.shape or dates.shape != n.shape:
            raise ValidationError("dates, y and n must be 1-d arrays of equal length")
        if dates.size == 0:
            raise EmptySeriesError(f"stream {tag!r} has no observations")
        gaps = np.diff(dates).astype(np.int64)
        if dates.size > 1 and gaps.min() < 1:
            raise ValidationError(f"stream {tag!r}: dates must be strictly increasing")
        if np.any(n < 1):
            raise ValidationError(f"stream {tag!r}: every day needs total >= 1")
        if np.any(y < 0) or np.any(y > n):
            raise ValidationError(f"stream {tag!r}: counts must satisfy 0 <= y <= n")
        spacing = gaps.astype(np.float64)
        for arr in (dates, y, n, spacing):
            arr.setflags(write=False)
        object.__setattr__(self, "tag", str(tag))
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "spacing", spacing)

    def __setattr__(self, name, value):
        raise AttributeError("StreamSeries is immutable")

    def __len__(self):
        return int(self.dates.size)

    @property
    def points(self) -> tuple[ObservationPoint, ...]:
        days = self.dates.astype(object)
        return tuple(
            ObservationPoint(time=days[i], index=i, y=int(self.y[i]), n=int(self.n[i]))
            for i in range(len(self))
        )

    def equispaced(self) -> bool:
        return len(self) < 2 or bool(np.all(self.spacing == self.spacing[0]))

    def take(self, indices) -> "StreamSeries":
        """Sub-series at the given sorted positions; spacing is recomputed."""
        indices = np.asarray(indices, dtype=np.intp)
        if indices.size == 0:
            raise EmptySeriesError(f"stream {self.tag!r}: selection is empty")
        return StreamSeries(self.tag, self.dates[indices], self.y[indices], self.n[indices])

    def __repr__(self):
        return f"StreamSeries(tag={self.tag!r}, n_points={len(self)})"


def series_equal(a: StreamSeries, b: StreamSeries) -> bool:
    return (
        a.tag == b.tag
        and np.array_equal(a.dates, b.dates)
        and np.array_equal(a.y, b.y)
        and np.array_equal(a.n, b.n)
        and np.array_equal(a.spacing, b.spacing)
    )


def _parse_date(text: str, rownum: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise ParseError(f"row {rownum}: bad date {text!r}: {exc}") from None


def _parse_int(text: str, what: str, rownum: int) -> int:
    try:
        return int(text)
    except (TypeError, ValueError):
        raise ParseError(f"row {rownum}: bad {what} {text!r}") from None


def parse_streams(raw_records: Iterable, first_rownum: int = 1) -> dict[str, StreamSeries]:
    """Build one StreamSeries per tag from (date, tag, count, total) rows.

    Rows may be 4-tuples or dicts keyed by the CSV header.  Days on which a
    tag has no row get y = 0 with that day's total.  `first_rownum` sets the
    number reported for the first record in error messages.
    """
    day_total: dict[dt.date, int] = {}
    tag_counts: dict[str, dict[dt.date, int]] = {}
    for rownum, rec in enumerate(raw_records, start=first_rownum):
        if isinstance(rec, Mapping):
            try:
                rec = tuple(rec[k] for k in CSV_HEADER)
            except KeyError as exc:
                raise ParseError(f"row {rownum}: missing field {exc.args[0]!r}") from None
        if len(rec) != 4:
            raise ParseError(f"row {rownum}: expected 4 fields, got {len(rec)}")
        date_raw, tag, count_raw, total_raw = rec
        day = date_raw if isinstance(date_raw, dt.date) else _parse_date(str(date_raw), rownum)
        tag = str(tag).strip()
        if not tag:
            raise ParseError(f"row {rownum}: empty tag")
        count = count_raw if isinstance(count_raw, int) else _parse_int(count_raw, "count", rownum)
        total = total_raw if isinstance(total_raw, int) else _parse_int(total_raw, "total", rownum)
        if total < 1:
            raise ValidationError(f"row {rownum}: total must be >= 1, got {total}")
        if count < 0 or count > total:
            raise ValidationError(f"row {rownum}: need 0 <= count <= total, got {count}/{total}")
        prev = day_total.setdefault(day, total)
        if prev != total:
            raise ValidationError(f"row {rownum}: day {day} has conflicting totals {prev} and {total}")
        per_tag = tag_counts.setdefault(tag, {})
        if day in per_tag:
            raise ValidationError(f"row {rownum}: duplicate row for tag {tag!r} on {day}")
        per_tag[day] = count

    if not day_total:
        return {}
    days = sorted(day_total)
    dates = np.array(days, dtype="datetime64[D]")
    n = np.array([day_total[d] for d in days], dtype=np.int64)
    out = {}
    for tag in sorted(tag_counts):
        counts = tag_counts[tag]
        y = np.array([counts.get(d, 0) for d in days], dtype=np.int64)
        out[tag] = StreamSeries(tag, dates, y, n)
    return out


def read_streams_csv(path) -> dict[str, StreamSeries]:
    """Parse a `date,tag,count,total` CSV file."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("row 1: empty file") from None
        if tuple(h.strip().lower() for h in header) != CSV_HEADER:
            raise ParseError(f"row 1: expected header {','.join(CSV_HEADER)}")
        return parse_streams(reader, first_rownum=2)


def write_streams_csv(streams: Mapping[str, StreamSeries], path) -> None:
    """Write streams back to the input schema (zero counts included)."""
    rows = []
    for tag in sorted(streams):
        s = streams[tag]
        days = s.dates.astype(object)
        for i in range(len(s)):
            rows.append((days[i].isoformat(), tag, int(s.y[i]), int(s.n[i])))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)


def filter_low_traffic(series: StreamSeries, cfg: PreprocessConfig) -> StreamSeries:
    """Drop days with n below the threshold; gaps widen across removed days."""
    keep = np.flatnonzero(series.n >= cfg.min_daily_total)
    if keep.size == 0:
        raise EmptySeriesError(
            f"stream {series.tag!r}: no day reaches min_daily_total={cfg.min_daily_total}"
        )
    if keep.size == len(series):
        return series
    return series.take(keep)


def global_proportion(series: StreamSeries) -> tuple[float, float]:
    """Return (pooled proportion sum(y)/sum(n), mean daily trials)."""
    return float(series.y.sum() / series.n.sum()), float(series.n.mean())
