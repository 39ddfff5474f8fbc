"""Seeded binomial stream generators for tests and benchmarks.

Sampling goes through the inverse CDF driven by Philox uniforms, so a
(spec, seed) pair reproduces bit-identical series on any platform.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from .errors import ParseError, ValidationError
from .streams import StreamSeries

_MASK64 = 2**64 - 1
_GEN_STREAM = 0


@dataclass(frozen=True)
class SegmentSpec:
    """A constant stretch (p) or an affine ramp p_j = intercept + slope*j.

    The ramp index j runs 1..length within the segment.
    """

    length: int
    p: float | None = None
    intercept: float | None = None
    slope: float | None = None

    def __post_init__(self):
        if self.length < 1:
            raise ValidationError("segment length must be >= 1")
        is_const = self.p is not None
        is_ramp = self.intercept is not None and self.slope is not None
        if is_const == is_ramp:
            raise ValidationError("segment needs either p or (intercept, slope)")

    def proportions(self) -> np.ndarray:
        if self.p is not None:
            out = np.full(self.length, float(self.p))
        else:
            j = np.arange(1, self.length + 1, dtype=np.float64)
            out = self.intercept + self.slope * j
        if out.min() < 0.0 or out.max() > 1.0:
            raise ValidationError("segment proportions leave [0, 1]")
        return out


@dataclass(frozen=True)
class PiecewiseSpec:
    segments: tuple[SegmentSpec, ...]
    n_per_day: int | tuple[int, ...] = 200
    seed: int = 0
    tag: str = "SYN"
    start: dt.date = field(default=dt.date(2000, 1, 1))

    def __post_init__(self):
        if not self.segments:
            raise ValidationError("spec needs at least one segment")
        self.proportions()
        self.trials()

    @property
    def n_points(self) -> int:
        return sum(s.length for s in self.segments)

    def proportions(self) -> np.ndarray:
        return np.concatenate([s.proportions() for s in self.segments])

    def trials(self) -> np.ndarray:
        if isinstance(self.n_per_day, int):
            if self.n_per_day < 1:
                raise ValidationError("n_per_day must be >= 1")
            return np.full(self.n_points, self.n_per_day, dtype=np.int64)
        n = np.asarray(self.n_per_day, dtype=np.int64)
        if n.size != self.n_points or n.min() < 1:
            raise ValidationError("per-day trials must be positive, one per day")
        return n


def gen_stream(spec: PiecewiseSpec) -> StreamSeries:
    """Draw y_t ~ Bin(n_t, p_t) on consecutive daily dates."""
    p = spec.proportions()
    n = spec.trials()
    rng = np.random.Generator(np.random.Philox(key=[spec.seed & _MASK64, _GEN_STREAM]))
    u = rng.random(spec.n_points)
    u[u == 0.0] = np.finfo(np.float64).tiny
    y = binom.ppf(u, n, p).astype(np.int64)
    start = np.datetime64(spec.start, "D")
    dates = start + np.arange(spec.n_points)
    return StreamSeries(spec.tag, dates, y, n)


def gen_null_stream(N: int, n_per_day: int, p: float, seed: int,
                    tag: str = "NULL", start: dt.date = dt.date(2000, 1, 1)) -> StreamSeries:
    """Single-segment constant-proportion stream."""
    spec = PiecewiseSpec(
        segments=(SegmentSpec(length=N, p=p),),
        n_per_day=n_per_day,
        seed=seed,
        tag=tag,
        start=start,
    )
    return gen_stream(spec)


def jumps_plus_ramp_spec(seed: int = 0, n_per_day: int = 200,
                         tag: str = "SYN") -> PiecewiseSpec:
    """Three constant levels followed by a slow ramp; the standard benchmark.

    p = 0.5 on days 1-200, 0.6 on 201-500, 0.8 on 501-550, then
    0.55 + (t-550)/3000 up to day 1203.
    """
    return PiecewiseSpec(
        segments=(
            SegmentSpec(length=200, p=0.5),
            SegmentSpec(length=300, p=0.6),
            SegmentSpec(length=50, p=0.8),
            SegmentSpec(length=653, intercept=0.55, slope=1.0 / 3000.0),
        ),
        n_per_day=n_per_day,
        seed=seed,
        tag=tag,
    )


def parse_spec_file(path) -> PiecewiseSpec:
    """Read a stream spec from `key = value` text with [segment] sections."""
    top: dict[str, str] = {}
    segments: list[dict] = []
    current: dict[str, str] | None = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.lower() == "[segment]":
                current = {}
                segments.append(current)
                continue
            if line.startswith("["):
                raise ParseError(f"line {lineno}: unknown section {line!r}")
            if "=" not in line:
                raise ParseError(f"line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip().lower()
            value = value.strip()
            target = top if current is None else current
            if key in target:
                raise ParseError(f"line {lineno}: duplicate key {key!r}")
            target[key] = (value, lineno)

    def pick(mapping, key, conv, default=None, required=False):
        if key not in mapping:
            if required:
                raise ParseError(f"missing required key {key!r}")
            return default
        value, lineno = mapping[key]
        try:
            return conv(value)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"line {lineno}: bad {key!r}: {exc}") from None

    if not segments:
        raise ParseError("spec has no [segment] sections")
    seg_specs = []
    for seg in segments:
        try:
            seg_specs.append(
                SegmentSpec(
                    length=pick(seg, "length", int, required=True),
                    p=pick(seg, "p", float),
                    intercept=pick(seg, "intercept", float),
                    slope=pick(seg, "slope", float),
                )
            )
        except ValidationError as exc:
            raise ParseError(f"bad segment: {exc}") from None
    try:
        return PiecewiseSpec(
            segments=tuple(seg_specs),
            n_per_day=pick(top, "n_per_day", int, default=200),
            seed=pick(top, "seed", int, default=0),
            tag=pick(top, "tag", str, default="SYN"),
            start=pick(top, "start", dt.date.fromisoformat, default=dt.date(2000, 1, 1)),
        )
    except ValidationError as exc:
        raise ParseError(f"bad spec: {exc}") from None


def write_spec_file(spec: PiecewiseSpec, path) -> None:
    lines = [
        f"tag = {spec.tag}",
        f"seed = {spec.seed}",
        f"start = {spec.start.isoformat()}",
    ]
    if isinstance(spec.n_per_day, int):
        lines.append(f"n_per_day = {spec.n_per_day}")
    else:
        raise ValidationError("only scalar n_per_day specs can be written")
    for seg in spec.segments:
        lines.append("")
        lines.append("[segment]")
        lines.append(f"length = {seg.length}")
        if seg.p is not None:
            lines.append(f"p = {seg.p!r}")
        else:
            lines.append(f"intercept = {seg.intercept!r}")
            lines.append(f"slope = {seg.slope!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
