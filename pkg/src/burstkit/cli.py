"""Command-line pipeline: simulate, screen, fit, jumps, bursts, rerun.

Every command writes its outputs plus a `manifest.txt` of resolved
parameters, input digests, and output digests.  `rerun --manifest` replays
a recorded run bit-identically.  Exit codes: 0 success, 1 analysis-level
degeneracy (e.g. empty results), 2 usage or I/O errors.
"""
from __future__ import annotations

import dataclasses
import hashlib
import secrets
from pathlib import Path

import click

from . import __version__
from .bursts import RankPolicy, baseline, rank_bursts
from .errors import BurstkitError, EmptySeriesError, ParseError, ValidationError
from .jumps import jump_pvalues, prune_and_refit, split_sample
from .model_selection import cross_validate, default_lambda_grid
from .prox import penalty_for_series
from .scan import batch_screen
from .segmentation import (SegmentedFit, SolverConfig, extract_jumps,
                           fit_segmentation)
from .streams import (PreprocessConfig, StreamSeries, filter_low_traffic,
                      read_streams_csv, write_streams_csv)
from .synth import gen_stream, parse_spec_file

PENALTY_FLAGS = {"l0": "fused_l0", "l1": "fused_l1", "tf": "trend_l1"}


def _fmt(x) -> str:
    return format(float(x), ".12g")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(str(c) for c in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# manifest encoding

_LIST_OF_FLOAT = "list_of_float"
_SCHEMAS = {
    "simulate": {"spec": str, "seed": int},
    "screen": {
        "input": str, "delta": int, "perms": int, "seed": int,
        "thresholds": _LIST_OF_FLOAT, "min_daily_total": int,
    },
    "fit": {
        "input": str, "tag": str, "penalty": str, "lam": float, "cv": bool,
        "folds": int, "grid": int, "min_daily_total": int,
        "max_iter": int, "eps_stationary": float,
    },
    "jumps": {
        "input": str, "tag": str, "penalty": str, "lam": float, "delta": int,
        "perms": int, "seed": int, "alpha": float, "folds": int, "grid": int,
        "min_daily_total": int,
    },
    "bursts": {
        "input": str, "top": int, "baseline": str, "folds": int, "grid": int,
        "min_daily_total": int,
    },
}


def _encode_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)  # shortest exact round-trip, unlike display formatting
    if isinstance(value, (list, tuple)):
        return ",".join(repr(float(v)) for v in value)
    return str(value)


def _decode_value(kind, text: str):
    if kind is bool:
        return text == "true"
    if kind == _LIST_OF_FLOAT:
        return tuple(float(v) for v in text.split(",")) if text else ()
    return kind(text)


def _write_manifest(out_dir: Path, command: str, params: dict,
                    inputs: dict[str, Path], results: dict) -> None:
    lines = [f"command = {command}", f"version = {__version__}"]
    for name, path in sorted(inputs.items()):
        lines.append(f"input.{name} = {path}")
        lines.append(f"input.{name}.sha256 = {_sha256(path)}")
    for key in sorted(params):
        if params[key] is not None:
            lines.append(f"param.{key} = {_encode_value(params[key])}")
    for key in sorted(results):
        lines.append(f"result.{key} = {_encode_value(results[key])}")
    for path in sorted(out_dir.iterdir()):
        if path.name != "manifest.txt" and path.is_file():
            lines.append(f"output.{path.name} = {_sha256(path)}")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def _read_manifest(path: Path):
    command = None
    params_raw = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"manifest line {lineno}: expected 'key = value'")
        key = key.strip()
        value = value.strip()
        if key == "command":
            command = value
        elif key.startswith("param."):
            params_raw[key[len("param."):]] = value
    if command not in _SCHEMAS:
        raise ParseError(f"manifest does not name a known command: {command!r}")
    schema = _SCHEMAS[command]
    params = {}
    for key, kind in schema.items():
        params[key] = _decode_value(kind, params_raw[key]) if key in params_raw else None
    return command, params


# ---------------------------------------------------------------------------
# shared pieces

def _load_tagged(path: str, min_daily_total, tag=None):
    streams = read_streams_csv(path)
    if not streams:
        raise EmptySeriesError("input file holds no rows")
    if min_daily_total is not None:
        cfg = PreprocessConfig(min_daily_total=min_daily_total)
        streams = {t: filter_low_traffic(s, cfg) for t, s in streams.items()}
    if tag is None:
        return streams
    if tag not in streams:
        raise click.UsageError(f"tag {tag!r} not present in {path}")
    return streams[tag]


def _solver_cfg(params) -> SolverConfig:
    kwargs = {}
    if params.get("max_iter") is not None:
        kwargs["max_iter"] = params["max_iter"]
    if params.get("eps_stationary") is not None:
        kwargs["eps_stationary"] = params["eps_stationary"]
    return SolverConfig(**kwargs)


def _fit_with_selection(series: StreamSeries, kind: str, params, cfg):
    """Fit at --lambda, or run CV and fit at lambda_cv; returns fits + cv info."""
    if params.get("lam") is not None:
        penalty = penalty_for_series(series, kind)
        return fit_segmentation(series, penalty, params["lam"], cfg), None, None
    grid = default_lambda_grid(series, kind, cfg, num=params.get("grid") or 50)
    cv = cross_validate(series, kind, grid, k=params.get("folds") or 10, cfg=cfg)
    penalty = penalty_for_series(series, kind)
    fit_cv = fit_segmentation(series, penalty, cv.lambda_cv, cfg)
    fit_1se = fit_segmentation(series, penalty, cv.lambda_1se, cfg)
    return fit_cv, fit_1se, cv


def _signal_rows(series: StreamSeries, fit: SegmentedFit):
    days = series.dates.astype(object)
    for i in range(len(series)):
        yield (
            days[i].isoformat(), int(series.y[i]), int(series.n[i]),
            _fmt(series.y[i] / series.n[i]), _fmt(fit.p_hat[i]), _fmt(fit.theta_hat[i]),
        )


def _jump_rows(series: StreamSeries, fit: SegmentedFit):
    days = series.dates.astype(object)
    for j in extract_jumps(fit):
        yield (
            j.index, days[j.index].isoformat(), days[j.index + 1].isoformat(),
            _fmt(j.left_level), _fmt(j.right_level), _fmt(j.magnitude),
        )


_SIGNAL_HEADER = ("date", "y", "n", "p_raw", "p_hat", "theta_hat")
_JUMP_HEADER = ("gap_index", "date_left", "date_right", "left_p", "right_p", "magnitude")


# ---------------------------------------------------------------------------
# runners (shared by the click commands and `rerun`)

def _run_simulate(params, out_dir: Path) -> int:
    spec = parse_spec_file(params["spec"])
    if params.get("seed") is not None:
        spec = dataclasses.replace(spec, seed=params["seed"])
    series = gen_stream(spec)
    write_streams_csv({series.tag: series}, out_dir / "stream.csv")
    params = dict(params, seed=spec.seed)
    _write_manifest(out_dir, "simulate", params, {"spec": Path(params["spec"])},
                    {"tag": spec.tag, "rows": len(series)})
    return 0


def _run_screen(params, out_dir: Path) -> int:
    streams = _load_tagged(params["input"], params.get("min_daily_total"))
    result = batch_screen(
        streams, delta=params["delta"], B=params["perms"], seed=params["seed"],
        thresholds=params.get("thresholds") or (),
    )
    _write_csv(out_dir / "pvalues.csv", ("tag", "p_value"),
               ((tag, _fmt(p)) for tag, p in result.pvalues))
    _write_csv(out_dir / "survivors.csv", ("threshold", "count"),
               ((_fmt(t), c) for t, c in result.survivor_counts))
    (out_dir / "errors.log").write_text(
        "".join(f"tag={tag}\terror={msg}\n" for tag, msg in result.errors)
    )
    _write_manifest(out_dir, "screen", params, {"input": Path(params["input"])},
                    {"n_streams": len(result.pvalues), "n_errors": len(result.errors)})
    return 0 if result.pvalues else 1


def _run_fit(params, out_dir: Path) -> int:
    series = _load_tagged(params["input"], params.get("min_daily_total"), params["tag"])
    kind = PENALTY_FLAGS[params["penalty"]]
    cfg = _solver_cfg(params)
    fit, fit_1se, cv = _fit_with_selection(series, kind, params, cfg)
    _write_csv(out_dir / "signal.csv", _SIGNAL_HEADER, _signal_rows(series, fit))
    _write_csv(out_dir / "jumps.csv", _JUMP_HEADER, _jump_rows(series, fit))
    results = {"lambda": fit.lam, "converged": fit.converged, "iterations": fit.iterations}
    if cv is not None:
        marks = {cv.lambda_cv: "cv", cv.lambda_1se: "1se"}
        if cv.lambda_cv == cv.lambda_1se:
            marks[cv.lambda_cv] = "cv+1se"
        _write_csv(
            out_dir / "cv.csv", ("lambda", "cv_mean", "cv_se", "selected"),
            ((_fmt(l), _fmt(m), _fmt(s), marks.get(l, ""))
             for l, m, s in zip(cv.lambda_grid, cv.cv_mean, cv.cv_se)),
        )
        _write_csv(out_dir / "signal_1se.csv", _SIGNAL_HEADER, _signal_rows(series, fit_1se))
        _write_csv(out_dir / "jumps_1se.csv", _JUMP_HEADER, _jump_rows(series, fit_1se))
        results.update(lambda_cv=cv.lambda_cv, lambda_1se=cv.lambda_1se)
    _write_manifest(out_dir, "fit", params, {"input": Path(params["input"])}, results)
    return 0


def _run_jumps(params, out_dir: Path) -> int:
    series = _load_tagged(params["input"], params.get("min_daily_total"), params["tag"])
    kind = PENALTY_FLAGS[params["penalty"]]
    if kind == "trend_l1":
        raise click.UsageError("jump scoring needs a fused penalty (l0 or l1)")
    cfg = SolverConfig()
    split = split_sample(series, params["seed"])
    train_params = dict(params)
    fit, _, cv = _fit_with_selection(split.train, kind, train_params, cfg)
    records = jump_pvalues(series, fit, params["delta"], params["perms"], params["seed"])
    _write_csv(
        out_dir / "records.csv",
        ("gap_index", "date_left", "date_right", "left_p", "right_p",
         "magnitude", "lrt_stat", "p_value", "null_size"),
        (
            (
                r.location.index, r.date_left.isoformat(), r.date_right.isoformat(),
                _fmt(r.location.left_level), _fmt(r.location.right_level),
                _fmt(r.location.magnitude), _fmt(r.lrt_stat), _fmt(r.p_value),
                r.null_sample_size,
            )
            for r in records
        ),
    )
    results = {"lambda": fit.lam, "n_records": len(records)}
    if cv is not None:
        results["lambda_cv"] = cv.lambda_cv
    if params.get("alpha") is not None:
        refit = prune_and_refit(series, fit, params["alpha"], params["delta"],
                                params["perms"], params["seed"], records=records)
        _write_csv(out_dir / "pruned_signal.csv", _SIGNAL_HEADER, _signal_rows(series, refit))
        results["kept_jumps"] = refit.diagnostics["kept"]
    _write_manifest(out_dir, "jumps", params, {"input": Path(params["input"])}, results)
    return 0 if records else 1


def _run_bursts(params, out_dir: Path) -> int:
    streams = _load_tagged(params["input"], params.get("min_daily_total"))
    cfg = SolverConfig()
    policy = RankPolicy(baseline=params.get("baseline") or "mean", top=params.get("top"))
    entries = {}
    errors = []
    for tag in sorted(streams):
        series = streams[tag]
        try:
            p0 = baseline(series, policy.baseline)
            grid = default_lambda_grid(series, "fused_l0", cfg, num=params.get("grid") or 50)
            cv = cross_validate(series, "fused_l0", grid, k=params.get("folds") or 10, cfg=cfg)
            fit = fit_segmentation(series, penalty_for_series(series, "fused_l0"),
                                   cv.lambda_cv, cfg)
            entries[tag] = (series, fit, p0)
        except BurstkitError as exc:
            errors.append((tag, str(exc)))
    records = rank_bursts(entries, policy)
    _write_csv(
        out_dir / "bursts.csv",
        ("tag", "start", "end", "peak", "strength"),
        (
            (r.tag, r.start.isoformat(), r.end.isoformat(), r.peak.isoformat(),
             _fmt(r.strength))
            for r in records
        ),
    )
    (out_dir / "errors.log").write_text(
        "".join(f"tag={tag}\terror={msg}\n" for tag, msg in errors)
    )
    _write_manifest(out_dir, "bursts", params, {"input": Path(params["input"])},
                    {"n_bursts": len(records), "n_errors": len(errors)})
    return 0 if records else 1


_RUNNERS = {
    "simulate": _run_simulate,
    "screen": _run_screen,
    "fit": _run_fit,
    "jumps": _run_jumps,
    "bursts": _run_bursts,
}


def _dispatch(command: str, params: dict, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        status = _RUNNERS[command](params, out)
    except (ParseError, ValidationError) as exc:
        raise click.UsageError(str(exc)) from exc
    except BurstkitError as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(1) from exc
    if status != 0:
        raise SystemExit(status)


def _require_seed(seed) -> int:
    if seed is None:
        seed = secrets.randbits(32)
        click.echo(f"note: generated seed {seed} (recorded in manifest)", err=True)
    return seed


# ---------------------------------------------------------------------------
# click surface

@click.group()
@click.version_option(version=__version__)
def main():
    """Detect, localize, score and rank bursts in binomial count streams."""


_input_arg = click.argument("input_path", metavar="INPUT",
                            type=click.Path(exists=True, dir_okay=False))
_out_opt = click.option("--out", "out_dir", required=True,
                        type=click.Path(file_okay=False), help="Output directory.")
_mindaily_opt = click.option("--min-daily-total", type=int, default=None,
                             help="Drop days whose total is below this.")


@main.command()
@click.option("--spec", "spec_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Stream spec file.")
@_out_opt
@click.option("--seed", type=int, default=None, help="Override the spec's seed.")
def simulate(spec_path, out_dir, seed):
    """Generate a synthetic stream CSV from a spec file."""
    _dispatch("simulate", {"spec": spec_path, "seed": seed}, out_dir)


@main.command()
@_input_arg
@_out_opt
@click.option("--delta", type=int, default=5, show_default=True)
@click.option("--perms", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--threshold", "thresholds", type=float, multiple=True,
              help="Significance threshold; repeatable.")
@_mindaily_opt
def screen(input_path, out_dir, delta, perms, seed, thresholds, min_daily_total):
    """Scan every stream for heightened activity; write p-values."""
    params = {
        "input": input_path, "delta": delta, "perms": perms,
        "seed": _require_seed(seed), "thresholds": list(thresholds),
        "min_daily_total": min_daily_total,
    }
    _dispatch("screen", params, out_dir)


@main.command()
@_input_arg
@_out_opt
@click.option("--tag", required=True)
@click.option("--penalty", type=click.Choice(sorted(PENALTY_FLAGS)), default="l0",
              show_default=True)
@click.option("--lambda", "lam", type=float, default=None, help="Fixed penalty level.")
@click.option("--cv", is_flag=True, help="Select lambda by cross-validation.")
@click.option("--folds", type=int, default=10, show_default=True)
@click.option("--grid", type=int, default=50, show_default=True,
              help="Number of lambda grid points for --cv.")
@click.option("--max-iter", type=int, default=None)
@click.option("--eps-stationary", type=float, default=None)
@_mindaily_opt
def fit(input_path, out_dir, tag, penalty, lam, cv, folds, grid, max_iter,
        eps_stationary, min_daily_total):
    """Fit one stream's signal; emit per-day estimates and the jump list."""
    if (lam is None) == (not cv):
        raise click.UsageError("provide exactly one of --lambda or --cv")
    params = {
        "input": input_path, "tag": tag, "penalty": penalty, "lam": lam,
        "cv": cv, "folds": folds, "grid": grid, "min_daily_total": min_daily_total,
        "max_iter": max_iter, "eps_stationary": eps_stationary,
    }
    _dispatch("fit", params, out_dir)


@main.command()
@_input_arg
@_out_opt
@click.option("--tag", required=True)
@click.option("--penalty", type=click.Choice(["l0", "l1"]), default="l0",
              show_default=True)
@click.option("--lambda", "lam", type=float, default=None,
              help="Fixed lambda for the train-half fit (default: CV).")
@click.option("--delta", type=int, default=5, show_default=True)
@click.option("--perms", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--alpha", type=float, default=None,
              help="Prune jumps with p > alpha and refit.")
@click.option("--folds", type=int, default=10, show_default=True)
@click.option("--grid", type=int, default=20, show_default=True)
@_mindaily_opt
def jumps(input_path, out_dir, tag, penalty, lam, delta, perms, seed, alpha,
          folds, grid, min_daily_total):
    """Split-sample jump scoring: locations from one half, p-values from the other."""
    params = {
        "input": input_path, "tag": tag, "penalty": penalty, "lam": lam,
        "delta": delta, "perms": perms, "seed": _require_seed(seed),
        "alpha": alpha, "folds": folds, "grid": grid,
        "min_daily_total": min_daily_total,
    }
    _dispatch("jumps", params, out_dir)


@main.command()
@_input_arg
@_out_opt
@click.option("--top", type=int, default=None, help="Keep only the strongest rows.")
@click.option("--baseline", type=click.Choice(["mean", "median"]), default="mean",
              show_default=True)
@click.option("--folds", type=int, default=10, show_default=True)
@click.option("--grid", type=int, default=20, show_default=True)
@_mindaily_opt
def bursts(input_path, out_dir, top, baseline, folds, grid, min_daily_total):
    """Rank above-baseline bursts across all streams."""
    params = {
        "input": input_path, "top": top, "baseline": baseline, "folds": folds,
        "grid": grid, "min_daily_total": min_daily_total,
    }
    _dispatch("bursts", params, out_dir)


@main.command()
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@_out_opt
def rerun(manifest_path, out_dir):
    """Replay a recorded run; outputs are byte-identical to the original."""
    command, params = _read_manifest(Path(manifest_path))
    _dispatch(command, params, out_dir)


if __name__ == "__main__":
    main()
