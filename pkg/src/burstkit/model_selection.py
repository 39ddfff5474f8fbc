"""k-fold cross-validation over a descending lambda grid.

Folds are systematic (every kth point shares a fold) so each fold covers
the whole time range.  Held-out points are predicted by averaging the
fitted theta at the nearest retained neighbor on each side; the held-out
loss is the binomial negative log-likelihood at that prediction.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BurstkitError, ValidationError
from .likelihood import nll_counts
from .prox import PenaltySpec, penalty_for_series, penalty_value
from .segmentation import (DEFAULT_JUMP_TOL, SegmentedFit, SolverConfig,
                           extract_jumps, fit_segmentation)
from .streams import StreamSeries


@dataclass(frozen=True)
class CvResult:
    lambda_grid: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    lambda_cv: float
    lambda_1se: float


def assign_folds(N: int, k: int) -> np.ndarray:
    """fold(t) = t mod k; requires 2 <= k <= N."""
    if not 2 <= k <= N:
        raise ValidationError(f"need 2 <= k <= N, got k={k}, N={N}")
    return np.arange(N) % k


def _neighbor_prediction(theta_fit: np.ndarray, train_pos: np.ndarray,
                         heldout_pos: np.ndarray) -> np.ndarray:
    """Average fitted theta of nearest retained neighbors on each side."""
    right = np.searchsorted(train_pos, heldout_pos)
    left = right - 1
    pred = np.empty(heldout_pos.size)
    for j in range(heldout_pos.size):
        vals = []
        if left[j] >= 0:
            vals.append(theta_fit[left[j]])
        if right[j] < train_pos.size:
            vals.append(theta_fit[right[j]])
        pred[j] = np.mean(vals)
    return pred


def cv_heldout_loss(series: StreamSeries, fit_on_train: SegmentedFit,
                    heldout_indices) -> float:
    """Mean held-out negative log-likelihood under neighbor-averaged theta."""
    heldout_pos = np.asarray(heldout_indices, dtype=np.intp)
    if heldout_pos.size == 0:
        raise ValidationError("no held-out points")
    mask = np.ones(len(series), dtype=bool)
    mask[heldout_pos] = False
    train_pos = np.flatnonzero(mask)
    if train_pos.size == 0:
        raise ValidationError("fold empties the series")
    pred = _neighbor_prediction(fit_on_train.theta_hat, train_pos, heldout_pos)
    losses = [
        nll_counts(series.y[t], series.n[t], pred[j])
        for j, t in enumerate(heldout_pos)
    ]
    return float(np.mean(losses))


def _penalty_for_train(train: StreamSeries, penalty: PenaltySpec | str) -> PenaltySpec:
    kind = penalty if isinstance(penalty, str) else penalty.kind
    return penalty_for_series(train, kind)


def _fold_loss(series, penalty, lam, fold_pos, cfg):
    mask = np.ones(len(series), dtype=bool)
    mask[fold_pos] = False
    train = series.take(np.flatnonzero(mask))
    fit = fit_segmentation(train, _penalty_for_train(train, penalty), lam, cfg)
    return cv_heldout_loss(series, fit, fold_pos)


def cross_validate(series: StreamSeries, penalty: PenaltySpec | str, lambda_grid,
                   k: int = 10, cfg: SolverConfig | None = None,
                   workers: int | None = None) -> CvResult:
    """Fold-wise held-out loss per lambda plus the CV and one-SE choices.

    `lambda_grid` must be positive and sorted descending.  The penalty is
    rebuilt per training fold so gap widening from removed points carries
    into the weighted penalties.  Fold-by-lambda fits are independent and
    run on a small thread pool; results do not depend on scheduling.
    """
    grid = np.asarray(lambda_grid, dtype=np.float64)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValidationError("lambda grid must be nonempty and positive")
    if np.any(np.diff(grid) > 0):
        raise ValidationError("lambda grid must be sorted descending")
    cfg = cfg or SolverConfig()
    folds = assign_folds(len(series), k)
    fold_positions = [np.flatnonzero(folds == f) for f in range(k)]
    jobs = [(i, f) for i in range(grid.size) for f in range(k)]
    losses = np.empty((grid.size, k))

    def run(job):
        i, f = job
        try:
            return i, f, _fold_loss(series, penalty, grid[i], fold_positions[f], cfg)
        except BurstkitError as exc:
            note = f"fold {f}, lambda {grid[i]:g}: {exc}"
            try:
                wrapped = type(exc)(note)
            except TypeError:  # exception types with extra constructor fields
                wrapped = BurstkitError(note)
            raise wrapped from exc

    if workers is None:
        workers = min(os.cpu_count() or 1, 8)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, f, loss in pool.map(run, jobs):
                losses[i, f] = loss
    else:
        for job in jobs:
            i, f, loss = run(job)
            losses[i, f] = loss

    cv_mean = losses.mean(axis=1)
    cv_se = losses.std(axis=1, ddof=1) / np.sqrt(k)
    best = int(np.argmin(cv_mean))
    lambda_cv = float(grid[best])
    cutoff = cv_mean[best] + cv_se[best]
    one_se = int(np.flatnonzero(cv_mean <= cutoff)[0])
    lambda_1se = float(grid[one_se])
    return CvResult(
        lambda_grid=grid,
        cv_mean=cv_mean,
        cv_se=cv_se,
        lambda_cv=lambda_cv,
        lambda_1se=lambda_1se,
    )


def default_lambda_grid(series: StreamSeries, penalty: PenaltySpec | str,
                        cfg: SolverConfig | None = None, num: int = 50,
                        span: float = 1e4, jump_tol: float = DEFAULT_JUMP_TOL) -> np.ndarray:
    """Descending log-spaced grid topped at the smallest maximally-smooth lambda.

    Maximally smooth means a constant fit for the fused penalties and a
    globally affine fit for the trend penalty.  The top is bracketed by a
    doubling search from 1; the bottom is top/span.
    """
    if num < 1 or span <= 1:
        raise ValidationError("need num >= 1 and span > 1")
    cfg = cfg or SolverConfig()
    kind = penalty if isinstance(penalty, str) else penalty.kind

    def is_constant(lam):
        pen = penalty_for_series(series, kind)
        fit = fit_segmentation(series, pen, lam, cfg)
        if kind == "trend_l1":
            return penalty_value(fit.theta_hat, pen) <= 1e-6
        return len(extract_jumps(fit, jump_tol)) == 0

    lam = 1.0
    if is_constant(lam):
        for _ in range(10):
            if not is_constant(lam / 2):
                break
            lam /= 2
    else:
        doublings = 0
        while not is_constant(lam):
            lam *= 2
            doublings += 1
            if doublings > 60:
                raise ValidationError("no constant fit found by doubling search")
    return np.geomspace(lam, lam / span, num)
