"""Binomial negative log-likelihood on the logit scale, with curvature bounds.

All solvers share these maps.  The natural parameter theta is kept inside
[-THETA_CLAMP, THETA_CLAMP] so degenerate proportions (y = 0 or y = n) stay
finite; expit(15) differs from 1 by about 3.1e-7.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as _expit

from .errors import ValidationError
from .streams import StreamSeries

THETA_CLAMP = 15.0


@dataclass(frozen=True)
class CurvatureBounds:
    """Hessian bounds: lipschitz_L >= largest eigenvalue, mu_min = smallest diagonal."""

    lipschitz_L: float
    mu_min: float


def expit(theta):
    return _expit(theta)


def logit_clamped(p):
    """Inverse link clipped to +-THETA_CLAMP; p must lie in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValidationError("proportions must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        theta = np.log(p) - np.log1p(-p)
    out = np.clip(theta, -THETA_CLAMP, THETA_CLAMP)
    if out.ndim == 0:
        return float(out)
    return out


def _check_theta(series: StreamSeries, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (len(series),):
        raise ValidationError(
            f"theta has length {theta.size}, series has {len(series)} points"
        )
    return theta


def nll_counts(y, n, theta):
    """sum(-y*theta + n*log(1+exp(theta))), stable for large |theta|."""
    y = np.asarray(y, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    softplus = np.maximum(theta, 0.0) + np.log1p(np.exp(-np.abs(theta)))
    return float(np.sum(n * softplus - y * theta))


def nll(series: StreamSeries, theta) -> float:
    theta = _check_theta(series, theta)
    return nll_counts(series.y, series.n, theta)


def nll_grad(series: StreamSeries, theta) -> np.ndarray:
    """Elementwise -y_i + n_i * expit(theta_i)."""
    theta = _check_theta(series, theta)
    return series.n * _expit(theta) - series.y


def hessian_diag(series: StreamSeries, theta) -> np.ndarray:
    theta = _check_theta(series, theta)
    e = _expit(theta)
    return series.n * e * (1.0 - e)


def lipschitz_bound(series: StreamSeries) -> float:
    """Upper bound max n_i / 4 on the largest Hessian eigenvalue."""
    return float(series.n.max()) / 4.0


def mu_min_at(series: StreamSeries, theta) -> float:
    """Smallest Hessian diagonal entry at theta."""
    return float(hessian_diag(series, theta).min())


def curvature_bounds(series: StreamSeries, theta) -> CurvatureBounds:
    return CurvatureBounds(lipschitz_L=lipschitz_bound(series), mu_min=mu_min_at(series, theta))
