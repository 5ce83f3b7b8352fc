"""Weighted aggregation of smoothed sources and pointwise confidence bands."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, InputError
from .ode_models import TimeGrid
from .weights import SimplexWeights

# Acklam's rational approximation of the standard normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00, 3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(prob: float) -> float:
    """Standard normal quantile; rational start refined by one Halley step."""
    if not 0.0 < prob < 1.0:
        raise InputError("probability must lie in (0, 1)")
    if prob < _P_LOW:
        q = math.sqrt(-2.0 * math.log(prob))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif prob <= 1.0 - _P_LOW:
        q = prob - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-prob))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - prob
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@dataclass
class RobustTrajectory:
    x_robust: np.ndarray  # (p, m)
    d_robust: np.ndarray  # (p, m)
    sigma_robust: np.ndarray | None
    eval_grid: TimeGrid
    weights: SimplexWeights
    h: float | np.ndarray | None = None  # bandwidth on the unit-rescaled time axis (per point if widened)
    n: int | None = None
    boundary: np.ndarray | None = None
    alpha: float | None = None


@dataclass
class ConfidenceBand:
    lower: np.ndarray
    upper: np.ndarray
    half_width: np.ndarray
    z: float
    alpha: float


def _check_shared(smoothed) -> TimeGrid:
    grid = smoothed[0].eval_grid
    for s in smoothed[1:]:
        if not s.eval_grid.same_as(grid):
            raise GridMismatch("smoothed sources use different evaluation grids")
    return grid


def robust_sigma(sigmas, omega) -> np.ndarray:
    """``sqrt(sum_k w_k^2 sigma_k^2)``; ``sigmas`` stacks per-source arrays."""
    sigmas = np.asarray(sigmas, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if np.any(sigmas < 0):
        raise InputError("standard errors must be non-negative")
    return np.sqrt(np.tensordot(omega**2, sigmas**2, axes=1))


def _local_bandwidth(smoothed, grid: TimeGrid):
    # widened windows change the effective sample size behind each estimate
    hs = {round(s.h_unit, 14) for s in smoothed}
    if any(s.bandwidth is not None for s in smoothed):
        local = np.max([np.broadcast_to(s.config.h if s.bandwidth is None else s.bandwidth, (grid.n,))
                        for s in smoothed], axis=0) / grid.horizon
        if np.ptp(local) > 0 or len(hs) > 1:
            return local
        return float(local[0])
    return smoothed[0].h_unit if len(hs) == 1 else None


def aggregate(smoothed, weights: SimplexWeights) -> RobustTrajectory:
    """Weighted sums of the smoothed values, derivatives and standard errors."""
    if not smoothed:
        raise InputError("nothing to aggregate")
    grid = _check_shared(smoothed)
    w = np.asarray(weights.omega, dtype=float)
    if w.size != len(smoothed):
        raise InputError("one weight per source required")
    x = np.tensordot(w, np.stack([s.x_hat for s in smoothed]), axes=1)
    d = np.tensordot(w, np.stack([s.d_hat for s in smoothed]), axes=1)
    sig = robust_sigma(np.stack([s.sigma_hat for s in smoothed]), w)
    boundary = np.any(np.stack([s.boundary for s in smoothed]), axis=0)
    ns = {s.n for s in smoothed}
    h = _local_bandwidth(smoothed, grid)
    n = smoothed[0].n if len(ns) == 1 else None
    return RobustTrajectory(x, d, sig, grid, weights, h, n, boundary)


def confidence_band(traj: RobustTrajectory, alpha: float = 0.05, n: int | None = None,
                    h: float | None = None) -> ConfidenceBand:
    """Pointwise intervals ``x +- z_{1-alpha/2} sigma / sqrt(n h)``."""
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    n = traj.n if n is None else n
    h = traj.h if h is None else h
    if n is None or h is None:
        raise InputError("confidence band needs the sample size and bandwidth of the smoothing stage")
    z = normal_quantile(1.0 - alpha / 2.0)
    half = z * traj.sigma_robust / np.sqrt(n * np.asarray(h, dtype=float))
    traj.alpha = alpha
    return ConfidenceBand(traj.x_robust - half, traj.x_robust + half, half, z, alpha)
