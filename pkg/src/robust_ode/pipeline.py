"""End-to-end composition: smooth -> Gamma -> d_n -> weights -> aggregate -> band -> fit."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics_fit import FittedDynamics, fit_dynamics, fit_erm
from .errors import InputError
from .gamma import DEFAULT_TRIM, GammaMatrix, estimate_gamma, split_gamma
from .ode_models import SourceObservations, TimeGrid
from .robust_trajectory import ConfidenceBand, RobustTrajectory, aggregate, confidence_band
from .smoothing import SmoothedSource, SmoothingConfig, smooth_sources
from .weights import (DEFAULT_CD, Method, SimplexWeights, ToleranceConfig, op_norm, plug_in_weights,
                      ridge_weights, select_tolerance, stabilized_weights)

METHODS = ("proposed", "erm", "plugin", "ridge")
RIDGE_SCALE = 0.1  # default ridge penalty as a fraction of |Gamma|_op / K


@dataclass(frozen=True)
class PipelineConfig:
    smoothing: SmoothingConfig = SmoothingConfig()
    trim: float = DEFAULT_TRIM
    C_d: float = DEFAULT_CD
    d_n: float | None = None  # fixed tolerance; None selects it by sample splitting
    lam: float | None = None  # ridge penalty for the ridge baseline
    alpha: float = 0.05
    kernel_bandwidth: float | None = None
    ridge_per_sample: float = 1e-4
    kernel_select: str = "cv"  # "cv" or "median" (median heuristic with ridge_per_sample)
    include_time: bool = False

    def to_dict(self) -> dict:
        return {"smoothing": self.smoothing.to_dict(), "trim": self.trim, "C_d": self.C_d, "d_n": self.d_n,
                "lambda": self.lam, "alpha": self.alpha, "kernel_bandwidth": self.kernel_bandwidth,
                "ridge_per_sample": self.ridge_per_sample, "kernel_select": self.kernel_select,
                "include_time": self.include_time}


@dataclass
class PipelineResult:
    smoothed: list[SmoothedSource]
    gamma: GammaMatrix
    tolerance: ToleranceConfig | None
    weights: SimplexWeights
    trajectory: RobustTrajectory
    band: ConfidenceBand
    model: FittedDynamics | None = None


def tolerance_for(obs: SourceObservations, smoothed, gamma: GammaMatrix, config: PipelineConfig,
                  eval_grid: TimeGrid | None = None) -> ToleranceConfig:
    """Split-sample ``d_n`` with the smoothing bandwidth of the full fit."""
    resolved = replace(config.smoothing, h=smoothed[0].config.h)
    g1, g2 = split_gamma(obs, resolved, eval_grid or smoothed[0].eval_grid, config.trim)
    n = int(np.median([g.n for g in obs.grids]))
    return select_tolerance(g1.entries, g2.entries, gamma.entries, n, config.C_d)


def weights_for(method: str, gamma: GammaMatrix, d_n: float | None, lam: float | None) -> SimplexWeights:
    if method == "proposed" or method == Method.STABLE:
        return stabilized_weights(gamma.floored, 0.0 if d_n is None else d_n)
    if method == "plugin":
        return plug_in_weights(gamma.entries)
    if method == "ridge":
        if lam is None:
            lam = RIDGE_SCALE * op_norm(gamma.entries) / gamma.K
        return ridge_weights(gamma.entries, lam)
    raise InputError(f"no weights for method {method!r}")


def fit_trajectory(traj: RobustTrajectory, config: PipelineConfig, mask=None) -> FittedDynamics:
    """Gradient matching on the robust trajectory."""
    keep = slice(None) if mask is None else np.asarray(mask, dtype=bool)
    return fit_dynamics(traj.x_robust[:, keep].T, traj.d_robust[:, keep].T, traj.eval_grid.times[keep],
                        config.kernel_bandwidth, config.ridge_per_sample, config.kernel_select, config.include_time)


def run_pipeline(obs: SourceObservations, config: PipelineConfig = PipelineConfig(), method: str = "proposed",
                 *, for_inference: bool = False, fit: bool = True, eval_grid: TimeGrid | None = None
                 ) -> PipelineResult:
    """All stages for one weighting method on one set of sources."""
    smoothed = smooth_sources(obs, eval_grid, config.smoothing, for_inference=for_inference)
    gamma = estimate_gamma(smoothed, config.trim)
    tol = None
    d_n = config.d_n
    if method == "proposed" and d_n is None:
        tol = tolerance_for(obs, smoothed, gamma, config, eval_grid)
        d_n = tol.d_n
    weights = weights_for(method, gamma, d_n, config.lam)
    traj = aggregate(smoothed, weights)
    band = confidence_band(traj, config.alpha)
    model = fit_trajectory(traj, config) if fit else None
    return PipelineResult(smoothed, gamma, tol, weights, traj, band, model)


def fit_method(obs: SourceObservations, method: str, config: PipelineConfig = PipelineConfig(),
               smoothed=None) -> tuple[FittedDynamics, SimplexWeights | None]:
    """Fitted link function for one of ``METHODS``."""
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method == "erm":
        if smoothed is None:
            smoothed = smooth_sources(obs, None, config.smoothing)
        model = fit_erm(smoothed, config.kernel_bandwidth, config.ridge_per_sample,
                        include_time=config.include_time, select=config.kernel_select)
        return model, None
    if smoothed is None:
        res = run_pipeline(obs, config, method)
        return res.model, res.weights
    gamma = estimate_gamma(smoothed, config.trim)
    d_n = config.d_n
    if method == "proposed" and d_n is None:
        d_n = tolerance_for(obs, smoothed, gamma, config).d_n
    weights = weights_for(method, gamma, d_n, config.lam)
    return fit_trajectory(aggregate(smoothed, weights), config), weights
