"""Local polynomial estimates of trajectories, derivatives and standard errors.

Each local fit at a query time ``t`` regresses the observations on
``1, u, u**2, ...`` with ``u = (t_i - t) / h`` and kernel weights ``G(u)``; the
intercept is the value estimate and the (rescaled) slope the derivative.  A
fit is linear in the data, so everything is expressed through smoother
matrices shared by all dimensions of a source.

Standard errors follow the plug-in formula

    sigma(t)^2 = 1/(n h_se) * sum_i G((t_i - t)/h_se)^2 * r_i^2

evaluated on the time axis rescaled to ``[0, 1]``: with that convention the
interval half-width ``z * sigma / sqrt(n h)`` uses the rescaled bandwidth
``h / T`` as well.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyWindow, InputError, SingularLocalFit
from .ode_models import TimeGrid

WIDEN_FACTOR = 1.5
MAX_WIDEN = 4
MAX_COND = 1e10
ROW_BLOCK = 262144  # target elements per block of smoother rows


class KernelName(str, enum.Enum):
    EPANECHNIKOV = "epanechnikov"
    GAUSSIAN = "gaussian"


def kernel_weights(u: np.ndarray, kernel) -> np.ndarray:
    kernel = KernelName(kernel)
    if kernel is KernelName.EPANECHNIKOV:
        return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)
    u2 = u * u
    # exact zeros past |u| = 37 (density < 1e-297) keep the tails out of denormal arithmetic
    return np.where(u2 < 1369.0, np.exp(-0.5 * np.minimum(u2, 1369.0)), 0.0) / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class SmoothingConfig:
    h: float | None = None  # None selects the bandwidth by leave-one-out CV
    h_se: float | None = None  # None reuses h
    order: int = 2
    kernel: KernelName = KernelName.GAUSSIAN
    undersmooth_factor: float = 0.7
    sigma_floor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kernel", KernelName(self.kernel))
        if self.h is not None and not self.h > 0:
            raise InputError("bandwidth h must be positive")
        if self.h_se is not None and not self.h_se > 0:
            raise InputError("bandwidth h_se must be positive")
        if self.order not in (1, 2, 3):
            raise InputError("local polynomial order must be 1, 2 or 3")
        if not 0 < self.undersmooth_factor <= 1:
            raise InputError("undersmooth_factor must lie in (0, 1]")
        if self.sigma_floor < 0:
            raise InputError("sigma_floor must be non-negative")

    @property
    def se_bandwidth(self) -> float | None:
        return self.h if self.h_se is None else self.h_se

    def to_dict(self) -> dict:
        return {"h": self.h, "h_se": self.h_se, "order": self.order, "kernel": self.kernel.value,
                "undersmooth_factor": self.undersmooth_factor, "sigma_floor": self.sigma_floor}


@dataclass
class SmootherMatrices:
    value: np.ndarray  # (m, n): row q maps observations to xhat(query_q)
    slope: np.ndarray  # (m, n): row q maps observations to dhat(query_q)
    bandwidth: np.ndarray  # (m,) bandwidth actually used after widening
    boundary: np.ndarray  # (m,) query within h of either end of the data


def smoother_matrices(times, query, h: float, order: int = 2, kernel=KernelName.GAUSSIAN) -> SmootherMatrices:
    times = np.asarray(times, dtype=float)
    query = np.atleast_1d(np.asarray(query, dtype=float))
    n = times.size
    if n < order + 2:
        raise InputError(f"need at least order+2={order + 2} observations, got {n}")
    if not h > 0:
        raise InputError("bandwidth must be positive")
    # rows are independent; blocks keep the (rows, n) temporaries cache-sized
    step = max(1, ROW_BLOCK // n)
    value = np.empty((query.size, n))
    slope = np.empty((query.size, n))
    hq = np.full(query.size, float(h))
    for i in range(0, query.size, step):
        blk = slice(i, i + step)
        _smoother_rows(times, query[blk], hq[blk], order, kernel, value[blk], slope[blk])
    lo, hi = times[0], times[-1]
    boundary = (query - lo < h) | (hi - query < h)
    return SmootherMatrices(value, slope, hq, boundary)


def _smoother_rows(times, query, hq, order, kernel, value, slope):
    """Fill ``value`` and ``slope`` rows in place, widening ``hq`` where needed."""
    q = order + 1
    pending = np.arange(query.size)
    for _ in range(MAX_WIDEN + 1):
        u = (times[None, :] - query[pending, None]) / hq[pending, None]
        w = kernel_weights(u, kernel)
        # local design X'WX from the kernel moments sum_i w_i u_i^r, r < 2q - 1
        moments = np.empty((pending.size, 2 * q - 1))
        wu = w.copy()
        for r in range(2 * q - 1):
            moments[:, r] = wu.sum(axis=1)
            if r < 2 * q - 2:
                wu *= u
        M = moments[:, np.add.outer(np.arange(q), np.arange(q))]  # (m, q, q) Hankel
        ok = (np.count_nonzero(w > 0, axis=1) >= q) & (np.linalg.cond(M) < MAX_COND)
        if np.any(ok):
            inv = np.linalg.inv(M[ok])
            idx = pending[ok]
            uo, wo = u[ok], w[ok]
            # rows e_0' M^-1 X'W and e_1' M^-1 X'W, polynomials in u by Horner's rule
            a0 = np.broadcast_to(inv[:, 0, q - 1, None], uo.shape).copy()
            a1 = np.broadcast_to(inv[:, 1, q - 1, None], uo.shape).copy()
            for r in range(q - 2, -1, -1):
                a0 *= uo
                a0 += inv[:, 0, r, None]
                a1 *= uo
                a1 += inv[:, 1, r, None]
            value[idx] = a0 * wo
            slope[idx] = a1 * wo / hq[idx, None]
        pending = pending[~ok]
        if pending.size == 0:
            break
        hq[pending] *= WIDEN_FACTOR
    if pending.size:
        raise SingularLocalFit(f"local design singular at t={query[pending[0]]:g} after widening")


def local_poly_smooth(times, values, query, config: SmoothingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Value and first-derivative estimates at the query times.

    ``values`` may be a vector or a ``(p, n)`` array; ``query`` a TimeGrid or
    array.  ``config.h`` must be set.
    """
    if config.h is None:
        raise InputError("local_poly_smooth needs an explicit bandwidth")
    q = query.times if isinstance(query, TimeGrid) else query
    S = smoother_matrices(times, q, config.h, config.order, config.kernel)
    values = np.asarray(values, dtype=float)
    return values @ S.value.T, values @ S.slope.T


def candidate_bandwidths(times, order: int = 2, kernel=KernelName.GAUSSIAN, count: int = 30) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    span = times[-1] - times[0]
    dt = np.median(np.diff(times))
    lo = dt * (order + 1.0 if KernelName(kernel) is KernelName.EPANECHNIKOV else 1.0)
    return np.geomspace(lo, span / 2.0, count)


def loo_cv_scores(times, values, candidates, order: int = 2, kernel=KernelName.GAUSSIAN) -> np.ndarray:
    """Mean squared leave-one-out residual per candidate bandwidth.

    ``values`` may be ``(n,)`` or ``(p, n)``; scores are then ``(p, c)``.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    scores = np.full((values.shape[0], len(candidates)), np.inf)
    for c, h in enumerate(candidates):
        try:
            L = smoother_matrices(times, times, h, order, kernel).value
        except SingularLocalFit:
            continue
        lev = 1.0 - np.diag(L)
        if np.any(lev <= 1e-8):
            continue
        resid = (values - values @ L.T) / lev
        scores[:, c] = np.mean(resid**2, axis=1)
    return scores


def select_bandwidth(times, values, config: SmoothingConfig = SmoothingConfig(), *, for_inference: bool = False,
                     candidates=None) -> float:
    """Leave-one-out CV bandwidth over a log-spaced grid.

    Multi-dimensional ``values`` get the median of the per-dimension choices.
    ``for_inference`` multiplies the CV choice by ``undersmooth_factor``.
    """
    times = np.asarray(times, dtype=float)
    if times.size < 8:
        raise InputError("bandwidth selection needs at least 8 observations")
    if candidates is None:
        candidates = candidate_bandwidths(times, config.order, config.kernel)
    candidates = np.asarray(candidates, dtype=float)
    scores = loo_cv_scores(times, values, candidates, config.order, config.kernel)
    h = float(np.median(candidates[np.argmin(scores, axis=1)]))
    return h * config.undersmooth_factor if for_inference else h


def estimate_sigma(times, residuals, t, h_se: float, kernel=KernelName.GAUSSIAN) -> np.ndarray:
    """Kernel-weighted residual scale at ``t`` (scalar or array).

    ``residuals`` may be ``(n,)`` or ``(p, n)``.
    """
    times = np.asarray(times, dtype=float)
    r = np.asarray(residuals, dtype=float)
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    G = kernel_weights((times[None, :] - t_arr[:, None]) / h_se, kernel) ** 2  # (m, n)
    if np.any(G.sum(axis=1) == 0):
        raise EmptyWindow("no observation falls inside the standard-error window")
    out = np.sqrt((r**2) @ G.T / (times.size * h_se))
    return out[..., 0] if np.ndim(t) == 0 else out


@dataclass
class SmoothedSource:
    x_hat: np.ndarray  # (p, m)
    d_hat: np.ndarray  # (p, m)
    sigma_hat: np.ndarray  # (p, m)
    eval_grid: TimeGrid
    config: SmoothingConfig  # resolved: h and h_se are set
    boundary: np.ndarray  # (m,) bool
    n: int  # number of observations behind the fit
    bandwidth: np.ndarray | None = None  # (m,) local bandwidth actually used, after any widening

    @property
    def p(self) -> int:
        return self.x_hat.shape[0]

    @property
    def h_unit(self) -> float:
        """Bandwidth on the unit-rescaled time axis."""
        return self.config.h / self.eval_grid.horizon


def smooth_source(times, Y, eval_grid: TimeGrid, config: SmoothingConfig) -> SmoothedSource:
    """Smooth every dimension of one source and attach standard errors."""
    times = np.asarray(times, dtype=float)
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != times.size:
        raise InputError("observations and times disagree in length")
    if times.size < config.order + 2:
        raise InputError(f"need at least order+2={config.order + 2} observations, got {times.size}")
    if config.h is None:
        config = replace(config, h=select_bandwidth(times, Y, config))
    S = smoother_matrices(times, eval_grid.times, config.h, config.order, config.kernel)
    x_hat = Y @ S.value.T
    d_hat = Y @ S.slope.T
    fitted = Y @ smoother_matrices(times, times, config.h, config.order, config.kernel).value.T
    T = eval_grid.horizon
    h_se = config.se_bandwidth
    sigma = estimate_sigma(times / T, Y - fitted, eval_grid.times / T, h_se / T, config.kernel)
    if config.sigma_floor > 0:
        sigma = np.maximum(sigma, config.sigma_floor)
    return SmoothedSource(x_hat, d_hat, sigma, eval_grid, replace(config, h_se=h_se), S.boundary, times.size,
                          S.bandwidth)


def smooth_sources(obs, eval_grid: TimeGrid | None = None, config: SmoothingConfig = SmoothingConfig(), *,
                   for_inference: bool = False) -> list[SmoothedSource]:
    """Smooth all sources on a common evaluation grid with a common bandwidth.

    Without an explicit ``config.h`` the bandwidth is the median of the
    per-(source, dimension) CV choices, undersmoothed when ``for_inference``.
    """
    if eval_grid is None:
        eval_grid = obs.grid if obs.shared_grid else common_eval_grid(obs.grids)
    if config.h is None:
        choices = []
        groups: list[tuple[TimeGrid, list]] = []  # sources sharing a grid share the smoother matrices
        for y, g in zip(obs.Y, obs.grids):
            for grid, ys in groups:
                if grid.same_as(g, 0.0):
                    ys.append(y)
                    break
            else:
                groups.append((g, [y]))
        for g, ys in groups:
            cands = candidate_bandwidths(g.times, config.order, config.kernel)
            scores = loo_cv_scores(g.times, np.concatenate(ys), cands, config.order, config.kernel)
            choices.extend(cands[np.argmin(scores, axis=1)])
        h = float(np.median(choices))
        if for_inference:
            h *= config.undersmooth_factor
        config = replace(config, h=h)
    return [smooth_source(g.times, y, eval_grid, config) for y, g in zip(obs.Y, obs.grids)]


def common_eval_grid(grids, n: int | None = None) -> TimeGrid:
    """Uniform grid on the time range covered by every source."""
    horizon = min(g.times[-1] for g in grids)
    if n is None:
        n = int(np.median([g.n for g in grids]))
    return TimeGrid.uniform(n, horizon)
