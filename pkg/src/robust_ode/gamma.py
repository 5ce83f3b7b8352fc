"""Gram matrix of derivative trajectories and its split-sample replicates."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import GridMismatch, InputError
from .ode_models import SourceObservations, TimeGrid
from .smoothing import SmoothingConfig, select_bandwidth, smooth_source

DEFAULT_TRIM = 0.05


@dataclass
class GammaMatrix:
    entries: np.ndarray  # (K, K), symmetric
    trim: float = DEFAULT_TRIM
    quad_rule: str = "trapezoid"
    floored: np.ndarray | None = None  # eigenvalue-floored copy for PSD-requiring routines

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        if self.floored is None:
            lam, V = np.linalg.eigh(self.entries)
            self.floored = self.entries if lam.min() >= 0 else (V * np.maximum(lam, 0)) @ V.T

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    @property
    def was_floored(self) -> bool:
        return not np.array_equal(self.floored, self.entries)

    def to_dict(self) -> dict:
        return {"entries": self.entries.tolist(), "trim": self.trim, "quad_rule": self.quad_rule,
                "floored": self.was_floored}


def trim_mask(grid: TimeGrid, trim: float) -> np.ndarray:
    if not 0 <= trim < 0.25:
        raise InputError("trim must lie in [0, 0.25)")
    T = grid.horizon
    eps = 1e-12 * max(T, 1.0)
    return (grid.times >= trim * T - eps) & (grid.times <= (1.0 - trim) * T + eps)


def gram_from_curves(curves: np.ndarray, times: np.ndarray) -> np.ndarray:
    """``sum_j int d_k d_k' dt`` by the trapezoid rule; ``curves`` is (K, p, m)."""
    curves = np.asarray(curves, dtype=float)
    w = np.zeros(times.size)
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    flat = curves.reshape(curves.shape[0], -1, times.size)
    G = np.einsum("kjm,ljm,m->kl", flat, flat, w)
    return 0.5 * (G + G.T)


def estimate_gamma(smoothed, trim: float = DEFAULT_TRIM) -> GammaMatrix:
    """Gram matrix of the smoothed derivative curves over the trimmed window."""
    if not smoothed:
        raise InputError("need at least one smoothed source")
    grid = smoothed[0].eval_grid
    for s in smoothed[1:]:
        if not s.eval_grid.same_as(grid):
            raise GridMismatch("smoothed sources use different evaluation grids")
        if s.d_hat.shape != smoothed[0].d_hat.shape:
            raise GridMismatch("smoothed sources have different state dimensions")
    mask = trim_mask(grid, trim)
    if mask.sum() < 2:
        raise InputError("trimmed window keeps fewer than two grid points")
    curves = np.stack([s.d_hat[:, mask] for s in smoothed])
    return GammaMatrix(gram_from_curves(curves, grid.times[mask]), trim)


def oracle_gamma(dX: np.ndarray, grid: TimeGrid, trim: float = DEFAULT_TRIM) -> GammaMatrix:
    """Same quadrature applied to known derivative curves ``dX`` (K, p, m)."""
    mask = trim_mask(grid, trim)
    return GammaMatrix(gram_from_curves(np.asarray(dX)[..., mask], grid.times[mask]), trim)


def split_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Interleaved halves: positions 0, 2, 4, ... and 1, 3, 5, ..."""
    idx = np.arange(n)
    return idx[0::2], idx[1::2]


def split_gamma(obs: SourceObservations, config: SmoothingConfig, eval_grid: TimeGrid | None = None,
                trim: float = DEFAULT_TRIM) -> tuple[GammaMatrix, GammaMatrix]:
    """Gram matrices from the odd- and even-indexed observation halves.

    Both halves are smoothed onto the same evaluation grid so their
    difference reflects sampling noise rather than quadrature.
    """
    if eval_grid is None:
        eval_grid = obs.grid
    if config.h is None:
        h = float(np.median([select_bandwidth(g.times, y, config) for y, g in zip(obs.Y, obs.grids)]))
        config = replace(config, h=h)
    out = []
    for half in (0, 1):
        smoothed = []
        for y, g in zip(obs.Y, obs.grids):
            if g.n < 16:
                raise InputError("split-sample tolerance needs at least 16 observations per source")
            idx = split_indices(g.n)[half]
            smoothed.append(smooth_source(g.times[idx], y[:, idx], eval_grid, config))
        out.append(estimate_gamma(smoothed, trim))
    return out[0], out[1]
