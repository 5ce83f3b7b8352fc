"""Gradient matching: kernel ridge regression of derivatives on states.

The fitted link function is a Gaussian-kernel expansion

    F_j(x) = mean_j + sum_i alpha_ij k(x, x_i),   k(a, b) = exp(-|a-b|^2 / (2 l^2))

with per-dimension centered targets.  The ridge term is added to the kernel
matrix diagonal; its default ``1e-4 * m`` makes pooling duplicated samples
prediction-neutral.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.spatial.distance import cdist, pdist

from .errors import InputError, SingularSystem

RIDGE_PER_SAMPLE = 1e-4


@dataclass
class FittedDynamics:
    centers: np.ndarray  # (m, d) kernel centers in input coordinates
    coefficients: np.ndarray  # (p, m) dual coefficients
    offset: np.ndarray  # (p,) target means
    kernel_bandwidth: float
    ridge: float
    include_time: bool = False
    time_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if not self.kernel_bandwidth > 0:
            raise InputError("kernel bandwidth must be positive")
        if not np.all(np.isfinite(self.coefficients)):
            raise SingularSystem("non-finite dual coefficients")

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    def _inputs(self, x: np.ndarray, t) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if not self.include_time:
            return x
        t0, t1 = self.time_range
        t = np.broadcast_to(np.asarray(0.0 if t is None else t, dtype=float), (x.shape[0],))
        return np.column_stack([x, (t - t0) / (t1 - t0)])

    def predict(self, x, t=None) -> np.ndarray:
        """Derivative predictions at states ``x`` ((m, p) or (p,))."""
        z = self._inputs(x, t)
        Kq = np.exp(-cdist(z, self.centers, "sqeuclidean") / (2.0 * self.kernel_bandwidth**2))
        out = Kq @ self.coefficients.T + self.offset
        return out[0] if np.ndim(x) == 1 else out

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "coefficients": self.coefficients.tolist(),
                "offset": self.offset.tolist(), "kernel_bandwidth": self.kernel_bandwidth, "ridge": self.ridge,
                "include_time": self.include_time, "time_range": list(self.time_range)}

    @classmethod
    def from_dict(cls, d: dict) -> "FittedDynamics":
        return cls(np.asarray(d["centers"], dtype=float), np.asarray(d["coefficients"], dtype=float),
                   np.asarray(d["offset"], dtype=float), float(d["kernel_bandwidth"]), float(d["ridge"]),
                   bool(d["include_time"]), tuple(d["time_range"]))


def predict_derivative(model: FittedDynamics, x, t=None) -> np.ndarray:
    return model.predict(x, t)


def median_heuristic(z: np.ndarray) -> float:
    """Median of the non-zero pairwise distances (duplicates do not move it)."""
    d = pdist(np.atleast_2d(z))
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def _design(states, times, include_time):
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if not include_time:
        return states, (0.0, 1.0)
    if times is None:
        raise InputError("include_time needs the sample times")
    times = np.asarray(times, dtype=float)
    t0, t1 = float(times.min()), float(times.max())
    if t1 <= t0:
        t1 = t0 + 1.0
    return np.column_stack([states, (times - t0) / (t1 - t0)]), (t0, t1)


def fit_gradient_matching(states, derivatives, times=None, kernel_bandwidth: float | None = None,
                          ridge: float | None = None, include_time: bool = False) -> FittedDynamics:
    """Kernel ridge fit of each derivative dimension on the (state, time) input."""
    Z, trange = _design(states, times, include_time)
    D = np.atleast_2d(np.asarray(derivatives, dtype=float))
    m = Z.shape[0]
    if D.shape[0] != m:
        raise InputError("states and derivatives disagree in sample count")
    if m < 2:
        raise InputError("need at least two samples")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(D))):
        raise InputError("non-finite training data")
    ell = median_heuristic(Z) if kernel_bandwidth is None else float(kernel_bandwidth)
    lam = RIDGE_PER_SAMPLE * m if ridge is None else float(ridge)
    if lam < 0:
        raise InputError("ridge must be non-negative")
    offset = D.mean(axis=0)
    Kmat = np.exp(-cdist(Z, Z, "sqeuclidean") / (2.0 * ell**2))
    Kmat[np.diag_indices(m)] += lam
    try:
        chol = cho_factor(Kmat, lower=True)
    except LinAlgError:
        raise SingularSystem("regularized kernel matrix is not positive definite") from None
    diag = np.abs(np.diag(chol[0]))
    if diag.min() ** 2 < 1e-15 * diag.max() ** 2:
        raise SingularSystem("regularized kernel matrix is numerically singular")
    alpha = cho_solve(chol, D - offset)
    return FittedDynamics(Z, alpha.T, offset, ell, lam, include_time, trange)


def bandwidth_candidates(z: np.ndarray, count: int = 12) -> np.ndarray:
    """Log-spaced bandwidths from the 5% quantile of non-zero distances to the largest one.

    Relative multiples of the median break down when most samples sit at an
    equilibrium (the median distance collapses), hence the absolute range.
    """
    d = pdist(np.atleast_2d(z))
    d = d[d > 0]
    if d.size == 0:
        return np.ones(1)
    lo, hi = float(np.quantile(d, 0.05)), float(d.max())
    return np.geomspace(lo, max(hi, lo), count)


def select_kernel_params(states, derivatives, times=None, bandwidths=None,
                         ridges_per_sample=(1e-6, 1e-5, 1e-4, 1e-3, 1e-2), folds: int = 5,
                         include_time: bool = False) -> tuple[float, float]:
    """K-fold CV over kernel bandwidths and ridge levels.

    Returns ``(kernel_bandwidth, ridge_per_sample)``; folds interleave samples
    and the first candidate wins ties.
    """
    Z, _ = _design(states, times, include_time)
    D = np.atleast_2d(np.asarray(derivatives, dtype=float))
    m = Z.shape[0]
    if m < 2 * folds:
        raise InputError(f"need at least {2 * folds} samples for {folds}-fold CV")
    cands = bandwidth_candidates(Z) if bandwidths is None else np.asarray(bandwidths, dtype=float)
    fold = np.arange(m) % folds
    best, best_score = None, np.inf
    for ell in cands:
        for r in ridges_per_sample:
            err = 0.0
            try:
                for f in range(folds):
                    tr, te = fold != f, fold == f
                    model = fit_gradient_matching(Z[tr], D[tr], kernel_bandwidth=ell, ridge=r * tr.sum())
                    err += float(np.sum((model.predict(Z[te]) - D[te]) ** 2))
            except SingularSystem:
                continue
            if err < best_score:
                best, best_score = (float(ell), float(r)), err
    if best is None:
        raise SingularSystem("every candidate kernel fit was singular")
    return best


def fit_dynamics(states, derivatives, times=None, kernel_bandwidth: float | None = None,
                 ridge_per_sample: float = RIDGE_PER_SAMPLE, select: str = "median",
                 include_time: bool = False) -> FittedDynamics:
    """Gradient matching with kernel parameters fixed, median-heuristic, or CV-selected.

    ``select="cv"`` ignores ``ridge_per_sample`` and picks both parameters
    unless ``kernel_bandwidth`` is given.
    """
    if select not in ("median", "cv"):
        raise InputError(f"unknown kernel selection rule {select!r}")
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if kernel_bandwidth is None and select == "cv":
        kernel_bandwidth, ridge_per_sample = select_kernel_params(states, derivatives, times,
                                                                  include_time=include_time)
    return fit_gradient_matching(states, derivatives, times, kernel_bandwidth,
                                 ridge_per_sample * states.shape[0], include_time)


def fit_erm(smoothed, kernel_bandwidth: float | None = None, ridge_per_sample: float = RIDGE_PER_SAMPLE,
            mask=None, include_time: bool = False, select: str = "median") -> FittedDynamics:
    """Pool every source's (state, time, derivative) triples into one fit."""
    if not smoothed:
        raise InputError("need at least one source")
    states, derivs, times = [], [], []
    for s in smoothed:
        keep = np.ones(s.eval_grid.n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        states.append(s.x_hat[:, keep].T)
        derivs.append(s.d_hat[:, keep].T)
        times.append(s.eval_grid.times[keep])
    return fit_dynamics(np.concatenate(states), np.concatenate(derivs), np.concatenate(times), kernel_bandwidth,
                        ridge_per_sample, select, include_time)
