"""Independent reference computations used to freeze expected values.

Nothing here imports the package's solvers: the formulas are written out
directly so that a bug in the library cannot leak into its own oracle.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


def enzyme_rhs_scalar(c: dict, x1: float, x2: float, x3: float) -> tuple[float, float, float]:
    """Enzyme network right-hand side, one scalar expression per node."""
    f1 = c["c1"] * c["c0"] * (1 - x1) / ((1 - x1) + c["C1"]) - c["ct1"] * c["c2"] * x1 / (x1 + c["C2"])
    f2 = c["c3"] * (1 - x2) * x3 / ((1 - x2) + c["C3"]) - c["ct2"] * c["c4"] * x2 / (x2 + c["C4"])
    f3 = c["c5"] * x1 * (1 - x3) / ((1 - x3) + c["C5"]) - c["c6"] * x2 * x3 / (x3 + c["C6"])
    return f1, f2, f3


LEVEL_I_ENZYME = {"c0": 1.0, "c1": 10.0, "c2": 10.0, "c3": 10.0, "c4": 1.0, "c5": 10.0, "c6": 10.0,
                  "C1": 0.1, "C2": 0.1, "C3": 0.1, "C4": 0.1, "C5": 0.1, "C6": 0.1, "ct1": 1.0, "ct2": 0.2}


def lv_rhs_scalar(alpha: dict, x: list[float]) -> list[float]:
    out = []
    for j in range(1, 6):
        prey, pred = x[2 * j - 2], x[2 * j - 1]
        out.append(alpha[1, j] * prey - alpha[2, j] * prey * pred)
        out.append(alpha[3, j] * prey * pred - alpha[4, j] * pred)
    return out


def lv_level(level: int, k: int) -> dict:
    s = {1: 1.0, 2: 1 + k / 160, 3: 1 + k / 80}[level]
    base = {1: 1.1, 2: 0.4, 3: 0.1, 4: 0.4}
    return {(i, j): (base[i] + 0.2 * (j - 1)) * s for i in range(1, 5) for j in range(1, 6)}


# ---------------------------------------------------------------------------
# simplex search for K <= 4
#
# The first K-2 coordinates run over a grid of the given resolution; the last
# two split the remaining mass r as (s, r - s) and the objective is minimized
# over s in closed form.  This is a grid search whose last axis is resolved
# exactly, which keeps K = 4 tractable at resolution 1e-3.

@lru_cache(maxsize=8)
def _outer_grid(K: int, res: float) -> np.ndarray:
    steps = int(round(1 / res))
    if K == 2:
        return np.zeros((1, 0))
    axes = np.arange(steps + 1) * res
    if K == 3:
        return axes[:, None]
    a, b = np.meshgrid(axes, axes, indexing="ij")
    keep = a + b <= 1 + 1e-12
    return np.column_stack([a[keep], b[keep]])


def _segment_quadratic(G: np.ndarray, outer: np.ndarray):
    """Coefficients of f(s) = A s^2 + B s + C along w = (outer, s, r - s)."""
    K = G.shape[0]
    r = np.clip(1.0 - outer.sum(axis=1), 0.0, None)
    base = np.zeros((outer.shape[0], K))
    base[:, :K - 2] = outer
    base[:, K - 1] = r
    e = np.zeros(K)
    e[K - 2], e[K - 1] = 1.0, -1.0
    A = float(e @ G @ e)
    BG = base @ G
    B = 2.0 * (BG @ e)
    C = np.sum(BG * base, axis=1)
    return base, e, r, A, B, C


def grid_minimum(G, res: float = 1e-3) -> float:
    """``min w'Gw`` over the simplex by the semi-discrete search above."""
    G = np.asarray(G, dtype=float)
    base, e, r, A, B, C = _segment_quadratic(G, _outer_grid(G.shape[0], res))
    s = np.clip(-B / (2 * A), 0.0, r) if A > 0 else np.where(B < 0, r, 0.0)
    return float(np.min(A * s * s + B * s + C))


def grid_min_norm(G, bound: float, res: float = 1e-3) -> float:
    """Smallest ``|w|^2`` over searched points with ``w'Gw <= bound`` (inf if none)."""
    G = np.asarray(G, dtype=float)
    base, e, r, A, B, C = _segment_quadratic(G, _outer_grid(G.shape[0], res))
    # feasible s: A s^2 + B s + C - bound <= 0 on [0, r]
    if A > 1e-15:
        disc = B * B - 4 * A * (C - bound)
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        lo = np.maximum((-B - sq) / (2 * A), 0.0)
        hi = np.minimum((-B + sq) / (2 * A), r)
    else:  # linear in s
        with np.errstate(divide="ignore", invalid="ignore"):
            root = np.where(B != 0, (bound - C) / B, np.nan)
        lo = np.where(B > 0, 0.0, np.where(B < 0, np.maximum(root, 0.0), np.where(C <= bound, 0.0, np.inf)))
        hi = np.where(B > 0, np.minimum(root, r), np.where(B < 0, r, np.where(C <= bound, r, -np.inf)))
        ok = np.ones_like(r, dtype=bool)
    ok &= lo <= hi
    if not np.any(ok):
        return math.inf
    # |w|^2 = |outer|^2 + s^2 + (r - s)^2, minimized at s = r/2 then clipped to [lo, hi]
    s = np.clip(r / 2, lo, hi)
    outer = base[:, :G.shape[0] - 2]
    norm = np.sum(outer**2, axis=1) + s**2 + (r - s) ** 2
    return float(np.min(norm[ok]))


def random_psd(rng: np.random.Generator, K: int) -> np.ndarray:
    """PSD matrix of random rank scaled to unit operator norm."""
    rank = int(rng.integers(1, K + 1))
    A = rng.standard_normal((K, rank))
    G = A @ A.T
    return G / np.linalg.eigvalsh(G).max()


# ---------------------------------------------------------------------------
# misc

def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def direct_sigma(times, residuals, t, h, kernel) -> float:
    """Plain double loop over observations for the kernel-weighted residual scale."""
    total = 0.0
    for ti, ri in zip(times, residuals):
        total += kernel((ti - t) / h) ** 2 * ri * ri
    return math.sqrt(total / (len(times) * h))


def gaussian(u: float) -> float:
    return math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)


def trapezoid(y, x) -> float:
    return float(sum(0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]) for i in range(len(x) - 1)))
