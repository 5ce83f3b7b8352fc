"""Quadratic programs over the probability simplex.

``minimize_quadratic_simplex`` is accelerated projected gradient with
adaptive restart and periodic active-set polishing; its stopping rule is the
Frank-Wolfe gap.  ``scalarized_min`` solves the strictly convex family

    min_w  tau * |w|^2 + (1 - tau) * w' G w     over the simplex

exactly with a primal active-set method whose equality-constrained steps go
through an eigendecomposition of ``G`` restricted to the free set, so the
solution stays accurate as ``tau`` approaches zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, MaxIterations


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort-based, O(K log K))."""
    v = np.asarray(v, dtype=float)
    u = -np.sort(-v, kind="stable")
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def frank_wolfe_gap(A: np.ndarray, w: np.ndarray) -> float:
    g = 2.0 * (A @ w)
    return float(g @ w - g.min())


def _kkt_on_support(A: np.ndarray, support: np.ndarray) -> np.ndarray | None:
    K = A.shape[0]
    s = support.size
    if s == 0:
        return None
    kkt = np.zeros((s + 1, s + 1))
    kkt[:s, :s] = 2.0 * A[np.ix_(support, support)]
    kkt[:s, s] = -1.0
    kkt[s, :s] = 1.0
    rhs = np.zeros(s + 1)
    rhs[s] = 1.0
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    ws = sol[:s]
    if np.any(ws < -1e-12) or not np.all(np.isfinite(ws)):
        return None
    w = np.zeros(K)
    w[support] = np.maximum(ws, 0.0)
    total = w.sum()
    return w / total if total > 0 else None


@dataclass
class QPResult:
    w: np.ndarray
    value: float
    gap: float
    iterations: int


def minimize_quadratic_simplex(A, tol: float = 1e-10, max_iter: int = 100_000, w0=None,
                               polish_every: int = 10) -> QPResult:
    """Minimize ``w' A w`` over the simplex for symmetric ``A``.

    Converged once the Frank-Wolfe gap is at most ``tol * (1 + |value|)``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError("need a square matrix")
    K = A.shape[0]
    A = 0.5 * (A + A.T)
    if K == 1:
        return QPResult(np.ones(1), float(A[0, 0]), 0.0, 0)
    L = 2.0 * max(np.abs(np.linalg.eigvalsh(A)).max(), 1e-300)
    x = project_simplex(np.full(K, 1.0 / K) if w0 is None else w0)
    y, t = x.copy(), 1.0
    fx = float(x @ A @ x)
    best = None
    for it in range(max_iter + 1):
        gap = frank_wolfe_gap(A, x)
        if gap <= tol * (1.0 + abs(fx)):
            return QPResult(x, fx, gap, it)
        if it % polish_every == 0:
            for support in (np.nonzero(x > 0)[0], np.nonzero(2 * A @ x <= (2 * A @ x).min() + 1e-9 * L)[0]):
                cand = _kkt_on_support(A, support)
                if cand is None:
                    continue
                fc = float(cand @ A @ cand)
                gc = frank_wolfe_gap(A, cand)
                if gc <= tol * (1.0 + abs(fc)):
                    return QPResult(cand, fc, gc, it)
                if fc < fx:
                    best = cand
            if best is not None:
                x, y, t, fx = best, best.copy(), 1.0, float(best @ A @ best)
                best = None
        x_new = project_simplex(y - (2.0 / L) * (A @ y))
        f_new = float(x_new @ A @ x_new)
        if f_new > fx:  # adaptive restart
            y, t = x.copy(), 1.0
            x_new = project_simplex(x - (2.0 / L) * (A @ x))
            f_new = float(x_new @ A @ x_new)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t, fx = x_new, t_new, f_new
    raise MaxIterations(f"no convergence in {max_iter} iterations (gap {gap:.3e})", x=x, gap=gap)


class ScalarizedSolver:
    """Exact solver for ``min tau |w|^2 + (1-tau) w'Gw`` over the simplex.

    ``G`` must be positive semidefinite.  Free-set eigendecompositions are
    cached, so sweeping ``tau`` (as in bisection) is cheap.
    """

    def __init__(self, G):
        G = np.asarray(G, dtype=float)
        self.G = 0.5 * (G + G.T)
        self.K = self.G.shape[0]
        self._eig: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}

    def _eigh(self, free: tuple) -> tuple[np.ndarray, np.ndarray]:
        hit = self._eig.get(free)
        if hit is None:
            idx = np.array(free)
            lam, V = np.linalg.eigh(self.G[np.ix_(idx, idx)])
            # eigenvalues below the rounding level of the block are treated as exact zeros
            noise = 64 * len(free) * np.finfo(float).eps * max(float(np.abs(lam).max()), 0.0)
            hit = (np.where(lam > noise, lam, 0.0), V)
            self._eig[free] = hit
        return hit

    def _eqp(self, free: tuple, tau: float) -> np.ndarray:
        # minimizer on {w_i = 0 outside free, sum w = 1} is proportional to A_FF^{-1} 1
        lam, V = self._eigh(free)
        z = V @ ((V.T @ np.ones(len(free))) / (tau + (1.0 - tau) * lam))
        w = np.zeros(self.K)
        w[list(free)] = z / z.sum()
        return w

    def solve(self, tau: float, w0=None, max_iter: int = 10_000) -> np.ndarray:
        if not 0.0 < tau <= 1.0:
            raise InputError("tau must lie in (0, 1]")
        K = self.K
        if K == 1:
            return np.ones(1)
        A = tau * np.eye(K) + (1.0 - tau) * self.G
        scale = tau + (1.0 - tau) * np.abs(self.G).max()
        w = np.full(K, 1.0 / K) if w0 is None else np.asarray(w0, dtype=float).copy()
        free = set(np.nonzero(w > 0)[0].tolist())
        for _ in range(max_iter):
            target = self._eqp(tuple(sorted(free)), tau)
            step = target - w
            if np.max(np.abs(step)) <= 1e-15:
                g = 2.0 * (A @ target)
                nu = float(g[sorted(free)].mean())
                mult = g - nu
                fixed = [i for i in range(K) if i not in free]
                if not fixed:
                    return target
                worst = min(fixed, key=lambda i: (mult[i], i))
                if mult[worst] >= -1e-13 * scale:
                    return target
                free.add(worst)
                w = target
                continue
            shrinking = [i for i in free if step[i] < 0]
            alpha, blocking = 1.0, None
            for i in sorted(shrinking):
                a = -w[i] / step[i]
                if a < alpha:
                    alpha, blocking = a, i
            w = w + alpha * step
            if blocking is not None:
                w[blocking] = 0.0
                free.discard(blocking)
                w = np.maximum(w, 0.0)
                w /= w.sum()
            else:
                w = target
        raise MaxIterations("active-set iteration limit reached", x=w)
