"""Worst-case-reward weights: plug-in, ridge and stabilized (min-norm) variants.

The robust weights minimize ``w' G w`` over the simplex.  When ``G`` is
singular the minimizer is not unique; the stabilized estimator picks the
minimum-norm point among all near-minimizers ``w' G w <= U + d_n``.  That
constrained problem is solved by scalarization: ``w(tau)`` minimizes
``tau |w|^2 + (1 - tau) w' G w`` and ``tau`` is root-found so that the
constraint is tight (``tau -> 0`` recovers the exact min-norm minimizer).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import BisectionStall, InputError, ZeroGamma
from .qp import ScalarizedSolver, minimize_quadratic_simplex, project_simplex

TAU_MIN = 1e-14
DEFAULT_CD = 0.01


class Method(str, enum.Enum):
    PLUGIN = "plugin"
    RIDGE = "ridge"
    STABLE = "stable"
    ORACLE = "oracle"


@dataclass
class SimplexWeights:
    omega: np.ndarray
    objective: float  # omega' G omega with the raw (unfloored) matrix
    method: Method
    d_n: float | None = None
    lam: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "omega": [float(v) for v in self.omega],
            "objective": float(self.objective),
            "method": self.method.value,
            "d_n": self.d_n,
            "lambda": self.lam,
            "diagnostics": {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                            for k, v in self.diagnostics.items()},
        }


def _as_matrix(G) -> np.ndarray:
    G = np.asarray(getattr(G, "entries", G), dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] < 1:
        raise InputError("Gamma must be a non-empty square matrix")
    if not np.all(np.isfinite(G)):
        raise InputError("Gamma contains non-finite entries")
    return 0.5 * (G + G.T)


def psd_floor(G) -> np.ndarray:
    """Clip negative eigenvalues to zero."""
    G = _as_matrix(G)
    lam, V = np.linalg.eigh(G)
    if lam.min() >= 0:
        return G
    out = (V * np.maximum(lam, 0.0)) @ V.T
    return 0.5 * (out + out.T)


def op_norm(G) -> float:
    G = np.asarray(G, dtype=float)
    return float(np.abs(np.linalg.eigvalsh(0.5 * (G + G.T))).max())


def plug_in_weights(G, **solver) -> SimplexWeights:
    """Unstabilized minimizer of ``w' G w``; returned as the solver leaves it."""
    G = _as_matrix(G)
    res = minimize_quadratic_simplex(G, **solver)
    return SimplexWeights(res.w, float(res.w @ G @ res.w), Method.PLUGIN,
                          diagnostics={"U": res.value, "gap": res.gap, "iterations": res.iterations})


def ridge_weights(G, lam: float, **solver) -> SimplexWeights:
    if lam < 0:
        raise InputError("ridge parameter must be non-negative")
    G = _as_matrix(G)
    res = minimize_quadratic_simplex(G + lam * np.eye(G.shape[0]), **solver)
    return SimplexWeights(res.w, float(res.w @ G @ res.w), Method.RIDGE, lam=lam,
                          diagnostics={"gap": res.gap, "iterations": res.iterations})


def stabilized_weights(G, d_n: float, certify: bool = False) -> SimplexWeights:
    """Minimum-norm simplex point with ``w' G w <= U + d_n``.

    ``G`` is PSD-floored first; ``U`` is the simplex minimum of the floored
    matrix.  With ``certify`` the result is checked against an independent
    alternating-projection solve and the gap is stored in the diagnostics.
    """
    if d_n < 0 or not math.isfinite(d_n):
        raise InputError("tolerance d_n must be a finite non-negative number")
    raw = _as_matrix(G)
    Gf = psd_floor(raw)
    K = Gf.shape[0]
    U = minimize_quadratic_simplex(Gf).value
    bound = U + d_n
    resid_tol = 1e-9 * (1.0 + abs(U) + d_n)
    diag = {"U": U, "psd_floored": bool(not np.array_equal(Gf, raw))}

    uniform = np.full(K, 1.0 / K)
    if K == 1 or uniform @ Gf @ uniform <= bound:
        w, tau = uniform, 1.0
    else:
        # unit operator norm, so the multiplier range does not depend on the scale of G
        scale = float(np.linalg.eigvalsh(Gf)[-1])
        Gs, bound_s = Gf / scale, bound / scale
        solver = ScalarizedSolver(Gs)
        state = {"w": uniform}

        def excess(log_tau):
            state["w"] = solver.solve(math.exp(log_tau), w0=None)
            return (float(state["w"] @ Gs @ state["w"]) - bound_s) * scale

        lo = math.log(TAU_MIN)
        if d_n <= 64 * K * np.finfo(float).eps * scale:
            # a tolerance at rounding level selects the least-norm point of the argmin face, the tau -> 0 limit;
            # a root search would only chase rounding noise in U
            w, tau = solver.solve(TAU_MIN), TAU_MIN
        elif excess(lo) > 0:
            w, tau = state["w"], TAU_MIN
            if excess(lo) > resid_tol:
                raise BisectionStall("constraint unattainable at the smallest multiplier", best=w)
        else:
            root = brentq(excess, lo, 0.0, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)
            tau = math.exp(root)
            w = solver.solve(tau)
            # step towards smaller tau until the constraint holds to the residual tolerance
            step = 1e-13
            while float(w @ Gf @ w) - bound > resid_tol and root - step > lo:
                root -= step
                step *= 2
                tau = math.exp(root)
                w = solver.solve(tau)
    residual = float(w @ Gf @ w) - bound
    diag.update(tau=tau, residual=residual, bound=bound)
    if certify:
        ref = min_norm_feasible(Gf, bound)
        diag["certificate_norm_gap"] = float(w @ w - ref @ ref)
    return SimplexWeights(w, float(w @ raw @ w), Method.STABLE, d_n=d_n, diagnostics=diag)


def oracle_weights(G) -> SimplexWeights:
    """Population stabilized weights: tolerance zero on a known matrix."""
    out = stabilized_weights(G, 0.0)
    out.method = Method.ORACLE
    return out


# ---------------------------------------------------------------------------
# independent check: project the origin onto simplex ∩ {w'Gw <= c}


def _project_ellipsoid(v, lam, V, c):
    vt = V.T @ v
    if float(np.sum(lam * vt**2)) <= c:
        return v
    f = lambda s: float(np.sum(lam * (vt / (1.0 + s * lam)) ** 2)) - c  # noqa: E731
    hi = 1.0
    while f(hi) > 0:
        hi *= 4.0
    s = brentq(f, 0.0, hi, xtol=1e-15)
    return V @ (vt / (1.0 + s * lam))


def min_norm_feasible(G, bound: float, max_iter: int = 200_000, tol: float = 1e-13) -> np.ndarray:
    """Dykstra alternating projections of 0 onto the simplex ∩ sublevel set."""
    lam, V = np.linalg.eigh(_as_matrix(G))
    lam = np.maximum(lam, 0.0)
    K = lam.size
    x = np.zeros(K)
    p = np.zeros(K)
    q = np.zeros(K)
    for _ in range(max_iter):
        z = project_simplex(x + p)
        p = x + p - z
        x_new = _project_ellipsoid(z + q, lam, V, bound)
        q = z + q - x_new
        if np.max(np.abs(x_new - x)) < tol and np.max(np.abs(x_new - z)) < 1e-10:
            x = x_new
            break
        x = x_new
    return project_simplex(x)


# ---------------------------------------------------------------------------
# tolerance selection


@dataclass
class ToleranceConfig:
    C_d: float
    d_n: float
    ratio: float  # split-sample operator-norm ratio before truncation at 1
    log_n: float

    def __post_init__(self):
        if not 0.001 <= self.C_d <= 1:
            raise InputError("C_d must lie in [0.001, 1]")

    def to_dict(self) -> dict:
        return {"C_d": self.C_d, "d_n": self.d_n, "ratio": self.ratio, "log_n": self.log_n}


def select_tolerance(G1, G2, G, n: int, C_d: float = DEFAULT_CD) -> ToleranceConfig:
    """``d_n = C_d * log(n) * min(|G1 - G2|_op / |G|_op, 1)``."""
    norm = op_norm(_as_matrix(G))
    if norm == 0:
        raise ZeroGamma("Gamma has zero operator norm")
    ratio = op_norm(_as_matrix(G1) - _as_matrix(G2)) / norm
    log_n = math.log(n)
    return ToleranceConfig(C_d, C_d * log_n * min(ratio, 1.0), ratio, log_n)


# ---------------------------------------------------------------------------
# stability experiment with a singular Gamma

FIG1_GAMMA = np.array([
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 2.0, -2.0],
    [0.0, 0.0, 0.0, -2.0, 2.0],
])
FIG1_TARGET = np.array([0.0, 0.0, 1.0, 1.0, 1.0]) / 3.0
FIG1_N = (10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10000, 20000)
RULES = {
    "1/n^2": lambda n: 1.0 / n**2,
    "log(n)/n": lambda n: math.log(n) / n,
    "1/log(n)": lambda n: 1.0 / math.log(n),
}


def squared_noise_perturbation(G, n: int, rng: np.random.Generator) -> np.ndarray:
    """``G + (z_jk^2)`` with symmetric ``z_jk ~ N(0, sd = 1/sqrt(n))``."""
    K = G.shape[0]
    z = rng.standard_normal((K, K)) / math.sqrt(n)
    z = np.triu(z) + np.triu(z, 1).T
    return G + z**2


@dataclass
class StabilityResult:
    records: list  # (n, rule, seed, loss)

    def median(self, rule: str, n: int) -> float:
        return float(np.median([r[3] for r in self.records if r[1] == rule and r[0] == n]))

    def curve(self, rule: str) -> dict:
        ns = sorted({r[0] for r in self.records})
        return {n: self.median(rule, n) for n in ns}

    def rows(self):
        rules = list(dict.fromkeys(r[1] for r in self.records))
        for rule in rules:
            for n, med in self.curve(rule).items():
                losses = [r[3] for r in self.records if r[1] == rule and r[0] == n]
                yield {"n": n, "rule": rule, "median_loss": med,
                       "q25": float(np.quantile(losses, 0.25)), "q75": float(np.quantile(losses, 0.75))}


def stability_experiment(n_grid=FIG1_N, rules=("plugin", "1/n^2", "log(n)/n", "1/log(n)", "adaptive"),
                         seeds=range(50), C_d: float = DEFAULT_CD, G=FIG1_GAMMA,
                         target=FIG1_TARGET) -> StabilityResult:
    """Loss ``|w_hat - w_target|`` of each rule on perturbed copies of ``G``.

    ``adaptive`` applies the split-sample rule to two independent half-sample
    perturbations of ``G``.
    """
    G = np.asarray(G, dtype=float)
    records = []
    for n in n_grid:
        for seed in seeds:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(n)])))
            Ghat = squared_noise_perturbation(G, n, rng)
            halves = None
            for rule in rules:
                if rule == "plugin":
                    w = plug_in_weights(Ghat).omega
                elif rule == "adaptive":
                    if halves is None:
                        halves = [squared_noise_perturbation(G, max(n // 2, 1), rng) for _ in range(2)]
                    d_n = select_tolerance(halves[0], halves[1], Ghat, n, C_d).d_n
                    w = stabilized_weights(Ghat, d_n).omega
                else:
                    w = stabilized_weights(Ghat, RULES[rule](n)).omega
                records.append((n, rule, int(seed), float(np.linalg.norm(w - target))))
    return StabilityResult(records)


def make_weights(method, G, d_n: float | None = None, lam: float | None = None) -> SimplexWeights:
    method = Method(method)
    if method is Method.PLUGIN:
        return plug_in_weights(G)
    if method is Method.RIDGE:
        return ridge_weights(G, 0.0 if lam is None else lam)
    if method is Method.ORACLE:
        return oracle_weights(G)
    return stabilized_weights(G, 0.0 if d_n is None else d_n)


__all__ = [
    "Method", "SimplexWeights", "ToleranceConfig", "plug_in_weights", "ridge_weights", "stabilized_weights",
    "oracle_weights", "select_tolerance", "stability_experiment", "psd_floor", "op_norm", "min_norm_feasible",
    "FIG1_GAMMA", "FIG1_TARGET",
]
