"""Loss metrics, replicated benchmarks, coverage studies and leave-one-subject-out."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics_fit import FittedDynamics
from .errors import GridMismatch, InputError, LengthMismatch, ZeroDenominator
from .gamma import oracle_gamma
from .ode_models import SimulationConfig, SourceObservations, TimeGrid, generate_sources, latent_paths
from .pipeline import METHODS, PipelineConfig, fit_method, run_pipeline
from .robust_trajectory import confidence_band
from .smoothing import smooth_source, smooth_sources
from .weights import stabilized_weights

DENSE_POINTS = 401  # latent evaluation grid for the loss integrals


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros(times.size)
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def _residual_energy(model: FittedDynamics, X: np.ndarray, dX: np.ndarray, times: np.ndarray) -> float:
    pred = model.predict(X.T, times if model.include_time else None).T
    return float(trapezoid_weights(times) @ np.sum((dX - pred) ** 2, axis=0))


def _check(X, dX, grid: TimeGrid):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    dX = np.atleast_2d(np.asarray(dX, dtype=float))
    if X.shape != dX.shape or X.shape[1] != grid.n:
        raise GridMismatch(f"states {X.shape} / derivatives {dX.shape} do not match a grid of {grid.n} points")
    return X, dX


def trajectory_loss(model: FittedDynamics, X, dX, grid: TimeGrid) -> float:
    """``int sum_j (dX_j - F_j(X(t), t))^2 dt`` by the trapezoid rule; ``X`` is (p, m)."""
    X, dX = _check(X, dX, grid)
    return _residual_energy(model, X, dX, grid.times)


def derivative_energy(dX, grid: TimeGrid) -> float:
    dX = np.atleast_2d(np.asarray(dX, dtype=float))
    if dX.shape[1] != grid.n:
        raise GridMismatch("derivative curves do not match the grid")
    return float(trapezoid_weights(grid.times) @ np.sum(dX**2, axis=0))


def normalized_loss(model: FittedDynamics, X, dX, grid: TimeGrid) -> float:
    """Residual energy over derivative energy."""
    X, dX = _check(X, dX, grid)
    return _normalized(model, X, dX, grid.times)


def _normalized(model, X, dX, times) -> float:
    denom = float(trapezoid_weights(times) @ np.sum(dX**2, axis=0))
    if denom <= 0:
        raise ZeroDenominator("derivative energy is zero")
    return _residual_energy(model, X, dX, times) / denom


@dataclass
class LossReport:
    max_loss: float
    avg_loss: float
    gen_loss: float
    per_source: np.ndarray
    replication: int = 0
    method: str = ""

    def __post_init__(self):
        self.per_source = np.asarray(self.per_source, dtype=float)

    def to_row(self) -> dict:
        return {"replication": self.replication, "method": self.method, "max_loss": self.max_loss,
                "avg_loss": self.avg_loss, "gen_loss": self.gen_loss}


def loss_report(model: FittedDynamics, train_X, train_dX, heldout_X, heldout_dX, grid: TimeGrid,
                replication: int = 0, method: str = "") -> LossReport:
    """Max and average loss over the training sources plus the held-out loss.

    ``train_X``/``train_dX`` are (K, p, m) latent curves on ``grid``.
    """
    per = np.array([trajectory_loss(model, X, dX, grid) for X, dX in zip(train_X, train_dX)])
    if per.size == 0:
        raise InputError("need at least one training source")
    gen = trajectory_loss(model, heldout_X, heldout_dX, grid)
    return LossReport(float(per.max()), float(per.mean()), gen, per, replication, method)


def pairwise_comparison(losses_a, losses_b) -> float:
    """Fraction of trials with ``L_a <= L_b`` (ties favour ``a``)."""
    a = np.asarray(losses_a, dtype=float)
    b = np.asarray(losses_b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"{a.size} vs {b.size} trials")
    if a.size == 0:
        raise LengthMismatch("no trials to compare")
    return float(np.mean(a <= b))


# ---------------------------------------------------------------------------
# replicated benchmarks

def resolve_threads(threads: int | None = None) -> int:
    env = os.environ.get("ROBUST_ODE_THREADS")
    if env:
        threads = int(env)
    return max(1, int(threads or 1))


def _map(fn, items, threads: int | None):
    threads = resolve_threads(threads)
    if threads == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def replication_config(config: SimulationConfig, rep: int) -> SimulationConfig:
    return config.with_seed(config.seed + rep)


def run_replication(config: SimulationConfig, rep: int, methods=METHODS,
                    pipeline: PipelineConfig = PipelineConfig(), dense_points: int = DENSE_POINTS
                    ) -> list[LossReport]:
    """Every method on one simulated data set, scored on dense latent curves."""
    cfg = replication_config(config, rep)
    obs = generate_sources(cfg)
    dense = TimeGrid.uniform(dense_points, cfg.grid.horizon)
    X, dX = latent_paths(cfg, dense, obs.latent.mix_weights, heldout=True)
    smoothed = smooth_sources(obs, None, pipeline.smoothing)
    out = []
    for method in methods:
        model, _ = fit_method(obs, method, pipeline, smoothed)
        out.append(loss_report(model, X[:-1], dX[:-1], X[-1], dX[-1], dense, rep, method))
    return out


def benchmark(config: SimulationConfig, replications: int, methods=METHODS,
              pipeline: PipelineConfig = PipelineConfig(), threads: int | None = None) -> list[LossReport]:
    """Replications ``seed + r``; reports ordered by (replication, method)."""
    for m in methods:
        if m not in METHODS:
            raise InputError(f"unknown method {m!r}")
    chunks = _map(lambda r: run_replication(config, r, methods, pipeline), range(replications), threads)
    return [rep for chunk in chunks for rep in chunk]


def summarize(reports: list[LossReport]) -> list[dict]:
    """Mean and standard deviation of each loss per method (table layout)."""
    rows = []
    for method in dict.fromkeys(r.method for r in reports):
        sel = [r for r in reports if r.method == method]
        row = {"method": method, "replications": len(sel)}
        for key in ("max_loss", "avg_loss", "gen_loss"):
            v = np.array([getattr(r, key) for r in sel])
            row[key + "_mean"] = float(v.mean())
            row[key + "_sd"] = float(v.std(ddof=1)) if v.size > 1 else 0.0
        rows.append(row)
    return rows


def win_counts(reports: list[LossReport], method: str = "proposed", rival: str = "erm") -> dict[str, int]:
    """Replications in which ``method`` is strictly below ``rival`` per loss."""
    by = {(r.replication, r.method): r for r in reports}
    reps = sorted({r.replication for r in reports})
    out = {}
    for key in ("max_loss", "avg_loss", "gen_loss"):
        out[key] = sum(getattr(by[r, method], key) < getattr(by[r, rival], key) for r in reps)
    return out


# ---------------------------------------------------------------------------
# coverage

@dataclass
class CoverageReport:
    ecp: float
    cil: float
    covered: int
    total: int
    replications: int
    alpha: float
    per_replication: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {"ecp": self.ecp, "cil": self.cil, "covered": self.covered, "total": self.total,
                "replications": self.replications, "alpha": self.alpha}


def population_target(obs: SourceObservations, trim: float) -> np.ndarray:
    """``sum_k w*_k X^(k)`` with the stabilized weights of the latent Gram matrix."""
    if obs.latent is None:
        raise InputError("coverage needs latent trajectories")
    G = oracle_gamma(obs.latent.dX, obs.grid, trim)
    w = stabilized_weights(G.floored, 0.0).omega
    return np.tensordot(w, obs.latent.X, axes=1)


def _coverage_one(config: SimulationConfig, rep: int, alphas, pipeline: PipelineConfig):
    obs = generate_sources(replication_config(config, rep))
    target = population_target(obs, pipeline.trim)
    res = run_pipeline(obs, pipeline, "proposed", for_inference=True, fit=False)
    keep = ~res.trajectory.boundary
    out = []
    for a in alphas:
        band = res.band if a == pipeline.alpha else confidence_band(res.trajectory, a)
        hit = (band.lower <= target) & (target <= band.upper)
        out.append((int(hit[:, keep].sum()), int(hit[:, keep].size), float(2 * band.half_width[:, keep].sum())))
    return out


def coverage_experiment(config: SimulationConfig, replications: int, alpha: float = 0.05,
                        pipeline: PipelineConfig = PipelineConfig(), threads: int | None = None,
                        alphas=None) -> CoverageReport | list[CoverageReport]:
    """Empirical coverage and mean length of the pointwise intervals.

    Counts pool every interior (t, j, replication) triple.  With ``alphas``
    one report per level is returned from the same replications.
    """
    levels = [alpha] if alphas is None else list(alphas)
    pipeline = replace(pipeline, alpha=levels[0])
    per = _map(lambda r: _coverage_one(config, r, levels, pipeline), range(replications), threads)
    reports = []
    for i, a in enumerate(levels):
        hits = np.array([p[i][0] for p in per])
        tot = np.array([p[i][1] for p in per])
        length = sum(p[i][2] for p in per)
        total = int(tot.sum())
        ecp = float(hits.sum() / total) if total else float("nan")
        reports.append(CoverageReport(ecp, length / total if total else float("nan"), int(hits.sum()), total,
                                      replications, a, hits / np.maximum(tot, 1)))
    return reports[0] if alphas is None else reports


# ---------------------------------------------------------------------------
# leave-one-subject-out

@dataclass
class LosoResult:
    subject: str
    trials: list
    losses: dict[str, np.ndarray]  # method -> normalized loss per held-out trial

    def favorable(self, method: str = "proposed", rival: str = "erm") -> tuple[int, int]:
        a, b = self.losses[method], self.losses[rival]
        return int(np.sum(a <= b)), int(a.size)


def leave_one_subject_out(obs: SourceObservations, trials: list[np.ndarray], methods=("proposed", "erm"),
                          pipeline: PipelineConfig = PipelineConfig(), threads: int | None = None,
                          min_trial_points: int = 3) -> list[LosoResult]:
    """Hold out each subject, fit on the rest, score the held-out trials.

    Held-out states and derivatives come from smoothing that subject's own
    series (no latent truth exists for real data).  ``trials[k]`` labels each
    observation of subject ``k``; trials with fewer than ``min_trial_points``
    samples or zero derivative energy are skipped.
    """
    if obs.K < 3:
        raise InputError("leave-one-subject-out needs at least three subjects")
    if len(trials) != obs.K:
        raise LengthMismatch("one trial label vector per subject required")

    def one(k):
        rest = obs.subset([i for i in range(obs.K) if i != k])
        models = {m: fit_method(rest, m, pipeline)[0] for m in methods}
        g = obs.grids[k]
        sm = smooth_source(g.times, obs.Y[k], g, pipeline.smoothing)
        labels = np.asarray(trials[k])
        kept, losses = [], {m: [] for m in methods}
        for lab in dict.fromkeys(labels.tolist()):
            idx = np.nonzero(labels == lab)[0]
            if idx.size < min_trial_points:
                continue
            X, dX = sm.x_hat[:, idx], sm.d_hat[:, idx]
            try:
                vals = {m: _normalized(models[m], X, dX, g.times[idx]) for m in methods}
            except ZeroDenominator:
                continue
            kept.append(lab)
            for m in methods:
                losses[m].append(vals[m])
        return LosoResult(obs.names[k], kept, {m: np.array(v) for m, v in losses.items()})

    return _map(one, range(obs.K), threads)
