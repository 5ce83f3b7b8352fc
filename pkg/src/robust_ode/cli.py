"""Command-line entry point: ``robust-ode <subcommand> ...``.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .dynamics_fit import FittedDynamics, fit_dynamics
from .errors import InputError, RobustODEError
from .evaluation import (benchmark, coverage_experiment, leave_one_subject_out, pairwise_comparison,
                         resolve_threads, summarize, win_counts)
from .gamma import DEFAULT_TRIM, GammaMatrix, estimate_gamma, split_gamma
from .ode_models import SimulationConfig, generate_sources
from .pipeline import METHODS, PipelineConfig, fit_trajectory, run_pipeline
from .robust_trajectory import aggregate, confidence_band
from .smoothing import SmoothingConfig, smooth_source, smooth_sources
from .weights import DEFAULT_CD, FIG1_N, make_weights, select_tolerance, stability_experiment, stabilized_weights


class Stage(Exception):
    """Wraps a library error with the name of the stage that raised it."""

    def __init__(self, stage: str, error: RobustODEError):
        super().__init__(f"{stage}: {error}")
        self.stage = stage
        self.error = error


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except RobustODEError as exc:
        raise Stage(name, exc) from exc


# ---------------------------------------------------------------------------
# shared option groups

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="overridden by ROBUST_ODE_THREADS")
    p.add_argument("--out-dir", type=Path, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def _sim_args(p: argparse.ArgumentParser):
    p.add_argument("--example", choices=("enzyme", "lv"), default="enzyme")
    p.add_argument("--level", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--case", choices=("stable", "unstable"), default="stable")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--noise-sd", type=float, default=None)


def _smooth_args(p: argparse.ArgumentParser):
    p.add_argument("--h", type=float, default=None, help="bandwidth in time units (default: CV)")
    p.add_argument("--auto-h", action="store_true", help="select the bandwidth by leave-one-out CV")
    p.add_argument("--h-se", type=float, default=None)
    p.add_argument("--order", type=int, choices=(1, 2, 3), default=2)
    p.add_argument("--kernel", choices=("gaussian", "epanechnikov"), default="gaussian")
    p.add_argument("--undersmooth", type=float, default=0.7)


def _dn_args(p: argparse.ArgumentParser):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--dn", type=float, default=None, help="fixed tolerance d_n")
    g.add_argument("--auto-dn", action="store_true", help="split-sample tolerance (default)")
    p.add_argument("--cd", type=float, default=DEFAULT_CD)


def _sim_config(a) -> SimulationConfig:
    kw = {"K": a.k, "level": a.level, "case": a.case, "seed": a.seed}
    if a.n is not None:
        kw["n"] = a.n
    if a.noise_sd is not None:
        kw["noise_sd"] = a.noise_sd
    return SimulationConfig.default(a.example, **kw)


def _smoothing(a) -> SmoothingConfig:
    h = None if a.auto_h else a.h
    return SmoothingConfig(h=h, h_se=a.h_se, order=a.order, kernel=a.kernel, undersmooth_factor=a.undersmooth)


def _pipeline_config(a) -> PipelineConfig:
    return PipelineConfig(smoothing=_smoothing(a), trim=getattr(a, "trim", DEFAULT_TRIM), C_d=a.cd,
                          d_n=a.dn, alpha=getattr(a, "alpha", 0.05))


def _out_dir(a, default: Path | None) -> Path:
    d = a.out_dir if a.out_dir is not None else default
    if d is None:
        raise InputError("an output location is required (--out or --out-dir)")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _meta(a, path: Path, **extra):
    """Resolved configuration next to the artifacts; enough to rerun them."""
    args = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(a).items() if k != "func"}
    io.write_json(path, {"artifact_version": io.ARTIFACT_VERSION, "command": a.command, "args": args, **extra})


def _meta_for_file(a, out: Path, **extra):
    target = (a.out_dir / "meta.json") if a.out_dir is not None else out.with_name(out.name + ".meta.json")
    _meta(a, target, **extra)


def _write_table(a, path: Path, rows: list[dict]) -> Path:
    if a.format == "json":
        return io.write_json(path.with_suffix(".json"), rows)
    return io.write_rows(path, rows)


def _load_sources(path: Path):
    return _stage("ingest", io.ingest_multisubject_csv, path)


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(a) -> int:
    cfg = _sim_config(a)
    out = a.out or _out_dir(a, None)
    obs = _stage("simulate", generate_sources, cfg)
    io.write_simulation(out, obs, cfg, latent=not a.no_latent)
    return 0


def cmd_smooth(a) -> int:
    obs = _load_sources(a.input)
    if obs.K != 1:
        raise InputError(f"smooth expects one subject file, got {obs.K}")
    cfg = _smoothing(a)
    g = obs.grids[0]
    s = _stage("smooth", smooth_source, g.times, obs.Y[0], g, cfg)
    io.write_smoothed(a.out, s)
    _meta_for_file(a, a.out, smoothing=s.config.to_dict())
    return 0


def cmd_gamma(a) -> int:
    files = sorted(Path(a.input).glob("*.csv")) if Path(a.input).is_dir() else []
    if not files:
        raise InputError(f"no smoothed CSV files in {a.input}")
    smoothed = [io.read_smoothed(f) for f in files]
    G = _stage("gamma", estimate_gamma, smoothed, a.trim)
    payload = {**G.to_dict(), "sources": [f.stem for f in files]}
    if a.raw is not None:
        obs = _load_sources(a.raw)
        cfg = _smoothing(a)
        if cfg.h is None:
            cfg = replace(cfg, h=smooth_sources(obs, smoothed[0].eval_grid, cfg)[0].config.h)
        g1, g2 = _stage("gamma", split_gamma, obs, cfg, smoothed[0].eval_grid, a.trim)
        payload["split"] = [g1.entries, g2.entries]
        payload["n"] = int(np.median([g.n for g in obs.grids]))
    io.write_json(a.out, payload)
    _meta_for_file(a, a.out)
    return 0


def cmd_weights(a) -> int:
    d = io.read_json(a.gamma)
    if "entries" not in d:
        raise InputError(f"{a.gamma}: no 'entries' matrix")
    G = GammaMatrix(np.asarray(d["entries"], dtype=float), d.get("trim", DEFAULT_TRIM))
    method = a.method
    d_n, tol = a.dn, None
    if method == "stable" and d_n is None:
        if "split" not in d or "n" not in d:
            raise InputError("--auto-dn needs split-sample matrices; rerun `gamma` with --raw")
        tol = _stage("tolerance", select_tolerance, d["split"][0], d["split"][1], G.entries, d["n"], a.cd)
        d_n = tol.d_n
    w = _stage("weights", make_weights, method, G.floored if method == "stable" else G.entries, d_n, a.lam)
    payload = w.to_dict()
    if tol is not None:
        payload["tolerance"] = tol.to_dict()
    io.write_json(a.out, payload)
    _meta_for_file(a, a.out)
    return 0


def cmd_infer(a) -> int:
    obs = _load_sources(a.input)
    cfg = _pipeline_config(a)
    res = _stage("infer", run_pipeline, obs, cfg, "proposed", for_inference=True, fit=False)
    io.write_band(a.out, res.trajectory, res.band)
    _meta_for_file(a, a.out, weights=res.weights.to_dict(), diagnostics=_diag(res))
    return 0


def _diag(res) -> dict:
    d = {"h": res.smoothed[0].config.h, "n": res.trajectory.n}
    if res.tolerance is not None:
        d["tolerance"] = res.tolerance.to_dict()
        h_unit = res.smoothed[0].h_unit
        d["nh_squared_dn"] = (res.trajectory.n * h_unit) ** 2 * res.tolerance.d_n
    return d


def cmd_fit(a) -> int:
    t, X, D = io.read_band(a.input)
    ell = None if a.auto else a.bandwidth
    model = _stage("fit", fit_dynamics, X.T, D.T, t, ell, a.ridge, "cv" if a.auto else "median")
    io.write_json(a.out, model.to_dict())
    _meta_for_file(a, a.out)
    return 0


def _methods(a) -> tuple[str, ...]:
    ms = tuple(a.methods.split(",")) if isinstance(a.methods, str) else tuple(a.methods)
    bad = [m for m in ms if m not in METHODS]
    if bad:
        raise InputError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    return ms


def cmd_evaluate(a) -> int:
    cfg = _sim_config(a)
    out = _out_dir(a, a.out)
    methods = _methods(a)
    reports = _stage("evaluate", benchmark, cfg, a.reps, methods, _pipeline_config(a), a.threads)
    _write_table(a, out / "replications.csv", [r.to_row() for r in reports])
    _write_table(a, out / "summary.csv", summarize(reports))
    extra = {}
    if "proposed" in methods and "erm" in methods:
        extra["proposed_beats_erm"] = win_counts(reports)
    _meta(a, out / "meta.json", simulation=cfg.to_dict(), **extra)
    return 0


def cmd_bench(a) -> int:
    out = _out_dir(a, a.out)
    methods = _methods(a)
    rows, cov_rows = [], []
    for case in ("stable", "unstable"):
        for level in (1, 2, 3):
            cfg = SimulationConfig.default(a.example, K=a.k, level=level, case=case, seed=a.seed,
                                           **({"n": a.n} if a.n else {}))
            reports = _stage("bench", benchmark, cfg, a.reps, methods, _pipeline_config(a), a.threads)
            for r in summarize(reports):
                rows.append({"case": case, "level": level, "K": a.k, **r})
            if a.coverage:
                c = _stage("coverage", coverage_experiment, cfg, a.reps, a.alpha, _pipeline_config(a), a.threads)
                cov_rows.append({"case": case, "level": level, "K": a.k, "ecp": c.ecp, "cil": c.cil})
    _write_table(a, out / "losses.csv", rows)
    if cov_rows:
        _write_table(a, out / "coverage.csv", cov_rows)
    _meta(a, out / "meta.json")
    return 0


def cmd_loso(a) -> int:
    obs = _load_sources(a.input)
    if obs.trials is None or any(t is None for t in obs.trials):
        raise InputError("every subject file needs a 'trial' column for leave-one-subject-out")
    methods = _methods(a)
    res = _stage("loso", leave_one_subject_out, obs, obs.trials, methods, _pipeline_config(a), a.threads)
    rows = []
    for r in res:
        for i, trial in enumerate(r.trials):
            rows.append({"subject": r.subject, "trial": trial, **{m: r.losses[m][i] for m in methods}})
    _write_table(a, a.out, rows)
    summary = {}
    if "proposed" in methods:
        for rival in (m for m in methods if m != "proposed"):
            per = {r.subject: list(r.favorable("proposed", rival)) for r in res if r.trials}
            a_all = np.concatenate([r.losses["proposed"] for r in res])
            b_all = np.concatenate([r.losses[rival] for r in res])
            summary[f"proposed_vs_{rival}"] = {"per_subject": per,
                                               "overall": pairwise_comparison(a_all, b_all) if a_all.size else None}
    _meta_for_file(a, a.out, favorable=summary)
    return 0


def cmd_fig1(a) -> int:
    n_grid = FIG1_N if a.n_grid is None else tuple(int(v) for v in a.n_grid.split(","))
    res = _stage("fig1", stability_experiment, n_grid, seeds=range(a.seed, a.seed + a.seeds), C_d=a.cd)
    _write_table(a, a.out, list(res.rows()))
    _meta_for_file(a, a.out)
    return 0


def cmd_pipeline(a) -> int:
    out = _out_dir(a, a.out)
    if a.input is not None:
        obs = _load_sources(a.input)
        sim = None
    else:
        sim = _sim_config(a)
        obs = _stage("simulate", generate_sources, sim)
    cfg = _pipeline_config(a)
    smoothed = _stage("smooth", smooth_sources, obs, None, cfg.smoothing, for_inference=a.inference)
    names = obs.names or [f"source_{k + 1}" for k in range(obs.K)]
    for name, s in zip(names, smoothed):
        io.write_smoothed(out / "smoothed" / f"{name}.csv", s)
    G = _stage("gamma", estimate_gamma, smoothed, cfg.trim)
    io.write_json(out / "gamma.json", G.to_dict())
    if cfg.d_n is None:
        resolved = replace(cfg.smoothing, h=smoothed[0].config.h)
        g1, g2 = _stage("tolerance", split_gamma, obs, resolved, smoothed[0].eval_grid, cfg.trim)
        n = int(np.median([g.n for g in obs.grids]))
        tol = _stage("tolerance", select_tolerance, g1.entries, g2.entries, G.entries, n, cfg.C_d)
        tol_payload, d_n = tol.to_dict(), tol.d_n
    else:
        tol_payload, d_n = {"C_d": cfg.C_d, "d_n": cfg.d_n, "fixed": True}, cfg.d_n
    io.write_json(out / "tolerance.json", tol_payload)
    w = _stage("weights", stabilized_weights, G.floored, d_n)
    io.write_json(out / "weights.json", w.to_dict())
    traj = _stage("aggregate", aggregate, smoothed, w)
    p, m = traj.x_robust.shape
    io.write_csv(out / "trajectory.csv", ["t"] + [f"x_{j}" for j in range(1, p + 1)]
                 + [f"d_{j}" for j in range(1, p + 1)], [traj.eval_grid.times] + list(traj.x_robust)
                 + list(traj.d_robust))
    band = _stage("confidence_band", confidence_band, traj, cfg.alpha)
    io.write_band(out / "band.csv", traj, band)
    model: FittedDynamics = _stage("fit", fit_trajectory, traj, cfg)
    io.write_json(out / "model.json", model.to_dict())
    _meta(a, out / "meta.json", pipeline=cfg.to_dict(), simulation=None if sim is None else sim.to_dict())
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-ode", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "simulate noisy multi-source trajectories")
    _sim_args(p)
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--no-latent", action="store_true")

    p = add("smooth", cmd_smooth, "local polynomial smoothing of one subject CSV")
    p.add_argument("--in", dest="input", type=Path, required=True)
    _smooth_args(p)
    p.add_argument("--out", type=Path, required=True)

    p = add("gamma", cmd_gamma, "Gram matrix of smoothed derivative curves")
    p.add_argument("--in", dest="input", type=Path, required=True, help="directory of smoothed CSVs")
    p.add_argument("--raw", type=Path, default=None, help="raw subject CSVs for the split-sample pair")
    p.add_argument("--trim", type=float, default=DEFAULT_TRIM)
    _smooth_args(p)
    p.add_argument("--out", type=Path, required=True)

    p = add("weights", cmd_weights, "simplex weights from a Gamma matrix")
    p.add_argument("--gamma", type=Path, required=True)
    p.add_argument("--method", choices=("plugin", "ridge", "stable"), default="stable")
    _dn_args(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--out", type=Path, required=True)

    p = add("infer", cmd_infer, "robust trajectory with pointwise confidence intervals")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--trim", type=float, default=DEFAULT_TRIM)
    _dn_args(p)
    _smooth_args(p)
    p.add_argument("--out", type=Path, required=True)

    p = add("fit", cmd_fit, "gradient-matching fit of a robust trajectory")
    p.add_argument("--in", dest="input", type=Path, required=True, help="CSV written by `infer`")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--bandwidth", type=float, default=None)
    g.add_argument("--auto", action="store_true", help="cross-validate bandwidth and ridge")
    p.add_argument("--ridge", type=float, default=1e-4, help="ridge per sample")
    p.add_argument("--out", type=Path, required=True)

    for name, func, help_ in (("evaluate", cmd_evaluate, "loss benchmark for one configuration"),
                              ("bench", cmd_bench, "loss (and coverage) tables over levels and cases")):
        p = add(name, func, help_)
        _sim_args(p)
        p.add_argument("--reps", type=int, default=100)
        p.add_argument("--methods", default=",".join(METHODS))
        p.add_argument("--alpha", type=float, default=0.05)
        _dn_args(p)
        _smooth_args(p)
        p.add_argument("--out", type=Path, default=None, help="output directory")
        if name == "bench":
            p.add_argument("--coverage", action="store_true")

    p = add("loso", cmd_loso, "leave-one-subject-out comparison on external CSVs")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--methods", default="proposed,erm")
    _dn_args(p)
    _smooth_args(p)
    p.add_argument("--out", type=Path, required=True)

    p = add("fig1", cmd_fig1, "weight-stability experiment with a singular Gamma")
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--cd", type=float, default=DEFAULT_CD)
    p.add_argument("--n-grid", default=None, help="comma-separated sample sizes")
    p.add_argument("--out", type=Path, required=True)

    p = add("pipeline", cmd_pipeline, "all stages, one artifact per stage")
    p.add_argument("--in", dest="input", type=Path, default=None, help="subject CSVs (default: simulate)")
    _sim_args(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--trim", type=float, default=DEFAULT_TRIM)
    p.add_argument("--inference", action="store_true", help="undersmooth for the confidence band")
    _dn_args(p)
    _smooth_args(p)
    p.add_argument("--out", type=Path, default=None, help="output directory")
    return parser


def argv_from_meta(meta: dict, **overrides) -> list[str]:
    """Command line that reproduces the run recorded in a ``meta.json`` payload.

    ``overrides`` replace recorded arguments by destination name, e.g.
    ``out=Path("elsewhere")``.
    """
    command = meta["command"]
    args = {**meta["args"], **{k: (str(v) if isinstance(v, Path) else v) for k, v in overrides.items()}}
    sub = next(a for a in build_parser()._actions if isinstance(a, argparse._SubParsersAction))
    argv = [command]
    for action in sub.choices[command]._actions:
        if not action.option_strings or action.dest not in args:
            continue
        v = args[action.dest]
        if isinstance(action, argparse._StoreTrueAction):
            if v:
                argv.append(action.option_strings[0])
        elif v is not None:
            argv += [action.option_strings[0], str(v)]
    return argv


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    a.threads = resolve_threads(a.threads)
    try:
        return a.func(a)
    except Stage as exc:
        print(f"error [{exc.stage}]: {exc.error}", file=sys.stderr)
        return exc.error.exit_code
    except RobustODEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure ({exc})", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
