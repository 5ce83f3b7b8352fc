"""CSV/JSON artifacts.  Floats are written with 17 significant digits so every
number read back is bit-identical to the one written."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import HeaderMismatch, InputError, NonMonotoneTime
from .ode_models import SimulationConfig, SourceObservations, TimeGrid
from .smoothing import SmoothedSource, SmoothingConfig

FLOAT_FMT = "%.17g"
ARTIFACT_VERSION = "1"


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_csv(path, header: list[str], columns) -> Path:
    """``columns`` is a list of equal-length sequences, one per header name."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = zip(*columns)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_rows(path, rows: list[dict]) -> Path:
    if not rows:
        raise InputError("no rows to write")
    header = list(rows[0])
    return write_csv(path, header, [[r[k] for r in rows] for k in header])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise HeaderMismatch(f"{path} is empty")
    return [h.strip() for h in rows[0]], [r for r in rows[1:] if r]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # json serializes floats with repr, which round-trips exactly
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n")
    return path


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


# ---------------------------------------------------------------------------
# observations

def source_header(p: int, trial: bool = False) -> list[str]:
    return ["t"] + [f"Y_{j}" for j in range(1, p + 1)] + (["trial"] if trial else [])


def write_source(path, grid: TimeGrid, Y: np.ndarray, trials=None) -> Path:
    Y = np.atleast_2d(Y)
    cols = [grid.times] + list(Y) + ([list(trials)] if trials is not None else [])
    return write_csv(path, source_header(Y.shape[0], trials is not None), cols)


def write_simulation(out_dir, obs: SourceObservations, config: SimulationConfig, latent: bool = True) -> list[Path]:
    """``source_<k>.csv`` per source, optional ``latent_<k>.csv`` and ``meta.json``."""
    out = Path(out_dir)
    paths = []
    width = len(str(obs.K))
    for k, (y, g) in enumerate(zip(obs.Y, obs.grids), start=1):
        paths.append(write_source(out / f"source_{k:0{width}d}.csv", g, y))
        if latent and obs.latent is not None:
            p = obs.p
            head = ["t"] + [f"X_{j}" for j in range(1, p + 1)] + [f"dX_{j}" for j in range(1, p + 1)]
            cols = [g.times] + list(obs.latent.X[k - 1]) + list(obs.latent.dX[k - 1])
            paths.append(write_csv(out / f"latent_{k:0{width}d}.csv", head, cols))
    meta = {"artifact_version": ARTIFACT_VERSION, "command": "simulate", "config": config.to_dict()}
    if obs.latent is not None and obs.latent.mix_weights is not None:
        meta["mix_weights"] = obs.latent.mix_weights
    paths.append(write_json(out / "meta.json", meta))
    return paths


def _parse_source(path: Path):
    header, rows = read_csv(path)
    if not header or header[0] != "t":
        raise HeaderMismatch(f"{path}: first column must be 't'")
    has_trial = header[-1] == "trial"
    ycols = header[1:-1] if has_trial else header[1:]
    if not ycols or ycols != [f"Y_{j}" for j in range(1, len(ycols) + 1)]:
        raise HeaderMismatch(f"{path}: expected columns Y_1..Y_p, got {ycols}")
    try:
        data = np.array([[float(v) for v in r[:len(ycols) + 1]] for r in rows], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from None
    if any(len(r) != len(header) for r in rows):
        raise HeaderMismatch(f"{path}: ragged rows")
    if data.shape[0] < 2:
        raise InputError(f"{path}: need at least two time points")
    trials = [r[-1] for r in rows] if has_trial else None
    return header, data, trials


def ingest_multisubject_csv(directory, pattern: str = "*.csv") -> SourceObservations:
    """One CSV per subject (``t,Y_1..Y_p`` plus an optional ``trial`` column).

    ``directory`` may also be a single subject file.
    Files named ``latent_*`` are skipped.  Each subject keeps its own grid,
    shifted so that it starts at zero.
    """
    directory = Path(directory)
    if directory.is_file():
        files = [directory]
    elif directory.is_dir():
        files = sorted(f for f in directory.glob(pattern) if not f.name.startswith("latent_"))
    else:
        raise InputError(f"no such file or directory: {directory}")
    if not files:
        raise InputError(f"{directory}: no subject CSV files")
    Y, grids, trials, names = [], [], [], []
    ref = None
    for f in files:
        header, data, tr = _parse_source(f)
        ycols = [h for h in header if h.startswith("Y_")]
        if ref is None:
            ref = ycols
        elif ycols != ref:
            raise HeaderMismatch(f"{f}: {len(ycols)} signal columns, expected {len(ref)}")
        t = data[:, 0]
        if not np.all(np.diff(t) > 0):
            raise NonMonotoneTime(f"{f}: time stamps must be strictly increasing")
        t = t - t[0]
        grids.append(TimeGrid(t, float(t[-1])))
        Y.append(data[:, 1:].T.copy())
        trials.append(np.asarray(tr) if tr is not None else None)
        names.append(f.stem)
    any_trials = any(t is not None for t in trials)
    return SourceObservations(Y, grids, None, trials if any_trials else None, names)


def read_latent(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    header, rows = read_csv(path)
    data = np.array([[float(v) for v in r] for r in rows], dtype=float)
    p = (len(header) - 1) // 2
    return data[:, 0], data[:, 1:1 + p].T, data[:, 1 + p:].T


# ---------------------------------------------------------------------------
# smoothed sources and robust trajectories

def write_smoothed(path, s: SmoothedSource) -> Path:
    p = s.p
    head = (["t"] + [f"xhat_{j}" for j in range(1, p + 1)] + [f"dhat_{j}" for j in range(1, p + 1)]
            + [f"sigma_{j}" for j in range(1, p + 1)])
    return write_csv(path, head, [s.eval_grid.times] + list(s.x_hat) + list(s.d_hat) + list(s.sigma_hat))


def read_smoothed(path, config: SmoothingConfig | None = None, n: int | None = None) -> SmoothedSource:
    header, rows = read_csv(path)
    if not header or header[0] != "t" or (len(header) - 1) % 3:
        raise HeaderMismatch(f"{path}: expected t,xhat_1..p,dhat_1..p,sigma_1..p")
    p = (len(header) - 1) // 3
    expect = (["t"] + [f"xhat_{j}" for j in range(1, p + 1)] + [f"dhat_{j}" for j in range(1, p + 1)]
              + [f"sigma_{j}" for j in range(1, p + 1)])
    if header != expect:
        raise HeaderMismatch(f"{path}: expected t,xhat_1..p,dhat_1..p,sigma_1..p")
    data = np.array([[float(v) for v in r] for r in rows], dtype=float)
    t = data[:, 0]
    if not np.all(np.diff(t) > 0):
        raise NonMonotoneTime(f"{path}: time stamps must be strictly increasing")
    grid = TimeGrid(t, float(t[-1]))
    cfg = config or SmoothingConfig()
    return SmoothedSource(data[:, 1:1 + p].T.copy(), data[:, 1 + p:1 + 2 * p].T.copy(),
                          data[:, 1 + 2 * p:].T.copy(), grid, cfg, np.zeros(t.size, dtype=bool),
                          n if n is not None else t.size)


def write_band(path, traj, band) -> Path:
    """Long format ``t, dim, xhat, lo, hi, sigma, dhat`` (one row per time and dimension)."""
    p, m = traj.x_robust.shape
    t = np.tile(traj.eval_grid.times, p)
    dim = np.repeat(np.arange(1, p + 1), m)
    cols = [t, dim, traj.x_robust.ravel(), band.lower.ravel(), band.upper.ravel(), traj.sigma_robust.ravel(),
            traj.d_robust.ravel()]
    return write_csv(path, ["t", "dim", "xhat", "lo", "hi", "sigma", "dhat"], cols)


def read_band(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Times plus (p, m) state and derivative arrays from a ``write_band`` file."""
    header, rows = read_csv(path)
    need = {"t", "dim", "xhat", "dhat"}
    if not need <= set(header):
        raise HeaderMismatch(f"{path}: needs columns {sorted(need)}")
    ix = {h: i for i, h in enumerate(header)}
    data = np.array([[float(v) for v in r] for r in rows], dtype=float)
    dims = data[:, ix["dim"]].astype(int)
    p = int(dims.max())
    t = data[dims == 1, ix["t"]]
    X = np.stack([data[dims == j, ix["xhat"]] for j in range(1, p + 1)])
    D = np.stack([data[dims == j, ix["dhat"]] for j in range(1, p + 1)])
    return t, X, D
