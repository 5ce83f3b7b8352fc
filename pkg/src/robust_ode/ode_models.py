"""Benchmark dynamical systems and noisy multi-source data generation.

Two systems are provided: a three-node enzyme regulatory network (negative
feedback loop with a buffering node) and a ten-dimensional Lotka-Volterra
predator-prey system.  Every right-hand side broadcasts over leading axes, so
all sources of a simulation are integrated in a single RK4 sweep.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from .errors import BlowUp, DegenerateDenominator, GridMismatch, InputError, NonFiniteState, UnknownLevel

BLOWUP_LIMIT = 1e8
DENOM_EPS = 1e-12


class Kind(str, enum.Enum):
    ENZYME = "enzyme"
    LOTKA_VOLTERRA = "lv"
    CUSTOM = "custom"


class Level(enum.IntEnum):
    I = 1
    II = 2
    III = 3

    @classmethod
    def parse(cls, value) -> "Level":
        if isinstance(value, Level):
            return value
        if isinstance(value, str):
            key = value.strip().upper()
            if key in cls.__members__:
                return cls[key]
            if key.isdigit():
                value = int(key)
        try:
            return cls(int(value))
        except (TypeError, ValueError):
            raise UnknownLevel(f"unknown heterogeneity level {value!r}") from None


class Case(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "horizon", float(self.horizon))
        if t.ndim != 1 or t.size < 2:
            raise InputError("a time grid needs at least two points")
        if not np.all(np.isfinite(t)):
            raise InputError("time grid contains non-finite values")
        if np.any(np.diff(t) <= 0):
            raise InputError("time grid must be strictly increasing")
        if t[0] != 0.0:
            raise InputError("time grid must start at 0")
        if t[-1] > self.horizon * (1 + 1e-12):
            raise InputError("time grid exceeds its horizon")

    @classmethod
    def uniform(cls, n: int, horizon: float) -> "TimeGrid":
        return cls(np.linspace(0.0, horizon, n), horizon)

    @property
    def n(self) -> int:
        return self.times.size

    def same_as(self, other: "TimeGrid", tol: float = 1e-12) -> bool:
        return (
            self.n == other.n
            and abs(self.horizon - other.horizon) <= tol * max(1.0, self.horizon)
            and bool(np.allclose(self.times, other.times, rtol=0, atol=tol * max(1.0, self.horizon)))
        )


# ---------------------------------------------------------------------------
# right-hand sides

ENZYME_KEYS = ("c0", "c1", "c2", "c3", "c4", "c5", "c6", "C1", "C2", "C3", "C4", "C5", "C6", "ct1", "ct2")
LV_PAIRS = 5


def lv_keys() -> tuple[str, ...]:
    return tuple(f"alpha{i}_{j}" for i in range(1, 5) for j in range(1, LV_PAIRS + 1))


def _check_state(x: np.ndarray, p: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p:
        raise InputError(f"state must have {p} components, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteState("state contains non-finite components")
    return x


def _enzyme_rhs(params: Mapping[str, float]) -> Callable:
    c = {key: np.asarray(params[key], dtype=float) for key in ENZYME_KEYS}
    if any(np.any(c[f"C{m}"] <= 0) for m in range(1, 7)):
        raise InputError("Michaelis-Menten constants must be positive")

    def rhs(x, t=0.0):
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        d11 = (1.0 - x1) + c["C1"]
        d12 = x1 + c["C2"]
        d21 = (1.0 - x2) + c["C3"]
        d22 = x2 + c["C4"]
        d31 = (1.0 - x3) + c["C5"]
        d32 = x3 + c["C6"]
        for d in (d11, d12, d21, d22, d31, d32):
            if np.any(np.abs(d) < DENOM_EPS):
                raise DegenerateDenominator("Michaelis-Menten denominator vanishes")
        f1 = c["c1"] * c["c0"] * (1.0 - x1) / d11 - c["ct1"] * c["c2"] * x1 / d12
        f2 = c["c3"] * (1.0 - x2) * x3 / d21 - c["ct2"] * c["c4"] * x2 / d22
        f3 = c["c5"] * x1 * (1.0 - x3) / d31 - c["c6"] * x2 * x3 / d32
        return np.stack([f1, f2, f3], axis=-1)

    return rhs


def _lv_rhs(params: Mapping[str, float]) -> Callable:
    a = [np.stack([np.asarray(params[f"alpha{i}_{j}"], dtype=float) for j in range(1, LV_PAIRS + 1)], axis=-1)
         for i in range(1, 5)]
    if any(np.any(ai <= 0) for ai in a):
        raise InputError("Lotka-Volterra rates must be positive")
    a1, a2, a3, a4 = a

    def rhs(x, t=0.0):
        prey = x[..., 0::2]
        pred = x[..., 1::2]
        out = np.empty(np.broadcast_shapes(x.shape, a1.shape[:-1] + (2 * LV_PAIRS,)))
        out[..., 0::2] = a1 * prey - a2 * prey * pred
        out[..., 1::2] = a3 * prey * pred - a4 * pred
        return out

    return rhs


def enzyme_dynamics(params: Mapping[str, float], x, t: float = 0.0) -> np.ndarray:
    """Right-hand side of the three-node enzyme network at state ``x``."""
    x = _check_state(x, 3)
    return _enzyme_rhs(params)(x, t)


def lotka_volterra_dynamics(params: Mapping[str, float], x, t: float = 0.0) -> np.ndarray:
    """Right-hand side of the ten-dimensional Lotka-Volterra system at ``x``."""
    x = _check_state(x, 2 * LV_PAIRS)
    return _lv_rhs(params)(x, t)


@dataclass
class DynamicsSpec:
    kind: Kind
    p: int
    params: dict = field(default_factory=dict)
    x0: np.ndarray | None = None
    func: Callable | None = None  # only for Kind.CUSTOM: func(params, x, t)

    def __post_init__(self):
        self.kind = Kind(self.kind)
        if self.kind is Kind.ENZYME and self.p != 3:
            raise InputError("the enzyme network is three-dimensional")
        if self.kind is Kind.LOTKA_VOLTERRA and self.p != 2 * LV_PAIRS:
            raise InputError("the Lotka-Volterra system is ten-dimensional")
        if self.kind is Kind.CUSTOM and self.func is None:
            raise InputError("custom dynamics need a callable")
        if self.x0 is None:
            self.x0 = np.full(self.p, default_initial_value(self.kind))
        self.x0 = np.asarray(self.x0, dtype=float)

    def rhs(self) -> Callable:
        if self.kind is Kind.ENZYME:
            return _enzyme_rhs(self.params)
        if self.kind is Kind.LOTKA_VOLTERRA:
            return _lv_rhs(self.params)
        func, params = self.func, self.params
        return lambda x, t=0.0: np.asarray(func(params, x, t), dtype=float)


def dimension(kind: Kind) -> int:
    return {Kind.ENZYME: 3, Kind.LOTKA_VOLTERRA: 2 * LV_PAIRS}[Kind(kind)]


def default_initial_value(kind: Kind) -> float:
    return {Kind.ENZYME: 0.5, Kind.LOTKA_VOLTERRA: 1.0}.get(Kind(kind), 0.0)


# ---------------------------------------------------------------------------
# heterogeneity schedules


def heterogeneity_params(kind, level, k: int, K: int) -> dict[str, float]:
    """Parameter map of source ``k`` (1-based) under a heterogeneity level.

    Level I gives every source the base parameters.  Levels II and III scale
    them by ``1 + k/40`` and ``1 + k/20`` (enzyme network; the second
    concentration parameter uses ``1 + k/5`` at Level III) or by
    ``1 + k/160`` and ``1 + k/80`` (Lotka-Volterra).
    """
    kind = Kind(kind)
    level = Level.parse(level)
    if k < 1:
        raise InputError("source indices are 1-based")
    if kind is Kind.ENZYME:
        if level is Level.I:
            s = s_ct2 = 1.0
        elif level is Level.II:
            s = s_ct2 = 1.0 + k / 40
        else:
            s, s_ct2 = 1.0 + k / 20, 1.0 + k / 5
        out = {"c0": 1.0 * s, "c4": 1.0 * s, "ct1": 1.0 * s, "ct2": 0.2 * s_ct2}
        for m in (1, 2, 3, 5, 6):
            out[f"c{m}"] = 10.0 * s
        for m in range(1, 7):
            out[f"C{m}"] = 0.1 * s
        return {key: out[key] for key in ENZYME_KEYS}
    if kind is Kind.LOTKA_VOLTERRA:
        s = {Level.I: 1.0, Level.II: 1.0 + k / 160, Level.III: 1.0 + k / 80}[level]
        base = {1: 1.1, 2: 0.4, 3: 0.1, 4: 0.4}
        return {f"alpha{i}_{j}": (base[i] + 0.2 * (j - 1)) * s for i in range(1, 5) for j in range(1, LV_PAIRS + 1)}
    raise InputError("custom dynamics have no heterogeneity schedule")


def stack_params(maps: list[Mapping[str, float]]) -> dict[str, np.ndarray]:
    return {key: np.array([m[key] for m in maps]) for key in maps[0]}


# ---------------------------------------------------------------------------
# integration


def default_max_step(kind) -> float:
    kind = Kind(kind)
    return {Kind.ENZYME: 5e-3, Kind.LOTKA_VOLTERRA: 1e-2}.get(kind, 1e-2)


def substeps_for(grid: TimeGrid, max_step: float) -> int:
    return max(1, int(math.ceil(np.max(np.diff(grid.times)) / max_step - 1e-9)))


def integrate(rhs: Callable, x0, grid: TimeGrid, substeps: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Classical fixed-step RK4 on the grid, ``substeps`` steps per interval.

    ``x0`` may carry leading batch axes; returns ``(X, dX)`` with shape
    ``batch + (p, n)``, where ``dX`` re-evaluates ``rhs`` at the integrated
    states.
    """
    if substeps < 1:
        raise InputError("substeps must be at least 1")
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NonFiniteState("initial state contains non-finite components")
    t = grid.times
    out = np.empty(x.shape + (t.size,))
    deriv = np.empty_like(out)
    out[..., 0] = x
    deriv[..., 0] = rhs(x, t[0])
    for i in range(1, t.size):
        h = (t[i] - t[i - 1]) / substeps
        s = t[i - 1]
        for _ in range(substeps):
            k1 = rhs(x, s)
            k2 = rhs(x + 0.5 * h * k1, s + 0.5 * h)
            k3 = rhs(x + 0.5 * h * k2, s + 0.5 * h)
            k4 = rhs(x + h * k3, s + h)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            s += h
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP_LIMIT:
            raise BlowUp(f"state magnitude exceeded {BLOWUP_LIMIT:g} at t={t[i]:g}")
        out[..., i] = x
        deriv[..., i] = rhs(x, t[i])
    return out, deriv


# ---------------------------------------------------------------------------
# data generation


@dataclass
class SimulationConfig:
    kind: Kind = Kind.ENZYME
    K: int = 5
    level: Level = Level.I
    case: Case = Case.STABLE
    noise_sd: float = 0.01
    grid: TimeGrid | None = None
    seed: int = 0
    max_step: float | None = None

    def __post_init__(self):
        self.kind = Kind(self.kind)
        self.level = Level.parse(self.level)
        self.case = Case(self.case)
        if self.kind is Kind.CUSTOM:
            raise InputError("simulation supports the two benchmark systems only")
        if self.K < 1:
            raise InputError("K must be at least 1")
        if self.case is Case.UNSTABLE and self.K < 2:
            raise InputError("the unstable design needs K >= 2")
        if self.noise_sd < 0:
            raise InputError("noise_sd must be non-negative")
        if self.grid is None:
            n, horizon = (40, 2.0) if self.kind is Kind.ENZYME else (200, 100.0)
            self.grid = TimeGrid.uniform(n, horizon)
        if self.max_step is None:
            self.max_step = default_max_step(self.kind)

    @classmethod
    def default(cls, kind="enzyme", **overrides) -> "SimulationConfig":
        kind = Kind(kind)
        noise = 0.01 if kind is Kind.ENZYME else 1.0
        n = overrides.pop("n", None)
        if n is not None and "grid" not in overrides:
            horizon = 2.0 if kind is Kind.ENZYME else 100.0
            overrides["grid"] = TimeGrid.uniform(n, horizon)
        return cls(kind=kind, noise_sd=overrides.pop("noise_sd", noise), **overrides)

    @property
    def p(self) -> int:
        return dimension(self.kind)

    def with_seed(self, seed: int) -> "SimulationConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "K": self.K,
            "level": int(self.level),
            "case": self.case.value,
            "noise_sd": self.noise_sd,
            "n": self.grid.n,
            "horizon": self.grid.horizon,
            "seed": self.seed,
            "max_step": self.max_step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        return cls(
            kind=d["kind"], K=d["K"], level=d["level"], case=d["case"], noise_sd=d["noise_sd"],
            grid=TimeGrid.uniform(d["n"], d["horizon"]), seed=d["seed"], max_step=d.get("max_step"),
        )


@dataclass
class Latent:
    X: np.ndarray  # (K, p, n)
    dX: np.ndarray  # (K, p, n)
    mix_weights: np.ndarray | None = None  # unstable design: weights of source K on sources 1..K-1


@dataclass
class SourceObservations:
    """Per-source noisy series; ``Y[k]`` has shape ``(p, n_k)`` on ``grids[k]``."""

    Y: list
    grids: list
    latent: Latent | None = None
    trials: list | None = None
    names: list | None = None

    def __post_init__(self):
        if len(self.Y) != len(self.grids) or not self.Y:
            raise InputError("need one grid per source and at least one source")
        self.Y = [np.asarray(y, dtype=float) for y in self.Y]
        p = self.Y[0].shape[0]
        for y, g in zip(self.Y, self.grids):
            if y.ndim != 2 or y.shape[0] != p or y.shape[1] != g.n:
                raise InputError("observation arrays inconsistent with p or n")
            if not np.all(np.isfinite(y)):
                raise InputError("observations contain non-finite entries")

    @classmethod
    def from_array(cls, Y: np.ndarray, grid: TimeGrid, latent: Latent | None = None) -> "SourceObservations":
        return cls(Y=list(np.asarray(Y, dtype=float)), grids=[grid] * len(Y), latent=latent)

    @property
    def K(self) -> int:
        return len(self.Y)

    @property
    def p(self) -> int:
        return self.Y[0].shape[0]

    @property
    def shared_grid(self) -> bool:
        return all(g.same_as(self.grids[0]) for g in self.grids[1:])

    @property
    def grid(self) -> TimeGrid:
        if not self.shared_grid:
            raise GridMismatch("sources do not share a time grid")
        return self.grids[0]

    def stacked(self) -> np.ndarray:
        self.grid  # noqa: B018 - validates the shared grid
        return np.stack(self.Y)

    def subset(self, index) -> "SourceObservations":
        index = list(index)
        latent = None
        if self.latent is not None:
            latent = Latent(self.latent.X[index], self.latent.dX[index], None)
        pick = lambda xs: None if xs is None else [xs[i] for i in index]  # noqa: E731
        return SourceObservations([self.Y[i] for i in index], [self.grids[i] for i in index], latent,
                                  pick(self.trials), pick(self.names))


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream; identical draws on every platform."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def _params_for(config: SimulationConfig, indices) -> dict[str, np.ndarray]:
    return stack_params([heterogeneity_params(config.kind, config.level, k, config.K) for k in indices])


def latent_paths(config: SimulationConfig, grid: TimeGrid | None = None, mix_weights=None,
                 heldout: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free states and derivatives of every source on ``grid``.

    With ``heldout`` the future source ``K+1`` (Stable-style parameters with
    index ``K+1``) is appended as the last row.
    """
    grid = config.grid if grid is None else grid
    K = config.K
    base = K - 1 if config.case is Case.UNSTABLE else K
    indices = list(range(1, base + 1)) + ([K + 1] if heldout else [])
    rhs = _enzyme_rhs if config.kind is Kind.ENZYME else _lv_rhs
    f = rhs(_params_for(config, indices))
    x0 = np.full((len(indices), config.p), default_initial_value(config.kind))
    X, dX = integrate(f, x0, grid, substeps_for(grid, config.max_step))
    if config.case is Case.UNSTABLE:
        if mix_weights is None:
            raise InputError("the unstable design needs its mixing weights")
        w = np.asarray(mix_weights, dtype=float)
        comb_X = np.tensordot(w, X[:base], axes=1)[None]
        comb_dX = np.tensordot(w, dX[:base], axes=1)[None]
        X = np.concatenate([X[:base], comb_X, X[base:]])
        dX = np.concatenate([dX[:base], comb_dX, dX[base:]])
    return X, dX


def generate_sources(config: SimulationConfig) -> SourceObservations:
    """Simulate ``K`` noisy sources; reproducible from ``config.seed``."""
    rng = make_rng(config.seed)
    mix = None
    if config.case is Case.UNSTABLE:
        mix = rng.dirichlet(np.ones(config.K - 1))
    X, dX = latent_paths(config, mix_weights=mix)
    noise = rng.standard_normal(X.shape)
    Y = X + config.noise_sd * noise if config.noise_sd > 0 else X.copy()
    return SourceObservations.from_array(Y, config.grid, Latent(X, dX, mix))
