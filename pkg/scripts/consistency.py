"""Distance of the estimated stabilized weights from their oracle as n grows.

The oracle weights come from the latent derivatives of the unstable design,
whose last source is a convex combination of the others (a singular Gram
matrix).

    python scripts/consistency.py --n 200 2000 --seeds 50 --out results/consistency.csv
"""
import argparse
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from robust_ode import io
from robust_ode.gamma import oracle_gamma
from robust_ode.ode_models import SimulationConfig, generate_sources
from robust_ode.pipeline import run_pipeline
from robust_ode.weights import stabilized_weights


@dataclass
class ConsistencyConfig:
    ns: tuple = (200, 2000)
    seeds: int = 50
    level: int = 2
    K: int = 5
    out: Path = field(default_factory=lambda: Path("results/consistency.csv"))


def weight_error(cfg: ConsistencyConfig, n: int, seed: int) -> float:
    sim = SimulationConfig.default("enzyme", K=cfg.K, level=cfg.level, case="unstable", n=n, seed=seed)
    obs = generate_sources(sim)
    target = stabilized_weights(oracle_gamma(obs.latent.dX, obs.grid).floored, 0.0).omega
    return float(np.linalg.norm(run_pipeline(obs, fit=False).weights.omega - target))


def main(cfg: ConsistencyConfig):
    rows = []
    for n in cfg.ns:
        t0 = time.perf_counter()
        errs = [weight_error(cfg, n, s) for s in range(cfg.seeds)]
        rows += [{"n": n, "seed": s, "weight_error": e} for s, e in enumerate(errs)]
        q25, med, q75 = np.quantile(errs, [0.25, 0.5, 0.75])
        print(f"n={n:<5} median {med:.4f}  IQR [{q25:.4f}, {q75:.4f}]  ({time.perf_counter() - t0:.0f}s)")
    io.write_rows(cfg.out, rows)
    print(f"wrote {cfg.out}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[200, 2000])
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--out", type=Path, default=Path("results/consistency.csv"))
    a = p.parse_args()
    main(ConsistencyConfig(tuple(a.n), a.seeds, out=a.out))
