"""Weight stability under a singular Gram matrix: loss curves per tolerance rule.

    python scripts/fig1.py --seeds 50 --out results/fig1.csv
"""
import argparse
import time
from dataclasses import dataclass
from pathlib import Path

from robust_ode import io
from robust_ode.weights import FIG1_N, stability_experiment

RULES = ("plugin", "1/n^2", "log(n)/n", "1/log(n)", "adaptive")


@dataclass
class Fig1Config:
    seeds: int = 50
    C_d: float = 0.01
    out: Path = Path("results/fig1.csv")


def main(cfg: Fig1Config):
    t0 = time.perf_counter()
    res = stability_experiment(FIG1_N, RULES, range(cfg.seeds), cfg.C_d)
    io.write_rows(cfg.out, list(res.rows()))
    for rule in RULES:
        curve = res.curve(rule)
        print(f"{rule:>10}  n=100: {curve[100]:.4f}  n=20000: {curve[20000]:.4f}")
    print(f"wrote {cfg.out} in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--cd", type=float, default=0.01)
    p.add_argument("--out", type=Path, default=Fig1Config.out)
    a = p.parse_args()
    main(Fig1Config(a.seeds, a.cd, a.out))
