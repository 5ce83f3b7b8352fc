"""Loss tables (max, average, generalization) for every level and case.

    python scripts/bench.py --example enzyme --k 5 --reps 100 --out results/bench_enzyme.csv
"""
import argparse
import time
from dataclasses import dataclass, field
from pathlib import Path

from robust_ode import io
from robust_ode.evaluation import benchmark, summarize, win_counts
from robust_ode.ode_models import SimulationConfig
from robust_ode.pipeline import METHODS


@dataclass
class BenchConfig:
    example: str = "enzyme"
    K: int = 5
    reps: int = 100
    methods: tuple = METHODS
    levels: tuple = (1, 2, 3)
    cases: tuple = ("stable", "unstable")
    threads: int = 1
    out: Path = field(default_factory=lambda: Path("results/bench.csv"))


def main(cfg: BenchConfig):
    rows = []
    for case in cfg.cases:
        for level in cfg.levels:
            t0 = time.perf_counter()
            sim = SimulationConfig.default(cfg.example, K=cfg.K, level=level, case=case)
            reports = benchmark(sim, cfg.reps, cfg.methods, threads=cfg.threads)
            for r in summarize(reports):
                rows.append({"case": case, "level": level, "K": cfg.K, **r})
            wins = win_counts(reports) if {"proposed", "erm"} <= set(cfg.methods) else {}
            print(f"{case:>8} level {level}: {time.perf_counter() - t0:.0f}s  proposed<erm {wins}")
    io.write_rows(cfg.out, rows)
    print(f"wrote {cfg.out}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--example", choices=("enzyme", "lv"), default="enzyme")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results/bench.csv"))
    a = p.parse_args()
    main(BenchConfig(a.example, a.k, a.reps, tuple(a.methods.split(",")), threads=a.threads, out=a.out))
