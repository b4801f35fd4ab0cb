"""Solve one desk-scale scenario with every algorithm and print a comparison.

    python3 demos/quickstart.py [seed]
"""
import sys
from pathlib import Path

from isacbf import bench
from isacbf.config import load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main(seed=0):
    sc = load_scenario(ROOT / "scenarios" / "desk.toml").build(seed=seed)
    cfg = sc.config
    print(f"scenario {bench.scenario_hash(sc)}: M={cfg.M} N={cfg.N} K={cfg.K} Nt={cfg.Nt}, Gamma={cfg.Gamma:g}")
    print(f"{'algo':7s} {'status':12s} {'crlb_m2':>12s} {'rmse_m':>8s} {'min_sinr_dB':>12s} {'wall_s':>7s}")
    for algo in bench.SOLVERS:
        o = bench.solve(sc, algo, rng=seed)
        rmse = o.crlb**0.5
        print(f"{algo:7s} {o.status[:12]:12s} {o.crlb:12.4e} {rmse:8.4f} {o.min_sinr_db:12.2f} {o.wall_s:7.2f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
