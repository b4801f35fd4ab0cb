"""Beampatterns of BS 1 on the reference deployment, written to results/beampattern.csv.

    python3 demos/beampattern.py
"""
from pathlib import Path

import numpy as np

from isacbf import bench
from isacbf.config import load_scenario

ROOT = Path(__file__).resolve().parents[1]


def main():
    sc = load_scenario(ROOT / "scenarios" / "reference.toml").build()
    out = ROOT / "results" / "beampattern.csv"
    out.parent.mkdir(exist_ok=True)
    algos = ["sdr", "radar", "zf", "bpa"]
    angles, cols = bench.emit_beampattern(sc, algos, out=out)
    print(f"target bearing from BS 1: {np.rad2deg(sc.theta[0]):.1f} deg")
    at = np.argmin(np.abs(angles - np.rad2deg(sc.theta[0])))
    for algo in algos:
        p = cols[algo]
        rel = 10 * np.log10(p[at] / p.max())
        print(f"{algo:6s} peak {angles[np.argmax(p)]:6.1f} deg, target-to-peak ratio {rel:5.1f} dB")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
