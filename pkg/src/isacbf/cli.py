"""Command line interface: ``isacbf {solve,sweep,beampattern,validate}``."""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bench, checks
from .config import ALGORITHMS, ConfigError, load_scenario, load_sweep


def _scenario(args):
    spec = load_scenario(args.scenario)
    over = {} if args.seed is None else {"seed": args.seed}
    return spec.build(**over)


def cmd_solve(args):
    sc = _scenario(args)
    o = bench.solve(sc, args.algo, tol=args.tol, rng=args.seed)
    print(f"algorithm      {o.algo}")
    print(f"scenario_hash  {bench.scenario_hash(sc)}")
    print(f"status         {o.status}")
    if o.beamformers is None:
        print("no beamformers returned")
        return 1
    rep = o.report
    np.set_printoptions(precision=6)
    print(f"crlb_m2        {o.crlb:.9g}")
    print(f"localizable    {rep.localizable}")
    print(f"loc_fim        {rep.loc_fim.ravel()}")
    print(f"min_sinr_db    {o.min_sinr_db:.4f}")
    print(f"power_w        {o.power_w}")
    print(f"wall_s         {o.wall_s:.3f}")
    if args.out:
        bench.write_beamformers(args.out, [(args.algo, o.beamformers)])
        print(f"beamformers -> {args.out}")
    return 0


def cmd_sweep(args):
    spec = load_sweep(args.spec)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.tol is not None:
        changes["tol"] = args.tol
    if args.no_timing:
        changes["timing"] = False
    if args.dump:
        changes["dump"] = args.dump
    spec = spec.replace(**changes)
    out = args.out or spec.out
    res = bench.run_sweep(spec, out=out, workers=args.workers)
    for algo in spec.algorithms:
        meds = ", ".join(f"{v}: {res.median(algo, v):.4g}" for v in spec.values)
        print(f"{algo:7s} median crlb_m2  {meds}")
    if res.csv_path is not None:
        print(f"{len(res.rows)} rows -> {res.csv_path}")
    return 0


def cmd_beampattern(args):
    sc = _scenario(args)
    algos = args.algo or ["sdr", "radar", "zf", "bpa"]
    angles, cols = bench.emit_beampattern(sc, algos, out=args.out, bs=args.bs - 1, tol=args.tol, rng=args.seed)
    for algo in algos:
        p = cols[algo]
        peak = "n/a" if np.all(np.isnan(p)) else f"{angles[np.nanargmax(p)]:.1f} deg"
        print(f"{algo:7s} peak at {peak}")
    if args.out:
        print(f"{len(angles)} angles -> {args.out}")
    return 0


def cmd_validate(args):
    results = checks.run_all()
    for c in results:
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.name:18s} {c.detail}")
    return 0 if all(c.ok for c in results) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="isacbf", description="Coordinated ISAC beamforming for CRLB minimisation.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one scenario with one algorithm")
    s.add_argument("--scenario", required=True, help="scenario TOML file")
    s.add_argument("--algo", choices=ALGORITHMS, default="sdr")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.add_argument("--out", help="write the beamformers as a binary dump")
    s.add_argument("--tol", type=float, help="conic solver tolerance")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", help="run a parameter sweep from a SweepSpec file")
    s.add_argument("spec", help="sweep TOML file")
    s.add_argument("--seed", type=int, help="override the base seed")
    s.add_argument("--out", help="results CSV (overrides the sweep file)")
    s.add_argument("--tol", type=float)
    s.add_argument("--workers", type=int, help="worker processes (default from spec, else 1)")
    s.add_argument("--dump", help="binary dump of every solution")
    s.add_argument("--no-timing", action="store_true", help="write wall_s = 0 for byte-stable output")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("beampattern", help="per-angle transmit pattern of one BS")
    s.add_argument("--scenario", required=True)
    s.add_argument("--algo", choices=ALGORITHMS, action="append", help="repeat for several algorithms")
    s.add_argument("--bs", type=int, default=1, help="1-based BS index (default 1)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="beampattern CSV")
    s.add_argument("--tol", type=float)
    s.set_defaults(func=cmd_beampattern)

    s = sub.add_parser("validate", help="FIM oracle and invariant checks")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "tol", None) is not None and not args.tol > 0:
        parser.error("--tol must be positive")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"isacbf: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
