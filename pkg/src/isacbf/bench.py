"""Experiment harness: algorithm dispatch, sweeps, CSV and binary output."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, hybrid, sca, sdr
from .config import ALGORITHMS, ConfigError, SweepSpec, linear_to_db
from .metrics import beampattern, crlb_report, sinr_matrix
from .model import BeamformerSet

CSV_HEADER = (
    "scenario_hash", "seed", "algo", "param", "value", "crlb_m2", "min_sinr_db", "power_w", "status", "wall_s",
)
DUMP_MAGIC = b"ISACBF\x00\x01"
BEAMPATTERN_GRID = 181


@dataclass
class Outcome:
    """Result of one algorithm on one scenario, in physical units."""

    algo: str
    status: str
    beamformers: BeamformerSet | None
    crlb: float = np.inf
    min_sinr_db: float = np.nan
    power_w: np.ndarray | None = None
    wall_s: float = 0.0
    report: object = field(default=None, repr=False)
    detail: object = field(default=None, repr=False)


def _run_sdr(sc, tol, rng):
    r = sdr.solve_sdr(sc, tol=tol or sdr.SDR_TOL, rng=rng)
    return r.status, r.beamformers, r


def _run_sca(sc, tol, rng):
    r = sca.run_sca(sc, tol=tol or sca.conic.DEFAULT_TOL)
    status = "optimal" if r.beamformers is not None else r.status
    return status, r.beamformers, r


def _run_hybrid(sc, tol, rng):
    r = hybrid.run_admm(sc, rng=rng, tol=tol or hybrid.conic.DEFAULT_TOL)
    ok = r.hybrid is not None
    status = ("optimal" if r.converged else r.status) if ok else r.status
    return status, r.beamformers, r


def _run_radar(sc, tol, rng):
    r = baselines.radar_only(sc, tol=tol or sdr.SDR_TOL)
    return r.status, r.beamformers, r


def _run_zf(sc, tol, rng):
    r = baselines.zf_beamforming(sc)
    return r.status, r.beamformers, r


def _run_bpa(sc, tol, rng):
    r = baselines.beampattern_approx(sc, rng=rng, tol=tol or sdr.SDR_TOL)
    return r.status, r.beamformers, r


SOLVERS = {
    "sdr": _run_sdr,
    "sca": _run_sca,
    "hybrid": _run_hybrid,
    "radar": _run_radar,
    "zf": _run_zf,
    "bpa": _run_bpa,
}


def solve(sc, algo, tol=None, rng=None):
    """Run one algorithm and evaluate its beamformers with the metrics module."""
    if algo not in SOLVERS:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
    t0 = time.perf_counter()
    status, bf, detail = SOLVERS[algo](sc, tol, np.random.default_rng(rng))
    wall = time.perf_counter() - t0
    if bf is None:
        return Outcome(algo, status, None, wall_s=wall, detail=detail)
    rep = crlb_report(bf, sc)
    return Outcome(
        algo,
        status,
        bf,
        crlb=rep.crlb,
        min_sinr_db=float(linear_to_db(sinr_matrix(bf, sc).min())),
        power_w=bf.power(),
        wall_s=wall,
        report=rep,
        detail=detail,
    )


def scenario_hash(sc):
    """Digest of the configuration and every drawn quantity of a scenario."""
    h = hashlib.sha256()
    cfg = {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(sc.config).items()}
    h.update(json.dumps(cfg, sort_keys=True).encode())
    for arr in (sc.geometry.bs_xy, sc.geometry.tmt_xy, sc.geometry.target_xy, sc.geometry.user_xy, sc.h, sc.eps):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


# -- sweeps -------------------------------------------------------------------


def scenario_seed(base, trial):
    """Seed of the channel realisation; shared by every point of a sweep."""
    return int(base) + int(trial)


def algorithm_seed(base, point, trial):
    """Seed of the algorithm's own randomness at one (point, trial)."""
    return int(np.random.SeedSequence([int(base), int(point), int(trial)]).generate_state(1)[0])


@dataclass(frozen=True)
class Task:
    point: int
    trial: int
    value: float


def _overrides(param, value):
    if param in ("Nt", "seed"):
        return {param: int(value)}
    return {param: float(value)}


def _run_task(spec: SweepSpec, task: Task):
    base = int(task.value) if spec.param == "seed" else spec.seed
    seed = scenario_seed(base, task.trial)
    over = _overrides(spec.param, task.value)
    over["seed"] = seed
    rows, dumps = [], []
    try:
        sc = spec.scenario.build(**over)
    except (ValueError, ConfigError) as exc:
        for algo in spec.algorithms:
            rows.append(_row("", seed, algo, spec, task.value, Outcome(algo, f"scenario-error: {exc}", None)))
        return rows, dumps
    digest = scenario_hash(sc)
    rng_seed = algorithm_seed(spec.seed, task.point, task.trial)
    for algo in spec.algorithms:
        try:
            out = solve(sc, algo, tol=spec.tol, rng=rng_seed)
        except Exception as exc:  # a failed point is recorded, never fatal
            out = Outcome(algo, f"error: {type(exc).__name__}: {exc}", None)
        if not spec.timing:
            out.wall_s = 0.0
        rows.append(_row(digest, seed, algo, spec, task.value, out))
        if out.beamformers is not None:
            dumps.append((f"{algo}|{spec.param}={_fmt(task.value)}|seed={seed}", out.beamformers))
    return rows, dumps


def _row(digest, seed, algo, spec, value, out):
    power = "" if out.power_w is None else ";".join(_fmt(p) for p in out.power_w)
    return {
        "scenario_hash": digest,
        "seed": seed,
        "algo": algo,
        "param": spec.param,
        "value": _fmt(value),
        "crlb_m2": _fmt(out.crlb),
        "min_sinr_db": _fmt(out.min_sinr_db),
        "power_w": power,
        "status": out.status,
        "wall_s": _fmt(out.wall_s),
    }


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


@dataclass
class SweepResult:
    rows: list
    medians: dict
    csv_path: Path | None = None
    dump_path: Path | None = None

    def median(self, algo, value):
        return self.medians[algo, _fmt(value)]


def aggregate(rows):
    """Median CRLB per (algorithm, value); failed trials count as ``inf``."""
    groups = {}
    for r in rows:
        groups.setdefault((r["algo"], r["value"]), []).append(float(r["crlb_m2"]))
    return {k: float(np.median(v)) for k, v in groups.items()}


def run_sweep(spec: SweepSpec, out=None, workers=None):
    """Run every (value, trial, algorithm) combination of ``spec``.

    Points are distributed over ``workers`` processes (default ``spec.workers``);
    rows are written by this process in task order, so the file does not
    depend on the pool size.
    """
    if not spec.values:
        raise ConfigError("values", "must be a non-empty list")
    if not spec.algorithms:
        raise ConfigError("algorithms", "must be a non-empty list")
    tasks = [Task(i, t, v) for i, v in enumerate(spec.values) for t in range(spec.trials)]
    workers = spec.workers if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_task, [spec] * len(tasks), tasks))
    else:
        results = [_run_task(spec, t) for t in tasks]
    rows = [r for rs, _ in results for r in rs]
    dumps = [d for _, ds in results for d in ds]

    out = out if out is not None else spec.out
    res = SweepResult(rows, aggregate(rows))
    if out is not None:
        res.csv_path = Path(out)
        res.csv_path.write_text(format_csv(rows))
    if spec.dump is not None:
        res.dump_path = Path(spec.dump)
        write_beamformers(res.dump_path, dumps)
    return res


def format_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- beampattern --------------------------------------------------------------


def emit_beampattern(sc, algorithms, out=None, bs=0, grid_size=BEAMPATTERN_GRID, tol=None, rng=0):
    """Transmit beampattern of BS ``bs`` for each algorithm on a uniform angle grid.

    Returns ``(angles_deg, {algo: pattern})``; with ``out`` a CSV with column
    ``angle_deg`` and one column per algorithm is written.  Algorithms without
    a solution get a column of NaN.
    """
    if not algorithms:
        raise ConfigError("algorithms", "must be a non-empty list")
    angles = np.linspace(-90.0, 90.0, grid_size)
    grid = np.deg2rad(angles)
    cols = {}
    for algo in algorithms:
        o = solve(sc, algo, tol=tol, rng=rng)
        cols[algo] = np.full(grid_size, np.nan) if o.beamformers is None else beampattern(o.beamformers, grid)[bs]
    if out is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["angle_deg", *algorithms])
        for i, a in enumerate(angles):
            w.writerow([_fmt(a), *(_fmt(cols[algo][i]) for algo in algorithms)])
        Path(out).write_text(buf.getvalue())
    return angles, cols


# -- binary beamformer dump -----------------------------------------------------
#
# layout (little endian):
#   magic[8]  uint32 record_count
#   per record: uint32 tag_len, tag bytes (utf-8), uint32 M, K, Nt,
#               M*K*Nt pairs of float64 (re, im) in (m, k, n) order


def write_beamformers(path, records):
    """Write ``[(tag, BeamformerSet), ...]`` to ``path``."""
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<I", len(records)))
        for tag, bf in records:
            f = bf.f if isinstance(bf, BeamformerSet) else np.asarray(bf, dtype=complex)
            t = tag.encode()
            fh.write(struct.pack("<I", len(t)))
            fh.write(t)
            fh.write(struct.pack("<III", *f.shape))
            fh.write(np.ascontiguousarray(f, dtype="<c16").tobytes())


def read_beamformers(path):
    data = Path(path).read_bytes()
    if data[:8] != DUMP_MAGIC:
        raise ValueError("not a beamformer dump")
    (count,) = struct.unpack_from("<I", data, 8)
    pos, out = 12, []
    for _ in range(count):
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tag = data[pos : pos + n].decode()
        pos += n
        shape = struct.unpack_from("<III", data, pos)
        pos += 12
        size = int(np.prod(shape))
        f = np.frombuffer(data, dtype="<c16", count=size, offset=pos).reshape(shape)
        pos += 16 * size
        out.append((tag, BeamformerSet(f)))
    return out
