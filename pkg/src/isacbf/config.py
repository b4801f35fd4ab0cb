"""TOML scenario and sweep files.

Powers are given in dBm and the SINR threshold in dB; everything is
converted to SI units here and nowhere else.  See ``docs/scenario_schema.md``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Geometry, SystemConfig, drop_users, generate_scenario, reference_geometry

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SWEEP_PARAMS = ("Gamma_dB", "P_dBm", "Nt", "seed")
ALGORITHMS = ("sdr", "sca", "hybrid", "radar", "zf", "bpa")


class ConfigError(ValueError):
    """Invalid file content; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def dbm_to_watt(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


def db_to_linear(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def linear_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


_SYSTEM_KEYS = {
    "M", "N", "K", "Nt", "P_dBm", "P_total_dBm", "Gamma_dB", "fc", "beta", "Ts", "L",
    "sigma_n2_dBm", "sigma_s2_dBm_per_Hz", "seed", "zeta",
}
_GEOMETRY_KEYS = {"preset", "bs_xy", "tmt_xy", "target_xy", "user_xy", "array_axis_deg", "user_seed"}


@dataclass(frozen=True)
class ScenarioSpec:
    """Parsed scenario file; ``build`` draws the random quantities."""

    system: dict
    geometry: dict

    def config(self, **overrides):
        s = {**self.system, **overrides}
        P = s.get("P_dBm", 30.0)
        kw = dict(
            M=int(s["M"]),
            N=int(s["N"]),
            K=int(s["K"]),
            Nt=int(s["Nt"]),
            P=float(dbm_to_watt(P)) if np.isscalar(P) else tuple(dbm_to_watt(P).tolist()),
            Gamma=float(db_to_linear(s.get("Gamma_dB", 20.0))),
            fc=float(s.get("fc", 24e9)),
            beta=float(s.get("beta", 100e6)),
            Ts=None if s.get("Ts") is None else float(s["Ts"]),
            L=int(s.get("L", 256)),
            sigma_n2=float(dbm_to_watt(s.get("sigma_n2_dBm", -94.0))),
            sigma_s2=float(dbm_to_watt(s.get("sigma_s2_dBm_per_Hz", -174.0))),
            seed=int(s.get("seed", 0)),
            P_total=None if s.get("P_total_dBm") is None else float(dbm_to_watt(s["P_total_dBm"])),
            zeta=str(s.get("zeta", "complex")),
        )
        try:
            return SystemConfig(**kw)
        except ValueError as exc:
            raise ConfigError("system", str(exc)) from exc

    def build_geometry(self, cfg):
        g = self.geometry
        user_seed = int(g.get("user_seed", cfg.seed))
        try:
            if g.get("preset", "reference" if "bs_xy" not in g else None) == "reference":
                if cfg.M != 2:
                    raise ConfigError("system.M", "the reference preset has exactly 2 base stations")
                geo = reference_geometry(K=cfg.K, n_tmt=cfg.N, seed=user_seed, user_xy=g.get("user_xy"))
                if "target_xy" in g:
                    geo = geo.with_target(g["target_xy"])
            else:
                for key in ("bs_xy", "tmt_xy", "target_xy"):
                    if key not in g:
                        raise ConfigError(f"geometry.{key}", "required without a preset")
                users = g.get("user_xy")
                if users is None:
                    bs = np.asarray(g["bs_xy"], dtype=float)
                    lo, hi = bs.min(axis=0) - 100.0, bs.max(axis=0) + 100.0
                    users = drop_users(bs, cfg.K, np.random.default_rng(user_seed), area=tuple(zip(lo, hi)))
                axis = g.get("array_axis_deg")
                geo = Geometry(
                    g["bs_xy"], g["tmt_xy"], g["target_xy"], users,
                    None if axis is None else np.deg2rad(axis),
                )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError("geometry", str(exc)) from exc
        if (geo.M, geo.N, geo.K) != (cfg.M, cfg.N, cfg.K):
            raise ConfigError("geometry", f"shape (M, N, K) = {(geo.M, geo.N, geo.K)} does not match system")
        return geo

    def build(self, **overrides):
        cfg = self.config(**overrides)
        return generate_scenario(cfg, self.build_geometry(cfg))

    def digest(self):
        """Short stable hash of the file content (independent of key order)."""
        blob = json.dumps({"system": self.system, "geometry": self.geometry}, sort_keys=True, default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _check_keys(table, allowed, prefix):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{prefix}.{key}", "unknown key")


def _load(path):
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("path", f"no such file {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("syntax", str(exc)) from exc


def parse_scenario(doc):
    """Validate a scenario document (already-parsed TOML)."""
    for key in doc:
        if key not in ("system", "geometry"):
            raise ConfigError(key, "unknown table")
    system = dict(doc.get("system", {}))
    geometry = dict(doc.get("geometry", {}))
    _check_keys(system, _SYSTEM_KEYS, "system")
    _check_keys(geometry, _GEOMETRY_KEYS, "geometry")
    for key in ("M", "N", "K", "Nt"):
        if key not in system:
            raise ConfigError(f"system.{key}", "required")
        if not isinstance(system[key], int) or system[key] < 1:
            raise ConfigError(f"system.{key}", "must be a positive integer")
    spec = ScenarioSpec(system, geometry)
    spec.build_geometry(spec.config())
    return spec


def load_scenario(path):
    return parse_scenario(_load(path))


@dataclass(frozen=True)
class SweepSpec:
    scenario: ScenarioSpec
    param: str
    values: tuple
    algorithms: tuple
    trials: int = 1
    out: str | None = None
    seed: int = 0
    workers: int = 1
    timing: bool = True
    dump: str | None = None
    tol: float | None = None

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_SWEEP_KEYS = {"scenario", "param", "values", "algorithms", "trials", "out", "seed", "workers", "timing", "dump", "tol"}


def parse_sweep(doc, base_dir="."):
    """Validate a sweep document; relative paths are taken from ``base_dir``."""
    doc = dict(doc.get("sweep", doc))
    _check_keys(doc, _SWEEP_KEYS, "sweep")
    if "scenario" not in doc:
        raise ConfigError("scenario", "required")
    scen = doc["scenario"]
    if isinstance(scen, str):
        p = Path(scen)
        scenario = load_scenario(p if p.is_absolute() else Path(base_dir) / p)
    elif isinstance(scen, dict):
        scenario = parse_scenario(scen)
    else:
        raise ConfigError("scenario", "must be a path or an inline table")

    param = doc.get("param")
    if param not in SWEEP_PARAMS:
        raise ConfigError("param", f"must be one of {', '.join(SWEEP_PARAMS)}")
    values = doc.get("values")
    if not isinstance(values, list) or not values:
        raise ConfigError("values", "must be a non-empty list")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise ConfigError("values", "entries must be numbers")
    if param in ("Nt", "seed") and not all(isinstance(v, int) for v in values):
        raise ConfigError("values", f"{param} values must be integers")
    if param == "Nt" and min(values) < 1:
        raise ConfigError("values", "Nt values must be >= 1")

    algos = doc.get("algorithms")
    if not isinstance(algos, list) or not algos:
        raise ConfigError("algorithms", "must be a non-empty list")
    for a in algos:
        if a not in ALGORITHMS:
            raise ConfigError("algorithms", f"unknown algorithm {a!r}")
    trials = doc.get("trials", 1)
    if not isinstance(trials, int) or trials < 1:
        raise ConfigError("trials", "must be a positive integer")
    workers = doc.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers", "must be a positive integer")
    tol = doc.get("tol")
    if tol is not None and not (isinstance(tol, (int, float)) and tol > 0):
        raise ConfigError("tol", "must be positive")
    def _path(key):
        v = doc.get(key)
        if v is None:
            return None
        if not isinstance(v, str):
            raise ConfigError(key, "must be a path")
        p = Path(v)
        return str(p if p.is_absolute() else Path(base_dir) / p)

    return SweepSpec(
        scenario=scenario,
        param=param,
        values=tuple(values),
        algorithms=tuple(algos),
        trials=trials,
        out=_path("out"),
        seed=int(doc.get("seed", scenario.system.get("seed", 0))),
        workers=workers,
        timing=bool(doc.get("timing", True)),
        dump=_path("dump"),
        tol=tol,
    )


def load_sweep(path):
    path = Path(path)
    return parse_sweep(_load(path), base_dir=path.parent)
