"""Scenario construction: configuration, geometry, steering vectors and channels."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# deployment used in the reference simulations (metres)
REFERENCE_BS_XY = ((80.0, 80.0 * np.sqrt(3.0)), (80.0, -80.0 * np.sqrt(3.0)))
REFERENCE_TMT_XY = ((30.0, 30.0), (30.0, -30.0), (-30.0, 30.0), (-30.0, -30.0))
USER_AREA = ((-100.0, 100.0), (-200.0, 200.0))


class GeometryError(ValueError):
    pass


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SystemConfig:
    """Physical and algorithmic constants of one problem instance (SI units)."""

    M: int
    N: int
    K: int
    Nt: int
    P: float | tuple = 1.0
    Gamma: float = 100.0
    fc: float = 24e9
    beta: float = 100e6
    Ts: float | None = None
    L: int = 256
    sigma_n2: float = 10 ** (-94 / 10) * 1e-3
    sigma_s2: float = 10 ** (-174 / 10) * 1e-3
    seed: int = 0
    P_total: float | None = None
    zeta: str = "complex"

    def __post_init__(self):
        for name in ("M", "N", "K", "Nt", "L"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.Ts is None:
            object.__setattr__(self, "Ts", 1.0 / self.beta)
        if not isinstance(self.P, (int, float)):
            object.__setattr__(self, "P", tuple(float(p) for p in self.P))
            if len(self.P) != self.M:
                raise ValueError("per-BS power list must have M entries")
        for name in ("Gamma", "fc", "beta", "Ts", "sigma_n2", "sigma_s2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if np.any(self.power_budgets <= 0):
            raise ValueError("P must be positive")
        if self.P_total is not None and not self.P_total > 0:
            raise ValueError("P_total must be positive")
        if self.zeta not in ("complex", "real"):
            raise ValueError("zeta must be 'complex' or 'real'")

    @property
    def power_budgets(self):
        """Per-BS power budgets, shape ``(M,)``."""
        if isinstance(self.P, tuple):
            return np.array(self.P, dtype=float)
        return np.full(self.M, float(self.P))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Geometry:
    """Positions in metres.  ``array_axis[m]`` is the direction of BS m's ULA axis."""

    bs_xy: np.ndarray
    tmt_xy: np.ndarray
    target_xy: np.ndarray
    user_xy: np.ndarray
    array_axis: np.ndarray = field(default=None)

    def __post_init__(self):
        bs = _frozen(self.bs_xy).reshape(-1, 2)
        object.__setattr__(self, "bs_xy", bs)
        object.__setattr__(self, "tmt_xy", _frozen(self.tmt_xy).reshape(-1, 2))
        object.__setattr__(self, "target_xy", _frozen(self.target_xy).reshape(2))
        users = _frozen(self.user_xy)
        if users.ndim != 3 or users.shape[0] != bs.shape[0] or users.shape[2] != 2:
            raise GeometryError("user_xy must have shape (M, K, 2)")
        object.__setattr__(self, "user_xy", users)
        axis = np.full(bs.shape[0], -np.pi / 2) if self.array_axis is None else self.array_axis
        object.__setattr__(self, "array_axis", _frozen(np.broadcast_to(axis, (bs.shape[0],))))
        if np.any(self.bs_distances() <= 0) or np.any(self.tmt_distances() <= 0):
            raise GeometryError("target coincides with a BS or TMT")

    @property
    def M(self):
        return self.bs_xy.shape[0]

    @property
    def N(self):
        return self.tmt_xy.shape[0]

    @property
    def K(self):
        return self.user_xy.shape[1]

    def bs_distances(self):
        return np.linalg.norm(self.bs_xy - self.target_xy, axis=1)

    def tmt_distances(self):
        return np.linalg.norm(self.tmt_xy - self.target_xy, axis=1)

    def bearings(self):
        """Angle of the target off each BS array's broadside, in radians."""
        u = (self.target_xy - self.bs_xy) / self.bs_distances()[:, None]
        axis = np.stack([np.cos(self.array_axis), np.sin(self.array_axis)], axis=1)
        return np.arcsin(np.clip(np.sum(u * axis, axis=1), -1.0, 1.0))

    def with_target(self, target_xy):
        return dataclasses.replace(self, target_xy=np.asarray(target_xy, dtype=float))

    def mirrored(self):
        """Reflect every position through the x-axis."""
        flip = np.array([1.0, -1.0])
        return Geometry(
            self.bs_xy * flip, self.tmt_xy * flip, self.target_xy * flip, self.user_xy * flip, -self.array_axis
        )


def steering_vector(theta, Nt):
    """Half-wavelength ULA response, entries ``exp(j*pi*n*sin(theta))``."""
    return np.exp(1j * np.pi * np.arange(Nt) * np.sin(theta))


def steering_derivative(theta, Nt):
    n = np.arange(Nt)
    return 1j * np.pi * n * np.cos(theta) * np.exp(1j * np.pi * n * np.sin(theta))


def propagation_delays(geometry):
    """Bistatic delays ``tau[m, n] = (d_m + d'_n) / c`` in seconds."""
    d_bs = np.linalg.norm(geometry.bs_xy - geometry.target_xy, axis=1)
    d_tmt = np.linalg.norm(geometry.tmt_xy - geometry.target_xy, axis=1)
    if np.any(d_bs <= 0) or np.any(d_tmt <= 0):
        raise GeometryError("zero BS-target or TMT-target distance")
    return (d_bs[:, None] + d_tmt[None, :]) / SPEED_OF_LIGHT


def large_scale_gain(d_bs, d_tmt, fc):
    """Two-way radar fading ``c^2 / (fc^2 (4 pi)^3 d_bs^2 d_tmt^2)``."""
    d_bs = np.asarray(d_bs, dtype=float)
    d_tmt = np.asarray(d_tmt, dtype=float)
    if np.any(d_bs <= 0) or np.any(d_tmt <= 0):
        raise GeometryError("distances must be positive")
    return SPEED_OF_LIGHT**2 / (fc**2 * (4 * np.pi) ** 3 * d_bs**2 * d_tmt**2)


def free_space_gain(d, fc):
    """One-way free-space power gain ``(c / (4 pi fc d))^2``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise GeometryError("distances must be positive")
    return (SPEED_OF_LIGHT / (4 * np.pi * fc * d)) ** 2


def drop_users(bs_xy, K, rng, area=USER_AREA, min_dist=10.0):
    """Uniform user drop inside ``area``; each BS keeps users from its own Voronoi cell."""
    bs_xy = np.asarray(bs_xy, dtype=float)
    M = bs_xy.shape[0]
    (x0, x1), (y0, y1) = area
    out = np.zeros((M, K, 2))
    for m in range(M):
        got = 0
        while got < K:
            p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
            d = np.linalg.norm(bs_xy - p, axis=1)
            if np.argmin(d) == m and d[m] >= min_dist:
                out[m, got] = p
                got += 1
    return out


def reference_geometry(K=4, n_tmt=4, seed=0, user_xy=None):
    """Two BSs, up to four TMTs and a target at the origin; users dropped at random."""
    if not 1 <= n_tmt <= len(REFERENCE_TMT_XY):
        raise ValueError("n_tmt must be between 1 and 4")
    if user_xy is None:
        user_xy = drop_users(REFERENCE_BS_XY, K, np.random.default_rng(seed))
    return Geometry(np.array(REFERENCE_BS_XY), np.array(REFERENCE_TMT_XY[:n_tmt]), np.zeros(2), user_xy)


@dataclass(frozen=True)
class Scenario:
    """One problem instance.

    ``h[i, m, k]`` is the channel from BS ``i`` to user ``k`` of cell ``m``.
    """

    config: SystemConfig
    geometry: Geometry
    h: np.ndarray
    eps: np.ndarray
    theta: np.ndarray
    tau: np.ndarray

    @property
    def steering(self):
        """Steering vectors ``a(theta_m)``, shape ``(M, Nt)``."""
        return np.stack([steering_vector(t, self.config.Nt) for t in self.theta])

    @property
    def delay_fim_gain(self):
        """``8 pi^2 L Ts beta^2 |eps|^2 / sigma_s^2`` per (m, n)."""
        c = self.config
        return 8 * np.pi**2 * c.L * c.Ts * c.beta**2 * np.abs(self.eps) ** 2 / c.sigma_s2

    def with_config(self, **changes):
        """Same realisation with updated scalar parameters (not re-drawn)."""
        cfg = self.config.replace(**changes)
        if cfg.M != self.config.M or cfg.K != self.config.K or cfg.N != self.config.N or cfg.Nt != self.config.Nt:
            raise ValueError("dimensions cannot change without regenerating the scenario")
        return dataclasses.replace(self, config=cfg)


def generate_scenario(config, geometry):
    """Draw radar coefficients and Rayleigh channels from ``config.seed``."""
    if (geometry.M, geometry.N, geometry.K) != (config.M, config.N, config.K):
        raise ValueError("geometry does not match config dimensions")
    rng = np.random.default_rng(config.seed)
    M, N, K, Nt = config.M, config.N, config.K, config.Nt
    d_bs = geometry.bs_distances()
    d_tmt = geometry.tmt_distances()
    F = large_scale_gain(d_bs[:, None], d_tmt[None, :], config.fc)
    if config.zeta == "complex":
        zeta = (rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))) / np.sqrt(2)
    else:
        zeta = rng.standard_normal((M, N)).astype(complex)
    eps = np.sqrt(F) * zeta

    # distance from each BS i to each user (m, k)
    d_user = np.linalg.norm(geometry.bs_xy[:, None, None, :] - geometry.user_xy[None], axis=-1)
    pl = free_space_gain(d_user, config.fc)
    g = (rng.standard_normal((M, M, K, Nt)) + 1j * rng.standard_normal((M, M, K, Nt))) / np.sqrt(2)
    h = np.sqrt(pl)[..., None] * g

    return Scenario(
        config=config,
        geometry=geometry,
        h=_frozen(h, complex),
        eps=_frozen(eps, complex),
        theta=_frozen(geometry.bearings()),
        tau=_frozen(propagation_delays(geometry)),
    )


@dataclass(frozen=True)
class BeamformerSet:
    """Digital beamformers ``f[m, k]``, shape ``(M, K, Nt)``."""

    f: np.ndarray

    def __post_init__(self):
        f = np.array(self.f, dtype=complex)
        if f.ndim != 3:
            raise ValueError("beamformers must have shape (M, K, Nt)")
        f.flags.writeable = False
        object.__setattr__(self, "f", f)

    @classmethod
    def zeros(cls, M, K, Nt):
        return cls(np.zeros((M, K, Nt), dtype=complex))

    def power(self):
        """Transmit power per BS, shape ``(M,)``."""
        return np.sum(np.abs(self.f) ** 2, axis=(1, 2))

    def lifted(self):
        """``F[m, k] = f f^H``, shape ``(M, K, Nt, Nt)``."""
        return np.einsum("mki,mkj->mkij", self.f, self.f.conj())

    def scaled(self, rho):
        return BeamformerSet(np.sqrt(rho) * self.f)

    def rotated(self, phases):
        """Multiply each ``f[m, k]`` by ``exp(j * phases[m, k])``."""
        return BeamformerSet(self.f * np.exp(1j * np.asarray(phases))[..., None])

    def satisfies_power(self, budgets, rtol=1e-6):
        return bool(np.all(self.power() <= np.asarray(budgets) * (1 + rtol)))
