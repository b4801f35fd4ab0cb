"""Reference beamformers: radar-only, zero-forcing and beampattern approximation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic, sdr
from ._common import normalize
from .metrics import crlb_value, sinr_matrix
from .model import BeamformerSet, steering_vector

FEASIBLE_RTOL = 1e-9


@dataclass
class BaselineResult:
    algo: str
    beamformers: BeamformerSet | None
    crlb: float
    sinrs: np.ndarray | None
    feasible: bool
    status: str = "optimal"


def _result(algo, bf, sc, status="optimal"):
    if bf is None:
        return BaselineResult(algo, None, np.inf, None, False, status)
    s = sinr_matrix(bf, sc)
    ok = bool(np.all(s >= sc.config.Gamma * (1 - FEASIBLE_RTOL)))
    return BaselineResult(algo, bf, crlb_value(bf, sc), s, ok, status)


def radar_only(sc, tol=sdr.SDR_TOL):
    """CRLB-optimal beamformers with the SINR constraints dropped."""
    res = sdr.solve_sdr(sc, tol=tol, include_sinr=False)
    if res.beamformers is None:
        return _result("radar", None, sc, res.status)
    return _result("radar", res.beamformers, sc)


def zf_directions(sc):
    """Unit-norm ZF directions ``u[m, k]`` nulling every other user of every cell.

    Raises ``np.linalg.LinAlgError`` when a stacked victim matrix is rank deficient.
    """
    M, K, Nt = sc.config.M, sc.config.K, sc.config.Nt
    if Nt < M * K:
        raise np.linalg.LinAlgError(f"zero-forcing needs Nt >= M*K ({Nt} < {M * K})")
    u = np.zeros((M, K, Nt), dtype=complex)
    for m in range(M):
        Hm = sc.h[m].reshape(M * K, Nt).conj()
        s = np.linalg.svd(Hm, compute_uv=False)
        if s[-1] <= s[0] * 1e-12:
            raise np.linalg.LinAlgError(f"victim channels of BS {m} are rank deficient")
        W = np.linalg.pinv(Hm)
        cols = W[:, m * K : (m + 1) * K].T
        u[m] = cols / np.linalg.norm(cols, axis=1, keepdims=True)
    return u


def zf_beamforming(sc):
    """Zero-forcing with SINR-tight powers, leftover budget shared in proportion.

    When the tight powers exceed a budget the beams are scaled down to it and
    the result is flagged infeasible.
    """
    try:
        u = zf_directions(sc)
    except np.linalg.LinAlgError as exc:
        return _result("zf", None, sc, f"rank-deficient: {exc}")
    cfg = sc.config
    M, K = cfg.M, cfg.K
    gain = np.abs(np.einsum("mkn,mkn->mk", np.stack([sc.h[m, m] for m in range(M)]).conj(), u)) ** 2
    p = cfg.Gamma * cfg.sigma_n2 / gain
    P = cfg.power_budgets
    scale = P / p.sum(axis=1)
    if cfg.P_total is not None:
        scale = scale * min(1.0, cfg.P_total / float(np.sum(p.sum(axis=1) * scale)))
    bf = BeamformerSet(u * np.sqrt(p * scale[:, None])[..., None])
    return _result("zf", bf, sc, "optimal" if np.all(scale >= 1) else "infeasible")


def desired_pattern(theta_grid, theta0, halfwidth):
    return (np.abs(theta_grid - theta0) <= halfwidth + 1e-12).astype(float)


def beampattern_approx(sc, grid_size=181, halfwidth_deg=5.0, trials=200, rng=None, tol=sdr.SDR_TOL):
    """Match a rectangular main lobe at each target bearing under SINR and power.

    Minimises ``sum_m sum_theta (alpha d_m(theta) - a(theta)^T sum_k F_mk a(theta)^* / P_m)^2``
    over lifted beamformers and ``alpha >= 0``.  Every BS radiates its full
    budget; with an inequality the fit is won by switching the array off.
    """
    nz = normalize(sc)
    M, K, Nt = nz.M, nz.K, nz.Nt
    grid = np.deg2rad(np.linspace(-90.0, 90.0, grid_size))
    prog, _, _ = sdr.lifted_program(sc, nz=nz, full_power=True)
    alpha = prog.add_variable("alpha", 1)
    prog.add_constraint("nonneg", alpha, tag="alpha")
    coeffs = np.stack([conic.quadform_coeffs(steering_vector(t, Nt).conj(), Nt) for t in grid])
    for m in range(M):
        d = desired_pattern(grid, sc.theta[m], np.deg2rad(halfwidth_deg))
        pattern = sum((coeffs @ prog.hermitian_expr(sdr._fvar(m, k)) for k in range(K)), start=conic.Affine.constant(np.zeros(grid.size)))
        fit = conic.Affine(np.outer(d, alpha.G[0])) - pattern
        # mean squared error relative to the Nt peak; unscaled sums stall the solver
        prog.add_quadratic_objective(fit, weight=1.0 / (grid.size * Nt**2))
    sol = conic.solve(prog, tol=tol)
    if not sol.ok:
        return _result("bpa", None, sc, sol.status)
    F = sdr.lifted_from_solution(sol, nz)
    ext = [[sdr.extract_rank_one(F[m, k]) for k in range(K)] for m in range(M)]
    if min(r for row in ext for _, r in row) >= 1 - sdr.RANK_ONE_TOL:
        bf = BeamformerSet(np.array([[f for f, _ in row] for row in ext]))
        return _result("bpa", bf, sc)
    rr = sdr.gaussian_randomization(F, sc, trials=trials, rng=rng)
    return _result("bpa", rr.beamformers, sc, "optimal" if rr.beamformers is not None else rr.status)
