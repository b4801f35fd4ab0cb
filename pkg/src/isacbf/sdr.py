"""Semidefinite relaxation of CRLB-minimising coordinated beamforming."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic
from ._common import add_crlb_lmis, normalize
from .metrics import crlb_report, crlb_value, sinr_matrix
from .model import BeamformerSet

RANK_ONE_TOL = 1e-6
# complementarity has to be driven well below the rank-one tolerance
SDR_TOL = 1e-10


def _fvar(m, k):
    return f"F[{m},{k}]"


def lifted_program(sc, include_sinr=True, nz=None, slack=None, full_power=False):
    """Variables, power, SINR and PSD constraints over the lifted beamformers.

    Returns ``(program, x_exprs, nz)`` with ``x_exprs[m]`` the normalised sensing
    gain of BS m as an affine expression.  ``slack``, if given, is the name of a
    scalar variable subtracted from every normalised SINR row.  With
    ``full_power`` each per-BS budget holds with equality.
    """
    nz = normalize(sc) if nz is None else nz
    M, K, Nt = nz.M, nz.K, nz.Nt
    prog = conic.ConeProgram()
    F = {(m, k): prog.add_hermitian_psd(_fvar(m, k), Nt) for m in range(M) for k in range(K)}
    tr = conic.trace_coeffs(Nt)

    for m in range(M):
        used = sum((tr[None, :] @ F[m, k] for k in range(K)), start=conic.Affine.constant([0.0]))
        prog.add_constraint("zero" if full_power else "nonneg", 1.0 - used, tag="power")
    if nz.P_total is not None:
        total = sum(
            ((nz.P[m] * tr[None, :]) @ F[m, k] for m in range(M) for k in range(K)),
            start=conic.Affine.constant([0.0]),
        )
        prog.add_constraint("nonneg", nz.P_total - total, tag="total_power")

    t = prog.add_variable(slack, 1) if slack else None
    if include_sinr:
        for m in range(M):
            for k in range(K):
                expr = conic.Affine.constant([-1.0]) if t is None else -1.0 - t
                for i in range(M):
                    c = conic.quadform_coeffs(nz.g[i, m, k], Nt)
                    for j in range(K):
                        w = 1.0 / nz.Gamma if (i, j) == (m, k) else -1.0
                        expr = expr + (w * c[None, :]) @ F[i, j]
                # a tiny threshold would put 1/Gamma on the desired term
                prog.add_constraint("nonneg", expr * min(1.0, nz.Gamma), tag="sinr")

    x_exprs = []
    for m in range(M):
        c = conic.quadform_coeffs(nz.a[m].conj(), Nt)
        x_exprs.append(sum((c[None, :] @ F[m, k] for k in range(K)), start=conic.Affine.constant([0.0])))
    return prog, x_exprs, nz


def build_sdp(sc, include_sinr=True):
    """Relaxed CRLB minimisation as a cone program (objective ``s*(mu1 + mu2)``)."""
    prog, x_exprs, nz = lifted_program(sc, include_sinr=include_sinr)
    mu = prog.add_variable("mu", 2)
    add_crlb_lmis(prog, x_exprs, nz.B, mu)
    prog.add_linear_objective(mu.sum())
    return prog


def sinr_margin(sc, tol=SDR_TOL):
    """Largest ``t <= 1`` with every ``|g h|^2/Gamma - interference - 1 >= t`` (noise-normalised).

    This program is always feasible and bounded, so it settles feasibility
    when the main solve stalls near the boundary.  Returns ``(t, solution)``.
    """
    prog, _, _ = lifted_program(sc, slack="t")
    t = prog.var("t")
    prog.add_constraint("nonneg", 1.0 - t, tag="bound")
    prog.add_linear_objective(-t.sum())
    sol = conic.solve(prog, tol=tol)
    return (float(sol["t"][0]) if sol.ok else np.nan), sol


def lifted_from_solution(sol, nz):
    M, K, Nt = nz.M, nz.K, nz.Nt
    F = np.zeros((M, K, Nt, Nt), dtype=complex)
    for m in range(M):
        for k in range(K):
            F[m, k] = nz.P[m] * sol.hermitian(_fvar(m, k))
    return F


def extract_rank_one(F):
    """Principal-eigenvector beamformer ``sqrt(l1) u1`` and the ratio ``l1 / trace``."""
    F = 0.5 * (F + F.conj().T)
    w, V = np.linalg.eigh(F)
    tr = float(np.sum(np.maximum(w, 0.0)))
    if tr <= 0:
        return np.zeros(F.shape[0], dtype=complex), 1.0
    lam = max(w[-1], 0.0)
    return np.sqrt(lam) * V[:, -1], lam / tr


def span_condition(sc, rtol=1e-8):
    """Whether ``a^*(theta_m)`` lies outside the span of BS m's outgoing channels.

    Returns ``(holds, residual)``; both have shape ``(M,)``.
    """
    M = sc.config.M
    a = sc.steering
    holds = np.zeros(M, dtype=bool)
    resid = np.zeros(M)
    for m in range(M):
        H = sc.h[m].reshape(-1, sc.config.Nt).T
        target = a[m].conj()
        U, s, _ = np.linalg.svd(H, full_matrices=False)
        rank = int(np.sum(s > s[0] * 1e-12)) if s.size and s[0] > 0 else 0
        U = U[:, :rank]
        r = target - U @ (U.conj().T @ target)
        resid[m] = np.linalg.norm(r)
        holds[m] = resid[m] > rtol * np.linalg.norm(target)
    return holds, resid


# --------------------------------------------------------------------------
# randomisation
# --------------------------------------------------------------------------


def _channel_gains(nz, u):
    """``G[m, k, i, j] = |g_{i,m,k}^H u_{i,j}|^2`` for unit directions ``u``."""
    return np.abs(np.einsum("imkn,ijn->mkij", nz.g.conj(), u)) ** 2


def gamma_tight_powers(nz, u):
    """Powers (fractions of each BS budget) meeting every SINR with equality.

    Returns None when the directions cannot support the threshold.
    """
    M, K = nz.M, nz.K
    G = _channel_gains(nz, u).reshape(M * K, M * K)
    A = np.diag(np.diag(G) / nz.Gamma) - (G - np.diag(np.diag(G)))
    try:
        p = np.linalg.solve(A, np.ones(M * K))
    except np.linalg.LinAlgError:
        return None
    if np.any(p <= 0):
        return None
    return p.reshape(M, K)


def optimal_powers(nz, u, tol=conic.DEFAULT_TOL, include_sinr=True):
    """Minimise the CRLB over per-beam powers with the directions ``u`` fixed."""
    M, K = nz.M, nz.K
    G = _channel_gains(nz, u)
    sens = np.abs(np.einsum("mn,mkn->mk", nz.a, u)) ** 2
    prog = conic.ConeProgram()
    p = prog.add_variable("p", M * K)
    mu = prog.add_variable("mu", 2)
    prog.add_constraint("nonneg", p, tag="nonneg")
    for m in range(M):
        prog.add_constraint("nonneg", 1.0 - p[m * K : (m + 1) * K].sum(), tag="power")
    if nz.P_total is not None:
        prog.add_constraint("nonneg", nz.P_total - (np.repeat(nz.P, K)[None, :] @ p), tag="total_power")
    if include_sinr:
        for m in range(M):
            for k in range(K):
                row = -G[m, k].reshape(-1).copy()
                row[m * K + k] = G[m, k, m, k] / nz.Gamma
                prog.add_constraint("nonneg", row[None, :] @ p - 1.0, tag="sinr")
    x_exprs = [sens[m][None, :] @ p[m * K : (m + 1) * K] for m in range(M)]
    add_crlb_lmis(prog, x_exprs, nz.B, mu)
    prog.add_linear_objective(mu.sum())
    sol = conic.solve(prog, tol=tol)
    if not sol.ok:
        return None
    return np.maximum(sol["p"], 0.0).reshape(M, K)


@dataclass
class RandomizationResult:
    status: str
    beamformers: BeamformerSet | None
    crlb: float
    feasible_draws: int
    trials: int


def _beamformers(nz, u, pfrac):
    return BeamformerSet(u * np.sqrt(pfrac * nz.P[:, None])[..., None])


def gaussian_randomization(F, sc, trials=200, rng=None, tol=conic.DEFAULT_TOL):
    """Draw ``f ~ CN(0, F)``, re-allocate powers, keep the best feasible draw.

    A rank-one input short-circuits to the eigen-extracted beamformers.
    """
    rng = np.random.default_rng(rng)
    nz = normalize(sc)
    M, K, Nt = nz.M, nz.K, nz.Nt
    ext = [[extract_rank_one(F[m, k]) for k in range(K)] for m in range(M)]
    if min(r for row in ext for _, r in row) >= 1 - RANK_ONE_TOL:
        bf = BeamformerSet(np.array([[f for f, _ in row] for row in ext]))
        return RandomizationResult("rank-one", bf, crlb_value(bf, sc), 1, 0)

    roots = np.zeros((M, K, Nt, Nt), dtype=complex)
    for m in range(M):
        for k in range(K):
            w, V = np.linalg.eigh(0.5 * (F[m, k] + F[m, k].conj().T))
            roots[m, k] = V * np.sqrt(np.maximum(w, 0.0))

    # the principal eigenvectors are always the first candidate
    cands = [np.array([[f for f, _ in row] for row in ext])]
    for _ in range(trials):
        z = (rng.standard_normal((M, K, Nt)) + 1j * rng.standard_normal((M, K, Nt))) / np.sqrt(2)
        cands.append(np.einsum("mkij,mkj->mki", roots, z))

    best, best_val, n_ok = None, np.inf, 0
    for v in cands:
        norms = np.linalg.norm(v, axis=-1)
        if np.any(norms <= 0):
            continue
        u = v / norms[..., None]
        p = gamma_tight_powers(nz, u)
        if p is None:
            continue
        used = p.sum(axis=1)
        if np.any(used > 1.0):
            continue
        # scaling every beam up keeps each SINR at or above the threshold
        alpha = 1.0 / used.max()
        if nz.P_total is not None:
            alpha = min(alpha, nz.P_total / float(np.sum(p.sum(axis=1) * nz.P)))
        if alpha < 1.0:
            continue
        n_ok += 1
        val = nz.crlb_from_gains(np.sum(alpha * p * np.abs(np.einsum("mn,mkn->mk", nz.a, u)) ** 2, axis=1))
        if val < best_val:
            best, best_val = (u, alpha * p), val

    if best is None:
        return RandomizationResult("randomization-failed", None, np.inf, 0, trials)
    u, p = best
    refined = optimal_powers(nz, u, tol=tol)
    if refined is not None:
        bf_ref = _beamformers(nz, u, refined)
        if np.all(sinr_matrix(bf_ref, sc) >= sc.config.Gamma * (1 - 1e-9)):
            p = refined
    bf = _beamformers(nz, u, p)
    return RandomizationResult("randomized", bf, crlb_value(bf, sc), n_ok, trials)


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


@dataclass
class SdrResult:
    status: str
    F: np.ndarray | None = None
    mu: np.ndarray | None = None
    bound: float = np.inf
    crlb_lifted: float = np.inf
    beamformers: BeamformerSet | None = None
    crlb: float = np.inf
    ratios: np.ndarray | None = None
    extraction: str = ""
    solution: conic.ConeSolution | None = field(default=None, repr=False)

    @property
    def rank_one(self):
        return self.ratios is not None and float(self.ratios.min()) >= 1 - RANK_ONE_TOL


def solve_sdr(sc, tol=SDR_TOL, trials=200, rng=None, include_sinr=True):
    """Solve the relaxation and recover beamformers.

    ``include_sinr=False`` gives the radar-only design.  A numerical failure of
    the main solve is re-examined with :func:`sinr_margin`; a clearly negative
    margin is reported as ``"infeasible"``.
    """
    prog, x_exprs, nz = lifted_program(sc, include_sinr=include_sinr)
    mu = prog.add_variable("mu", 2)
    add_crlb_lmis(prog, x_exprs, nz.B, mu)
    prog.add_linear_objective(mu.sum())
    sol = conic.solve(prog, tol=tol)
    if not sol.ok:
        status = sol.status
        if status == "numerical-failure" and include_sinr:
            margin, _ = sinr_margin(sc, tol=tol)
            if margin < -1e-6:
                status = "infeasible"
        return SdrResult(status=status, solution=sol)

    F = lifted_from_solution(sol, nz)
    mu_phys = sol["mu"] / nz.scale
    report = crlb_report(F, sc)
    ext = [[extract_rank_one(F[m, k]) for k in range(nz.K)] for m in range(nz.M)]
    ratios = np.array([[r for _, r in row] for row in ext])

    if ratios.min() >= 1 - RANK_ONE_TOL or not include_sinr:
        if ratios.min() >= 1 - RANK_ONE_TOL:
            bf = BeamformerSet(np.array([[f for f, _ in row] for row in ext]))
            how = "eigen"
        else:
            bf = _matched_split(F, sc)
            how = "matched"
        val = crlb_value(bf, sc)
    else:
        rr = gaussian_randomization(F, sc, trials=trials, rng=rng, tol=tol)
        bf, val, how = rr.beamformers, rr.crlb, rr.status
    status = "optimal" if bf is not None else "randomization-failed"
    return SdrResult(
        status=status,
        F=F,
        mu=mu_phys,
        bound=float(mu_phys.sum()),
        crlb_lifted=report.crlb,
        beamformers=bf,
        crlb=val,
        ratios=ratios,
        extraction=how,
        solution=sol,
    )


def _matched_split(F, sc):
    """Beamformers reproducing each BS's sensing gain and power when SINR is ignored."""
    M, K, Nt = F.shape[:3]
    a = sc.steering
    f = np.zeros((M, K, Nt), dtype=complex)
    for m in range(M):
        R = F[m].sum(axis=0)
        f0, _ = extract_rank_one(R)
        f[m, :] = f0 / np.sqrt(K)
    return BeamformerSet(f)
