"""Successive convex approximation: a sequence of SOCPs with linearised sensing gains.

All programs are written in the normalised units of :mod:`isacbf._common`;
beamformers of BS m are stored divided by ``sqrt(P_m)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic
from ._common import add_crlb_lmis, normalize
from .metrics import crlb_value, sinr_matrix
from .model import BeamformerSet


def _fvar(m, k):
    return f"f[{m},{k}]"


def _conj_dot(v, z):
    """``(Re, Im)`` of ``v^H z`` for a realified vector expression ``z``."""
    re, im = conic.complex_apply(np.conj(v)[None, :], z)
    return re, im


def sensing_matrix(a, K):
    """``A = I_K (x) a^* a^T``, so that ``f_m^H A f_m = sum_k |a^T f_mk|^2``."""
    a = np.asarray(a, dtype=complex)
    return np.kron(np.eye(K), np.outer(a.conj(), a))


def taylor_minorant(A, f, f0):
    """First-order lower bound ``2 Re(f^H A f0) - f0^H A f0`` of ``f^H A f`` (A PSD)."""
    return float(2 * np.real(np.vdot(f, A @ f0)) - np.real(np.vdot(f0, A @ f0)))


@dataclass
class DigitalBlock:
    """Handles to the beamformer variables of a digital SOCP."""

    nz: object
    f: dict

    def values(self, sol):
        M, K, Nt = self.nz.M, self.nz.K, self.nz.Nt
        out = np.zeros((M, K, Nt), dtype=complex)
        for (m, k), expr in self.f.items():
            v = expr.value(sol.x)
            out[m, k] = v[:Nt] + 1j * v[Nt:]
        return out

    def gain_linearization(self, m, f0):
        """Affine ``sum_k 2 Re(conj(a^T f0) a^T f) - |a^T f0|^2`` for BS m."""
        a = self.nz.a[m]
        expr = conic.Affine.constant([0.0])
        for k in range(self.nz.K):
            c0 = a @ f0[m, k]
            re, im = _conj_dot(a.conj(), self.f[m, k])
            expr = expr + 2.0 * (c0.real * re + c0.imag * im) - abs(c0) ** 2
        return expr


def digital_block(prog, nz, sinr=True, rf=None):
    """Add normalised beamformers with power and SOC SINR constraints.

    SINR of user (m, k) becomes ``sqrt(1 + 1/Gamma) Re(g^H f_mk) >= ||[all g^H f_ij ; 1]||``
    together with ``Im(g^H f_mk) = 0``; the rotation is free because phases of
    the beamformers do not change any SINR or the CRLB.

    With ``rf`` (shape ``(M, Nt, N_RF)``) the variables are the digital parts
    ``fbb[m,k]`` and each beamformer is ``rf[m] @ fbb[m,k]``.
    """
    M, K, Nt = nz.M, nz.K, nz.Nt
    if rf is None:
        f = {(m, k): prog.add_variable(_fvar(m, k), 2 * Nt) for m in range(M) for k in range(K)}
    else:
        n_rf = rf.shape[-1]
        f = {
            (m, k): conic.realify(rf[m]) @ prog.add_variable(f"fbb[{m},{k}]", 2 * n_rf)
            for m in range(M)
            for k in range(K)
        }

    for m in range(M):
        prog.add_constraint("soc", conic.vstack([1.0] + [f[m, k] for k in range(K)]), tag="power")
    if nz.P_total is not None:
        parts = [np.sqrt(nz.P_total)] + [np.sqrt(nz.P[m]) * f[m, k] for m in range(M) for k in range(K)]
        prog.add_constraint("soc", conic.vstack(parts), tag="total_power")

    if sinr:
        coef = np.sqrt(1.0 + 1.0 / nz.Gamma)
        for m in range(M):
            for k in range(K):
                d_re, d_im = _conj_dot(nz.g[m, m, k], f[m, k])
                rows = [coef * d_re]
                for i in range(M):
                    for j in range(K):
                        re, im = _conj_dot(nz.g[i, m, k], f[i, j])
                        rows += [re, im]
                rows.append(1.0)
                # a cone is invariant to positive scaling; keep coefficients O(1)
                scale = 1.0 / np.linalg.norm(nz.g[m, m, k])
                prog.add_constraint("soc", conic.vstack(rows) * scale, tag="sinr")
                prog.add_constraint("zero", d_im * scale, tag="phase")
    return DigitalBlock(nz, f)


def build_socp_iteration(sc, f_prev, nz=None):
    """SOCP of one SCA step around ``f_prev`` (physical beamformers, shape ``(M, K, Nt)``).

    Objective ``mu1 + mu2`` in normalised units.
    """
    nz = normalize(sc) if nz is None else nz
    f0 = _normalized(f_prev, nz)
    prog = conic.ConeProgram()
    blk = digital_block(prog, nz)
    q = prog.add_variable("q", nz.M)
    mu = prog.add_variable("mu", 2)
    for m in range(nz.M):
        prog.add_constraint("nonneg", blk.gain_linearization(m, f0) - q[m], tag="gain")
    add_crlb_lmis(prog, [q[m] for m in range(nz.M)], nz.B, mu)
    prog.add_linear_objective(mu.sum())
    return prog, blk


def _normalized(f, nz):
    f = f.f if isinstance(f, BeamformerSet) else np.asarray(f, dtype=complex)
    return f / np.sqrt(nz.P)[:, None, None]


def _physical(f, nz):
    return BeamformerSet(f * np.sqrt(nz.P)[:, None, None])


def phase_normalize(bf, nz):
    """Rotate each ``f_mk`` so that ``g_mmk^H f_mk`` is real and non-negative.

    Neither the SINRs nor the CRLB change; the SOCP pins this phase, so an
    expansion point outside the representative would linearise badly.
    """
    g = np.stack([nz.g[m, m] for m in range(nz.M)])
    d = np.einsum("mkn,mkn->mk", g.conj(), bf.f)
    return bf.rotated(-np.angle(d))


def sinr_feasible(bf, sc, rtol=1e-9):
    return bool(np.all(sinr_matrix(bf, sc) >= sc.config.Gamma * (1 - rtol)))


def min_power_beamformers(sc, nz=None, tol=conic.DEFAULT_TOL):
    """Least-power SINR-feasible beamformers, or ``(None, status)``."""
    nz = normalize(sc) if nz is None else nz
    prog = conic.ConeProgram()
    blk = digital_block(prog, nz)
    for expr in blk.f.values():
        prog.add_quadratic_objective(expr)
    sol = conic.solve(prog, tol=tol)
    if not sol.ok:
        return None, sol.status
    return _physical(blk.values(sol), nz), sol.status


def mrt_init(sc, nz=None, tol=conic.DEFAULT_TOL):
    """Maximum-ratio directions with equal power, falling back to a min-power SOCP.

    Returns ``(beamformers or None, status)``.
    """
    nz = normalize(sc) if nz is None else nz
    g = np.stack([nz.g[m, m] for m in range(nz.M)])
    f = g / np.linalg.norm(g, axis=-1, keepdims=True) / np.sqrt(nz.K)
    bf = _physical(f, nz)
    if sinr_feasible(bf, sc):
        return bf, "mrt"
    bf, status = min_power_beamformers(sc, nz=nz, tol=tol)
    return bf, ("min-power" if bf is not None else status)


@dataclass
class ScaResult:
    """``status`` is ``converged``, ``max-iter`` or ``stalled`` when beamformers exist,
    otherwise the conic status of the failed first step."""

    status: str
    beamformers: BeamformerSet | None
    crlb: float
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    q: np.ndarray | None = None
    mu: np.ndarray | None = None
    init: str = ""
    rejected: float | None = None


def run_sca(sc, init=None, max_iter=30, eps_obj=1e-4, tol=conic.DEFAULT_TOL):
    """Iterate the SCA SOCP until the relative CRLB change drops below ``eps_obj``.

    ``history`` holds the exact CRLB of every accepted iterate, starting with the
    initial point.  A step that would increase the CRLB is discarded and ends
    the run; its CRLB is kept in ``rejected`` so callers can see by how much.
    """
    nz = normalize(sc)
    if init is None:
        bf, how = mrt_init(sc, nz=nz, tol=tol)
        if bf is None:
            return ScaResult(status=how, beamformers=None, crlb=np.inf, init="mrt")
    else:
        bf, how = (init if isinstance(init, BeamformerSet) else BeamformerSet(init)), "given"
    if not bf.satisfies_power(nz.P):
        raise ValueError("initial beamformers exceed the power budget")
    bf = phase_normalize(bf, nz)

    val = crlb_value(bf, sc)
    history = [val]
    q = mu = rejected = None
    status, it = "max-iter", 0
    while it < max_iter:
        prog, blk = build_socp_iteration(sc, bf, nz=nz)
        sol = conic.solve(prog, tol=tol)
        if not sol.ok:
            if it == 0:
                return ScaResult(status=sol.status, beamformers=None, crlb=np.inf, history=history, init=how)
            status = "stalled"
            break
        it += 1
        cand = _physical(blk.values(sol), nz)
        new = crlb_value(cand, sc)
        if not new <= val:
            # no descent left at solver accuracy
            status, rejected = "converged", new
            break
        change = (val - new) / val if np.isfinite(val) else np.inf
        bf, val = cand, new
        q = sol["q"] * nz.P
        mu = sol["mu"] / nz.scale
        history.append(val)
        if change < eps_obj:
            status = "converged"
            break
    return ScaResult(
        status=status,
        beamformers=bf,
        crlb=val,
        history=history,
        iterations=it,
        converged=status == "converged",
        q=q,
        mu=mu,
        init=how,
        rejected=rejected,
    )
