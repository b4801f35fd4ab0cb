"""ADMM hybrid beamforming with unit-modulus analog precoders.

Every BS m transmits ``F_RF[m] @ F_BB[m]`` where ``F_RF[m]`` is ``Nt x N_RF``
with unit-modulus entries.  An auxiliary fully digital copy ``T`` carries the
SINR and power constraints, ``q`` carries the sensing gains, and scaled duals
``D`` and ``b`` tie them to the hybrid product and to ``a^T T T^H a^*``.

Quantities inside :class:`HybridState` are in the normalised units of
:mod:`isacbf._common`.  ``rho1`` weighs the sensing-gain penalty and ``rho2``
the hybrid-product penalty.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import conic
from ._common import Normalized, add_crlb_lmis, normalize
from .metrics import crlb_value, sinr_matrix
from .model import BeamformerSet
from .sca import _conj_dot, digital_block, run_sca

PINV_RCOND = 1e-10


def _nz(x):
    return x if isinstance(x, Normalized) else normalize(x)


def sensing_gains(T, a):
    """``a_m^T T_m T_m^H a_m^*`` per BS for ``T`` of shape ``(M, K, Nt)``."""
    return np.sum(np.abs(np.einsum("mn,mkn->mk", a, T)) ** 2, axis=1)


def schur_mu(q, B):
    """``mu_i = [J^-1]_ii`` with ``J = sum_m q_m B_m``."""
    J = np.tensordot(q, B, axes=1)
    return np.diag(np.linalg.inv(J)).copy()


@dataclass(frozen=True)
class HybridState:
    T: np.ndarray  # (M, K, Nt) auxiliary digital beamformers
    F_RF: np.ndarray  # (M, Nt, N_RF)
    F_BB: np.ndarray  # (M, N_RF, K)
    q: np.ndarray  # (M,)
    mu: np.ndarray  # (2,)
    D: np.ndarray  # (M, Nt, K)
    b: np.ndarray  # (M,)
    rho1: float = 1.0
    rho2: float = 1.0
    iteration: int = 0

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def T_mats(self):
        """``T_m = [t_m1, ..., t_mK]``, shape ``(M, Nt, K)``."""
        return np.swapaxes(self.T, 1, 2)

    def product(self):
        return self.F_RF @ self.F_BB

    def residual_D(self):
        """``sum_m ||T_m - F_RF,m F_BB,m||^2``."""
        return float(np.sum(np.abs(self.T_mats - self.product()) ** 2))

    def residual_b(self, a):
        """``sum_m |q_m - a^T T_m T_m^H a^*|^2``."""
        return float(np.sum((self.q - sensing_gains(self.T, a)) ** 2))

    def lagrangian(self, a):
        pen_q = np.sum((self.q - sensing_gains(self.T, a) + self.b) ** 2)
        pen_t = np.sum(np.abs(self.T_mats - self.product() + self.D) ** 2)
        return float(self.mu.sum() + 0.5 * self.rho1 * pen_q + 0.5 * self.rho2 * pen_t)


# --------------------------------------------------------------------------
# subproblem 1: auxiliary digital beamformers
# --------------------------------------------------------------------------


def build_t_program(state, nz):
    """Convex surrogate of the augmented Lagrangian in ``T`` around ``state.T``.

    Returns ``(program, block)``.  The objective equals the surrogate value
    including constants, so it matches the true penalty terms at ``T = state.T``.
    """
    nz = _nz(nz)
    M, K = nz.M, nz.K
    prog = conic.ConeProgram()
    blk = digital_block(prog, nz)
    s = prog.add_variable("s", M)
    target = np.swapaxes(state.product() - state.D, 1, 2)  # (M, K, Nt)
    for m in range(M):
        a = nz.a[m]
        re_im = []
        for k in range(K):
            re, im = _conj_dot(a.conj(), blk.f[m, k])
            re_im += [re, im]
        z = conic.vstack(re_im)
        # t_m^H A t_m <= s_m as a rotated cone
        prog.add_constraint("soc", conic.vstack([0.5 * (s[m] + 1.0), 0.5 * (s[m] - 1.0), z]), tag="gain")
        c = state.q[m] + state.b[m]
        prog.add_quadratic_objective(s[m], weight=0.5 * state.rho1)
        prog.add_linear_objective(conic.Affine.constant([c * c]), weight=0.5 * state.rho1)
        if c >= 0:
            # -2c t^H A t is concave: replace it by its tangent upper bound
            prog.add_linear_objective(blk.gain_linearization(m, state.T), weight=-state.rho1 * c)
        else:
            prog.add_quadratic_objective(z, weight=-state.rho1 * c)
        for k in range(K):
            v = np.concatenate([target[m, k].real, target[m, k].imag])
            prog.add_quadratic_objective(blk.f[m, k] - v, weight=0.5 * state.rho2)
    return prog, blk


def admm_step_t(state, sc, tol=conic.DEFAULT_TOL):
    """Subproblem 1.  Returns ``(new_state, solution)``; ``T`` is unchanged on failure."""
    nz = _nz(sc)
    prog, blk = build_t_program(state, nz)
    sol = conic.solve(prog, tol=tol)
    if not sol.ok:
        return state, sol
    return state.replace(T=blk.values(sol)), sol


# --------------------------------------------------------------------------
# subproblem 2: sensing gains and CRLB auxiliaries
# --------------------------------------------------------------------------


def build_q_mu_program(state, nz):
    nz = _nz(nz)
    prog = conic.ConeProgram()
    q = prog.add_variable("q", nz.M)
    mu = prog.add_variable("mu", 2)
    prog.add_constraint("nonneg", q, tag="q")
    add_crlb_lmis(prog, [q[m] for m in range(nz.M)], nz.B, mu)
    prog.add_linear_objective(mu.sum())
    anchor = sensing_gains(state.T, nz.a) - state.b
    prog.add_quadratic_objective(q - anchor, weight=0.5 * state.rho1)
    return prog


def admm_step_q_mu(state, sc, tol=conic.DEFAULT_TOL):
    """Subproblem 2.  Returns ``(new_state, solution)``."""
    prog = build_q_mu_program(state, sc)
    sol = conic.solve(prog, tol=tol)
    if not sol.ok:
        return state, sol
    return state.replace(q=sol["q"].copy(), mu=sol["mu"].copy()), sol


# --------------------------------------------------------------------------
# subproblem 3: digital precoders by least squares
# --------------------------------------------------------------------------


def admm_step_fbb(state):
    """Subproblem 3: ``F_BB,m = pinv(F_RF,m) (T_m + D_m)``."""
    rhs = state.T_mats + state.D
    F_BB = np.stack([np.linalg.pinv(rf, rcond=PINV_RCOND) @ r for rf, r in zip(state.F_RF, rhs)])
    return state.replace(F_BB=F_BB)


# --------------------------------------------------------------------------
# subproblem 4: analog precoders on the complex circle manifold
# --------------------------------------------------------------------------


def rf_objective(F_RF, F_BB, target):
    return float(np.sum(np.abs(target - F_RF @ F_BB) ** 2))


def rf_gradient(F_RF, F_BB, target):
    """Euclidean gradient ``-2 (target - F_RF F_BB) F_BB^H``.

    It satisfies ``df = Re tr(grad^H dF_RF)``.
    """
    return -2.0 * (target - F_RF @ F_BB) @ F_BB.conj().T


def riemannian_gradient(F_RF, egrad):
    return egrad - np.real(egrad * F_RF.conj()) * F_RF


def retract(X, fallback):
    """Entrywise projection onto unit modulus; zero entries keep ``fallback``'s phase."""
    mag = np.abs(X)
    out = np.where(mag > 0, X / np.where(mag > 0, mag, 1.0), fallback / np.abs(fallback))
    return out


def manifold_descent(F_RF, F_BB, target, iters=20, c1=1e-4, shrink=0.5, max_backtracks=40):
    """Riemannian gradient descent with Armijo backtracking.

    Returns the new ``F_RF`` and the objective after every iteration.
    """
    X = F_RF
    f = rf_objective(X, F_BB, target)
    hist = [f]
    smax = np.linalg.norm(F_BB, 2)
    step0 = 1.0 / max(smax**2, 1e-300)
    for _ in range(iters):
        G = riemannian_gradient(X, rf_gradient(X, F_BB, target))
        gn = float(np.sum(np.abs(G) ** 2))
        if gn <= 1e-30:
            break
        step = step0
        for _ in range(max_backtracks):
            Y = retract(X - step * G, X)
            fy = rf_objective(Y, F_BB, target)
            if fy <= f - c1 * step * gn:
                X, f = Y, fy
                break
            step *= shrink
        else:
            break
        hist.append(f)
    return X, hist


def admm_step_frf(state, mo_iters=20):
    """Subproblem 4, solved per BS by manifold descent."""
    target = state.T_mats + state.D
    out = [manifold_descent(state.F_RF[m], state.F_BB[m], target[m], iters=mo_iters)[0] for m in range(len(target))]
    return state.replace(F_RF=np.stack(out))


# --------------------------------------------------------------------------
# subproblem 5: scaled dual ascent
# --------------------------------------------------------------------------


def admm_step_duals(state, sc):
    a = sc.a if isinstance(sc, Normalized) else sc.steering
    D = state.T_mats - state.product() + state.D
    b = state.q - sensing_gains(state.T, a) + state.b
    return state.replace(D=D, b=b)


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HybridBeamformer:
    """Physical analog and digital precoders: ``f[m, :, k] = F_RF[m] @ F_BB[m, :, k]``."""

    F_RF: np.ndarray
    F_BB: np.ndarray

    @property
    def beamformers(self):
        return BeamformerSet(np.swapaxes(self.F_RF @ self.F_BB, 1, 2))

    def unit_modulus_error(self):
        return float(np.abs(np.abs(self.F_RF) - 1.0).max())


@dataclass
class HybridResult:
    status: str
    hybrid: HybridBeamformer | None
    crlb: float
    converged: bool
    iterations: int
    residual_D: list = field(default_factory=list)
    residual_b: list = field(default_factory=list)
    unit_modulus: list = field(default_factory=list)
    raw_crlb: float = np.inf
    raw_min_sinr: float = 0.0
    state: HybridState | None = None

    @property
    def beamformers(self):
        return None if self.hybrid is None else self.hybrid.beamformers


def initial_rf(Nt, n_rf, M, kind="random", rng=None):
    if kind == "dft":
        W = np.exp(-2j * np.pi * np.outer(np.arange(Nt), np.arange(n_rf)) / Nt)
        return np.stack([W] * M)
    if kind != "random":
        raise ValueError(f"unknown analog initialisation {kind!r}")
    rng = np.random.default_rng(rng)
    return np.exp(1j * rng.uniform(0, 2 * np.pi, size=(M, Nt, n_rf)))


def initial_state(sc, T, n_rf, rho1=1.0, rho2=1.0, rf_init="random", rng=None):
    """State from normalised digital beamformers ``T``; duals zero, ``q`` from its definition."""
    nz = _nz(sc)
    F_RF = initial_rf(nz.Nt, n_rf, nz.M, rf_init, rng)
    q = sensing_gains(T, nz.a)
    st = HybridState(
        T=np.asarray(T, dtype=complex),
        F_RF=F_RF,
        F_BB=np.zeros((nz.M, n_rf, nz.K), dtype=complex),
        q=q,
        mu=schur_mu(q, nz.B),
        D=np.zeros((nz.M, nz.Nt, nz.K), dtype=complex),
        b=np.zeros(nz.M),
        rho1=rho1,
        rho2=rho2,
    )
    return admm_step_fbb(st)


def project_digital(sc, F_RF, T, tol=conic.DEFAULT_TOL):
    """Closest ``F_BB`` to ``T`` (normalised) with ``F_RF`` fixed, subject to SINR and power."""
    nz = _nz(sc)
    prog = conic.ConeProgram()
    blk = digital_block(prog, nz, rf=F_RF)
    for (m, k), expr in blk.f.items():
        v = np.concatenate([T[m, k].real, T[m, k].imag])
        prog.add_quadratic_objective(expr - v)
    sol = conic.solve(prog, tol=tol)
    if not sol.ok:
        return None, sol
    n_rf = F_RF.shape[-1]
    F_BB = np.zeros((nz.M, n_rf, nz.K), dtype=complex)
    for m in range(nz.M):
        for k in range(nz.K):
            v = sol[f"fbb[{m},{k}]"]
            F_BB[m, :, k] = v[:n_rf] + 1j * v[n_rf:]
    return F_BB, sol


def _physical_bb(F_BB, nz):
    return F_BB * np.sqrt(nz.P)[:, None, None]


def run_admm(
    sc,
    N_RF=None,
    rho1=1.0,
    rho2=1.0,
    I=200,
    eps_D=1e-3,
    eps_b=1e-3,
    init=None,
    rf_init="random",
    rng=None,
    mo_iters=20,
    balance=False,
    project=True,
    tol=conic.DEFAULT_TOL,
):
    """Cycle subproblems 1-5 until both residual sums fall below their thresholds.

    ``init`` may be physical digital beamformers; by default the SCA solution is
    used.  With ``project`` the returned digital precoders are the closest ones
    (for the final analog matrices) that meet every SINR and power constraint.
    Residuals are measured in normalised units.
    """
    nz = normalize(sc)
    M, K, Nt = nz.M, nz.K, nz.Nt
    n_rf = 2 * K if N_RF is None else int(N_RF)
    if n_rf < K:
        raise ValueError("N_RF must be at least K")
    if init is None:
        res = run_sca(sc, tol=tol)
        if res.beamformers is None:
            return HybridResult(status=res.status, hybrid=None, crlb=np.inf, converged=False, iterations=0)
        init = res.beamformers
    f0 = init.f if isinstance(init, BeamformerSet) else np.asarray(init, dtype=complex)
    st = initial_state(nz, f0 / np.sqrt(nz.P)[:, None, None], n_rf, rho1, rho2, rf_init, rng)

    res_D, res_b, um = [], [], []
    status, converged = "max-iter", False
    for i in range(1, I + 1):
        st, sol = admm_step_t(st, nz, tol=tol)
        if not sol.ok:
            status = f"{sol.status} at iteration {i}"
            break
        st, sol = admm_step_q_mu(st, nz, tol=tol)
        if not sol.ok:
            status = f"{sol.status} at iteration {i}"
            break
        st = admm_step_fbb(st)
        st = admm_step_frf(st, mo_iters=mo_iters)
        st = admm_step_duals(st, nz)
        st = st.replace(iteration=i)
        rD, rb = st.residual_D(), st.residual_b(nz.a)
        res_D.append(rD)
        res_b.append(rb)
        um.append(float(np.abs(np.abs(st.F_RF) - 1.0).max()))
        if rD <= eps_D and rb <= eps_b:
            status, converged = "converged", True
            break
        if balance:
            if rD > 10 * rb:
                st = st.replace(rho2=2 * st.rho2, D=st.D / 2)
            elif rb > 10 * rD:
                st = st.replace(rho1=2 * st.rho1, b=st.b / 2)

    raw = HybridBeamformer(st.F_RF.copy(), _physical_bb(st.F_BB, nz))
    raw_bf = raw.beamformers
    raw_crlb = crlb_value(raw_bf, sc)
    raw_sinr = float(sinr_matrix(raw_bf, sc).min())
    out = raw
    if project:
        F_BB, sol = project_digital(nz, st.F_RF, st.T, tol=tol)
        if F_BB is None:
            status = f"projection {sol.status}"
            out = None
        else:
            out = HybridBeamformer(st.F_RF.copy(), _physical_bb(F_BB, nz))
    return HybridResult(
        status=status,
        hybrid=out,
        crlb=crlb_value(out.beamformers, sc) if out is not None else np.inf,
        converged=converged,
        iterations=st.iteration,
        residual_D=res_D,
        residual_b=res_b,
        unit_modulus=um,
        raw_crlb=raw_crlb,
        raw_min_sinr=raw_sinr,
        state=st,
    )
