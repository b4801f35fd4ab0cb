"""Self-checks run by ``isacbf validate``: FIM oracle plus analytic invariants."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic, sca, sdr
from .fim import closed_form_check
from .metrics import crlb_report, crlb_value, jacobian, sinr_matrix
from .model import BeamformerSet, SystemConfig, generate_scenario, reference_geometry, propagation_delays, steering_vector


@dataclass
class Check:
    name: str
    ok: bool
    detail: str


def desk_scenario(seed, K=2, N=3, Nt=8, **kw):
    """The small two-cell instance used throughout the test suite."""
    cfg = SystemConfig(M=2, N=N, K=K, Nt=Nt, seed=seed, **kw)
    return generate_scenario(cfg, reference_geometry(K=K, n_tmt=N, seed=seed))


def random_beamformers(rng, M, K, Nt, scale=1.0):
    return BeamformerSet(scale * (rng.standard_normal((M, K, Nt)) + 1j * rng.standard_normal((M, K, Nt))))


def check_fim_oracle(seeds=range(20)):
    worst_ratio, worst_cross = 0.0, 0.0
    for s in seeds:
        sc = desk_scenario(s)
        rng = np.random.default_rng(s)
        ratios, cross = closed_form_check(sc, random_beamformers(rng, 2, 2, 8))
        worst_ratio = max(worst_ratio, float(np.abs(ratios - 1).max()))
        worst_cross = max(worst_cross, cross)
    ok = worst_ratio <= 0.02 and worst_cross < 1e-6
    return Check("fim-oracle", ok, f"max |ratio-1| = {worst_ratio:.2e}, max coupling = {worst_cross:.2e}")


def check_power_scaling(seeds=range(10)):
    worst = 0.0
    for s in seeds:
        sc = desk_scenario(s)
        rng = np.random.default_rng(100 + s)
        bf = random_beamformers(rng, 2, 2, 8)
        rho = float(rng.uniform(0.1, 10.0))
        c0, c1 = crlb_value(bf, sc), crlb_value(bf.scaled(rho), sc)
        worst = max(worst, abs(c1 * rho - c0) / c0)
    return Check("power-scaling", worst <= 1e-9, f"max rel. error = {worst:.2e}")


def check_phase_invariance(seeds=range(10)):
    worst = 0.0
    for s in seeds:
        sc = desk_scenario(s)
        rng = np.random.default_rng(200 + s)
        bf = random_beamformers(rng, 2, 2, 8)
        rot = bf.rotated(rng.uniform(0, 2 * np.pi, (2, 2)))
        s0, s1 = sinr_matrix(bf, sc), sinr_matrix(rot, sc)
        c0, c1 = crlb_value(bf, sc), crlb_value(rot, sc)
        worst = max(worst, float(np.abs(s1 / s0 - 1).max()), abs(c1 / c0 - 1))
    return Check("phase-invariance", worst <= 1e-9, f"max rel. change = {worst:.2e}")


def check_taylor_minorant(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n):
        K, Nt = int(rng.integers(1, 4)), int(rng.integers(2, 9))
        A = sca.sensing_matrix(steering_vector(rng.uniform(-np.pi / 2, np.pi / 2), Nt), K)
        f = rng.standard_normal(K * Nt) + 1j * rng.standard_normal(K * Nt)
        f0 = rng.standard_normal(K * Nt) + 1j * rng.standard_normal(K * Nt)
        exact = float(np.real(np.vdot(f, A @ f)))
        gap = sca.taylor_minorant(A, f, f0) - exact
        worst = max(worst, gap / max(1.0, exact))
    return Check("taylor-minorant", worst <= 1e-12, f"max (minorant - exact)/scale = {worst:.2e}")


def check_schur_complement(n=10, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        X = rng.standard_normal((2, 2))
        Mx = X @ X.T + 0.1 * np.eye(2)
        inv = np.linalg.inv(Mx)
        for i in range(2):
            prog = conic.ConeProgram()
            mu = prog.add_variable("mu", 1)
            e = np.eye(2)[i]
            entries = [Mx[0, 0], Mx[0, 1], e[0], Mx[1, 0], Mx[1, 1], e[1], e[0], e[1], mu[0]]
            prog.add_constraint("psd", conic.vstack(entries))
            prog.add_linear_objective(mu)
            sol = conic.solve(prog)
            worst = max(worst, abs(sol["mu"][0] - inv[i, i]) / inv[i, i])
    return Check("schur-complement", worst <= 1e-6, f"max rel. error = {worst:.2e}")


def check_jacobian(seeds=range(10)):
    worst = 0.0
    for s in seeds:
        geo = desk_scenario(s).geometry
        rng = np.random.default_rng(s)
        # keep clear of the TMTs so the difference truncation error stays small
        geo = geo.with_target(rng.uniform(-10, 10, 2))
        L = jacobian(geo)
        d = 1e-3
        fd = np.stack(
            [
                (propagation_delays(geo.with_target(geo.target_xy + d * e)) - propagation_delays(geo.with_target(geo.target_xy - d * e))).ravel()
                / (2 * d)
                for e in np.eye(2)
            ]
        )
        worst = max(worst, float(np.abs(L - fd).max() / np.linalg.norm(L)))
    return Check("jacobian-fd", worst < 1e-9, f"max rel. error = {worst:.2e}")


def check_sdr_schur(seeds=range(3)):
    worst, n = 0.0, 0
    for s in seeds:
        sc = desk_scenario(s)
        r = sdr.solve_sdr(sc)
        if r.F is None:
            continue
        inv = np.diag(np.linalg.inv(crlb_report(r.F, sc).loc_fim))
        worst = max(worst, float(np.abs(r.mu / inv - 1).max()))
        n += 1
    return Check("sdr-schur", n > 0 and worst <= 1e-5, f"{n} solves, max rel. gap = {worst:.2e}")


ALL_CHECKS = (
    check_fim_oracle,
    check_power_scaling,
    check_phase_invariance,
    check_taylor_minorant,
    check_schur_complement,
    check_jacobian,
    check_sdr_schur,
)


def run_all():
    return [fn() for fn in ALL_CHECKS]
