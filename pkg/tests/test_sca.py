import numpy as np
import pytest

from helpers import desk_scenario
from isacbf import conic, sca, sdr
from isacbf._common import normalize
from isacbf.metrics import crlb_value, sensing_gain, sinr_matrix
from isacbf.model import Geometry, SystemConfig, generate_scenario, steering_vector


def test_sensing_matrix_psd_rank_k():
    A = sca.sensing_matrix(steering_vector(0.4, 5), 3)
    w = np.linalg.eigvalsh(A)
    assert w.min() >= -1e-12
    assert np.sum(w > 1e-9) == 3


def test_minorant_exact_at_expansion_point():
    rng = np.random.default_rng(0)
    A = sca.sensing_matrix(steering_vector(-0.3, 4), 2)
    f0 = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    assert sca.taylor_minorant(A, f0, f0) == pytest.approx(np.vdot(f0, A @ f0).real, rel=1e-12)


def test_census_single_user():
    geo = Geometry([(0.0, -100.0)], [(60.0, 0.0), (-60.0, 10.0)], (0.0, 0.0), [[(20.0, -140.0)]])
    sc = generate_scenario(SystemConfig(M=1, N=2, K=1, Nt=2), geo)
    prog, _ = sca.build_socp_iteration(sc, np.ones((1, 1, 2), complex) * 0.1)
    c = prog.census()
    # f (2 complex = 4 real), q, mu1, mu2
    assert c["variables"] == 7
    assert c[("soc", "power")] == 1
    assert c[("soc", "sinr")] == 1
    assert c[("zero", "phase")] == 1
    assert c[("nonneg", "gain")] == 1
    assert c[("psd", "lmi")] == 2


def test_soc_sinr_equivalent_to_ratio():
    # the cone holds exactly when SINR >= Gamma (checked at a point on each side)
    sc = desk_scenario(0)
    nz = normalize(sc)
    prog = conic.ConeProgram()
    blk = sca.digital_block(prog, nz)
    f, _ = sca.min_power_beamformers(sc)
    rows = [c for c in prog.constraints if c.tag == "sinr"]
    for scale, expect in ((1.0, True), (0.9, False)):
        x = np.concatenate([np.concatenate([v.real, v.imag]) for v in (scale * f.f / np.sqrt(nz.P)[:, None, None]).reshape(-1, nz.Nt)])
        ok = all(np.linalg.norm(c.expr.value(x)[1:]) <= c.expr.value(x)[0] * (1 + 1e-7) for c in rows)
        assert ok == expect


@pytest.fixture(scope="module")
def desk_runs():
    out = []
    for seed in range(4):
        sc = desk_scenario(seed)
        out.append((sc, sca.run_sca(sc), sdr.solve_sdr(sc)))
    return out


def test_sca_close_to_sdp(desk_runs):
    for sc, r, s in desk_runs:
        assert r.converged
        assert r.crlb <= 1.05 * s.bound
        assert r.crlb >= s.bound * (1 - 1e-6)


def test_history_non_increasing(desk_runs):
    for _, r, _ in desk_runs:
        assert np.all(np.diff(r.history) <= 1e-9 * np.array(r.history[:-1]))


def test_returned_beamformers_feasible_and_phase_normalised(desk_runs):
    for sc, r, _ in desk_runs:
        s = sinr_matrix(r.beamformers, sc)
        assert np.all(s >= sc.config.Gamma * (1 - 1e-7))
        assert r.beamformers.satisfies_power(sc.config.power_budgets)
        d = np.einsum("mkn,mkn->mk", np.stack([sc.h[m, m] for m in range(2)]).conj(), r.beamformers.f)
        assert np.all(np.abs(d.imag) <= 1e-6 * np.abs(d))
        assert np.all(d.real > 0)


def test_sensing_constraint_active_at_convergence():
    for seed in (0, 1):
        sc = desk_scenario(seed)
        r = sca.run_sca(sc, eps_obj=1e-10, max_iter=300)
        assert r.converged
        np.testing.assert_allclose(r.q, sensing_gain(r.beamformers, sc), rtol=1e-6)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sdr_initialisation_is_fixed_point(seed):
    sc = desk_scenario(seed)
    s = sdr.solve_sdr(sc)
    r = sca.run_sca(sc, init=s.beamformers)
    assert r.converged
    assert r.iterations <= 2
    assert abs(r.crlb - s.crlb) / s.crlb < 1e-3


def test_phase_normalize_keeps_metrics():
    sc = desk_scenario(3)
    nz = normalize(sc)
    bf = sdr.solve_sdr(sc).beamformers.rotated(np.random.default_rng(0).uniform(0, 6.3, (2, 2)))
    rot = sca.phase_normalize(bf, nz)
    g = np.stack([nz.g[m, m] for m in range(2)])
    d = np.einsum("mkn,mkn->mk", g.conj(), rot.f)
    assert np.abs(d.imag).max() <= 1e-12 * np.abs(d).max()
    assert crlb_value(rot, sc) == pytest.approx(crlb_value(bf, sc), rel=1e-12)


def test_every_iterate_feasible_for_original_problem():
    sc = desk_scenario(2)
    nz = normalize(sc)
    bf, _ = sca.mrt_init(sc)
    prev = crlb_value(bf, sc)
    for _ in range(4):
        prog, blk = sca.build_socp_iteration(sc, bf)
        sol = conic.solve(prog)
        bf = sca._physical(blk.values(sol), nz)
        assert np.all(sinr_matrix(bf, sc) >= sc.config.Gamma * (1 - 1e-7))
        assert bf.satisfies_power(sc.config.power_budgets)
        # the linearised gain under-estimates the true one, so the CRLB is no worse than the surrogate
        assert crlb_value(bf, sc) <= sol["mu"].sum() / nz.scale * (1 + 1e-6)
        assert crlb_value(bf, sc) <= prev * (1 + 1e-9)
        prev = crlb_value(bf, sc)


def test_infeasible_first_step_reported():
    sc = desk_scenario(0).with_config(Gamma=1e6, P=1e-6)
    r = sca.run_sca(sc)
    assert r.beamformers is None
    assert r.status in ("infeasible", "numerical-failure")


def test_init_must_respect_power():
    sc = desk_scenario(0)
    with pytest.raises(ValueError):
        sca.run_sca(sc, init=np.ones((2, 2, 8), complex))
