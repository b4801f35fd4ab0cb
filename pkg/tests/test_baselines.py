import dataclasses

import numpy as np
import pytest

from helpers import desk_scenario
from isacbf import baselines, sdr
from isacbf.config import load_scenario
from isacbf.metrics import beampattern, sensing_gain, sinr_matrix
from isacbf.model import Geometry, SystemConfig, generate_scenario


def single_bs(Nt=6, K=1, bs=(0.0, -100.0)):
    users = [[(bs[0] + 20.0 + 15 * k, bs[1] - 40.0) for k in range(K)]]
    geo = Geometry([bs], [(60.0, 0.0), (-60.0, 10.0)], (0.0, 0.0), users)
    return generate_scenario(SystemConfig(M=1, N=2, K=K, Nt=Nt, seed=3), geo)


def test_radar_single_bs_is_matched_beam():
    sc = single_bs()
    r = baselines.radar_only(sc)
    P, Nt = sc.config.P, sc.config.Nt
    # all power along a^*: the sensing gain reaches its ceiling P * Nt
    assert sensing_gain(r.beamformers, sc)[0] == pytest.approx(P * Nt, rel=1e-6)
    assert r.beamformers.power()[0] == pytest.approx(P, rel=1e-6)
    f = r.beamformers.f[0].sum(axis=0)
    a = sc.steering[0].conj()
    assert abs(np.vdot(a, f)) / (np.linalg.norm(a) * np.linalg.norm(f)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_radar_budget_active(seed):
    sc = desk_scenario(seed)
    r = baselines.radar_only(sc)
    np.testing.assert_allclose(r.beamformers.power(), sc.config.power_budgets, rtol=1e-6)


def test_zf_orthonormal_channels_recover_channel_directions():
    sc = desk_scenario(0)
    M, K, Nt = 2, 2, 8
    rng = np.random.default_rng(0)
    h = np.zeros_like(sc.h)
    for i in range(M):
        Q, _ = np.linalg.qr(rng.standard_normal((Nt, M * K)) + 1j * rng.standard_normal((Nt, M * K)))
        h[i] = 1e-5 * Q.T.conj().reshape(M, K, Nt).conj()
    sc = dataclasses.replace(sc, h=h)
    u = baselines.zf_directions(sc)
    for m in range(M):
        for k in range(K):
            ref = h[m, m, k] / np.linalg.norm(h[m, m, k])
            np.testing.assert_allclose(u[m, k], ref, atol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_zf_nulls_interference(seed):
    sc = desk_scenario(seed)
    u = baselines.zf_directions(sc)
    for i in range(2):
        for m in range(2):
            for k in range(2):
                g = sc.h[i, m, k] / np.linalg.norm(sc.h[i, m, k])
                for j in range(2):
                    if (i, j) != (m, k):
                        assert abs(np.vdot(g, u[i, j])) < 1e-12


def test_zf_sinr_and_power():
    sc = desk_scenario(1)
    r = baselines.zf_beamforming(sc)
    assert r.feasible and r.status == "optimal"
    assert np.all(r.sinrs >= sc.config.Gamma * (1 - 1e-9))
    np.testing.assert_allclose(r.beamformers.power(), sc.config.power_budgets, rtol=1e-12)


def test_zf_rank_failure():
    sc = desk_scenario(0, Nt=3)
    r = baselines.zf_beamforming(sc)
    assert r.beamformers is None
    assert r.status.startswith("rank-deficient")
    with pytest.raises(np.linalg.LinAlgError):
        baselines.zf_directions(sc)


def test_zf_budget_too_small_flagged():
    sc = desk_scenario(0).with_config(P=1e-6)
    r = baselines.zf_beamforming(sc)
    assert not r.feasible and r.status == "infeasible"
    assert r.beamformers.satisfies_power(sc.config.power_budgets)


def test_desired_pattern():
    g = np.deg2rad(np.linspace(-90, 90, 181))
    d = baselines.desired_pattern(g, np.deg2rad(60.0), np.deg2rad(5.0))
    assert d.sum() == 11
    assert d[150] == 1 and d[144] == 0 and d[156] == 0


def test_bpa_feasible_full_budget():
    sc = desk_scenario(0)
    r = baselines.beampattern_approx(sc, rng=0)
    assert r.feasible
    np.testing.assert_allclose(r.beamformers.power(), sc.config.power_budgets, rtol=1e-6)


def test_bpa_lobe_when_sinr_is_slack():
    # one BS, negligible SINR demand: the fit alone shapes the pattern
    sc = single_bs(Nt=8, bs=(-50.0, -86.6)).with_config(Gamma=1e-3)
    assert abs(np.rad2deg(sc.theta[0])) < 70
    r = baselines.beampattern_approx(sc, rng=0)
    assert r.feasible
    g = np.deg2rad(np.linspace(-90, 90, 181))
    p = beampattern(r.beamformers, g)[0]
    assert abs(np.rad2deg(g[p.argmax()]) - np.rad2deg(sc.theta[0])) <= 5.0


@pytest.mark.slow
def test_bpa_main_lobe_reference_geometry():
    sc = load_scenario(__file__.rsplit("/", 2)[0] + "/scenarios/reference.toml").build(seed=0)
    r = baselines.beampattern_approx(sc, rng=0)
    g = np.deg2rad(np.linspace(-90, 90, 181))
    peak = np.rad2deg(g[beampattern(r.beamformers, g).argmax(axis=1)])
    np.testing.assert_allclose(np.abs(peak), 60.0, atol=2.0)


@pytest.mark.parametrize("seed", range(6))
def test_ordering(seed):
    sc = desk_scenario(seed)
    s = sdr.solve_sdr(sc)
    radar = baselines.radar_only(sc)
    zf = baselines.zf_beamforming(sc)
    bpa = baselines.beampattern_approx(sc, rng=0)
    assert radar.crlb <= s.crlb * (1 + 1e-6)
    if zf.feasible:
        assert s.crlb <= zf.crlb * (1 + 1e-6)
    if bpa.feasible:
        assert s.crlb <= bpa.crlb * (1 + 1e-6)
    for res in (radar, zf, bpa):
        assert res.beamformers.satisfies_power(sc.config.power_budgets)
    assert np.all(sinr_matrix(s.beamformers, sc) >= sc.config.Gamma * (1 - 1e-9))
