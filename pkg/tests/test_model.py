import numpy as np
import pytest

from isacbf.model import (
    REFERENCE_BS_XY,
    SPEED_OF_LIGHT,
    BeamformerSet,
    Geometry,
    GeometryError,
    SystemConfig,
    generate_scenario,
    large_scale_gain,
    reference_geometry,
    propagation_delays,
    steering_vector,
)


def test_steering_broadside_is_all_ones():
    np.testing.assert_allclose(steering_vector(0.0, 4), np.ones(4))


def test_steering_norm():
    for theta in np.linspace(-1.5, 1.5, 7):
        assert np.linalg.norm(steering_vector(theta, 16)) ** 2 == pytest.approx(16)


def test_steering_endfire_alternates():
    np.testing.assert_allclose(steering_vector(np.pi / 2, 3), [1, -1, 1], atol=1e-12)


def _single(bs, tmt, target):
    return Geometry([bs], [tmt], target, np.zeros((1, 1, 2)) + 500.0)


def test_delay_reference_value():
    # (160 + 30 sqrt 2) / c evaluated at 30 digits
    geo = _single(REFERENCE_BS_XY[0], (30.0, 30.0), (0.0, 0.0))
    assert propagation_delays(geo)[0, 0] == pytest.approx(6.75221812522024324788e-7, rel=1e-14)


def test_delay_zero_distance_rejected():
    with pytest.raises(GeometryError):
        _single((80.0, 10.0), (30.0, 30.0), (30.0, 30.0))


def test_delays_mirror_invariant():
    geo = reference_geometry(K=2, n_tmt=4, seed=3).with_target((12.0, -7.0))
    np.testing.assert_allclose(propagation_delays(geo.mirrored()), propagation_delays(geo), rtol=1e-15)


def test_large_scale_gain_unit_identity():
    fc = SPEED_OF_LIGHT / (4 * np.pi) ** 1.5
    assert large_scale_gain(1.0, 1.0, fc) == pytest.approx(1.0, rel=1e-14)


def test_large_scale_gain_reference_value():
    # c^2 / (fc^2 (4 pi)^3 160^2 1800) at 30 digits with c = 299792458 m/s
    assert large_scale_gain(160.0, 30 * np.sqrt(2), 24e9) == pytest.approx(1.70638435234533919e-15, rel=1e-13)


def test_large_scale_gain_inverse_square():
    assert large_scale_gain(200.0, 40.0, 24e9) * 4 == pytest.approx(large_scale_gain(100.0, 40.0, 24e9), rel=1e-14)


def test_large_scale_gain_zero_distance():
    with pytest.raises(GeometryError):
        large_scale_gain(0.0, 1.0, 24e9)


def test_generation_is_deterministic():
    cfg = SystemConfig(M=2, N=3, K=2, Nt=8, seed=5)
    a = generate_scenario(cfg, reference_geometry(K=2, n_tmt=3, seed=5))
    b = generate_scenario(cfg, reference_geometry(K=2, n_tmt=3, seed=5))
    np.testing.assert_array_equal(a.h, b.h)
    np.testing.assert_array_equal(a.eps, b.eps)


def test_reference_shapes():
    cfg = SystemConfig(M=2, N=4, K=4, Nt=16)
    sc = generate_scenario(cfg, reference_geometry(K=4, n_tmt=4))
    assert sc.h.shape == (2, 2, 4, 16)
    assert sc.eps.shape == (2, 4)
    assert sc.tau.shape == (2, 4)


def test_reference_target_bearing_is_60_degrees_from_bs1():
    geo = reference_geometry(K=2, n_tmt=4)
    assert np.rad2deg(geo.bearings()[0]) == pytest.approx(60.0, abs=1e-12)


def test_radar_coefficient_power_monte_carlo():
    # E|eps|^2 = F within 5% over 10^4 independent draws
    geo = reference_geometry(K=1, n_tmt=1)
    draws = np.array(
        [generate_scenario(SystemConfig(M=2, N=1, K=1, Nt=2, seed=s), geo).eps[0, 0] for s in range(10_000)]
    )
    F = large_scale_gain(geo.bs_distances()[0], geo.tmt_distances()[0], 24e9)
    assert np.mean(np.abs(draws) ** 2) == pytest.approx(F, rel=0.05)


def test_config_validation():
    with pytest.raises(ValueError):
        SystemConfig(M=0, N=1, K=1, Nt=1)
    with pytest.raises(ValueError):
        SystemConfig(M=1, N=1, K=1, Nt=1, Gamma=-1.0)
    with pytest.raises(ValueError):
        SystemConfig(M=2, N=1, K=1, Nt=1, P=(1.0,))
    assert SystemConfig(M=1, N=1, K=1, Nt=1, beta=1e6).Ts == pytest.approx(1e-6)


def test_per_bs_budgets():
    cfg = SystemConfig(M=2, N=1, K=1, Nt=1, P=(1.0, 2.0))
    np.testing.assert_array_equal(cfg.power_budgets, [1.0, 2.0])


def test_beamformer_power_and_lift():
    f = np.arange(8, dtype=complex).reshape(1, 2, 4)
    bf = BeamformerSet(f)
    assert bf.power()[0] == pytest.approx(np.sum(np.arange(8) ** 2))
    F = bf.lifted()
    np.testing.assert_allclose(np.trace(F[0, 1]).real, np.sum(np.arange(4, 8) ** 2))
