import math

import numpy as np
import pytest

from ccpilot.config import ConfigError, SystemConfig
from ccpilot.geometry import (
    antenna_gain_db, aoa_interval, array_response, boresights, covariance,
    covariance_blocks, covariance_set, deploy_ues, draw_channel, draw_channels,
    gain_normalization, make_ue, path_gain, to_full, wrap_angle,
)


@pytest.fixture
def small():
    return SystemConfig(n_ues=20, n_active=5, antennas_per_sector=8, pilot_len=4, n_paths=50)


def test_defaults_match_full_size_setup():
    cfg = SystemConfig()
    assert (cfg.n_ues, cfg.n_active, cfg.n_sectors, cfg.antennas_per_sector) == (512, 64, 3, 64)
    assert cfg.n_paths == 200 and cfg.antenna_spacing == 0.5 and cfg.pilot_len == 64
    assert math.isclose(math.degrees(cfg.angular_std), 10.0)
    assert cfg.n_antennas == 192
    assert math.isclose(cfg.snr_db, 10.0)


@pytest.mark.parametrize("field,value", [
    ("pilot_len", 48), ("n_active", 600), ("noise_power", -1.0), ("n_ues", 0),
    ("antenna_spacing", 0.0), ("cell_side", float("nan")),
])
def test_invalid_config_names_field(field, value):
    with pytest.raises(ConfigError) as info:
        SystemConfig(**{field: value})
    assert info.value.field == field


def test_with_snr_sets_noise():
    cfg = SystemConfig().with_snr(20.0)
    assert math.isclose(cfg.noise_power, 0.01)
    assert math.isclose(cfg.snr_db, 20.0)


def test_wrap_angle_range():
    x = np.linspace(-20, 20, 1001)
    w = wrap_angle(x)
    assert np.all(w > -np.pi) and np.all(w <= np.pi)
    assert np.allclose(np.exp(1j * w), np.exp(1j * x))
    assert wrap_angle(-np.pi) == np.pi


def test_boresights_spacing():
    b = boresights(SystemConfig())
    assert np.allclose(np.diff(np.unwrap(b)), 2 * np.pi / 3)
    assert math.isclose(b[0], np.pi / 2)


def test_array_response_broadside_and_endfire():
    assert np.allclose(array_response(np.pi / 2, 8, 0.5), 1.0)
    a = array_response(0.0, 4, 0.5)
    assert np.allclose(a, [1, -1, 1, -1])
    assert array_response(np.zeros((3, 5)), 6, 0.5).shape == (3, 5, 6)


def test_antenna_gain_pattern():
    cfg = SystemConfig()
    assert antenna_gain_db(0.0, cfg) == 0.0
    # 3 dB down at half the 3 dB beamwidth
    assert math.isclose(antenna_gain_db(cfg.beamwidth_3db / 2, cfg), -3.0)
    assert antenna_gain_db(np.pi, cfg) == -cfg.atten_max_db
    assert math.isclose(antenna_gain_db(0.3, cfg), antenna_gain_db(-0.3, cfg))


def test_path_gain_free_space():
    lam = 0.05
    assert math.isclose(path_gain(100.0, 0.0, lam), (lam / (4 * np.pi * 100)) ** 2)
    assert math.isclose(path_gain(100.0, -10.0, lam) / path_gain(100.0, 0.0, lam), 0.1)
    assert math.isclose(path_gain(200.0, 0.0, lam) / path_gain(100.0, 0.0, lam), 0.25)


def test_aoa_interval_width():
    lo, hi = aoa_interval(0.2, math.radians(10))
    assert math.isclose(hi - lo, 2 * math.sqrt(3) * math.radians(10))
    assert math.isclose((lo + hi) / 2, 0.2)


def test_deploy_respects_cell(small):
    ues = deploy_ues(small.replace(n_ues=500, min_bs_distance=100.0), np.random.default_rng(3))
    pos = np.array([u.position for u in ues])
    assert len(ues) == 500
    assert np.all(np.abs(pos) <= 500)
    assert min(u.distance for u in ues) >= 100.0
    assert [u.id for u in ues] == list(range(500))


def test_deploy_deterministic(small):
    a = deploy_ues(small, np.random.default_rng(7))
    b = deploy_ues(small, np.random.default_rng(7))
    assert a == b


def test_covariance_hermitian_psd_toeplitz(small):
    ue = make_ue(0, 120.0, -40.0, small)
    blocks = covariance_blocks(ue, small)
    assert blocks.shape == (3, 8, 8)
    for B in blocks:
        assert np.allclose(B, B.conj().T)
        assert np.linalg.eigvalsh(B).min() > -1e-12 * np.abs(B).max()
        assert np.allclose(B[1:, 1:], B[:-1, :-1])
    full = covariance(ue, small)
    assert full.shape == (24, 24)
    assert np.allclose(full[:8, 8:], 0)


def test_covariance_matches_brute_force_quadrature(small):
    # oracle: full matrix integration, no Toeplitz shortcut
    ue = make_ue(0, -80.0, 60.0, small)
    Q = 4000
    half = math.sqrt(3) * small.angular_std
    nodes = (np.arange(Q) + 0.5) / Q * 2 - 1
    blocks = covariance_blocks(ue, small.replace(quadrature_points=Q))
    for s, off in enumerate(ue.sector_offsets):
        th = off + half * nodes
        a = array_response(th, 8, 0.5)
        beta = path_gain(ue.distance, antenna_gain_db(th, small), small.wavelength)
        ref = np.einsum("q,qm,qn->mn", beta, a, a.conj()) / Q
        assert np.allclose(blocks[s], ref, rtol=1e-10, atol=1e-14)


def test_trace_equals_mean_gain(small):
    ue = make_ue(0, 0.0, 200.0, small)
    B = covariance_blocks(ue, small)
    # every antenna sees the same average power
    assert np.allclose(np.diag(B[0]).real, np.diag(B[0]).real[0])


def test_empirical_covariance_matches(small):
    ue = make_ue(0, 90.0, 30.0, small)
    rng = np.random.default_rng(0)
    H = draw_channels([ue], small, rng, n_draws=20000)[..., 0]
    emp = np.einsum("tm,tn->mn", H, H.conj()) / H.shape[0]
    R = covariance(ue, small)
    assert np.linalg.norm(emp - R) <= 0.05 * np.linalg.norm(R)


def test_draw_channel_single_shape(small):
    ue = make_ue(0, 90.0, 30.0, small)
    h = draw_channel(ue, 1, small, np.random.default_rng(0))
    assert h.shape == (8,)


def test_draw_channels_shapes_and_scale(small):
    ues = deploy_ues(small, np.random.default_rng(1))[:4]
    H = draw_channels(ues, small, np.random.default_rng(2))
    assert H.shape == (24, 4)
    H2 = draw_channels(ues, small, np.random.default_rng(2), scale=4.0)
    assert np.allclose(H2, 2 * H)
    assert draw_channels(ues, small, np.random.default_rng(2), n_draws=3).shape == (3, 24, 4)


def test_gain_normalization_unit_mean(small):
    ues = deploy_ues(small, np.random.default_rng(4))
    covs = covariance_set(ues, small)
    covs = covs * gain_normalization(covs)
    traces = np.einsum("nsii->n", covs).real
    assert math.isclose(traces.mean(), small.n_antennas)


def test_to_full_block_layout():
    blocks = np.arange(2 * 2 * 2).reshape(2, 2, 2).astype(complex)
    full = to_full(blocks)
    assert np.array_equal(full[:2, :2], blocks[0])
    assert np.array_equal(full[2:, 2:], blocks[1])
    assert not full[:2, 2:].any()
