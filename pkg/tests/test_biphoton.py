import numpy as np
import pytest

from biphase.biphoton import (
    BIPHOTON,
    CLASSICAL,
    DegenerateDensityError,
    OpticalConfig,
    SampleTransmittance,
    apply_sample,
    classical_field_at,
    joint_density,
    partner_loss_factors,
    phase_matching_far,
    phase_matching_near,
    propagate_biphoton,
    pump_near_field,
    sample_plane_factors,
    wrap_phase,
)
from biphase.field import ComplexField, DomainError, Grid2D, fresnel_propagate
from biphase.samples import amplitude_square, phase_step_square

SMALL = Grid2D(8, 8, 5e-6)


def small_config():
    return OpticalConfig(grid=SMALL)


def second_moment(intensity, grid):
    x, y = grid.coords()
    return float(np.sum(intensity * (x**2 + y**2)) / intensity.sum())


def test_optical_config_validation():
    with pytest.raises(DomainError):
        OpticalConfig(lambda_p=-1)
    with pytest.raises(DomainError):
        OpticalConfig(L=0)
    with pytest.raises(DomainError):
        OpticalConfig(lambda_spdc=700e-9)
    assert OpticalConfig().lambda_spdc == 810e-9


def test_wrap_phase_interval():
    a = wrap_phase(np.array([np.pi, -np.pi, 3 * np.pi, 0.5]))
    np.testing.assert_allclose(a, [np.pi, np.pi, np.pi, 0.5])


def test_sinc_values():
    cfg = OpticalConfig(grid=Grid2D(16, 16), xi=0.3)
    far = phase_matching_far(cfg)
    assert np.isclose(far.values[0, 0].real, np.sin(0.3) / 0.3)
    k2 = (2 * np.pi * np.fft.fftfreq(16, 55e-6)[3]) ** 2
    u = cfg.L * cfg.lambda_p * k2 / (4 * np.pi) + 0.3
    assert np.isclose(far.values[0, 3].real, np.sin(u) / u)


def test_near_field_normalized_and_even():
    phi = phase_matching_near(OpticalConfig())
    assert np.isclose(phi.power(), 1.0)
    p = phi.intensity
    # index n // 2 is X_- = 0; index 0 has no mirror partner on an even grid
    np.testing.assert_allclose(p[1:, 1:], p[1:, 1:][::-1, ::-1], rtol=1e-9, atol=1e-12 * p.max())
    assert np.unravel_index(np.argmax(p), p.shape) == (128, 128)


def test_near_field_width_tracks_crystal():
    g = Grid2D(128, 128, 1e-6)
    narrow = phase_matching_near(OpticalConfig(L=0.5e-3, grid=g)).intensity
    wide = phase_matching_near(OpticalConfig(L=2e-3, grid=g)).intensity
    assert second_moment(wide, g) > second_moment(narrow, g)


def test_pump_power_and_uniform():
    cfg = OpticalConfig(grid=Grid2D(32, 32))
    assert np.isclose(pump_near_field(cfg, 0.5e-3).power(), 1.0)
    flat = pump_near_field(cfg, np.inf, amplitude=0.5)
    assert np.isclose(flat.power(), 0.25)
    assert np.ptp(flat.intensity) < 1e-12
    with pytest.raises(DomainError):
        pump_near_field(cfg, 1e-6)


def test_apply_sample_doubles_phase_and_squares_amplitude():
    g = Grid2D(16, 16)
    s = amplitude_square(g, 8 * g.pitch, 0.5, edge_sigma=0, alpha=0.4)
    e = ComplexField.ones(g)
    bi = apply_sample(e, s, BIPHOTON)
    cl = apply_sample(e, s, CLASSICAL)
    np.testing.assert_allclose(bi.values, cl.values**2)
    assert np.isclose(np.angle(bi.values[8, 8]), 0.8)
    assert np.isclose(np.abs(bi.values[8, 8]), 0.5)
    with pytest.raises(DomainError):
        apply_sample(e, s, "other")


def test_sample_transmittance_checks():
    g = Grid2D(4, 4)
    with pytest.raises(DomainError):
        SampleTransmittance(g, np.full(g.shape, 1.5), np.zeros(g.shape))
    with pytest.raises(DomainError):
        SampleTransmittance.from_field(ComplexField(g, np.full(g.shape, 2.0)))
    s = SampleTransmittance.from_field(ComplexField(g, np.full(g.shape, 0.5j)))
    assert np.isclose(s.T[0, 0], 0.25) and np.isclose(s.alpha[0, 0], np.pi / 2)


def test_centroid_factor_propagates_at_pump_wavelength():
    cfg = OpticalConfig(grid=Grid2D(64, 64))
    s = phase_step_square(cfg.grid, 1e-3, 0.46)
    f0 = sample_plane_factors(cfg, s, waist=0.6e-3)
    fz = propagate_biphoton(f0, 0.02)
    t2a = apply_sample(pump_near_field(cfg, 0.6e-3), s, BIPHOTON)
    np.testing.assert_allclose(fz.e.values, fresnel_propagate(t2a, 405e-9, 0.02).values, atol=1e-12)
    assert fz.z == 0.02


def test_biphoton_and_classical_share_lambda_dz():
    # the centroid at lambda_p over 2 dz diffracts like the 810 nm beam over dz
    cfg = OpticalConfig(grid=Grid2D(64, 64))
    s = phase_step_square(cfg.grid, 1e-3, 0.3)
    pump = pump_near_field(cfg, 0.6e-3)
    f0 = sample_plane_factors(cfg, s, waist=0.6e-3)
    bi = propagate_biphoton(f0, 0.2).e
    ref = fresnel_propagate(ComplexField(cfg.grid, pump.values * s.t**2), 810e-9, 0.1)
    np.testing.assert_allclose(bi.values, ref.values, atol=1e-12)
    cl = classical_field_at(pump, s, 0.1)
    np.testing.assert_allclose(cl.values, fresnel_propagate(apply_sample(pump, s, CLASSICAL), 810e-9, 0.1).values)


def test_relative_width_grows_with_distance():
    cfg = OpticalConfig(grid=Grid2D(128, 128, 5e-6))
    f0 = sample_plane_factors(cfg, SampleTransmittance.clear(cfg.grid), waist=0.1e-3)
    widths = [second_moment(propagate_biphoton(f0, dz).phi.intensity, cfg.grid) for dz in (0, 0.005, 0.01, 0.02)]
    assert all(b > a for a, b in zip(widths, widths[1:]))
    back = second_moment(propagate_biphoton(f0, -0.01).phi.intensity, cfg.grid)
    assert np.isclose(back, widths[2], rtol=1e-6)


def test_joint_density_mass_and_marginals():
    cfg = small_config()
    s = amplitude_square(SMALL, 3 * SMALL.pitch, 0.3, edge_sigma=0)
    f = sample_plane_factors(cfg, s, waist=20e-6)
    jd = joint_density(f)
    P = jd.dense()
    assert np.isclose(P.sum(), 1.0)
    # centroid j = (X_i + X_s) / 2 is an integer pixel for every admissible pair
    ny, nx = SMALL.shape
    plus = np.zeros((2 * ny - 1, 2 * nx - 1))
    minus = np.zeros((2 * ny - 1, 2 * nx - 1))
    idx = np.indices(P.shape)
    np.add.at(plus, (idx[0] + idx[2], idx[1] + idx[3]), P)
    np.add.at(minus, (idx[0] - idx[2] + ny - 1, idx[1] - idx[3] + nx - 1), P)
    assert np.all(plus[1::2, :] == 0) and np.all(plus[:, 1::2] == 0)
    np.testing.assert_allclose(plus[::2, ::2], jd.marginal_plus(), atol=1e-15)
    # relative offset m sits at doubled bin 2 m
    mm = np.zeros(SMALL.shape)
    my, mx = jd.offsets
    for a, oy in enumerate(my):
        for b, ox in enumerate(mx):
            mm[a, b] = minus[2 * oy + ny - 1, 2 * ox + nx - 1]
    np.testing.assert_allclose(mm, jd.marginal_minus(), atol=1e-15)


def test_dense_table_factorizes_in_sum_difference_coordinates():
    cfg = small_config()
    f = sample_plane_factors(cfg, SampleTransmittance.clear(SMALL), waist=20e-6)
    jd = joint_density(f)
    P = jd.dense()
    ny, nx = SMALL.shape
    # for interior centroids every offset is admissible, so P(j, m) = e2[j] phi2[m] / Z
    j, m = (4, 4), (1, -1)
    yi, xi, ys, xs = j[0] + m[0], j[1] + m[1], j[0] - m[0], j[1] - m[1]
    expected = jd.e2[j] * jd.phi2[ny // 2 + m[0], nx // 2 + m[1]] / jd.norm
    assert np.isclose(P[yi, xi, ys, xs], expected)


def test_degenerate_density():
    cfg = small_config()
    f = sample_plane_factors(cfg, SampleTransmittance(SMALL, np.zeros(SMALL.shape), np.zeros(SMALL.shape)), 20e-6)
    with pytest.raises(DegenerateDensityError):
        joint_density(f)


def test_partner_loss_weight():
    cfg = OpticalConfig(grid=Grid2D(32, 32))
    s = amplitude_square(cfg.grid, 10 * cfg.grid.pitch, 0.5, edge_sigma=0)
    both = sample_plane_factors(cfg, s, 0.5e-3)
    one = partner_loss_factors(cfg, s, 0.5e-3)
    a2 = pump_near_field(cfg, 0.5e-3).intensity
    np.testing.assert_allclose(both.e.intensity, a2 * s.T**2)
    np.testing.assert_allclose(one.e.intensity, a2 * 2 * s.T * (1 - s.T))
    assert both.e.power() + one.e.power() <= 1 + 1e-12
