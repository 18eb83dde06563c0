import math

import numpy as np
import pytest

from backinajiffy.decay import physics
from backinajiffy.decay.exc import DomainError, ConfigurationError, OracleError
from backinajiffy.decay.physics import PhysicalParams, Regime

from .conftest import source


def test_dimensionless_definitions():
    p = PhysicalParams(diffusivity=4.0, decay_rate=0.01, wind_speed=0.2, length_scale=3.0, viscosity=2.0)
    n = physics.dimensionless(p)
    assert n.reynolds == pytest.approx(0.3)
    assert n.peclet == pytest.approx(0.15)
    assert n.schmidt == pytest.approx(0.5)
    assert n.damkohler == pytest.approx(0.0225)
    assert n.peclet == pytest.approx(n.reynolds * n.schmidt, rel=1e-12)
    assert n.verdict is Regime.DIFFUSIVE


def test_dimensionless_uses_effective_diffusivity():
    p = PhysicalParams(diffusivity=1.0, eddy_diffusivity=3.0, decay_rate=0.01, wind_speed=0.2, length_scale=3.0,
                       viscosity=2.0)
    n = physics.dimensionless(p)
    assert n.peclet == pytest.approx(0.15)
    assert n.schmidt == pytest.approx(0.5)
    assert n.damkohler == pytest.approx((p.kappa * p.length_scale) ** 2, rel=1e-12)
    assert n.peclet == pytest.approx(n.reynolds * n.schmidt, rel=1e-12)


def test_dimensionless_zero_wind():
    n = physics.dimensionless(PhysicalParams(diffusivity=1.0, decay_rate=0.1))
    assert n.peclet == 0.0
    assert n.reynolds == 0.0
    assert n.diffusive


def test_dimensionless_windy():
    p = PhysicalParams(diffusivity=10.0, wind_speed=1.0, length_scale=1000.0, viscosity=1.5e-5 * 86.4)
    n = physics.dimensionless(p)
    assert n.peclet == pytest.approx(100.0)
    assert not n.diffusive


@pytest.mark.parametrize('kw,verdict', [
    ({'wind_speed': 2.0}, Regime.ADVECTIVE),
    ({'decay_rate': 1.0}, Regime.REACTIVE),
    ({'wind_speed': 2.0, 'decay_rate': 1.0}, Regime.MIXED),
    ({'wind_speed': 0.5, 'decay_rate': 0.5}, Regime.DIFFUSIVE),
])
def test_dimensionless_thresholds_strict(kw, verdict):
    assert physics.dimensionless(PhysicalParams(diffusivity=1.0, **kw)).verdict is verdict


def test_peclet_scale_consistent():
    a = physics.dimensionless(PhysicalParams(diffusivity=1.0, wind_speed=0.3, length_scale=2.0))
    b = physics.dimensionless(PhysicalParams(diffusivity=1.0, wind_speed=3.0, length_scale=0.2))
    assert a.peclet == pytest.approx(b.peclet, rel=1e-12)


@pytest.mark.parametrize('kw', [{'diffusivity': 0.0}, {'diffusivity': 1.0, 'decay_rate': -1.0},
                                {'diffusivity': math.nan}, {'diffusivity': 1.0, 'viscosity': 0.0}])
def test_invalid_params(kw):
    with pytest.raises(ConfigurationError):
        PhysicalParams(**kw)


def test_helmholtz_values():
    p = PhysicalParams(diffusivity=1.0, decay_rate=1.0)
    assert physics.helmholtz_field(1.0, p, 1.0) == pytest.approx(1.0 / (4.0 * math.pi * math.e), rel=1e-12)
    assert physics.helmholtz_field(1.0, p, 1.0) == pytest.approx(0.0292876, rel=1e-6)
    p0 = PhysicalParams(diffusivity=3.0)
    assert physics.helmholtz_field(2.0, p0, 10.0) / physics.helmholtz_field(2.0, p0, 5.0) == pytest.approx(0.5)


def test_helmholtz_log_linear_after_log_r():
    p = PhysicalParams(diffusivity=2.0, decay_rate=0.02)
    r = np.linspace(0.5, 50.0, 100)
    c = physics.helmholtz_field(7.0, p, r)
    assert np.all(np.diff(c) < 0)
    slope = np.diff(np.log(c) + np.log(r)) / np.diff(r)
    np.testing.assert_allclose(slope, -p.kappa, rtol=1e-9)


@pytest.mark.parametrize('r', [0.0, -1.0, [1.0, 0.0]])
def test_fields_need_positive_r(r):
    p = PhysicalParams(diffusivity=1.0, decay_rate=0.1)
    with pytest.raises(DomainError):
        physics.helmholtz_field(1.0, p, r)
    with pytest.raises(DomainError):
        physics.geometric_field(1.0, p, r)


def test_geometric_field():
    p0 = PhysicalParams(diffusivity=1.0)
    assert physics.geometric_field(1.0, p0, 4.0) / physics.geometric_field(1.0, p0, 2.0) == pytest.approx(0.25)
    p = PhysicalParams(diffusivity=1.0, decay_rate=0.04)
    r = np.linspace(1.0, 30.0, 40)
    g = physics.geometric_field(3.0, p, r)
    np.testing.assert_allclose(np.log(g) + 2.0 * np.log(r) + p.kappa * r, np.log(g[0]) + 2.0 * np.log(r[0])
                               + p.kappa * r[0], rtol=1e-12)
    np.testing.assert_allclose(g / (physics.helmholtz_field(3.0, p, r) / r), 1.0, rtol=1e-12)


def test_advection_asymmetry():
    p = PhysicalParams(diffusivity=2.0, decay_rate=0.1, wind_speed=1.0)
    r = 3.0
    ratio = physics.advection_field(1.0, p, r, 0.0) / physics.advection_field(1.0, p, r, math.pi)
    assert ratio == pytest.approx(math.exp(p.wind_speed * r / p.diffusivity), rel=1e-10)


def test_advection_isotropic_without_wind():
    p = PhysicalParams(diffusivity=2.0, decay_rate=0.1)
    r = np.array([0.5, 2.0, 9.0])
    np.testing.assert_allclose(physics.advection_field(1.0, p, r, 0.0), physics.advection_field(1.0, p, r, math.pi),
                               rtol=1e-14)
    alpha = math.sqrt(p.decay_rate / p.diffusivity)
    expected = 1.0 / (2.0 * math.pi * p.diffusivity) * physics.bessel_k0(alpha * r)
    np.testing.assert_allclose(physics.advection_field(1.0, p, r, 1.0), expected, rtol=1e-12)


def test_advection_needs_alpha():
    with pytest.raises(DomainError):
        physics.advection_field(1.0, PhysicalParams(diffusivity=1.0), 1.0, 0.0)


@pytest.mark.parametrize('x', [0.01, 0.1, 0.5, 1.0, 2.5, 7.0, 20.0, 50.0])
def test_k0_against_quadrature(x):
    assert physics.bessel_k0(x) == pytest.approx(physics.bessel_k0_quadrature(x), rel=1e-6)


def test_pulse_mass_decays():
    p = PhysicalParams(diffusivity=1.5, decay_rate=0.2)
    assert physics.pulse_mass(3.0, p, 2.0) == pytest.approx(3.0 * math.exp(-0.4), rel=1e-6)
    p0 = PhysicalParams(diffusivity=1.5)
    assert physics.pulse_mass(3.0, p0, 2.0) == pytest.approx(3.0, rel=1e-6)


def test_pulse_peak_time():
    p0 = PhysicalParams(diffusivity=2.0)
    r = 5.0
    t_star = physics.pulse_peak_time(p0, r)
    assert t_star == pytest.approx(r * r / 12.0)
    c = physics.pulse_field(1.0, p0, r, np.array([0.98 * t_star, t_star, 1.02 * t_star]))
    assert c[1] > c[0] and c[1] > c[2]
    p = PhysicalParams(diffusivity=2.0, decay_rate=0.3)
    assert physics.pulse_peak_time(p, r) < t_star


def test_pulse_needs_positive_time():
    with pytest.raises(DomainError):
        physics.pulse_field(1.0, PhysicalParams(diffusivity=1.0), 1.0, 0.0)


def test_step_tends_to_steady_state():
    p = PhysicalParams(diffusivity=1.0, decay_rate=1.0)
    r = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(physics.step_field(1.0, p, r, 1e6), physics.helmholtz_field(1.0, p, r), rtol=1e-9)
    early = physics.step_field(1.0, p, r, 0.1)
    assert np.all(early < physics.helmholtz_field(1.0, p, r))


def test_superposed_field():
    p = PhysicalParams(diffusivity=2.0, decay_rate=0.02)
    one = [source('a', 0.0, 0.0, q=4.0)]
    assert physics.superposed_field(one, p, [3.0]) == pytest.approx(physics.helmholtz_field(4.0, p, 3.0))
    rng = np.random.default_rng(2)
    ss = [source(f's{i}', 0.0, 0.0, q=float(q)) for i, q in enumerate(rng.uniform(1, 10, 5))]
    d = rng.uniform(0.5, 40.0, (20, 5))
    brute = np.array([sum(physics.helmholtz_field(s.emission_rate, p, d[i, j]) for j, s in enumerate(ss))
                      for i in range(20)])
    np.testing.assert_allclose(physics.superposed_field(ss, p, d), brute, rtol=1e-12)
    doubled = [source(s.source_id, 0.0, 0.0, q=2.0 * s.emission_rate) for s in ss]
    np.testing.assert_allclose(physics.superposed_field(doubled, p, d), 2.0 * brute, rtol=1e-12)
    with pytest.raises(ConfigurationError):
        physics.superposed_field(ss, p, d[:, :3])


def test_field_samples():
    p = PhysicalParams(diffusivity=1.0, decay_rate=0.25, wind_speed=0.5)
    ss = physics.field_samples(2.0, p, [1.0, 2.0, 4.0])
    assert [s.r for s in ss] == [1.0, 2.0, 4.0]
    assert ss[1].value == pytest.approx(physics.helmholtz_field(2.0, p, 2.0))
    up = physics.field_samples(2.0, p, [1.0], mode='advection', theta=math.pi)[0]
    assert up.theta == math.pi
    assert up.value == pytest.approx(physics.advection_field(2.0, p, 1.0, math.pi))
    assert physics.field_samples(2.0, p, [1.0], mode='pulse', t=3.0)[0].t == 3.0
    with pytest.raises(ConfigurationError):
        physics.field_samples(2.0, p, [1.0], mode='step')
    with pytest.raises(ConfigurationError):
        physics.field_samples(2.0, p, [1.0], mode='gaussian')


def test_fd_oracle_matches_closed_form():
    p = PhysicalParams(diffusivity=1.0, decay_rate=1.0)
    prof = physics.helmholtz_fd_oracle(1.0, p, physics.oracle_grid(p, 1000))
    assert prof.max_rel_error < 0.005


def test_fd_oracle_other_params():
    p = PhysicalParams(diffusivity=10.0, decay_rate=0.001)
    prof = physics.helmholtz_fd_oracle(250.0, p, physics.oracle_grid(p, 1000))
    assert prof.max_rel_error < 0.01


def test_fd_convergence_second_order():
    res = physics.fd_convergence(1.0, PhysicalParams(diffusivity=1.0, decay_rate=1.0))
    assert all(e2 < e1 for e1, e2 in zip(res['errors'], res['errors'][1:]))
    assert all(1.5 < o < 2.5 for o in res['orders'])


def test_fd_oracle_rejects_bad_grids():
    p = PhysicalParams(diffusivity=1.0, decay_rate=1.0)
    with pytest.raises(OracleError):
        physics.helmholtz_fd_oracle(1.0, p, np.linspace(0.01, 10.0, 150))
    with pytest.raises(OracleError):
        physics.helmholtz_fd_oracle(1.0, p, np.linspace(0.01, 1000.0, 300))
    with pytest.raises(OracleError):
        physics.helmholtz_fd_oracle(1.0, p, np.geomspace(0.01, 10.0, 300))
    with pytest.raises(OracleError):
        physics.oracle_grid(PhysicalParams(diffusivity=1.0))
