import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hardneedles.errors import NumericalError
from hardneedles.homogeneous import (
    AngularDensity,
    aligned_l2_distance,
    align_shift,
    antiderivative,
    convolve_Wprime,
    critical_phi,
    evolve,
    fixed_point_map,
    growth_rate,
    l2_distance,
    mkv_rhs,
    mode_amplitudes,
    mode_threshold,
    shift,
    stability_report,
    stationary_fixed_point,
    stationary_residual,
    wprime_multipliers,
)
from hardneedles.spectral import angular_grid, fourier_integral_weights

M = 128
TH = angular_grid(M)
PHI_C = 1.5 * np.pi


def smooth_density(coefs):
    """Positive trigonometric polynomial with unit mass built from small coefficients."""
    p = np.full(M, 1.0 / np.pi)
    for n, (a, b) in enumerate(coefs, start=1):
        p += a * np.cos(2 * n * TH) + b * np.sin(2 * n * TH)
    return p


coef_lists = st.lists(st.tuples(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05)), min_size=1, max_size=6)


def test_multipliers_match_quadrature():
    # m_n = conj(int cos(t) exp(2i n t) dt); independent dense Gauss-Legendre oracle
    w = fourier_integral_weights(np.cos, M // 2, n_quad=800)
    m = wprime_multipliers(M)
    np.testing.assert_allclose(m[:-1], np.conj(w[:-1]), atol=1e-12)


def test_convolution_of_uniform_vanishes():
    assert np.max(np.abs(convolve_Wprime(np.full(M, 1 / np.pi)))) < 1e-15


def test_convolution_against_direct_quadrature():
    d = 0.03
    p = lambda t: 1 / np.pi + d * np.cos(2 * t)
    x, w = np.polynomial.legendre.leggauss(200)
    t = 0.5 * np.pi * (x + 1)
    w = 0.5 * np.pi * w
    direct = np.array([np.sum(w * np.cos(t) * p(t1 - t)) for t1 in TH])
    np.testing.assert_allclose(convolve_Wprime(p(TH)), direct, atol=1e-12)
    # one mode in, one mode out: d*(c1 cos + s1 sin) with c1 = 0, s1 = 4/3
    np.testing.assert_allclose(direct, d * 4 / 3 * np.sin(2 * TH), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(coef_lists, st.integers(0, M - 1))
def test_convolution_translation_equivariant(coefs, k):
    p = smooth_density(coefs)
    np.testing.assert_allclose(convolve_Wprime(np.roll(p, k)), np.roll(convolve_Wprime(p), k), atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(coef_lists, st.floats(0, 12), st.floats(0.1, 5))
def test_rhs_conserves_mass(coefs, phi, D_R):
    r = mkv_rhs(smooth_density(coefs), phi, D_R)
    assert abs(r.mean()) < 1e-13 * max(1.0, np.abs(r).max())


def test_rhs_uniform_is_stationary():
    for phi in (0.0, 3.0, 20.0):
        assert np.max(np.abs(mkv_rhs(np.full(M, 1 / np.pi), phi, 1.0))) < 1e-14


def test_rhs_heat_decay():
    for n in (1, 2, 5):
        p = 1 / np.pi + 1e-3 * np.cos(2 * n * TH)
        np.testing.assert_allclose(mkv_rhs(p, 0.0, 1.3), -4 * n * n * 1.3 * 1e-3 * np.cos(2 * n * TH), atol=1e-12)


def test_rhs_neutral_mode_at_critical_density():
    d = 1e-7
    p = 1 / np.pi + d * np.cos(2 * TH)
    r = mkv_rhs(p, PHI_C, 1.0)
    proj = 2 * np.mean(r * np.cos(2 * TH))
    assert abs(proj) < 1e-12


def test_linearization_matches_growth_rate():
    u = np.full(M, 1 / np.pi)
    d = 0.05
    phi, D_R = 7.3, 0.8
    for n in range(1, M // 4 + 1):
        v = np.cos(2 * n * TH)
        # the rhs is quadratic, so the central difference is exact up to rounding
        Lv = (mkv_rhs(u + d * v, phi, D_R) - mkv_rhs(u - d * v, phi, D_R)) / (2 * d)
        lam = growth_rate(n, phi, D_R)
        assert np.max(np.abs(Lv - lam * v)) <= 1e-10 * max(1, abs(lam))


def test_growth_rate_values():
    assert growth_rate(1, 0.0, 1.0) == -4.0
    assert growth_rate(1, PHI_C, 1.0) == pytest.approx(0.0, abs=1e-14)
    assert growth_rate(2, PHI_C, 1.0, formula="printed") == pytest.approx(-9.6, rel=1e-14)
    assert growth_rate(2, PHI_C, 1.0) == pytest.approx(-12.8, rel=1e-14)
    with pytest.raises(ValueError):
        growth_rate(0, 1.0, 1.0)


def test_critical_phi():
    phi_c, n = critical_phi()
    assert phi_c == 3 * np.pi / 2 and n == 1
    th = mode_threshold(np.arange(1, 101))
    assert np.all(np.diff(th) > 0)
    assert np.count_nonzero(th == th.min()) == 1
    assert critical_phi(formula="linearized") == (3 * np.pi / 2, 1)


def test_stability_report():
    r = stability_report(1.1 * PHI_C)
    assert r.most_unstable == 1 and r.rates[0] > 0 and np.all(r.rates[1:] < 0)


def test_evolve_mass_and_decay_below_threshold():
    p0 = 1 / np.pi - 0.01 * np.cos(2 * TH)
    phi = 0.9 * PHI_C
    tr = evolve(p0, phi, 1.0, 24.0, save_times=np.arange(0, 25.0))
    mass = tr.profiles.mean(axis=1) * np.pi
    assert np.max(np.abs(mass - 1)) < 1e-12
    dist = np.array([l2_distance(p, np.full(M, 1 / np.pi)) for p in tr.profiles])
    # linear decay at rate 0.4 from amplitude 0.01 in L2 norm sqrt(pi/2) * amplitude
    expect = 0.01 * np.sqrt(np.pi / 2) * np.exp(growth_rate(1, phi, 1.0) * tr.times)
    np.testing.assert_allclose(dist, expect, rtol=1e-2)
    assert np.all(np.diff(dist) < 0)
    assert dist[-1] < 1e-6


@pytest.mark.parametrize("factor", [0.9, 1.1])
def test_evolve_mode_one_rate(factor):
    phi = factor * PHI_C
    tr = evolve(1 / np.pi - 1e-6 * np.cos(2 * TH), phi, 1.0, 2.0, save_times=np.linspace(0, 2, 11))
    a = np.array([mode_amplitudes(p, 1)[0] for p in tr.profiles])
    rate = np.polyfit(tr.times, np.log(a), 1)[0]
    assert rate == pytest.approx(growth_rate(1, phi, 1.0), rel=1e-2)


def test_evolve_translation_covariant():
    p0 = smooth_density([(0.02, 0.01), (0.005, -0.01)])
    k = 17
    a = evolve(p0, 1.2 * PHI_C, 1.0, 1.0).profiles[-1]
    b = evolve(np.roll(p0, k), 1.2 * PHI_C, 1.0, 1.0).profiles[-1]
    np.testing.assert_allclose(np.roll(a, k), b, atol=1e-12)


def test_evolve_blowup_guard():
    p0 = smooth_density([(0.1, 0.0)])
    with pytest.raises(NumericalError):
        evolve(p0, 40.0, 1.0, 5.0, dt=0.05, blowup=1.0)


def test_evolve_validation():
    with pytest.raises(ValueError):
        evolve(np.full(M, 1 / np.pi), -1.0, 1.0, 1.0)


def test_fixed_point_uniform_in_one_iteration():
    r = stationary_fixed_point(np.full(M, 1 / np.pi), 9.0, newton=False)
    assert r.iterations == 1 and r.converged
    np.testing.assert_allclose(r.density.values, 1 / np.pi, atol=1e-15)


def test_fixed_point_exponent_is_periodic():
    p = smooth_density([(0.05, 0.02), (0.01, 0.0)])
    g = convolve_Wprime(p)
    assert abs(g.mean() * np.pi) < 1e-15
    a = antiderivative(g)
    q = fixed_point_map(p, 6.0)
    assert abs(q.mean() * np.pi - 1) < 1e-14
    assert a[0] == 0.0


def test_fixed_point_sweep_profiles_sharpen():
    p0 = 1 / np.pi + 0.01 * np.cos(2 * TH)
    peaks = []
    for k in range(11):
        phi = PHI_C + k / 2
        r = stationary_fixed_point(p0, phi)
        assert r.converged and r.residual < 1e-8
        assert r.density.values.min() > 0
        peaks.append(r.density.values.max())
    assert np.all(np.diff(peaks) > 0)


def test_fixed_point_satisfies_zero_flux():
    p0 = 1 / np.pi + 0.01 * np.cos(2 * TH)
    r = stationary_fixed_point(p0, 2 * PHI_C)
    assert stationary_residual(r.density, 2 * PHI_C) < 1e-10
    # and is a steady state of the evolution equation
    assert np.max(np.abs(mkv_rhs(r.density, 2 * PHI_C, 1.0))) < 1e-9


def test_fixed_point_reports_nonconvergence():
    p0 = 1 / np.pi + 0.01 * np.cos(2 * TH)
    r = stationary_fixed_point(p0, 2 * PHI_C, max_iter=3, newton=False)
    assert not r.converged and r.iterations == 3


def test_evolution_reaches_fixed_point():
    p0 = 1 / np.pi - 0.01 * np.cos(2 * TH)
    phi = 1.1 * PHI_C
    ps = stationary_fixed_point(p0, phi).density
    tr = evolve(p0, phi, 1.0, 20.0)
    assert aligned_l2_distance(tr.profiles[-1], ps) < 1e-4


@settings(max_examples=30, deadline=None)
@given(coef_lists, st.floats(0, np.pi, exclude_max=True))
def test_align_shift_recovers_rotation(coefs, delta):
    coefs = [(0.1, 0.0)] + coefs  # dominant first mode makes the alignment unique
    p = smooth_density(coefs)
    q = shift(p, delta)
    d = align_shift(q, p)
    assert aligned_l2_distance(q, p) < 1e-10
    # the recovered shift undoes the rotation, modulo the period
    r = np.mod(d + delta, np.pi)
    assert min(r, np.pi - r) < 1e-9


def test_angular_density_type():
    p = AngularDensity.uniform(64)
    assert p.mass == pytest.approx(1.0)
    p.check()
    with pytest.raises(ValueError):
        AngularDensity(np.ones(5))
    with pytest.raises(ValueError):
        AngularDensity(np.ones(64)).check()
