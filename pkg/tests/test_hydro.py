import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hardneedles.geometry import Torus2
from hardneedles.hydro import (
    SpatialDensity,
    disk_coefficient,
    disk_rhs,
    effective_diameter,
    evolve,
    needle_coefficient,
    needle_hydro_rhs,
    nonlinear_diffusion_rhs,
    stable_dt,
)

BOX = Torus2(1.0, 1.0)


def gaussian_bump(n, width=0.1, amp=1.0):
    x = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    r2 = (X - 0.5) ** 2 + (Y - 0.5) ** 2
    return 1.0 + amp * np.exp(-r2 / (2 * width**2))


def test_effective_diameter():
    assert effective_diameter(1.0) == pytest.approx(0.45016, abs=1e-5)
    assert effective_diameter(0.0) == 0.0
    with pytest.raises(ValueError):
        effective_diameter(-1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5000), st.floats(1e-3, 1.0))
def test_coefficients_coincide(N, eps):
    phi = (N - 1) * eps**2
    assert disk_coefficient(N, effective_diameter(eps)) == pytest.approx(needle_coefficient(phi), rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 500), st.floats(0.01, 0.2))
def test_needle_equals_disk_nodewise(seed, N, eps):
    rng = np.random.default_rng(seed)
    rho = SpatialDensity(rng.uniform(0.2, 3.0, size=(24, 20)), BOX)
    f = rng.normal(size=(2, 24, 20))
    a = needle_hydro_rhs(rho, f, (N - 1) * eps**2)
    b = disk_rhs(rho, f, N, effective_diameter(eps))
    assert np.max(np.abs(a - b)) <= 1e-14 * max(1.0, np.abs(a).max())


def test_uniform_is_stationary():
    rho = SpatialDensity(np.full((16, 16), 1.0), BOX)
    assert np.all(needle_hydro_rhs(rho, None, 3.0) == 0)
    assert np.all(disk_rhs(rho, None, 10, 0.1) == 0)


def test_zero_diameter_is_heat_equation():
    rho = SpatialDensity(gaussian_bump(20), BOX)
    np.testing.assert_array_equal(disk_rhs(rho, None, 50, 0.0), needle_hydro_rhs(rho, None, 0.0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 10))
def test_mass_conservation(seed, phi):
    rng = np.random.default_rng(seed)
    rho = SpatialDensity(rng.uniform(0.1, 2.0, size=(16, 12)), BOX)
    f = rng.normal(size=(2, 16, 12))
    r = needle_hydro_rhs(rho, f, phi)
    assert abs(r.sum()) < 1e-12 * np.abs(r).max()


def test_heat_decay_matches_discrete_fourier_solution():
    n, t = 32, 0.01
    rho0 = gaussian_bump(n, width=0.08)
    h = 1.0 / n
    # a step well inside the stability cap keeps the RK2 error below the tolerance
    tr = evolve(SpatialDensity(rho0, BOX), 0.0, t, dt=h * h / 40)
    k = 2 * np.pi * np.fft.fftfreq(n, d=h)
    sym = -(4 / h**2) * (np.sin(k[:, None] * h / 2) ** 2 + np.sin(k[None, :] * h / 2) ** 2)
    exact = np.fft.ifft2(np.fft.fft2(rho0) * np.exp(sym * t)).real
    assert np.max(np.abs(tr.snapshots[-1].values - exact)) < 1e-6 * np.abs(rho0).max()


def test_heat_decay_converges_to_continuous_rate():
    t = 0.01
    errs = []
    for n in (16, 32, 64):
        x = np.arange(n) / n
        X, Y = np.meshgrid(x, x, indexing="ij")
        v = 1 + 0.5 * np.cos(2 * np.pi * X) * np.cos(4 * np.pi * Y)
        out = evolve(SpatialDensity(v, BOX), 0.0, t).snapshots[-1].values
        exact = 1 + 0.5 * np.exp(-20 * np.pi**2 * t) * np.cos(2 * np.pi * X) * np.cos(4 * np.pi * Y)
        errs.append(np.abs(out - exact).max())
    np.testing.assert_allclose(np.array(errs[:-1]) / errs[1:], 4.0, rtol=0.05)


def test_crowding_speeds_up_peak_decay():
    rho0 = SpatialDensity(gaussian_bump(32, amp=2.0), BOX)
    times = np.linspace(0, 0.01, 6)
    a = evolve(rho0, 0.0, 0.01, save_times=times)
    b = evolve(rho0, needle_coefficient(1.0), 0.01, save_times=times)
    pa = np.array([s.values.max() for s in a.snapshots])
    pb = np.array([s.values.max() for s in b.snapshots])
    assert np.all(pb[1:] < pa[1:])


def test_max_is_non_increasing():
    rho0 = SpatialDensity(gaussian_bump(32, amp=3.0), BOX)
    tr = evolve(rho0, needle_coefficient(2.0), 0.02, save_times=np.linspace(0, 0.02, 21))
    peaks = np.array([s.values.max() for s in tr.snapshots])
    assert np.all(np.diff(peaks) <= 1e-14)
    assert np.max(np.abs(tr.masses - tr.masses[0])) < 1e-12


def test_drift_transports_mass():
    n = 32
    rho0 = SpatialDensity(gaussian_bump(n, width=0.1), BOX)
    f = np.zeros((2, n, n))
    f[0] = 2.0
    tr = evolve(rho0, 0.0, 0.05, f=f)
    x = (np.arange(n) + 0.5) / n
    # centre of mass (mod 1) moves by f t = 0.1 along x
    m0 = np.angle(np.sum(rho0.values.sum(1) * np.exp(2j * np.pi * x))) / (2 * np.pi)
    m1 = np.angle(np.sum(tr.snapshots[-1].values.sum(1) * np.exp(2j * np.pi * x))) / (2 * np.pi)
    assert np.mod(m1 - m0, 1.0) == pytest.approx(0.1, abs=2e-3)
    assert stable_dt(rho0, 0.0, f) <= (1 / n) / 2.0


def test_validation():
    with pytest.raises(ValueError):
        SpatialDensity(np.ones(5))
    rho = SpatialDensity(np.ones((8, 8)))
    with pytest.raises(ValueError):
        needle_hydro_rhs(rho, None, -1.0)
    with pytest.raises(ValueError):
        needle_hydro_rhs(rho, np.zeros((2, 4, 4)), 1.0)
    with pytest.raises(ValueError):
        disk_rhs(rho, None, 0, 0.1)
    assert nonlinear_diffusion_rhs(rho, None, 1.0).shape == (8, 8)
