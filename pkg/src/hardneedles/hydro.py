"""Spatial-density equations for fast-rotating needles and for hard disks.

Needles with fast rotational diffusion:
    d rho/dt = div{ [1 + (2/pi) phi rho] grad rho - f_T rho },   phi = (N-1) eps^2
Hard disks of diameter eps_d:
    d rho/dt = div{ [1 + pi (N-1) eps_d^2 rho] grad rho - f rho }

The two coincide when ``eps_d = sqrt(2)/pi * eps``, about 0.45 eps. Note that
the crowding coefficients at equal length differ by a factor (2/pi)/pi, about
0.20, so "0.45" describes the diameter ratio, not the ratio of excluded
areas. Both are discretized in
conservative flux form on a periodic grid with arithmetic-mean face values
and stepped with Heun's method (explicit RK2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .geometry import Torus2

EFFECTIVE_DIAMETER_RATIO = np.sqrt(2.0) / np.pi


@dataclass(frozen=True)
class SpatialDensity:
    """Grid values of ``rho`` on an ``Nx x Ny`` periodic grid."""

    values: np.ndarray
    box: Torus2 = field(default_factory=Torus2)
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or min(v.shape) < 3:
            raise ValueError(f"density must be a 2-D grid with at least 3 nodes per axis, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def spacing(self) -> tuple[float, float]:
        return self.box.Lx / self.values.shape[0], self.box.Ly / self.values.shape[1]

    @property
    def mass(self) -> float:
        hx, hy = self.spacing
        return float(self.values.sum() * hx * hy)

    def nodes(self):
        hx, hy = self.spacing
        return np.meshgrid(np.arange(self.values.shape[0]) * hx, np.arange(self.values.shape[1]) * hy, indexing="ij")


def effective_diameter(eps: float) -> float:
    """Diameter of the hard disk with the same collective diffusion as a fast-rotating needle of length ``eps``."""
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    return EFFECTIVE_DIAMETER_RATIO * eps


def needle_coefficient(phi: float) -> float:
    return 2.0 / np.pi * phi


def disk_coefficient(N: int, eps_d: float) -> float:
    return np.pi * (N - 1) * eps_d**2


def nonlinear_diffusion_rhs(rho: SpatialDensity, f, c: float) -> np.ndarray:
    """``div{(1 + c rho) grad rho - f rho}`` in flux form; its grid sum vanishes to rounding."""
    r = rho.values
    hx, hy = rho.spacing
    out = np.zeros_like(r)
    for axis, h in ((0, hx), (1, hy)):
        rn = np.roll(r, -1, axis=axis)
        flux = (1.0 + 0.5 * c * (r + rn)) * (rn - r) / h
        if f is not None:
            fr = np.asarray(f[axis]) * r
            flux -= 0.5 * (fr + np.roll(fr, -1, axis=axis))
        out += (flux - np.roll(flux, 1, axis=axis)) / h
    return out


def _check_drift(f, shape):
    if f is not None and np.shape(f) != (2,) + shape:
        raise ValueError(f"drift must have shape {(2,) + shape}, got {np.shape(f)}")


def needle_hydro_rhs(rho: SpatialDensity, f_T, phi: float) -> np.ndarray:
    """Right-hand side of the fast-rotation needle equation; ``f_T`` is angle independent, shape ``(2, Nx, Ny)``."""
    if phi < 0:
        raise ValueError(f"phi must be non-negative, got {phi}")
    _check_drift(f_T, rho.values.shape)
    return nonlinear_diffusion_rhs(rho, f_T, needle_coefficient(phi))


def disk_rhs(rho: SpatialDensity, f, N: int, eps_d: float) -> np.ndarray:
    """Right-hand side of the hard-disk equation for ``N`` disks of diameter ``eps_d``."""
    if N < 1 or eps_d < 0:
        raise ValueError("need N >= 1 and eps_d >= 0")
    _check_drift(f, rho.values.shape)
    return nonlinear_diffusion_rhs(rho, f, disk_coefficient(N, eps_d))


@dataclass
class HydroTrajectory:
    times: np.ndarray
    snapshots: list
    masses: np.ndarray
    dt: float


def stable_dt(rho: SpatialDensity, c: float, f=None) -> float:
    """``h^2 / (8 (1 + c max rho))``, further limited by ``h / max|f|`` with a drift."""
    h = min(rho.spacing)
    dt = h * h / (8.0 * (1.0 + c * max(float(rho.values.max()), 0.0)))
    if f is not None:
        fm = float(np.max(np.abs(f)))
        if fm > 0:
            dt = min(dt, h / fm)
    return dt


def evolve(rho0: SpatialDensity, c: float, t_end: float, f=None, dt: float | None = None,
           save_times=None) -> HydroTrajectory:
    """Heun integration of ``div{(1 + c rho) grad rho - f rho}``.

    ``c`` is :func:`needle_coefficient` or :func:`disk_coefficient`. The step
    is capped by :func:`stable_dt` at the initial state and shortened to hit
    every output time.
    """
    if c < 0 or t_end < 0:
        raise ValueError("need c >= 0 and t_end >= 0")
    _check_drift(f, rho0.values.shape)
    cap = stable_dt(rho0, c, f)
    dt = cap if dt is None else min(float(dt), cap)
    outs = np.array([0.0, t_end]) if save_times is None else np.unique(np.asarray(save_times, dtype=float))
    if outs.size and (outs[0] < 0 or outs[-1] > t_end + 1e-12):
        raise ValueError("save_times must lie in [0, t_end]")
    box = rho0.box
    r = rho0.values.copy()
    t = rho0.time
    snaps, masses = [], []
    hx, hy = rho0.spacing

    def F(v):
        return nonlinear_diffusion_rhs(SpatialDensity(v, box), f, c)

    for target in outs:
        n = int(np.ceil((target - t) / dt - 1e-9)) if target > t else 0
        if n:
            h = (target - t) / n
            for _ in range(n):
                k1 = F(r)
                k2 = F(r + h * k1)
                r = r + 0.5 * h * (k1 + k2)
            t = float(target)
            if not np.all(np.isfinite(r)):
                raise NumericalError(f"hydro evolution produced non-finite values at t={t:.6g}")
        snaps.append(SpatialDensity(r.copy(), box, t))
        masses.append(r.sum() * hx * hy)
    return HydroTrajectory(outs, snaps, np.array(masses), dt)
