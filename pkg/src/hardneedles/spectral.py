"""Fourier helpers and an exponential time integrator for diagonal stiff parts."""

from __future__ import annotations

from typing import Callable

import numpy as np


def angular_wavenumbers(M: int) -> np.ndarray:
    """Integer ``n`` for the rfft of ``M`` samples on ``[0, pi)``; mode ``n`` is ``exp(2i n theta)``."""
    if M % 2:
        raise ValueError(f"grid size must be even, got {M}")
    return np.fft.rfftfreq(M, d=1.0 / M)


def angular_grid(M: int) -> np.ndarray:
    return np.arange(M) * (np.pi / M)


def fourier_integral_weights(w: Callable[[np.ndarray], np.ndarray], nmax: int, n_quad: int = 400) -> np.ndarray:
    """``int_0^pi w(theta) exp(2i n theta) dtheta`` for ``n = 0..nmax`` by Gauss-Legendre.

    ``w`` may return an array with trailing shape ``s``; the result then has
    shape ``(nmax + 1,) + s``.
    """
    x, wq = np.polynomial.legendre.leggauss(n_quad)
    th = 0.5 * np.pi * (x + 1.0)
    wq = 0.5 * np.pi * wq
    vals = np.asarray(w(th))
    n = np.arange(nmax + 1)
    ph = np.exp(2j * np.outer(n, th)) * wq
    return np.tensordot(ph, vals, axes=(1, 0))


def etdrk4_coefficients(L: np.ndarray, dt: float, n_contour: int = 32):
    """Exponential RK4 coefficients for ``u' = L u + N(u)`` with diagonal ``L``.

    The phi-functions are evaluated by averaging over a circle of radius 1
    around each ``dt * L`` in the complex plane, which avoids cancellation for
    small arguments.
    """
    L = np.asarray(L, dtype=complex)
    E = np.exp(dt * L)
    E2 = np.exp(0.5 * dt * L)
    r = np.exp(1j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    LR = dt * L[..., None] + r
    Q = dt * np.mean((np.exp(LR / 2) - 1) / LR, axis=-1)
    f1 = dt * np.mean((-4 - LR + np.exp(LR) * (4 - 3 * LR + LR**2)) / LR**3, axis=-1)
    f2 = dt * np.mean((2 + LR + np.exp(LR) * (-2 + LR)) / LR**3, axis=-1)
    f3 = dt * np.mean((-4 - 3 * LR - LR**2 + np.exp(LR) * (4 - LR)) / LR**3, axis=-1)
    # real L gives real coefficients; drop the round-off imaginary part
    if np.all(np.isreal(L)):
        E, E2, Q, f1, f2, f3 = (c.real for c in (E, E2, Q, f1, f2, f3))
    return E, E2, Q, f1, f2, f3


class ETDRK4:
    """Fourth-order exponential time differencing (Cox-Matthews form).

    The linear part is integrated exactly; ``N`` acts on spectral coefficients.
    """

    def __init__(self, L: np.ndarray, nonlinear: Callable[[np.ndarray], np.ndarray], dt: float):
        self.dt = float(dt)
        self.N = nonlinear
        self.E, self.E2, self.Q, self.f1, self.f2, self.f3 = etdrk4_coefficients(L, dt)

    def step(self, v: np.ndarray) -> np.ndarray:
        N, E, E2, Q = self.N, self.E, self.E2, self.Q
        Nv = N(v)
        a = E2 * v + Q * Nv
        Na = N(a)
        b = E2 * v + Q * Na
        Nb = N(b)
        c = E2 * a + Q * (2 * Nb - Nv)
        Nc = N(c)
        return E * v + self.f1 * Nv + 2 * self.f2 * (Na + Nb) + self.f3 * Nc
