"""Schwarz-Christoffel map of the rhombus exterior and the excluded-volume matrix.

Inner variables use a needle of unit length lying along the x axis, so the
excluded rhombus at relative angle ``theta`` has vertices

    A = (-1 + c, s)/2,  B = (1 + c, s)/2,  C = (1 - c, -s)/2,  D = (-1 - c, -s)/2

with ``c = cos theta`` and ``s = sin theta``. The unit disk is mapped onto the
rhombus exterior by

    g(zeta) = a * F(zeta),   F'(zeta) = (1 - zeta**2)**p (1 + zeta**2)**(1 - p) / zeta**2,

with ``p = theta/pi`` and prevertices ``A, B, C, D <- -1, -i, 1, i``. The
integrand is even with a double pole and zero residue at the origin, so ``F``
is odd and ``g ~ -a/zeta`` near 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.special import gamma, rgamma, roots_jacobi, roots_legendre

from .hypergeom import hyp2f1_regularized_m1

PREVERTICES = np.array([-1.0, -1j, 1.0, 1j])


@dataclass(frozen=True)
class SCConstant:
    """Complex constant ``a = a1 + i a2`` of the map at relative angle ``theta``."""

    a1: float
    a2: float
    theta: float

    @property
    def value(self) -> complex:
        return complex(self.a1, self.a2)


@dataclass(frozen=True)
class TMatrix:
    """Symmetric 2x2 excluded-volume matrix."""

    t11: float
    t12: float
    t22: float

    def as_array(self) -> np.ndarray:
        return np.array([[self.t11, self.t12], [self.t12, self.t22]])

    @classmethod
    def from_array(cls, m) -> "TMatrix":
        m = np.asarray(m, dtype=float)
        return cls(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))


def _check_angle(theta: float) -> float:
    theta = float(theta)
    if not 0.0 < theta < np.pi:
        raise ValueError(f"relative angle must lie in (0, pi), got theta={theta}")
    return theta


# ---------------------------------------------------------------------------
# the constant a(theta)
# ---------------------------------------------------------------------------

def _chord_integral(theta: float, n: int) -> complex:
    """``F(i) - F(1)`` along the straight chord from 1 to i.

    With ``t = 1 + (i - 1)(1 + s)/2`` the branch factors behave like
    ``(1 + s)**p`` at ``t = 1`` and ``(1 - s)**(1 - p)`` at ``t = i``; both are
    absorbed into the Gauss-Jacobi weight and the remaining factor is smooth.
    """
    p = theta / np.pi
    s, w = roots_jacobi(n, 1.0 - p, p)
    t = 1.0 + (1j - 1.0) * (1.0 + s) / 2.0
    g1 = np.exp(p * np.log((1.0 - t * t) / (1.0 + s)))
    g2 = np.exp((1.0 - p) * np.log((1.0 + t * t) / (1.0 - s)))
    return complex(np.sum(w * g1 * g2 / (t * t)) * (1j - 1.0) / 2.0)


def sc_constant_quadrature(theta: float, n: int = 60, rtol: float = 1e-13) -> SCConstant:
    """Map constant from the side-length condition, by Gauss-Jacobi quadrature.

    The side C -> D of the rhombus is the vector ``(-1, 0)`` in inner variables,
    so ``a (F(i) - F(1)) = -1``. The quadrature is repeated with ``2n`` nodes
    and the difference serves as the error estimate.
    """
    theta = _check_angle(theta)
    f1 = _chord_integral(theta, n)
    f2 = _chord_integral(theta, 2 * n)
    err = abs(f2 - f1) / abs(f2)
    if err > rtol:
        raise RuntimeError(f"chord quadrature not converged at theta={theta}: relative estimate {err:.2e}")
    a = -1.0 / f2
    return SCConstant(a.real, a.imag, theta)


def sc_constant(theta: float) -> SCConstant:
    """Map constant from the closed form in regularized hypergeometric functions.

    Writing ``p = theta/pi`` and ``Fr(a, b; c) = 2F1(a, b; c; -1)/Gamma(c)``,

        a = 2**(1 + 2p) / (beta - i gamma)
        beta  = pi Gamma(1 + 2p) / Gamma(1/2 + p) [Fr(1/2, p; 3/2 + p) - 2 Fr(-1/2, p; 1/2 + p)]
        gamma = 4**p sqrt(pi) Gamma(1 - p) [Fr(1/2, -p; 3/2 - p) + 2 Fr(-1/2, -p; 1/2 - p)]

    This is the ``sec(theta)``-scaled form with the reflection formula applied
    to ``Gamma(1/2 - p)`` and ``Gamma(1 - 2p)``, so nothing is singular at
    ``theta = pi/2``.
    """
    theta = _check_angle(theta)
    p = theta / np.pi
    fr = hyp2f1_regularized_m1
    beta = np.pi * gamma(1 + 2 * p) * rgamma(0.5 + p) * (fr(0.5, p, 1.5 + p) - 2.0 * fr(-0.5, p, 0.5 + p))
    gam = 4.0**p * np.sqrt(np.pi) * gamma(1 - p) * (fr(0.5, -p, 1.5 - p) + 2.0 * fr(-0.5, -p, 0.5 - p))
    a = 2.0 ** (1 + 2 * p) / complex(beta, -gam)
    return SCConstant(a.real, a.imag, theta)


# ---------------------------------------------------------------------------
# the map itself
# ---------------------------------------------------------------------------

def _sc_integrand(t, p):
    return (1.0 - t * t) ** p * (1.0 + t * t) ** (1.0 - p) / (t * t)


def sc_derivative(zeta, theta: float, a: complex | None = None):
    """``g'(zeta)`` on the principal branch (valid for ``|zeta| < 1``)."""
    theta = _check_angle(theta)
    a = sc_constant_quadrature(theta).value if a is None else a
    return a * _sc_integrand(np.asarray(zeta, dtype=complex), theta / np.pi)


def _F_unscaled(zeta, p, n=64):
    """``F`` at interior points along the radial segment from the origin."""
    u, w = roots_legendre(n)
    u = 0.5 * (u + 1.0)
    w = 0.5 * w
    t = zeta[..., None] * u
    tt = np.where(t == 0, 1.0, t * t)
    # regular part (F' - 1/t^2), with its Taylor value near t = 0
    reg = np.where(np.abs(t) > 1e-4,
                   ((1.0 - t * t) ** p * (1.0 + t * t) ** (1.0 - p) - 1.0) / tt,
                   (1.0 - 2.0 * p) + 0.0j)
    return -1.0 / zeta + zeta * np.sum(w * reg, axis=-1)


def sc_map(zeta, theta: float, a: complex | None = None, n: int = 64):
    """Evaluate ``g(zeta)`` for ``0 < |zeta| < 1`` along the radial segment from 0.

    ``F(zeta) = -1/zeta + int_0^zeta (F'(t) - 1/t**2) dt``; the bracket is
    analytic at the origin.
    """
    theta = _check_angle(theta)
    a = sc_constant_quadrature(theta).value if a is None else a
    zeta = np.asarray(zeta, dtype=complex)
    if np.any(zeta == 0):
        raise ValueError("zeta = 0 is the pole of the map")
    return a * _F_unscaled(zeta, theta / np.pi, n)


def sc_vertex_images(theta: float, n: int = 60) -> np.ndarray:
    """Images ``g(-1), g(-i), g(1), g(i)`` of the four prevertices.

    The radial path is split at half radius; the outer half has an endpoint
    branch singularity, absorbed into a Gauss-Jacobi weight.
    """
    theta = _check_angle(theta)
    p = theta / np.pi
    a = sc_constant_quadrature(theta).value
    half = _F_unscaled(np.array([0.5, 0.5j]), p)

    def outer(alpha, smooth):
        # int_{1/2}^1 (1 - u)^alpha smooth(u) du with u = 3/4 + s/4
        s, w = roots_jacobi(n, alpha, 0.0)
        u = 0.75 + 0.25 * s
        return np.sum(w * smooth(u)) * 0.25 ** (1.0 + alpha)

    F1 = half[0] + outer(p, lambda u: (1 + u) ** p * (1 + u * u) ** (1 - p) / (u * u))
    Fi = half[1] + 1j * outer(1 - p, lambda u: -(1 + u * u) ** p * (1 + u) ** (1 - p) / (u * u))
    return a * np.array([-F1, -Fi, F1, Fi])


def residues_contour(theta: float, radius: float = 0.5, n: int = 256) -> tuple[complex, complex]:
    """Residues at 0 of ``zeta g'(zeta)`` and ``g'(zeta)/zeta`` by trapezoid on a circle.

    The trapezoid rule is spectrally accurate for periodic analytic integrands.
    """
    theta = _check_angle(theta)
    a = sc_constant_quadrature(theta).value
    phi = 2.0 * np.pi * np.arange(n) / n
    z = radius * np.exp(1j * phi)
    gp = sc_derivative(z, theta, a)
    # (1/2 pi i) oint h dz with dz = i z dphi  ->  mean(h * z)
    r1 = np.mean(z * gp * z)
    r2 = np.mean(gp / z * z)
    return complex(r1), complex(r2)


def w_solution(k: int, zeta, theta: float, a: complex | None = None):
    """Complex potentials solving the transformed flux problems in the disk.

    ``W1 = -(conj(a) zeta + a/zeta)``, ``W2 = -i (conj(a) zeta - a/zeta)``.
    Both are real on ``|zeta| = 1``.
    """
    theta = _check_angle(theta)
    zeta = np.asarray(zeta, dtype=complex)
    if np.any(zeta == 0):
        raise ValueError("zeta = 0 is the pole of the potential")
    a = sc_constant_quadrature(theta).value if a is None else a
    if k == 1:
        return -(np.conj(a) * zeta + a / zeta)
    if k == 2:
        return -1j * (np.conj(a) * zeta - a / zeta)
    raise ValueError(f"k must be 1 or 2, got {k}")


# ---------------------------------------------------------------------------
# excluded-volume matrices
# ---------------------------------------------------------------------------

def t_matrix_from_constant(a: complex, theta: float) -> np.ndarray:
    a1, a2 = a.real, a.imag
    pi = np.pi
    t11 = a1 * a1 * (pi - theta) + a2 * a2 * theta
    t12 = a1 * a2 * (pi - 2.0 * theta)
    t22 = a2 * a2 * (pi - theta) + a1 * a1 * theta
    return 4.0 * np.array([[t11, t12], [t12, t22]])


def t_matrix(theta: float, method: str = "quadrature") -> TMatrix:
    """Excluded-volume matrix ``T(theta)``.

    ``method`` picks the source of the map constant: ``"quadrature"`` (default)
    or ``"closed"``.
    """
    theta = _check_angle(theta)
    if method == "quadrature":
        a = sc_constant_quadrature(theta).value
    elif method == "closed":
        a = sc_constant(theta).value
    else:
        raise ValueError(f"unknown method {method!r}")
    return TMatrix.from_array(t_matrix_from_constant(a, theta))


def t_matrix_contour(theta: float, radius: float = 0.5, n: int = 256) -> TMatrix:
    """``T`` assembled from numerically computed residues instead of their closed values.

    Rows, read as complex numbers ``T[i,0] + i T[i,1]``:
    ``2 pi (conj(a) r1 + a r2)`` and ``2 pi i (conj(a) r1 - a r2)``.
    """
    a = sc_constant_quadrature(theta).value
    r1, r2 = residues_contour(theta, radius, n)
    row1 = 2.0 * np.pi * (np.conj(a) * r1 + a * r2)
    row2 = 2.0j * np.pi * (np.conj(a) * r1 - a * r2)
    return TMatrix.from_array([[row1.real, row1.imag], [row2.real, row2.imag]])


def t_matrix_limit(endpoint: float) -> TMatrix:
    """One-sided limits of ``T`` at ``theta -> 0+`` (``endpoint=0``) or ``theta -> pi-``.

    At both ends the map constant tends to a purely real or imaginary value of
    modulus 1/2, giving ``T11 = T12 = 0`` and ``T22 = pi``.
    """
    if endpoint not in (0, 0.0, np.pi):
        raise ValueError("endpoint must be 0 or pi")
    return TMatrix(0.0, 0.0, np.pi)


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def m_matrix(theta1: float, theta: float, table: "TTable | None" = None) -> np.ndarray:
    """``R(theta1) T(theta) R(theta1)^T``."""
    T = (table(theta) if table is not None else t_matrix(theta)).as_array()
    R = rotation(theta1)
    return R @ T @ R.T


def q_matrix(theta: float) -> np.ndarray:
    """``-oint x (x) n dS`` over the rhombus with inward normal: ``sin(theta) I``."""
    return np.sin(theta) * np.eye(2)


# ---------------------------------------------------------------------------
# tabulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TTable:
    """Interpolation table of ``T`` on Chebyshev-Lobatto nodes in ``[0, pi]``.

    The end nodes carry the one-sided limits; the node count is odd so that
    ``pi/2`` is a node. Interpolation is barycentric (polynomial of full
    degree), which reproduces node values exactly.
    """

    grid: np.ndarray
    values: np.ndarray  # (n, 3): t11, t12, t22

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if np.any(np.diff(g) <= 0):
            raise ValueError("table grid must be strictly increasing")
        object.__setattr__(self, "_interp", BarycentricInterpolator(g, np.asarray(self.values)))

    @property
    def order(self) -> int:
        return len(self.grid) - 1

    def entries(self, theta):
        """Interpolated ``(t11, t12, t22)`` with shape ``theta.shape + (3,)``."""
        theta = np.asarray(theta, dtype=float)
        out = np.asarray(self._interp(theta.ravel())).reshape(theta.shape + (3,))
        # exact node values (barycentric formula can lose the last bit at nodes)
        idx = np.searchsorted(self.grid, theta)
        idx = np.clip(idx, 0, len(self.grid) - 1)
        hit = self.grid[idx] == theta
        if np.any(hit):
            out[hit] = self.values[idx[hit]]
        return out

    def matrices(self, theta) -> np.ndarray:
        e = self.entries(theta)
        return np.stack([np.stack([e[..., 0], e[..., 1]], -1), np.stack([e[..., 1], e[..., 2]], -1)], -2)

    def __call__(self, theta: float) -> TMatrix:
        e = self.entries(np.array([theta]))[0]
        return TMatrix(float(e[0]), float(e[1]), float(e[2]))


def build_t_table(grid_size: int = 65) -> TTable:
    """Tabulate ``T`` on ``grid_size`` Chebyshev-Lobatto nodes (rounded up to odd)."""
    if grid_size < 16:
        raise ValueError(f"grid_size must be at least 16, got {grid_size}")
    n = grid_size if grid_size % 2 == 1 else grid_size + 1
    k = np.arange(n)
    grid = 0.5 * np.pi * (1.0 - np.cos(np.pi * k / (n - 1)))
    grid[0], grid[-1], grid[(n - 1) // 2] = 0.0, np.pi, 0.5 * np.pi
    vals = np.empty((n, 3))
    for i, th in enumerate(grid):
        T = t_matrix_limit(th) if i in (0, n - 1) else t_matrix(th)
        vals[i] = (T.t11, T.t12, T.t22)
    # square symmetry makes the off-diagonal vanish exactly at pi/2
    vals[(n - 1) // 2, 1] = 0.0
    return TTable(grid, vals)


def t_matrix_oracle(theta: float, mesh_resolution: float = 0.02, radius: float = 40.0) -> TMatrix:
    """``T`` from a direct finite-element solve of the exterior Neumann problems."""
    from .neumann import solve_exterior_neumann

    theta = _check_angle(theta)
    return TMatrix.from_array(solve_exterior_neumann(theta, mesh_resolution, radius).t)
