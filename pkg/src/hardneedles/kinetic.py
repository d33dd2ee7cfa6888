"""Nonlocal kinetic equation for the one-needle density ``p(x, y, theta, t)``.

    dp/dt = div_xi { D grad_xi p - f p + phi D int_0^pi Q(theta; p, p+) dtheta }

with ``D = diag(D_T, D_T, D_R)``, ``p+ = p(x, theta1 + theta)`` and

    Q_T = sin(theta) A + M(theta1, theta) B,     Q_R = sin(theta) p d_theta p+,
    A = 1/2 [ grad(p p+) + p p+ (f_T+ - f_T) / D_T ],
    B = 1/2 [ p grad p+ - p+ grad p + p p+ (f_T - f_T+) / D_T ],
    M(theta1, theta) = R(theta1) T(theta) R(theta1)^T.

All three coordinates are periodic and treated pseudo-spectrally. Every
angular integral is a correlation ``C_w[g](theta1) = int_0^pi w(theta)
g(theta1 + theta) dtheta``, which is diagonal on Fourier modes with
multiplier ``w_n = int_0^pi w(theta) exp(2i n theta) dtheta``. The weights
``w`` are ``sin`` and the entries of ``T``; their Fourier integrals are
computed once by Gauss-Legendre quadrature, so the angular integrals are
exact for the resolved modes. :func:`collision_flux` with
``method="trapezoid"`` evaluates the integrals literally on the grid and
serves as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conformal import TTable, build_t_table
from .errors import NumericalError
from .geometry import Torus2
from .spectral import ETDRK4, fourier_integral_weights


# ---------------------------------------------------------------------------
# grid and parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseGrid:
    """Uniform periodic grid on ``[0, Lx) x [0, Ly) x [0, pi)``."""

    Nx: int = 32
    Ny: int = 32
    Ntheta: int = 32
    box: Torus2 = field(default_factory=Torus2)

    def __post_init__(self):
        for name in ("Nx", "Ny", "Ntheta"):
            n = getattr(self, name)
            if n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.Nx, self.Ny, self.Ntheta)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.Nx) * (self.box.Lx / self.Nx)

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.Ny) * (self.box.Ly / self.Ny)

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.Ntheta) * (np.pi / self.Ntheta)

    @property
    def cell_volume(self) -> float:
        return self.box.Lx * self.box.Ly * np.pi / (self.Nx * self.Ny * self.Ntheta)

    def mesh(self):
        return np.meshgrid(self.x, self.y, self.theta, indexing="ij")

    def wavenumbers(self):
        """Derivative factors ``i k`` broadcastable against rfftn output (Nyquist zeroed)."""
        kx = 2j * np.pi * np.fft.fftfreq(self.Nx, d=self.box.Lx / self.Nx)
        ky = 2j * np.pi * np.fft.fftfreq(self.Ny, d=self.box.Ly / self.Ny)
        kt = 2j * np.fft.rfftfreq(self.Ntheta, d=1.0 / self.Ntheta)
        kx[self.Nx // 2] = 0.0
        ky[self.Ny // 2] = 0.0
        kt[-1] = 0.0
        return kx[:, None, None], ky[None, :, None], kt[None, None, :]


@dataclass(frozen=True)
class PhaseDensity:
    """Grid values of ``p`` and the time they belong to."""

    values: np.ndarray
    grid: PhaseGrid
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"density shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def spatial_marginal(self) -> np.ndarray:
        """``rho(x) = int p dtheta``."""
        return self.values.mean(axis=2) * np.pi

    def angular_marginal(self) -> np.ndarray:
        """``int p dx`` as a density on ``[0, pi)``."""
        return self.values.mean(axis=(0, 1)) * self.grid.box.area

    def nematic_order_field(self) -> np.ndarray:
        """``|int p exp(2i theta) dtheta| / int p dtheta`` at every spatial node."""
        z = (self.values * np.exp(2j * self.grid.theta)).mean(axis=2)
        return np.abs(z) / self.values.mean(axis=2)


@dataclass(frozen=True)
class KineticParams:
    """Coefficients of the kinetic equation.

    ``f_T`` has shape ``(2, Nx, Ny, Ntheta)`` and ``f_R`` shape
    ``(Nx, Ny, Ntheta)``; ``None`` means no drift.
    """

    D_T: float = 1.0
    D_R: float = 1.0
    phi: float = 0.0
    f_T: np.ndarray | None = None
    f_R: np.ndarray | None = None
    table: TTable | None = None

    def __post_init__(self):
        if self.phi < 0:
            raise ValueError(f"phi must be non-negative, got {self.phi}")
        if self.D_T <= 0 or self.D_R <= 0:
            raise ValueError("diffusivities D_T and D_R must be positive")

    def check_grid(self, grid: PhaseGrid) -> None:
        if self.f_T is not None and np.shape(self.f_T) != (2,) + grid.shape:
            raise ValueError(f"f_T must have shape {(2,) + grid.shape}")
        if self.f_R is not None and np.shape(self.f_R) != grid.shape:
            raise ValueError(f"f_R must have shape {grid.shape}")


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def kernel_AB(p, p_plus, grad_p, grad_p_plus, f_T=None, f_T_plus=None, D_T: float = 1.0):
    """Pointwise ``A`` and ``B`` vectors (leading axis of length 2).

    ``grad_p`` and ``grad_p_plus`` (and the drifts) carry the vector
    components on the leading axis.
    """
    p = np.asarray(p, dtype=float)
    p_plus = np.asarray(p_plus, dtype=float)
    grad_p = np.asarray(grad_p, dtype=float)
    grad_p_plus = np.asarray(grad_p_plus, dtype=float)
    pp = p * p_plus
    A = 0.5 * (p_plus * grad_p + p * grad_p_plus)
    B = 0.5 * (p * grad_p_plus - p_plus * grad_p)
    if f_T is not None:
        df = (np.asarray(f_T_plus) - np.asarray(f_T)) * (pp / D_T)
        A = A + 0.5 * df
        B = B - 0.5 * df
    return A, B


@dataclass(frozen=True)
class KernelSlices:
    """Angular weights of the collision integral on a grid of ``Ntheta`` nodes.

    ``sin_hat`` and ``t_hat`` are the Fourier integrals of ``sin`` and of
    ``(T11, T12, T22)`` on the rfft modes (spectral path); ``sin_nodes`` and
    ``t_nodes`` are the node values on the shift grid (trapezoid path).
    """

    Ntheta: int
    sin_hat: np.ndarray
    t_hat: np.ndarray
    sin_nodes: np.ndarray
    t_nodes: np.ndarray


def build_kernel_slices(Ntheta: int, table: TTable | None = None, n_quad: int = 400) -> KernelSlices:
    table = build_t_table(65) if table is None else table
    nmax = Ntheta // 2
    n = np.arange(nmax + 1)
    sin_hat = 2.0 / (1.0 - 4.0 * n * n) + 0j
    t_hat = fourier_integral_weights(lambda th: table.entries(th), nmax, n_quad)
    # drop the Nyquist mode consistently with the derivative factors
    sin_hat[-1] = 0.0
    t_hat[-1] = 0.0
    th = np.arange(Ntheta) * np.pi / Ntheta
    t_nodes = table.entries(np.append(th, np.pi))
    return KernelSlices(Ntheta, sin_hat, t_hat, np.sin(np.append(th, np.pi)), t_nodes)


def _correlate(G, w_hat, Nt):
    """``C_w[g]`` from ``G = rfft(g, axis=-1)``."""
    return np.fft.irfft(G * w_hat, Nt, axis=-1)


class KineticOperator:
    """Right-hand side of the kinetic equation on a fixed grid."""

    def __init__(self, grid: PhaseGrid, params: KineticParams, slices: KernelSlices | None = None):
        params.check_grid(grid)
        self.grid = grid
        self.params = params
        self.slices = build_kernel_slices(grid.Ntheta, params.table) if slices is None else slices
        if self.slices.Ntheta != grid.Ntheta:
            raise ValueError("kernel slices built for a different angular grid")
        self.kx, self.ky, self.kt = grid.wavenumbers()
        th = grid.theta
        self.c = np.cos(th)
        self.s = np.sin(th)
        D_T, D_R = params.D_T, params.D_R
        self.L = (D_T * (self.kx**2 + self.ky**2) + D_R * self.kt**2).real

    # spectral helpers -------------------------------------------------------
    def fwd(self, u):
        return np.fft.rfftn(u, axes=(0, 1, 2))

    def inv(self, U):
        return np.fft.irfftn(U, s=self.grid.shape, axes=(0, 1, 2))

    def grad_x(self, P):
        return self.inv(self.kx * P), self.inv(self.ky * P)

    # collision integrals ----------------------------------------------------
    def collision_spectral(self, p, P=None):
        """``(int Q_T dtheta, int Q_R dtheta)`` without the factor ``phi``."""
        prm, sl, Nt = self.params, self.slices, self.grid.Ntheta
        P = self.fwd(p) if P is None else P
        gx, gy = self.grad_x(P)
        grads = (gx, gy)
        fT = prm.f_T

        def theta_fft(u):
            return np.fft.rfft(u, axis=-1)

        Pt = theta_fft(p)
        Gt = [theta_fft(g) for g in grads]
        if fT is not None:
            PF = [theta_fft(p * fT[k]) for k in range(2)]

        # sin(theta) A
        Cs_p = _correlate(Pt, sin_hat := sl.sin_hat, Nt)
        QT = []
        for k in range(2):
            q = 0.5 * (grads[k] * Cs_p + p * _correlate(Gt[k], sin_hat, Nt))
            if fT is not None:
                q += 0.5 * p / prm.D_T * (_correlate(PF[k], sin_hat, Nt) - fT[k] * Cs_p)
            QT.append(q)

        # M B = R T R^T B: G[j, l, k] = int T_jl B_k dtheta
        idx = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 2}
        Gjlk = {}
        for e in range(3):
            w = sl.t_hat[:, e]
            Cp = _correlate(Pt, w, Nt)
            for k in range(2):
                b = 0.5 * (p * _correlate(Gt[k], w, Nt) - grads[k] * Cp)
                if fT is not None:
                    b += 0.5 * p / prm.D_T * (fT[k] * Cp - _correlate(PF[k], w, Nt))
                Gjlk[e, k] = b
        R = np.array([[self.c, -self.s], [self.s, self.c]])  # R[i, j] over theta1
        for i in range(2):
            acc = 0.0
            for j in range(2):
                for l in range(2):
                    for k in range(2):
                        acc = acc + R[i, j] * R[k, l] * Gjlk[idx[j, l], k]
            QT[i] = QT[i] + acc

        # sin(theta) p d_theta p+
        QR = p * _correlate(Pt * self.kt[0, 0], sin_hat, Nt)
        return np.stack(QT), QR

    def collision_trapezoid(self, p):
        """Same integrals by the trapezoid rule over grid shifts ``theta_j = j pi / Ntheta``."""
        prm, sl, Nt = self.params, self.slices, self.grid.Ntheta
        P = self.fwd(p)
        gx, gy = self.grad_x(P)
        grad = np.stack([gx, gy])
        dth = self.inv(self.kt * P)
        fT = prm.f_T
        h = np.pi / Nt
        QT = np.zeros((2,) + p.shape)
        QR = np.zeros(p.shape)
        c, s = self.c, self.s
        for j in range(Nt + 1):
            wgt = h * (0.5 if j in (0, Nt) else 1.0)
            pp = np.roll(p, -j, axis=-1)
            gp = np.roll(grad, -j, axis=-1)
            fp = None if fT is None else np.roll(fT, -j, axis=-1)
            A, B = kernel_AB(p, pp, grad, gp, fT, fp, prm.D_T)
            t11, t12, t22 = sl.t_nodes[j]
            # M B with M = R T R^T at every theta1
            rb0 = c * B[0] + s * B[1]
            rb1 = -s * B[0] + c * B[1]
            tb0 = t11 * rb0 + t12 * rb1
            tb1 = t12 * rb0 + t22 * rb1
            MB = np.stack([c * tb0 - s * tb1, s * tb0 + c * tb1])
            QT += wgt * (sl.sin_nodes[j] * A + MB)
            QR += wgt * sl.sin_nodes[j] * p * np.roll(dth, -j, axis=-1)
        return QT, QR

    # full right-hand side ---------------------------------------------------
    def nonlinear(self, P):
        """Spectral coefficients of everything except the linear diffusion."""
        prm = self.params
        p = self.inv(P)
        out = np.zeros_like(P)
        if prm.f_T is not None:
            out -= self.kx * self.fwd(prm.f_T[0] * p) + self.ky * self.fwd(prm.f_T[1] * p)
        if prm.f_R is not None:
            out -= self.kt * self.fwd(prm.f_R * p)
        if prm.phi != 0.0:
            QT, QR = self.collision_spectral(p, P)
            out += prm.phi * (prm.D_T * (self.kx * self.fwd(QT[0]) + self.ky * self.fwd(QT[1]))
                              + prm.D_R * self.kt * self.fwd(QR))
        out[0, 0, 0] = 0.0
        return out

    def rhs(self, p):
        P = self.fwd(p)
        return self.inv(self.L * P + self.nonlinear(P))


def collision_flux(p: PhaseDensity, params: KineticParams, method: str = "spectral"):
    """``phi * int_0^pi Q dtheta``: spatial flux ``(2, Nx, Ny, Nt)`` and angular flux ``(Nx, Ny, Nt)``."""
    op = KineticOperator(p.grid, params)
    if method == "spectral":
        QT, QR = op.collision_spectral(p.values)
    elif method == "trapezoid":
        QT, QR = op.collision_trapezoid(p.values)
    else:
        raise ValueError(f"unknown method {method!r}")
    return params.phi * QT, params.phi * QR


def rhs(p: PhaseDensity, params: KineticParams) -> np.ndarray:
    """Time derivative of ``p``; its grid sum is zero to rounding."""
    return KineticOperator(p.grid, params).rhs(p.values)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

@dataclass
class KineticTrajectory:
    times: np.ndarray
    snapshots: list
    masses: np.ndarray
    dt: float


def default_dt(grid: PhaseGrid, params: KineticParams) -> float:
    hx = min(grid.box.Lx / grid.Nx, grid.box.Ly / grid.Ny)
    return 0.5 * min(hx * hx / (4 * params.D_T), 0.1 / params.D_R)


def evolve(p0: PhaseDensity, params: KineticParams, t_end: float, dt: float | None = None,
           save_times=None, neg_tol: float = 1e-8, operator: KineticOperator | None = None) -> KineticTrajectory:
    """Integrate with a fourth-order exponential integrator (diffusion exact, the rest explicit).

    Raises:
        NumericalError: non-finite values or a negative excursion below
            ``-neg_tol * max(p)``.
    """
    grid = p0.grid
    op = KineticOperator(grid, params) if operator is None else operator
    dt = default_dt(grid, params) if dt is None else float(dt)
    outs = np.array([0.0, t_end]) if save_times is None else np.unique(np.asarray(save_times, dtype=float))
    if outs.size and (outs[0] < 0 or outs[-1] > t_end + 1e-12):
        raise ValueError("save_times must lie in [0, t_end]")
    cache: dict[float, ETDRK4] = {}

    def stepper(h):
        if h not in cache:
            cache[h] = ETDRK4(op.L, op.nonlinear, h)
        return cache[h]

    P = op.fwd(p0.values)
    t = p0.time
    snaps, masses = [], []
    for target in outs:
        while t < target - 1e-12:
            h = min(dt, target - t)
            if abs(h - dt) < 1e-14:
                h = dt
            P = stepper(h).step(P)
            t += h
            v = op.inv(P)
            if not np.all(np.isfinite(v)):
                raise NumericalError(f"kinetic evolution produced non-finite values at t={t:.6g}")
            if v.min() < -neg_tol * v.max():
                raise NumericalError(f"kinetic density went negative at t={t:.6g}: min {v.min():.3e}")
        v = op.inv(P)
        snaps.append(PhaseDensity(v, grid, float(t)))
        masses.append(v.sum() * grid.cell_volume)
    return KineticTrajectory(outs, snaps, np.array(masses), dt)
