"""Space-homogeneous McKean-Vlasov dynamics for the orientation density.

The orientation density ``p(theta, t)`` on ``[0, pi)`` obeys

    dp/dt = D_R [ p'' + phi (p (W' * p))' ],   (W' * p)(t1) = int_0^pi cos(t) p(t1 - t) dt.

Densities are sampled on ``M`` equispaced nodes; mode ``n`` is
``exp(2i n theta)``. The convolution is diagonal in that basis with
multiplier ``m_n = int_0^pi cos(t) exp(-2i n t) dt = 4i n / (1 - 4 n^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import NumericalError
from .spectral import ETDRK4, angular_grid, angular_wavenumbers

DEFAULT_M = 256


@dataclass(frozen=True)
class AngularDensity:
    """Grid values of a density on ``[0, pi)`` (``M`` even)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size % 2:
            raise ValueError(f"angular density needs an even number of nodes, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.size

    @property
    def theta(self) -> np.ndarray:
        return angular_grid(self.M)

    @property
    def mass(self) -> float:
        return float(self.values.mean() * np.pi)

    @classmethod
    def uniform(cls, M: int = DEFAULT_M) -> "AngularDensity":
        return cls(np.full(M, 1.0 / np.pi))

    @classmethod
    def from_function(cls, f, M: int = DEFAULT_M) -> "AngularDensity":
        return cls(f(angular_grid(M)))

    def check(self, tol: float = 1e-10) -> None:
        if abs(self.mass - 1.0) > tol:
            raise ValueError(f"density must have unit mass, got {self.mass}")
        if self.values.min() < -tol:
            raise ValueError(f"density is negative: min {self.values.min()}")


def _values(p) -> np.ndarray:
    return p.values if isinstance(p, AngularDensity) else np.asarray(p, dtype=float)


@lru_cache(maxsize=16)
def wprime_multipliers(M: int) -> np.ndarray:
    """Convolution multipliers on the rfft modes; the Nyquist mode is dropped."""
    n = angular_wavenumbers(M)
    m = 4j * n / (1.0 - 4.0 * n * n)
    m[-1] = 0.0
    m.flags.writeable = False
    return m


def _ik(M: int) -> np.ndarray:
    """Spectral derivative factor ``2i n`` with the Nyquist mode zeroed."""
    k = 2j * angular_wavenumbers(M)
    k[-1] = 0.0
    return k


def convolve_Wprime(p) -> np.ndarray:
    """``(W' * p)(theta1) = int_0^pi cos(theta) p(theta1 - theta) dtheta`` on the grid."""
    v = _values(p)
    return np.fft.irfft(np.fft.rfft(v) * wprime_multipliers(v.size), v.size)


def derivative(p) -> np.ndarray:
    v = _values(p)
    return np.fft.irfft(np.fft.rfft(v) * _ik(v.size), v.size)


def antiderivative(g) -> np.ndarray:
    """Periodic antiderivative of a zero-mean field, pinned to zero at ``theta = 0``."""
    v = _values(g)
    G = np.fft.rfft(v)
    k = _ik(v.size)
    out = np.zeros_like(G)
    out[1:-1] = G[1:-1] / k[1:-1]
    a = np.fft.irfft(out, v.size)
    return a - a[0]


def mkv_rhs(p, phi: float, D_R: float) -> np.ndarray:
    """Time derivative of the grid density. The mean mode is exactly zero."""
    v = _values(p)
    M = v.size
    flux = np.fft.rfft(v * convolve_Wprime(v))
    P = np.fft.rfft(v)
    k = _ik(M)
    return np.fft.irfft(D_R * (k * k * P + phi * k * flux), M)


def growth_rate(n: int, phi: float, D_R: float, formula: str = "linearized") -> float:
    """Growth rate of mode ``cos(2 n theta)`` about the uniform state.

    ``"linearized"`` is the eigenvalue of the linearization of :func:`mkv_rhs`,
    ``-4 n^2 D_R (1 - 2 phi / ((4 n^2 - 1) pi))``. ``"printed"`` carries an
    extra factor ``n`` in the interaction term,
    ``-4 n^2 D_R (1 - 2 phi n / ((4 n^2 - 1) pi))``. Both vanish at
    ``phi = 3 pi / 2`` for ``n = 1``.
    """
    if n < 1 or int(n) != n:
        raise ValueError(f"mode index must be a positive integer, got {n}")
    n = int(n)
    if formula == "linearized":
        g = 2.0 * phi / ((4 * n * n - 1) * np.pi)
    elif formula == "printed":
        g = 2.0 * phi * n / ((4 * n * n - 1) * np.pi)
    else:
        raise ValueError(f"unknown formula {formula!r}")
    return -4.0 * n * n * D_R * (1.0 - g)


def mode_threshold(n, formula: str = "printed"):
    """Density above which mode ``n`` grows."""
    n = np.asarray(n, dtype=float)
    base = (4 * n * n - 1) * np.pi / 2
    if formula == "printed":
        return base / n
    if formula == "linearized":
        return base
    raise ValueError(f"unknown formula {formula!r}")


def critical_phi(nmax: int = 100, formula: str = "printed") -> tuple[float, int]:
    """Smallest mode threshold over ``n = 1..nmax`` and its minimizer."""
    n = np.arange(1, nmax + 1)
    th = mode_threshold(n, formula)
    k = int(np.argmin(th))
    return float(th[k]), int(n[k])


@dataclass(frozen=True)
class StabilityReport:
    phi: float
    D_R: float
    modes: np.ndarray
    rates: np.ndarray
    most_unstable: int
    phi_c: float


def stability_report(phi: float, D_R: float = 1.0, nmax: int = 10, formula: str = "linearized") -> StabilityReport:
    modes = np.arange(1, nmax + 1)
    rates = np.array([growth_rate(n, phi, D_R, formula) for n in modes])
    return StabilityReport(phi, D_R, modes, rates, int(modes[np.argmax(rates)]), critical_phi(formula="printed")[0])


# ---------------------------------------------------------------------------
# time evolution
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    profiles: np.ndarray  # (len(times), M)
    dt_used: float
    meta: dict = field(default_factory=dict)

    @property
    def theta(self) -> np.ndarray:
        return angular_grid(self.profiles.shape[1])


def _mkv_stepper(M: int, phi: float, D_R: float, dt: float) -> ETDRK4:
    k = _ik(M)
    L = (D_R * k * k).real

    def nonlinear(P):
        v = np.fft.irfft(P, M)
        flux = np.fft.rfft(v * np.fft.irfft(P * wprime_multipliers(M), M))
        out = D_R * phi * k * flux
        out[0] = 0.0
        return out

    return ETDRK4(L, nonlinear, dt)


def _output_times(t_end: float, save_times) -> np.ndarray:
    if save_times is None:
        return np.array([0.0, t_end])
    s = np.unique(np.asarray(save_times, dtype=float))
    if s.size and (s[0] < 0 or s[-1] > t_end + 1e-12):
        raise ValueError("save_times must lie in [0, t_end]")
    return s


def evolve(p0, phi: float, D_R: float, t_end: float, dt: float | None = None,
           save_times=None, blowup: float = 1e6, neg_tol: float = 1e-8) -> Trajectory:
    """Integrate the McKean-Vlasov equation with a fourth-order exponential integrator.

    Diffusion is integrated exactly and the transport term explicitly. The
    step is shortened to land on every requested output time. A negative
    excursion below ``-neg_tol`` halves ``dt`` and retries the step.

    Raises:
        NumericalError: non-finite values, ``max p`` above ``blowup``, or
            repeated positivity failure.
    """
    v = _values(p0).copy()
    M = v.size
    if phi < 0 or D_R <= 0 or t_end < 0:
        raise ValueError("need phi >= 0, D_R > 0 and t_end >= 0")
    dt = 0.01 / D_R if dt is None else float(dt)
    outs = _output_times(t_end, save_times)
    steppers: dict[float, ETDRK4] = {}

    def stepper(h):
        if h not in steppers:
            steppers[h] = _mkv_stepper(M, phi, D_R, h)
        return steppers[h]

    P = np.fft.rfft(v)
    t = 0.0
    frames = []
    oi = 0
    while oi < outs.size and outs[oi] <= 0.0:
        frames.append(v.copy())
        oi += 1
    h = dt
    while oi < outs.size:
        target = outs[oi]
        while t < target - 1e-12:
            step = min(h, target - t)
            # round near-equal steps to the cached size
            if abs(step - h) < 1e-14:
                step = h
            for _ in range(30):
                Pn = stepper(step).step(P)
                vn = np.fft.irfft(Pn, M)
                if not np.all(np.isfinite(vn)) or vn.max() > blowup:
                    raise NumericalError(f"mkv evolution blew up at t={t:.6g}")
                if vn.min() >= -neg_tol:
                    break
                step *= 0.5
                h = step
            else:
                raise NumericalError(f"positivity lost at t={t:.6g} even after step reduction")
            P = Pn
            t += step
        frames.append(np.fft.irfft(P, M))
        oi += 1
    return Trajectory(outs, np.array(frames), h, {"phi": phi, "D_R": D_R})


def mode_amplitudes(p, nmax: int = 4) -> np.ndarray:
    """Amplitudes ``|c_n|`` of ``p = 1/pi + sum c_n exp(2i n theta) + c.c.``, n = 1..nmax."""
    v = _values(p)
    P = np.fft.rfft(v) / v.size
    return 2.0 * np.abs(P[1:nmax + 1])


# ---------------------------------------------------------------------------
# stationary states
# ---------------------------------------------------------------------------

def stationary_residual(p, phi: float) -> float:
    """Sup norm of ``p' + phi p (W' * p)``, the zero-flux stationarity condition."""
    v = _values(p)
    return float(np.abs(derivative(v) + phi * v * convolve_Wprime(v)).max())


def fixed_point_map(p, phi: float) -> np.ndarray:
    """``C exp(-phi int_0^theta (W' * p))`` normalized to unit mass."""
    v = _values(p)
    g = convolve_Wprime(v)
    e = -phi * antiderivative(g)
    e -= e.max()
    q = np.exp(e)
    return q / (q.mean() * np.pi)


@dataclass
class FixedPointResult:
    density: AngularDensity
    iterations: int
    converged: bool
    update: float
    residual: float
    newton_steps: int = 0


@lru_cache(maxsize=4)
def _fixed_point_linear_part(M: int) -> np.ndarray:
    """Dense matrix of ``p -> antiderivative(W' * p)``."""
    I = np.eye(M)
    A = np.stack([antiderivative(convolve_Wprime(I[:, j])) for j in range(M)], axis=1)
    A.flags.writeable = False
    return A


def _newton_polish(v, phi, tol, max_steps):
    """Newton iteration on ``G(p) - p = 0`` with a least-squares solve.

    The Jacobian is singular along the rotation of a nematic state; the
    minimum-norm step ignores that direction.
    """
    M = v.size
    L = -phi * _fixed_point_linear_part(M)
    eye = np.eye(M)
    steps = 0
    for steps in range(1, max_steps + 1):
        e = L @ v
        e -= e.max()
        q = np.exp(e)
        q /= q.mean() * np.pi
        F = q - v
        if np.abs(F).max() < tol:
            return v, steps - 1, float(np.abs(F).max())
        J = q[:, None] * L - np.outer(q, (np.pi / M) * (q @ L))
        v = v + np.linalg.lstsq(J - eye, -F, rcond=1e-12)[0]
    q = fixed_point_map(v, phi)
    return v, steps, float(np.abs(q - v).max())


def stationary_fixed_point(p0, phi: float, tol: float = 1e-12, max_iter: int = 5000,
                           omega: float = 0.5, residual_tol: float | None = None,
                           newton: bool = True, picard_iter: int = 300,
                           newton_steps: int = 100) -> FixedPointResult:
    """Stationary density by damped fixed-point iteration.

    ``p <- (1 - omega) p + omega G(p)`` with ``G`` from :func:`fixed_point_map`.
    Stops when the sup-norm update drops below ``tol`` or, if given, the
    stationarity residual drops below ``residual_tol``. Near the critical
    density the iteration slows to algebraic convergence; with ``newton=True``
    a Newton polish takes over after ``picard_iter`` damped sweeps.

    Non-convergence after ``max_iter`` returns the last iterate with
    ``converged=False``.
    """
    v = _values(p0).copy()
    if phi < 0:
        raise ValueError(f"phi must be non-negative, got {phi}")
    if not 0 < omega <= 1:
        raise ValueError(f"omega must lie in (0, 1], got {omega}")
    upd = np.inf
    it = 0
    nsteps = 0
    while it < max_iter:
        it += 1
        q = fixed_point_map(v, phi)
        new = (1 - omega) * v + omega * q
        upd = float(np.abs(new - v).max())
        v = new
        if upd < tol or (residual_tol is not None and stationary_residual(v, phi) < residual_tol):
            break
        if newton and it >= picard_iter:
            v, nsteps, upd = _newton_polish(v, phi, tol, newton_steps)
            break
    res = stationary_residual(v, phi)
    conv = upd < tol or (residual_tol is not None and res < residual_tol)
    return FixedPointResult(AngularDensity(v), it, bool(conv), upd, res, nsteps)


# ---------------------------------------------------------------------------
# comparison modulo rotation
# ---------------------------------------------------------------------------

def shift(p, delta: float) -> np.ndarray:
    """``p(theta - delta)`` by spectral interpolation."""
    v = _values(p)
    n = angular_wavenumbers(v.size)
    P = np.fft.rfft(v) * np.exp(-2j * n * delta)
    P[-1] = P[-1].real * np.cos(n[-1] * 2 * delta)
    return np.fft.irfft(P, v.size)


def align_shift(p, ref) -> float:
    """Shift ``delta`` maximizing the cross-correlation of ``p(. - delta)`` with ``ref``."""
    a, b = _values(p), _values(ref)
    n = angular_wavenumbers(a.size)
    C = np.conj(np.fft.rfft(b)) * np.fft.rfft(a)
    w = np.where((n == 0) | (n == n[-1]), 1.0, 2.0)

    def derivs(d):
        z = C * np.exp(-2j * n * d)
        return (np.sum(w * (z * (-2j * n)).real), np.sum(w * (z * (-4.0 * n * n)).real))

    grid = np.linspace(0, np.pi, 4 * a.size, endpoint=False)
    vals = (C[None, :] * np.exp(-2j * np.outer(grid, n))).real @ w
    d = grid[np.argmax(vals)]
    h = grid[1] - grid[0]
    # Newton on the derivative of the correlation, kept inside the bracketing cell
    for _ in range(50):
        g1, g2 = derivs(d)
        if g2 >= 0:
            break
        step = -g1 / g2
        step = float(np.clip(step, -h, h))
        d += step
        if abs(step) < 1e-15:
            break
    return float(np.mod(d, np.pi))


def l2_distance(p, q) -> float:
    a, b = _values(p), _values(q)
    return float(np.sqrt(np.pi * np.mean((a - b) ** 2)))


def aligned_l2_distance(p, ref) -> float:
    """L2 distance after rotating ``p`` onto ``ref``."""
    return l2_distance(shift(p, align_shift(p, ref)), ref)
