"""Brownian dynamics of hard needles on the torus.

Each step proposes an Euler-Maruyama move for every needle,

    dX = sqrt(2 D_T dt) xi + f_T dt,     dTheta = sqrt(2 D_R dt) eta + f_R dt,

and applies the proposals one needle at a time in a random order. A proposal
that would make the needle overlap any other needle is rejected and the
needle keeps its old state, so every reachable configuration is admissible.
Neighbour search uses a cell list with cells of side at least ``eps``, which
is the largest centre distance at which two needles of length ``eps`` can
touch.

Noise for step ``k`` is drawn from a Philox stream keyed by
``(seed, k // NOISE_BLOCK)``, so a trajectory depends only on the parameters
and the seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .geometry import DEFAULT_REL_TOL, NeedleConfig, Torus2, overlap_mask, reduce_angle

NOISE_BLOCK = 256


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftSpec:
    """External force ``(f_T, f_R)`` acting on each needle through its own state only.

    ``kind`` is ``"none"``, ``"constant"`` (``f_T`` a 2-vector, ``f_R`` a
    scalar) or ``"table"`` (``f_T`` of shape ``(2, Nx, Ny, Ntheta)`` and
    ``f_R`` of shape ``(Nx, Ny, Ntheta)`` sampled on the uniform periodic grid,
    read at the nearest node).
    """

    kind: str = "none"
    f_T: np.ndarray | None = None
    f_R: np.ndarray | float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "constant", "table"):
            raise ValueError(f"drift kind must be none, constant or table, got {self.kind!r}")
        if self.kind == "constant":
            fT = np.zeros(2) if self.f_T is None else np.asarray(self.f_T, dtype=float).reshape(2)
            object.__setattr__(self, "f_T", fT)
            object.__setattr__(self, "f_R", 0.0 if self.f_R is None else float(self.f_R))
        elif self.kind == "table":
            fT = np.asarray(self.f_T, dtype=float)
            fR = np.asarray(self.f_R, dtype=float)
            if fT.ndim != 4 or fT.shape[0] != 2 or fR.shape != fT.shape[1:]:
                raise ValueError("table drift needs f_T of shape (2, Nx, Ny, Ntheta) and f_R of shape (Nx, Ny, Ntheta)")
            object.__setattr__(self, "f_T", fT)
            object.__setattr__(self, "f_R", fR)

    def evaluate(self, x: np.ndarray, theta: np.ndarray, box: Torus2):
        """Drift at needle states ``x`` (shape ``(N, 2)``) and ``theta`` (shape ``(N,)``)."""
        n = len(theta)
        if self.kind == "none":
            return np.zeros((n, 2)), np.zeros(n)
        if self.kind == "constant":
            return np.broadcast_to(self.f_T, (n, 2)), np.full(n, self.f_R)
        _, Nx, Ny, Nt = self.f_T.shape
        i = np.rint(box.wrap(x)[:, 0] / box.Lx * Nx).astype(int) % Nx
        j = np.rint(box.wrap(x)[:, 1] / box.Ly * Ny).astype(int) % Ny
        k = np.rint(reduce_angle(theta) / np.pi * Nt).astype(int) % Nt
        return self.f_T[:, i, j, k].T, self.f_R[i, j, k]


@dataclass(frozen=True)
class SimParams:
    """Parameters of a hard-needle simulation.

    ``phi`` is the occupied fraction ``(N-1) eps^2 / (Lx Ly)``; on the unit
    box it is the familiar ``(N-1) eps^2``.
    """

    N: int
    eps: float
    D_T: float = 1.0
    D_R: float = 1.0
    dt: float = 1e-4
    box: Torus2 = field(default_factory=lambda: Torus2(1.0, 1.0))
    drift: DriftSpec = field(default_factory=DriftSpec)
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be at least 1, got {self.N}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.D_T < 0 or self.D_R < 0:
            raise ValueError("diffusivities D_T and D_R must be non-negative")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if 2 * self.eps >= min(self.box.Lx, self.box.Ly):
            raise ValueError("box sides must exceed 2 eps for the minimum-image overlap test")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if math.sqrt(2 * self.D_T * self.dt) > self.eps / 4:
            warnings.warn("translational step sqrt(2 D_T dt) exceeds eps/4", stacklevel=2)

    @property
    def phi(self) -> float:
        return (self.N - 1) * self.eps**2 / self.box.area


@dataclass
class ParticleState:
    """Needle centres (wrapped), orientations in ``[0, pi)`` and unwrapped copies for displacements."""

    x: np.ndarray
    theta: np.ndarray
    time: float = 0.0
    step: int = 0
    x_unwrapped: np.ndarray | None = None
    theta_unwrapped: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=float).reshape(-1, 2)
        self.theta = np.ascontiguousarray(self.theta, dtype=float).reshape(-1)
        if self.x_unwrapped is None:
            self.x_unwrapped = self.x.copy()
        if self.theta_unwrapped is None:
            self.theta_unwrapped = self.theta.copy()

    @property
    def N(self) -> int:
        return len(self.theta)

    def needles(self, eps: float) -> list[NeedleConfig]:
        return [NeedleConfig(self.x[i], self.theta[i], eps) for i in range(self.N)]

    def copy(self) -> "ParticleState":
        return ParticleState(self.x.copy(), self.theta.copy(), self.time, self.step,
                             self.x_unwrapped.copy(), self.theta_unwrapped.copy())


def count_overlaps(state: ParticleState, eps: float, box: Torus2) -> int:
    """Number of overlapping pairs by a full O(N^2) scan with the geometry predicate."""
    i, j = np.triu_indices(state.N, 1)
    return int(np.count_nonzero(overlap_mask(state.x[i], state.theta[i], state.x[j], state.theta[j], eps, box)))


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _pair_overlap(x1, y1, t1, x2, y2, t2, eps, Lx, Ly, tol):
    """Same arithmetic as ``geometry.overlap_mask`` for one pair."""
    dx = x2 - x1
    dy = y2 - y1
    dx = dx - Lx * math.floor(dx / Lx + 0.5)
    dy = dy - Ly * math.floor(dy / Ly + 0.5)
    if dx * dx + dy * dy > (eps + 2 * tol) ** 2:
        return False
    h = 0.5 * eps
    e1x = math.cos(t1) * h
    e1y = math.sin(t1) * h
    e2x = math.cos(t2) * h
    e2y = math.sin(t2) * h
    p1x, p1y, p2x, p2y = -e1x, -e1y, e1x, e1y
    q1x, q1y, q2x, q2y = dx - e2x, dy - e2y, dx + e2x, dy + e2y
    abx, aby = p2x - p1x, p2y - p1y
    cdx, cdy = q2x - q1x, q2y - q1y
    lp = math.hypot(abx, aby)
    lq = math.hypot(cdx, cdy)
    d1 = (abx * (q1y - p1y) - aby * (q1x - p1x)) / lp
    d2 = (abx * (q2y - p1y) - aby * (q2x - p1x)) / lp
    d3 = (cdx * (p1y - q1y) - cdy * (p1x - q1x)) / lq
    d4 = (cdx * (p2y - q1y) - cdy * (p2x - q1x)) / lq
    if abs(d1) <= tol:
        d1 = 0.0
    if abs(d2) <= tol:
        d2 = 0.0
    if abs(d3) <= tol:
        d3 = 0.0
    if abs(d4) <= tol:
        d4 = 0.0
    if (d1 == 0.0 and d2 == 0.0) or (d3 == 0.0 and d4 == 0.0):
        ux, uy = abx / lp, aby / lp
        a = (q1x - p1x) * ux + (q1y - p1y) * uy
        b = (q2x - p1x) * ux + (q2y - p1y) * uy
        return max(a, b) >= -tol and min(a, b) <= lp + tol
    return d1 * d2 <= 0.0 and d3 * d4 <= 0.0


@njit(cache=True)
def _cell_index(x, y, Lx, Ly, ncx, ncy):
    cx = int(math.floor(x / Lx * ncx)) % ncx
    cy = int(math.floor(y / Ly * ncy)) % ncy
    return cx * ncy + cy


@njit(cache=True)
def _build_cells(x, ncx, ncy, Lx, Ly, head, nxt, prv, cell):
    head[:] = -1
    for i in range(x.shape[0]):
        c = _cell_index(x[i, 0], x[i, 1], Lx, Ly, ncx, ncy)
        cell[i] = c
        prv[i] = -1
        nxt[i] = head[c]
        if head[c] >= 0:
            prv[head[c]] = i
        head[c] = i


@njit(cache=True)
def _unlink(i, head, nxt, prv, cell):
    if prv[i] >= 0:
        nxt[prv[i]] = nxt[i]
    else:
        head[cell[i]] = nxt[i]
    if nxt[i] >= 0:
        prv[nxt[i]] = prv[i]


@njit(cache=True)
def _link(i, c, head, nxt, prv, cell):
    cell[i] = c
    prv[i] = -1
    nxt[i] = head[c]
    if head[c] >= 0:
        prv[head[c]] = i
    head[c] = i


@njit(cache=True)
def _collides(i, xn, yn, tn, x, theta, eps, Lx, Ly, tol, use_cells, ncx, ncy, head, nxt):
    n = x.shape[0]
    if not use_cells:
        for j in range(n):
            if j != i and _pair_overlap(xn, yn, tn, x[j, 0], x[j, 1], theta[j], eps, Lx, Ly, tol):
                return True
        return False
    c = _cell_index(xn, yn, Lx, Ly, ncx, ncy)
    cx = c // ncy
    cy = c % ncy
    for ox in range(-1, 2):
        for oy in range(-1, 2):
            cc = ((cx + ox) % ncx) * ncy + (cy + oy) % ncy
            j = head[cc]
            while j >= 0:
                if j != i and _pair_overlap(xn, yn, tn, x[j, 0], x[j, 1], theta[j], eps, Lx, Ly, tol):
                    return True
                j = nxt[j]
    return False


@njit(cache=True)
def _sweep(x, theta, prop_x, prop_t, order, eps, Lx, Ly, tol, use_cells, ncx, ncy,
           head, nxt, prv, cell, accepted):
    """Apply proposals sequentially; ``accepted[i]`` records the outcome."""
    for k in range(order.shape[0]):
        i = order[k]
        xn = prop_x[i, 0] - Lx * math.floor(prop_x[i, 0] / Lx)
        yn = prop_x[i, 1] - Ly * math.floor(prop_x[i, 1] / Ly)
        tn = prop_t[i] - math.pi * math.floor(prop_t[i] / math.pi)
        # guard the half-open ranges against rounding up to the period
        if xn >= Lx:
            xn -= Lx
        if yn >= Ly:
            yn -= Ly
        if tn >= math.pi:
            tn -= math.pi
        if _collides(i, xn, yn, tn, x, theta, eps, Lx, Ly, tol, use_cells, ncx, ncy, head, nxt):
            accepted[i] = False
            continue
        accepted[i] = True
        x[i, 0] = xn
        x[i, 1] = yn
        theta[i] = tn
        if use_cells:
            c = _cell_index(xn, yn, Lx, Ly, ncx, ncy)
            if c != cell[i]:
                _unlink(i, head, nxt, prv, cell)
                _link(i, c, head, nxt, prv, cell)


@njit(cache=True)
def _first_collision(xn, yn, tn, x, theta, m, eps, Lx, Ly, tol):
    for j in range(m):
        if _pair_overlap(xn, yn, tn, x[j, 0], x[j, 1], theta[j], eps, Lx, Ly, tol):
            return True
    return False


# ---------------------------------------------------------------------------
# simulator
# ---------------------------------------------------------------------------

def cell_grid(eps: float, box: Torus2, N: int) -> tuple[int, int]:
    """Cells per axis: side at least ``eps`` and no more cells than about ``4 N``."""
    cap = max(3, int(math.isqrt(4 * N)))
    return min(int(box.Lx // eps), cap), min(int(box.Ly // eps), cap)


def noise_block(seed: int, block: int, N: int):
    """Gaussian increments ``(NOISE_BLOCK, N, 3)`` and update orders for one block of steps."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))
    z = rng.standard_normal((NOISE_BLOCK, N, 3))
    orders = np.argsort(rng.random((NOISE_BLOCK, N)), axis=1)
    return z, orders


class Simulator:
    """Holds the cell list and noise cache for one trajectory."""

    def __init__(self, params: SimParams, state: ParticleState):
        self.params = params
        self.state = state
        box = params.box
        self.ncx, self.ncy = cell_grid(params.eps, box, params.N)
        self.use_cells = self.ncx >= 3 and self.ncy >= 3
        nc = self.ncx * self.ncy
        self.head = np.full(nc, -1, dtype=np.int64)
        self.nxt = np.empty(params.N, dtype=np.int64)
        self.prv = np.empty(params.N, dtype=np.int64)
        self.cell = np.empty(params.N, dtype=np.int64)
        self.tol = DEFAULT_REL_TOL * params.eps
        self._block = -1
        self._noise = None
        self.accepted = np.zeros(params.N, dtype=np.bool_)

    def _noise_for(self, step: int):
        b = step // NOISE_BLOCK
        if b != self._block:
            self._noise = noise_block(self.params.seed, b, self.params.N)
            self._block = b
        z, orders = self._noise
        r = step % NOISE_BLOCK
        return z[r], orders[r]

    def step(self) -> float:
        """Advance one step in place; returns the fraction of accepted proposals."""
        prm, s = self.params, self.state
        z, order = self._noise_for(s.step)
        fT, fR = prm.drift.evaluate(s.x, s.theta, prm.box)
        dx = math.sqrt(2 * prm.D_T * prm.dt) * z[:, :2] + fT * prm.dt
        dth = math.sqrt(2 * prm.D_R * prm.dt) * z[:, 2] + fR * prm.dt
        prop_x = s.x + dx
        prop_t = s.theta + dth
        if self.use_cells:
            _build_cells(s.x, self.ncx, self.ncy, prm.box.Lx, prm.box.Ly, self.head, self.nxt, self.prv, self.cell)
        _sweep(s.x, s.theta, prop_x, prop_t, order, prm.eps, prm.box.Lx, prm.box.Ly, self.tol,
               self.use_cells, self.ncx, self.ncy, self.head, self.nxt, self.prv, self.cell, self.accepted)
        acc = self.accepted
        s.x_unwrapped[acc] += dx[acc]
        s.theta_unwrapped[acc] += dth[acc]
        s.step += 1
        s.time = s.step * prm.dt
        return float(acc.mean())


def sample_admissible_initial(params: SimParams, max_attempts: int = 10**6) -> ParticleState:
    """Random sequential insertion of uniform needles, rejecting any that overlaps those already placed.

    Raises:
        RuntimeError: more than ``max_attempts`` rejections for a single needle.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([params.seed, 2**32 + 1])))
    box, eps = params.box, params.eps
    x = np.empty((params.N, 2))
    th = np.empty(params.N)
    tol = DEFAULT_REL_TOL * eps
    batch = 1024
    for m in range(params.N):
        tries = 0
        while True:
            cand = rng.random((batch, 3)) * np.array([box.Lx, box.Ly, np.pi])
            placed = False
            for c in cand:
                tries += 1
                if not _first_collision(c[0], c[1], c[2], x, th, m, eps, box.Lx, box.Ly, tol):
                    x[m] = c[:2]
                    th[m] = c[2]
                    placed = True
                    break
                if tries >= max_attempts:
                    raise RuntimeError(
                        f"could not place needle {m + 1} of {params.N} after {max_attempts} attempts; "
                        f"occupied fraction phi={params.phi:.3g} is too high for random insertion")
            if placed:
                break
    return ParticleState(x, th)


def insertion_acceptance(params: SimParams, n_draws: int, rng: np.random.Generator) -> float:
    """Fraction of uniform second needles that do not overlap a uniform first needle (``N = 2``)."""
    box, eps = params.box, params.eps
    a = rng.random((n_draws, 3)) * np.array([box.Lx, box.Ly, np.pi])
    b = rng.random((n_draws, 3)) * np.array([box.Lx, box.Ly, np.pi])
    return float(1.0 - overlap_mask(a[:, :2], a[:, 2], b[:, :2], b[:, 2], eps, box).mean())


def step(state: ParticleState, params: SimParams) -> ParticleState:
    """One step from ``state``; the input is left unchanged."""
    sim = Simulator(params, state.copy())
    sim.step()
    return sim.state


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def nematic_order(theta: np.ndarray) -> float:
    """``|mean exp(2i theta)|``."""
    return float(np.abs(np.mean(np.exp(2j * np.asarray(theta)))))


def isotropic_order_baseline(N: int) -> tuple[float, float]:
    """Mean and standard deviation of the nematic order of ``N`` i.i.d. uniform angles.

    ``N |mean exp(2i theta)|^2`` is asymptotically exponential with mean 1,
    so the order is Rayleigh distributed with scale ``1/sqrt(2N)``.
    """
    return math.sqrt(math.pi / (4 * N)), math.sqrt((4 - math.pi) / (4 * N))


@dataclass
class ObservableSeries:
    times: np.ndarray
    order: np.ndarray
    angle_hist: np.ndarray
    space_hist: np.ndarray
    msd_x: np.ndarray
    msd_theta: np.ndarray
    acceptance: np.ndarray
    final_state: ParticleState | None = None
    angle_bins: int = 18
    space_bins: int = 10


def observe(state: ParticleState, x0: np.ndarray, t0: np.ndarray, box: Torus2, angle_bins: int, space_bins: int):
    ah, _ = np.histogram(state.theta, bins=angle_bins, range=(0.0, np.pi))
    sh, _, _ = np.histogram2d(state.x[:, 0], state.x[:, 1], bins=space_bins,
                              range=[[0.0, box.Lx], [0.0, box.Ly]])
    d = state.x_unwrapped - x0
    return (nematic_order(state.theta), ah / state.N, sh / state.N,
            float(np.mean(np.sum(d * d, axis=1))), float(np.mean((state.theta_unwrapped - t0) ** 2)))


def run(params: SimParams, t_end: float, observe_every: float, state: ParticleState | None = None,
        angle_bins: int = 18, space_bins: int = 10) -> ObservableSeries:
    """Simulate to ``t_end`` and record observables every ``observe_every`` time units.

    Displacements are measured from the state at the start of the run.
    """
    if t_end < 0 or observe_every <= 0:
        raise ValueError("need t_end >= 0 and observe_every > 0")
    state = sample_admissible_initial(params) if state is None else state.copy()
    sim = Simulator(params, state)
    n_steps = int(round(t_end / params.dt))
    every = max(1, int(round(observe_every / params.dt)))
    x0 = state.x_unwrapped.copy()
    t0 = state.theta_unwrapped.copy()
    rows = [observe(state, x0, t0, params.box, angle_bins, space_bins)]
    times = [state.time]
    acc_rates = [np.nan]
    acc_sum, acc_n = 0.0, 0
    for k in range(1, n_steps + 1):
        acc_sum += sim.step()
        acc_n += 1
        if k % every == 0 or k == n_steps:
            rows.append(observe(state, x0, t0, params.box, angle_bins, space_bins))
            times.append(state.time)
            acc_rates.append(acc_sum / acc_n)
            acc_sum, acc_n = 0.0, 0
    S, ah, sh, mx, mt = zip(*rows)
    return ObservableSeries(np.array(times), np.array(S), np.array(ah), np.array(sh), np.array(mx),
                            np.array(mt), np.array(acc_rates), state, angle_bins, space_bins)


# ---------------------------------------------------------------------------
# excluded volume
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    stderr: float


def estimate_excluded_volume(eps: float, n_samples: int, rng: np.random.Generator,
                             theta_rel: float | None = None, batch: int = 200_000) -> MonteCarloEstimate:
    """Monte Carlo estimate of ``int_0^pi |B_eps(theta)| dtheta``.

    The first needle sits at the origin along the x axis; the second centre is
    uniform on the square ``[-eps, eps]^2``, which contains every overlapping
    centre, and its angle uniform on ``[0, pi)``. With ``theta_rel`` fixed the
    estimate is the area of the excluded rhombus at that angle.
    """
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")
    if eps == 0:
        return MonteCarloEstimate(0.0, 0.0)
    box = Torus2(8 * eps, 8 * eps)
    side = 2 * eps
    scale = side * side * (np.pi if theta_rel is None else 1.0)
    hits = 0
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        c = (rng.random((m, 2)) - 0.5) * side
        t = rng.random(m) * np.pi if theta_rel is None else np.full(m, float(theta_rel))
        hits += int(np.count_nonzero(overlap_mask(np.zeros((m, 2)), 0.0, c, t, eps, box)))
        done += m
    p = hits / n_samples
    return MonteCarloEstimate(scale * p, scale * math.sqrt(p * (1 - p) / n_samples))
