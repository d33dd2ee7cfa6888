"""Needle geometry on a periodic box.

A needle of length ``eps`` centred at ``x`` with orientation ``theta`` is the
closed segment ``x + lam * (cos theta, sin theta)``, ``|lam| <= eps/2``.
Orientations live on ``[0, pi)``: a needle has no head or tail.

Two routes decide whether needles overlap and they are kept independent on
purpose: :func:`needles_overlap` intersects the two segments with orientation
predicates, while :func:`in_excluded_rhombus` asks whether the second centre
lies in the excluded rhombus of the first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_REL_TOL = 1e-12


def reduce_angle(theta):
    """Reduce angles to ``[0, pi)``."""
    out = np.mod(theta, np.pi)
    # np.mod can return pi itself for tiny negative inputs
    return np.where(out >= np.pi, 0.0, out) if np.ndim(out) else (0.0 if out >= np.pi else float(out))


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Torus2:
    """Periodic box ``[0, Lx) x [0, Ly)``."""

    Lx: float = np.pi
    Ly: float = np.pi

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError(f"box lengths must be positive, got Lx={self.Lx}, Ly={self.Ly}")

    @property
    def lengths(self) -> np.ndarray:
        return np.array([self.Lx, self.Ly])

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    def wrap(self, x):
        """Map positions into the fundamental cell."""
        return np.mod(x, self.lengths)

    def minimum_image(self, d):
        """Displacement components reduced to ``[-L/2, L/2)``."""
        L = self.lengths
        return d - L * np.floor(d / L + 0.5)


@dataclass(frozen=True)
class NeedleConfig:
    """One needle: centre, orientation in ``[0, pi)``, length."""

    x: np.ndarray
    theta: float
    eps: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(2)
        if not self.eps > 0:
            raise ValueError(f"needle length must be positive, got eps={self.eps}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "theta", reduce_angle(float(self.theta)))
        object.__setattr__(self, "eps", float(self.eps))

    @property
    def direction(self) -> np.ndarray:
        return np.array([np.cos(self.theta), np.sin(self.theta)])


@dataclass(frozen=True)
class Rhombus:
    """Excluded region of a needle at fixed relative angle.

    Vertices are ordered A, B, C, D, which runs clockwise for relative angles
    in ``(0, pi)``.
    """

    vertices: np.ndarray
    degenerate: bool = False
    theta_rel: float = field(default=np.nan, compare=False)

    @property
    def area(self) -> float:
        return rhombus_area(self)


def needle_endpoints(c: NeedleConfig) -> tuple[np.ndarray, np.ndarray]:
    """Endpoints ``x -/+ (eps/2) e(theta)``; not wrapped into the box."""
    half = 0.5 * c.eps * c.direction
    return c.x - half, c.x + half


def _orient(a, b, p, length):
    """Signed distance of ``p`` from the line through ``a`` and ``b``."""
    ab = b - a
    ap = p - a
    return (ab[..., 0] * ap[..., 1] - ab[..., 1] * ap[..., 0]) / length


def segments_intersect(p1, p2, q1, q2, tol):
    """Closed-segment intersection test, vectorised over leading axes.

    Orientation values within ``tol`` (a distance) of zero are treated as
    exactly zero, so grazing contact counts as intersection.
    """
    p1, p2, q1, q2 = (np.asarray(v, dtype=float) for v in (p1, p2, q1, q2))
    lp = np.hypot(*np.moveaxis(p2 - p1, -1, 0))
    lq = np.hypot(*np.moveaxis(q2 - q1, -1, 0))
    d1 = _orient(p1, p2, q1, lp)
    d2 = _orient(p1, p2, q2, lp)
    d3 = _orient(q1, q2, p1, lq)
    d4 = _orient(q1, q2, p2, lq)
    d1, d2, d3, d4 = (np.where(np.abs(d) <= tol, 0.0, d) for d in (d1, d2, d3, d4))

    proper = (d1 * d2 <= 0) & (d3 * d4 <= 0)
    collinear = ((d1 == 0) & (d2 == 0)) | ((d3 == 0) & (d4 == 0))

    # collinear case: compare the projections onto segment p
    u = (p2 - p1) / lp[..., None]
    t_q1 = np.sum((q1 - p1) * u, axis=-1)
    t_q2 = np.sum((q2 - p1) * u, axis=-1)
    lo = np.minimum(t_q1, t_q2)
    hi = np.maximum(t_q1, t_q2)
    overlap_1d = (hi >= -tol) & (lo <= lp + tol)
    return np.where(collinear, overlap_1d, proper)


def overlap_mask(x1, theta1, x2, theta2, eps, dom: Torus2, tol=None):
    """Vectorised overlap test between needle arrays under minimum image.

    ``x1``, ``x2`` have shape ``(..., 2)``; angles broadcast against them.
    """
    tol = DEFAULT_REL_TOL * eps if tol is None else tol
    x1 = np.asarray(x1, dtype=float)
    d = dom.minimum_image(np.asarray(x2, dtype=float) - x1)
    e1 = np.stack([np.cos(theta1), np.sin(theta1)], axis=-1) * (0.5 * eps)
    e2 = np.stack([np.cos(theta2), np.sin(theta2)], axis=-1) * (0.5 * eps)
    # needle 1 centred at the origin, needle 2 at the minimum-image offset
    hit = segments_intersect(-e1, e1, d - e2, d + e2, tol)
    # centres farther apart than eps can never touch
    far = np.sum(d * d, axis=-1) > (eps + 2 * tol) ** 2
    return hit & ~far


def needles_overlap(c1: NeedleConfig, c2: NeedleConfig, dom: Torus2, tol=None) -> bool:
    """True iff the two closed needles intersect (minimum-image convention)."""
    if not np.isclose(c1.eps, c2.eps, rtol=1e-12, atol=0.0):
        raise ValueError("needles must share the same length")
    return bool(overlap_mask(c1.x, c1.theta, c2.x, c2.theta, c1.eps, dom, tol))


def needles_overlap_images(c1: NeedleConfig, c2: NeedleConfig, dom: Torus2, tol=None) -> bool:
    """Debug oracle: test all nine periodic images of ``c2`` without wrapping."""
    tol = DEFAULT_REL_TOL * c1.eps if tol is None else tol
    a1, a2 = needle_endpoints(c1)
    b1, b2 = needle_endpoints(c2)
    base = dom.wrap(c2.x) - dom.wrap(c1.x)
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            shift = base - (c2.x - c1.x) + np.array([i * dom.Lx, j * dom.Ly])
            if segments_intersect(a1, a2, b1 + shift, b2 + shift, tol):
                return True
    return False


def excluded_rhombus(c1: NeedleConfig, theta_rel: float) -> Rhombus:
    """Centres of a second needle at relative angle ``theta_rel`` that overlap ``c1``.

    Vertices::

        A = x1 + (eps/2) R(theta1) (-1 + cos t,  sin t)
        B = x1 + (eps/2) R(theta1) ( 1 + cos t,  sin t)
        C = x1 + (eps/2) R(theta1) ( 1 - cos t, -sin t)
        D = x1 + (eps/2) R(theta1) (-1 - cos t, -sin t)

    At ``t`` in {0, pi} the rhombus collapses to a segment of length ``2 eps``;
    it is returned with zero area and ``degenerate=True``.
    """
    t = float(theta_rel)
    ct, st = np.cos(t), np.sin(t)
    local = np.array([
        [-1 + ct, st],
        [1 + ct, st],
        [1 - ct, -st],
        [-1 - ct, -st],
    ])
    R = rotation_matrix(c1.theta)
    verts = c1.x + 0.5 * c1.eps * local @ R.T
    degenerate = abs(st) <= DEFAULT_REL_TOL
    return Rhombus(vertices=verts, degenerate=degenerate, theta_rel=t)


def rhombus_area(r: Rhombus) -> float:
    """Shoelace area (non-negative)."""
    v = np.asarray(r.vertices)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def in_excluded_rhombus(x1, theta1, theta2, eps, x2, dom: Torus2, tol=None):
    """Whether the minimum-image centre ``x2`` lies in the rhombus of needle 1.

    Vectorised over leading axes. Boundary points count as inside.
    """
    tol = DEFAULT_REL_TOL * eps if tol is None else tol
    x1 = np.asarray(x1, dtype=float)
    d = dom.minimum_image(np.asarray(x2, dtype=float) - x1)
    t = np.asarray(theta2) - np.asarray(theta1)
    ct, st = np.cos(t), np.sin(t)
    c1, s1 = np.cos(theta1), np.sin(theta1)
    h = 0.5 * eps

    def rot(u, v):
        return np.stack([c1 * u - s1 * v, s1 * u + c1 * v], axis=-1)

    verts = [rot(h * (-1 + ct), h * st), rot(h * (1 + ct), h * st),
             rot(h * (1 - ct), -h * st), rot(h * (-1 - ct), -h * st)]
    # orientation of the polygon (clockwise for sin t > 0)
    sign = np.where(st >= 0, 1.0, -1.0)
    inside = np.ones(d.shape[:-1], dtype=bool)
    for k in range(4):
        a, b = verts[k], verts[(k + 1) % 4]
        edge = b - a
        elen = np.hypot(edge[..., 0], edge[..., 1])
        cr = edge[..., 0] * (d[..., 1] - a[..., 1]) - edge[..., 1] * (d[..., 0] - a[..., 0])
        # skip zero-length edges of a collapsed rhombus
        ok = np.where(elen > tol, sign * cr <= tol * np.maximum(elen, tol), True)
        inside &= ok

    # collapsed rhombus: the centre must sit on the segment of length 2 eps
    flat = np.abs(st) * eps <= tol
    if np.any(flat):
        u = np.stack([c1, s1], axis=-1)
        along = np.sum(d * u, axis=-1)
        across = d[..., 1] * u[..., 0] - d[..., 0] * u[..., 1]
        on_seg = (np.abs(across) <= tol) & (np.abs(along) <= eps + tol)
        inside = np.where(flat, on_seg, inside)
    return inside
