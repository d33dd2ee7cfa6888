"""Finite-element check of the excluded-volume matrix.

Solves the exterior Neumann problems for the flux potentials around the unit
rhombus directly, without any conformal mapping. Write ``u_i = x_i + v_i``;
then ``v_i`` is harmonic outside the rhombus, decays at infinity and has
normal derivative ``-n_i`` on the boundary. The problem is truncated at a
large radius where ``v_i = 0``.

The mesh is a tensor grid sheared along the rhombus, ``x = xi + cot(theta) eta``,
``y = eta``, so the rhombus becomes the rectangle
``[-1/2, 1/2] x [-s/2, s/2]`` and bilinear elements fit it exactly. Spacing is
uniform near the rhombus and grows geometrically outwards.

With the inward normal ``n`` and ``b_j = oint N n_j dS`` the load vector of
hat function ``N``,

    T_ij = -oint u_i n_j dS = sin(theta) delta_ij + int grad v_i . grad v_j,

which the discrete solution reproduces as ``sin(theta) I - b^T V``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass(frozen=True)
class NeumannSolution:
    """Discrete correction potentials ``v_1, v_2`` on the truncated exterior."""

    xi: np.ndarray
    eta: np.ndarray
    theta: float
    v: np.ndarray  # (2, len(xi), len(eta)); zero on unused or Dirichlet nodes
    t: np.ndarray  # (2, 2)
    q: np.ndarray  # (2, 2): -oint x (x) n dS evaluated with the same boundary loads

    def physical_nodes(self):
        X = self.xi[:, None] + self.eta[None, :] / np.tan(self.theta)
        Y = np.broadcast_to(self.eta[None, :], X.shape)
        return X, Y


def _axis(half: float, h: float, R: float, ratio: float, pad: float = 0.5) -> np.ndarray:
    """Nodes on ``[-R, R]`` containing ``+-half``; spacing ``~h`` out to ``half + pad``, then graded."""
    n_in = max(2, int(np.ceil(2 * half / h)))
    inner = np.linspace(-half, half, n_in + 1)
    step = 2 * half / n_in
    out = []
    x = half
    while x < R:
        if x > half + pad:
            step *= ratio
        x = min(x + step, R)
        if R - x < 0.5 * step:
            x = R
        out.append(x)
    out = np.array(out)
    return np.concatenate([-out[::-1], inner, out])


def _reference_stiffness():
    """Bilinear shape-function gradient products on [-1,1]^2, 2x2 Gauss rule."""
    g = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    rn = np.array([-1.0, 1.0, 1.0, -1.0])
    sn = np.array([-1.0, -1.0, 1.0, 1.0])
    Krr = np.zeros((4, 4))
    Krs = np.zeros((4, 4))
    Kss = np.zeros((4, 4))
    for r in g:
        for q in g:
            dr = rn * (1 + sn * q) / 4
            ds = sn * (1 + rn * r) / 4
            Krr += np.outer(dr, dr)
            Krs += np.outer(dr, ds)
            Kss += np.outer(ds, ds)
    return Krr, Krs, Kss


def solve_exterior_neumann(theta: float, h: float = 0.02, radius: float = 40.0,
                           ratio: float = 1.08) -> NeumannSolution:
    """Solve both exterior problems at relative angle ``theta`` and assemble ``T``.

    Args:
        theta: relative angle in ``(0, pi)``.
        h: element size along the rhombus sides.
        radius: half-width of the (sheared) truncation square.
        ratio: geometric growth of the element size away from the rhombus.
    """
    if not 0 < theta < np.pi:
        raise ValueError(f"relative angle must lie in (0, pi), got theta={theta}")
    s, c = np.sin(theta), np.cos(theta)
    cot = c / s
    xi = _axis(0.5, h, radius, ratio)
    eta = _axis(0.5 * s, h * s, radius, ratio)
    nx, ny = len(xi), len(eta)

    ex, ey = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    xc = 0.5 * (xi[ex] + xi[ex + 1])
    yc = 0.5 * (eta[ey] + eta[ey + 1])
    keep = ~((np.abs(xc) < 0.5) & (np.abs(yc) < 0.5 * s))
    ex, ey = ex[keep], ey[keep]
    Hx = np.diff(xi)[ex]
    Hy = np.diff(eta)[ey]

    # reference gradients = A physical gradients, A = [[x_r, y_r], [x_s, y_s]]
    xr, xs, ys = Hx / 2, cot * Hy / 2, Hy / 2
    inv = 1.0 / (xr * ys)
    a11, a12, a21, a22 = ys * inv, 0.0 * inv, -xs * inv, xr * inv
    G11 = a11 * a11 + a21 * a21
    G12 = a11 * a12 + a21 * a22
    G22 = a12 * a12 + a22 * a22
    Krr, Krs, Kss = _reference_stiffness()
    det = (Hx * Hy / 4)[:, None, None]
    Ke = det * (G11[:, None, None] * Krr + G12[:, None, None] * (Krs + Krs.T) + G22[:, None, None] * Kss)

    nodes = np.stack([ex * ny + ey, (ex + 1) * ny + ey, (ex + 1) * ny + ey + 1, ex * ny + ey + 1], axis=1)
    I = np.repeat(nodes, 4, axis=1).ravel()
    J = np.tile(nodes, (1, 4)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (I, J)), shape=(nx * ny, nx * ny)).tocsr()

    # boundary loads with the inward normal of the rhombus
    b = np.zeros((2, nx * ny))
    ix = np.flatnonzero(np.abs(xi) <= 0.5 + 1e-12)
    iy = np.flatnonzero(np.abs(eta) <= 0.5 * s + 1e-12)
    Lh = np.diff(xi[ix])
    Ls = np.diff(eta[iy]) / s
    for j, normal in ((iy[-1], (0.0, -1.0)), (iy[0], (0.0, 1.0))):
        for k in range(2):
            np.add.at(b[k], ix[:-1] * ny + j, 0.5 * Lh * normal[k])
            np.add.at(b[k], ix[1:] * ny + j, 0.5 * Lh * normal[k])
    for i, normal in ((ix[-1], (-s, c)), (ix[0], (s, -c))):
        for k in range(2):
            np.add.at(b[k], i * ny + iy[:-1], 0.5 * Ls * normal[k])
            np.add.at(b[k], i * ny + iy[1:], 0.5 * Ls * normal[k])

    used = np.zeros(nx * ny, dtype=bool)
    used[nodes.ravel()] = True
    outer = np.zeros((nx, ny), dtype=bool)
    outer[0, :] = outer[-1, :] = outer[:, 0] = outer[:, -1] = True
    free = used & ~outer.ravel()

    lu = spla.splu(K[free][:, free].tocsc())
    Vf = lu.solve(-b[:, free].T.copy())
    if not np.all(np.isfinite(Vf)):
        raise RuntimeError(f"exterior Neumann solve failed at theta={theta}")
    T = s * np.eye(2) - b[:, free] @ Vf

    # Q = -oint x (x) n dS; the trapezoid rule is exact for linear data
    Xn = (xi[:, None] + cot * eta[None, :]).ravel()
    Yn = np.broadcast_to(eta[None, :], (nx, ny)).ravel()
    Q = -np.array([[Xn @ b[0], Xn @ b[1]], [Yn @ b[0], Yn @ b[1]]])

    v = np.zeros((2, nx * ny))
    v[:, free] = Vf.T
    return NeumannSolution(xi=xi, eta=eta, theta=float(theta), v=v.reshape(2, nx, ny), t=T, q=Q)
