"""Lift a scalar profile to the vector field ``U = u(r, x3)/r * (-x2, x1, 0)``.

Also provides central-difference divergence and curl on the resulting
cartesian grid, the residual of ``curl curl U + V_eps U = g(U)`` and the
curl energy used to compare against the scalar energy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .functional import energy_density
from .grid import Field
from .model import Nonlinearity, Potential, ProblemSpec


class ReconstructionError(ValueError):
    pass


@dataclass
class VectorField3:
    """Three components sampled on the cube ``x, y, z`` with uniform spacing ``h``."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    U1: np.ndarray
    U2: np.ndarray
    U3: np.ndarray

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def shape(self):
        return self.U1.shape

    def components(self):
        return self.U1, self.U2, self.U3

    def magnitude(self) -> np.ndarray:
        return np.sqrt(self.U1**2 + self.U2**2 + self.U3**2)

    def mesh(self):
        return np.meshgrid(self.x, self.y, self.z, indexing="ij")

    def interior(self, k: int = 1) -> "VectorField3":
        sl = (slice(k, -k),) * 3
        return VectorField3(self.x[k:-k], self.y[k:-k], self.z[k:-k],
                            self.U1[sl], self.U2[sl], self.U3[sl])


def profile_interpolant(u: Field, order: int = 3) -> RectBivariateSpline:
    """Spline of ``u(r, s)`` built on the odd extension ``u(-r, s) = -u(r, s)``.

    The odd extension keeps ``u / r`` smooth across the axis.
    """
    g = u.grid
    r_ext = np.concatenate([-g.r[::-1], g.r])
    vals = np.concatenate([-u.values[::-1], u.values], axis=0)
    return RectBivariateSpline(r_ext, g.s, vals, kx=order, ky=order)


def cartesian_axis(n: int, half_width: float) -> np.ndarray:
    return np.linspace(-half_width, half_width, n)


def reconstruct(u: Field, n: int = 64, half_width: float = 6.0, order: int = 3) -> VectorField3:
    """Sample the ansatz field on the ``n^3`` cube ``[-half_width, half_width]^3``.

    ``order`` 1 gives bilinear sampling of ``u``; the default bicubic spline
    keeps the lifted field smooth enough for second-order difference checks.
    """
    g = u.grid
    if g.K != 2:
        raise ReconstructionError("the vector ansatz needs N = 3, K = 2")
    if math.sqrt(2.0) * half_width > g.r[-1] or half_width > g.s[-1]:
        raise ReconstructionError(
            f"cube of half width {half_width} leaves the cylindrical grid "
            f"(r <= {g.r[-1]}, |s| <= {g.s[-1]})")
    x = cartesian_axis(n, half_width)
    X, Y = np.meshgrid(x, x, indexing="ij")
    r = np.hypot(X, Y)
    spline = profile_interpolant(u, order)
    prof = spline(r.ravel()[:, None], x[None, :], grid=False).reshape(n, n, n)
    h = x[1] - x[0]
    on_axis = r < 0.5 * h
    inv_r = np.where(on_axis, 0.0, 1.0 / np.where(on_axis, 1.0, r))
    scale = prof * inv_r[:, :, None]
    U1 = -Y[:, :, None] * scale
    U2 = X[:, :, None] * scale
    U3 = np.zeros_like(U1)
    return VectorField3(x, x.copy(), x.copy(), U1, U2, U3)


def sample_profile(u: Field, r, s, order: int = 3) -> np.ndarray:
    """``u`` at arbitrary ``(r, s)`` using the same interpolant as :func:`reconstruct`."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    return profile_interpolant(u, order)(r.ravel(), s.ravel(), grid=False).reshape(np.broadcast(r, s).shape)


def _d(a, axis, h):
    """Central difference on interior nodes (one layer dropped on every side)."""
    n = a.shape
    hi = [slice(1, m - 1) for m in n]
    lo = [slice(1, m - 1) for m in n]
    hi[axis] = slice(2, None)
    lo[axis] = slice(None, -2)
    return (a[tuple(hi)] - a[tuple(lo)]) / (2.0 * h)


def divergence(U: VectorField3) -> np.ndarray:
    h = U.h
    return _d(U.U1, 0, h) + _d(U.U2, 1, h) + _d(U.U3, 2, h)


def curl(U: VectorField3) -> VectorField3:
    h = U.h
    U1, U2, U3 = U.components()
    C1 = _d(U3, 1, h) - _d(U2, 2, h)
    C2 = _d(U1, 2, h) - _d(U3, 0, h)
    C3 = _d(U2, 0, h) - _d(U1, 1, h)
    return VectorField3(U.x[1:-1], U.y[1:-1], U.z[1:-1], C1, C2, C3)


def g_of(U: VectorField3, nonlinearity: Nonlinearity):
    """``g(U) = f(|U|) U / |U|`` (zero where ``U = 0``)."""
    mag = U.magnitude()
    safe = np.where(mag > 0, mag, 1.0)
    factor = np.where(mag > 0, nonlinearity.f(mag) / safe, 0.0)
    return factor * U.U1, factor * U.U2, factor * U.U3


def _potential_on(U: VectorField3, pot: Potential, epsilon: float) -> np.ndarray:
    X, Y, Z = U.mesh()
    return pot(epsilon * np.hypot(X, Y), epsilon * Z)


def curlcurl_residual(U: VectorField3, pot: Potential, epsilon: float, nonlinearity: Nonlinearity) -> float:
    """``||curl curl U + V_eps U - g(U)|| / ||U||`` over nodes two layers inside the cube."""
    CC = curl(curl(U))
    Ui = U.interior(2)
    norm = math.sqrt(sum(float(np.sum(c * c)) for c in Ui.components()))
    if norm == 0.0:
        return 0.0
    V = _potential_on(Ui, pot, epsilon)
    G = g_of(Ui, nonlinearity)
    res = 0.0
    for cc, ui, gi in zip(CC.components(), Ui.components(), G):
        r = cc + V * ui - gi
        res += float(np.sum(r * r))
    return math.sqrt(res) / norm


def energy_curl(U: VectorField3, pot: Potential, epsilon: float, nonlinearity: Nonlinearity) -> float:
    """``1/2 int |curl U|^2 + V_eps |U|^2 - int F(|U|)`` over the interior nodes."""
    C = curl(U)
    Ui = U.interior(1)
    V = _potential_on(Ui, pot, epsilon)
    mag2 = Ui.U1**2 + Ui.U2**2 + Ui.U3**2
    curl2 = C.U1**2 + C.U2**2 + C.U3**2
    dens = 0.5 * (curl2 + V * mag2) - nonlinearity.F(np.sqrt(mag2))
    return float(np.sum(dens)) * U.h**3


def square_fraction(r, half_width: float) -> np.ndarray:
    """Fraction of the circle of radius ``r`` inside the square ``[-L, L]^2``."""
    r = np.asarray(r, dtype=float)
    L = half_width
    out = np.ones_like(r)
    mid = (r > L) & (r < math.sqrt(2.0) * L)
    out[mid] = 1.0 - 4.0 * np.arccos(L / r[mid]) / math.pi
    out[r >= math.sqrt(2.0) * L] = 0.0
    return out


def scalar_energy_in_box(u: Field, spec: ProblemSpec, half_width: float) -> float:
    """Scalar energy restricted to the cube ``[-L, L]^3`` seen in ``(r, s)`` coordinates."""
    g = u.grid
    dens = energy_density(u, spec)
    frac = square_fraction(g.r, half_width)[:, None] * (np.abs(g.s) <= half_width)[None, :]
    return float(np.sum(g.weights * dens * frac))


def write_vtk(path, U: VectorField3, name: str = "U") -> None:
    """Legacy ASCII VTK ``STRUCTURED_POINTS`` file with one vector per point.

    Points are listed with ``x`` varying fastest, then ``y``, then ``z``.
    """
    nx, ny, nz = U.shape
    h = U.h
    lines = [
        "# vtk DataFile Version 3.0",
        f"{name} reconstructed from cylindrical profile",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} {nz}",
        f"ORIGIN {U.x[0]:.17g} {U.y[0]:.17g} {U.z[0]:.17g}",
        f"SPACING {h:.17g} {h:.17g} {h:.17g}",
        f"POINT_DATA {nx * ny * nz}",
        f"VECTORS {name} double",
    ]
    data = np.stack([c.transpose(2, 1, 0).ravel() for c in U.components()], axis=1)
    with Path(path).open("w") as fh:
        fh.write("\n".join(lines) + "\n")
        for a, b, c in data:
            fh.write(f"{a:.17g} {b:.17g} {c:.17g}\n")


def read_vtk(path) -> VectorField3:
    with Path(path).open() as fh:
        header = [fh.readline().strip() for _ in range(9)]
        vals = np.array(fh.read().split(), dtype=float)
    meta = {line.split()[0]: line.split()[1:] for line in header[3:]}
    nx, ny, nz = (int(v) for v in meta["DIMENSIONS"])
    ox, oy, oz = (float(v) for v in meta["ORIGIN"])
    hx = float(meta["SPACING"][0])
    comps = vals.reshape(nz, ny, nx, 3)
    U = [comps[..., k].transpose(2, 1, 0).copy() for k in range(3)]
    x = ox + hx * np.arange(nx)
    y = oy + hx * np.arange(ny)
    z = oz + hx * np.arange(nz)
    return VectorField3(x, y, z, *U)
