"""Cell-centred cylindrical grid, weighted quadrature and the discrete operator.

The reduced problem lives on ``(0, R_max] x [-S_max, S_max]`` with measure
``omega_{K-1} r^{K-1} dr ds``.  Nodes are cell centres, so ``r = 0`` is never
evaluated; values outside the rectangle are taken to be zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _backend
from .model import Potential


class GridMismatch(ValueError):
    pass


class LinearSolveError(RuntimeError):
    """CG did not reach the requested tolerance."""

    def __init__(self, message, residual, iterations):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def sphere_measure(dim: int) -> float:
    """Surface measure of the unit ``dim``-sphere in R^(dim+1)."""
    k = dim + 1
    return 2.0 * math.pi ** (k / 2.0) / math.gamma(k / 2.0)


@dataclass(frozen=True)
class CylGrid:
    n_r: int
    n_s: int
    R_max: float
    S_max: float
    K: int = 2

    def __post_init__(self):
        if self.n_r < 1 or self.n_s < 1:
            raise ValueError("grid needs at least one cell per direction")
        if not (self.R_max > 0 and self.S_max > 0):
            raise ValueError("grid extents must be positive")
        if self.K < 2:
            raise ValueError("K must be at least 2")

    @classmethod
    def from_spec(cls, spec) -> "CylGrid":
        return cls(spec.n_r, spec.n_s, spec.R_max, spec.S_max, spec.K)

    @property
    def h_r(self) -> float:
        return self.R_max / self.n_r

    @property
    def h_s(self) -> float:
        return 2.0 * self.S_max / self.n_s

    @cached_property
    def r(self) -> np.ndarray:
        return (np.arange(self.n_r) + 0.5) * self.h_r

    @cached_property
    def s(self) -> np.ndarray:
        return -self.S_max + (np.arange(self.n_s) + 0.5) * self.h_s

    @property
    def omega(self) -> float:
        return sphere_measure(self.K - 1)

    @cached_property
    def weights(self) -> np.ndarray:
        w_r = self.omega * self.r ** (self.K - 1) * self.h_r * self.h_s
        return np.ascontiguousarray(np.repeat(w_r[:, None], self.n_s, axis=1))

    @property
    def shape(self):
        return (self.n_r, self.n_s)

    def mesh(self):
        """``(R, S)`` node coordinate arrays of shape ``(n_r, n_s)``."""
        return np.meshgrid(self.r, self.s, indexing="ij")

    def total_measure(self) -> float:
        return self.omega * self.R_max ** self.K / self.K * 2.0 * self.S_max


@dataclass
class Field:
    """Nodal values on a :class:`CylGrid`."""

    grid: CylGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise GridMismatch(f"values of shape {self.values.shape} on grid {self.grid.shape}")

    @classmethod
    def zeros(cls, grid: CylGrid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: CylGrid, fn) -> "Field":
        R, S = grid.mesh()
        return cls(grid, fn(R, S))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def _check(self, other):
        if isinstance(other, Field) and other.grid != self.grid:
            raise GridMismatch("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return Field(self.grid, self.values + (other.values if isinstance(other, Field) else other))

    def __sub__(self, other):
        self._check(other)
        return Field(self.grid, self.values - (other.values if isinstance(other, Field) else other))

    def __mul__(self, scalar):
        return Field(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def norm(self) -> float:
        return math.sqrt(max(inner_weighted(self, self), 0.0))


def inner_weighted(a: Field, b: Field) -> float:
    """Discrete ``int a b`` with the cylindrical measure."""
    if a.grid != b.grid:
        raise GridMismatch("fields live on different grids")
    return _backend.weighted_dot(a.values, b.values, a.grid.weights)


class SchrodingerOperator:
    """``A = -Delta_h + r^-2 + V(eps r, eps s)`` on a :class:`CylGrid`.

    ``Delta_h`` is the flux-form cylindrical Laplacian, which makes ``A``
    self-adjoint for :func:`inner_weighted`.
    """

    def __init__(self, grid: CylGrid, potential: Potential, epsilon: float = 1.0):
        self.grid = grid
        self.potential = potential
        self.epsilon = float(epsilon)
        K = grid.K
        r, h_r, h_s = grid.r, grid.h_r, grid.h_s
        r_out = r + 0.5 * h_r
        r_in = r - 0.5 * h_r
        self.cp = np.ascontiguousarray((r_out / r) ** (K - 1) / h_r**2)
        self.cm = np.ascontiguousarray((np.clip(r_in, 0.0, None) / r) ** (K - 1) / h_r**2)
        self.cs = 1.0 / h_s**2
        R, S = grid.mesh()
        self.V = potential(epsilon * R, epsilon * S)
        # the outer faces touch zero ghosts, so cp/cs stay on the diagonal everywhere
        self.diag = np.ascontiguousarray(
            (self.cp + self.cm + 1.0 / r**2)[:, None] + 2.0 * self.cs + self.V
        )
        self._lu = None

    def apply(self, u: np.ndarray) -> np.ndarray:
        return _backend.apply_stencil(np.ascontiguousarray(u, dtype=np.float64),
                                      self.diag, self.cp, self.cm, self.cs)

    def __call__(self, u: Field) -> Field:
        if u.grid != self.grid:
            raise GridMismatch("field and operator live on different grids")
        return Field(self.grid, self.apply(u.values))

    def matrix(self) -> sp.csr_matrix:
        """Sparse matrix of ``A`` acting on row-major flattened values."""
        n_r, n_s = self.grid.shape
        idx = np.arange(n_r * n_s).reshape(n_r, n_s)
        rows = [idx.ravel()]
        cols = [idx.ravel()]
        vals = [self.diag.ravel()]
        up = np.broadcast_to(-self.cp[:-1, None], (n_r - 1, n_s))
        rows.append(idx[:-1].ravel()); cols.append(idx[1:].ravel()); vals.append(up.ravel())
        down = np.broadcast_to(-self.cm[1:, None], (n_r - 1, n_s))
        rows.append(idx[1:].ravel()); cols.append(idx[:-1].ravel()); vals.append(down.ravel())
        side = np.full((n_r, n_s - 1), -self.cs)
        rows.append(idx[:, :-1].ravel()); cols.append(idx[:, 1:].ravel()); vals.append(side.ravel())
        rows.append(idx[:, 1:].ravel()); cols.append(idx[:, :-1].ravel()); vals.append(side.ravel())
        n = n_r * n_s
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))

    def solve_direct(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``A x = rhs`` with a cached sparse LU factorisation."""
        if self._lu is None:
            self._lu = spla.splu(self.matrix().tocsc())
        return self._lu.solve(np.ascontiguousarray(rhs, dtype=np.float64).ravel()).reshape(self.grid.shape)


@lru_cache(maxsize=8)
def operator_for(grid: CylGrid, potential: Potential, epsilon: float) -> SchrodingerOperator:
    return SchrodingerOperator(grid, potential, epsilon)


def apply_schrodinger_op(u: Field, pot: Potential, epsilon: float) -> Field:
    return operator_for(u.grid, pot, float(epsilon))(u)


def solve_linear(op: SchrodingerOperator, rhs: Field, tol: float = 1e-10, max_iter: int | None = None,
                 x0: Field | None = None) -> Field:
    """Jacobi-preconditioned CG for ``A x = rhs`` in the weighted inner product.

    Stops when ``||A x - rhs||_w <= tol ||rhs||_w``; raises
    :class:`LinearSolveError` otherwise.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = op.grid
    w = grid.weights
    dot = _backend.weighted_dot
    b = rhs.values
    bnorm = math.sqrt(dot(b, b, w))
    if bnorm == 0.0:
        return Field.zeros(grid)
    if max_iter is None:
        max_iter = 20 * (grid.n_r + grid.n_s) + 100
    inv_diag = 1.0 / op.diag
    x = np.zeros(grid.shape) if x0 is None else x0.values.copy()
    r = b - op.apply(x) if x0 is not None else b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = dot(r, z, w)
    target = tol * bnorm
    res = math.sqrt(dot(r, r, w))
    for it in range(max_iter):
        if res <= target:
            return Field(grid, x)
        ap = op.apply(p)
        alpha = rz / dot(p, ap, w)
        _backend.cg_update(x, r, p, ap, alpha)
        res = math.sqrt(dot(r, r, w))
        z = inv_diag * r
        rz_new = dot(r, z, w)
        p = z + (rz_new / rz) * p
        rz = rz_new
    # recompute the true residual before giving up
    res = math.sqrt(dot(op.apply(x) - b, op.apply(x) - b, w))
    if res <= target:
        return Field(grid, x)
    raise LinearSolveError(f"CG stalled at relative residual {res / bnorm:.3e} after {max_iter} iterations",
                           residual=res / bnorm, iterations=max_iter)


def lowest_eigenpair(op: SchrodingerOperator, tol: float = 1e-13, max_iter: int = 500):
    """Bottom of the spectrum of ``A`` by inverse iteration (direct solves)."""
    grid = op.grid
    R, S = grid.mesh()
    x = R * np.exp(-(R**2 + S**2) / 4.0)
    w = grid.weights
    dot = _backend.weighted_dot
    x /= math.sqrt(dot(x, x, w))
    lam = dot(op.apply(x), x, w)
    for _ in range(max_iter):
        y = op.solve_direct(x)
        y /= math.sqrt(dot(y, y, w))
        lam_new = dot(op.apply(y), y, w)
        x = y
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return lam, Field(grid, x)


def write_field(path, u: Field) -> None:
    """Plain-text dump: header ``n_r n_s R_max S_max K`` then values, ``i`` outer."""
    g = u.grid
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{g.n_r} {g.n_s} {g.R_max!r} {g.S_max!r} {g.K}\n")
        for row in u.values:
            fh.write(" ".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def read_field(path) -> Field:
    with Path(path).open() as fh:
        header = fh.readline().split()
        if len(header) != 5:
            raise ValueError(f"{path}: malformed field header {header!r}")
        n_r, n_s = int(header[0]), int(header[1])
        grid = CylGrid(n_r, n_s, float(header[2]), float(header[3]), int(header[4]))
        data = np.array(fh.read().split(), dtype=float)
    if data.size != n_r * n_s:
        raise ValueError(f"{path}: expected {n_r * n_s} values, found {data.size}")
    return Field(grid, data.reshape(n_r, n_s))
