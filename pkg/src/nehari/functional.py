"""Energy, gradient and Nehari projection.

With ``A`` the discrete operator and ``w`` the quadrature weights,

    J(u)      = 1/2 <A u, u> - sum w F(u)
    nehari(u) = <A u, u> - sum w f(u) u
    grad J(u) = A u - f(u)        (representation in the weighted inner product)

Everything uses the same quadrature, so on the Nehari manifold the Kerr
identity ``J = 1/4 <A u, u>`` holds to round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .grid import CylGrid, Field, GridMismatch, operator_for
from .model import ProblemSpec, builtin_potential

NEHARI_TOL = 1e-10


class FiberError(ValueError):
    """Fibering root not available (zero input or degenerate ray)."""


@dataclass(frozen=True)
class EnergyBreakdown:
    quad: float
    nl: float
    total: float
    nehari: float

    @property
    def norm_sq(self) -> float:
        """``||u||_eps^2 = 2 * quad``."""
        return 2.0 * self.quad

    def on_manifold(self, tol: float = NEHARI_TOL) -> bool:
        return abs(self.nehari) <= tol * self.norm_sq


def _grid(u: Field, spec: ProblemSpec) -> CylGrid:
    g = CylGrid.from_spec(spec)
    if u.grid != g:
        raise GridMismatch(f"field grid {u.grid} does not match problem grid {g}")
    return g


def operator(spec: ProblemSpec):
    return operator_for(CylGrid.from_spec(spec), spec.potential, float(spec.epsilon))


def wsum(x: np.ndarray, grid: CylGrid) -> float:
    return _backend.weighted_dot(np.ascontiguousarray(x), _ones(grid), grid.weights)


_ONES: dict = {}


def _ones(grid):
    arr = _ONES.get(grid.shape)
    if arr is None:
        arr = _ONES[grid.shape] = np.ones(grid.shape)
    return arr


def energy(u: Field, spec: ProblemSpec) -> EnergyBreakdown:
    g = _grid(u, spec)
    nl_fn = spec.nonlinearity
    v = u.values
    Au = operator(spec).apply(v)
    a = _backend.weighted_dot(Au, v, g.weights)
    nl = wsum(nl_fn.F(v), g)
    fu_u = wsum(nl_fn.f(v) * v, g)
    quad = 0.5 * a
    return EnergyBreakdown(quad=quad, nl=nl, total=quad - nl, nehari=a - fu_u)


def energy_density(u: Field, spec: ProblemSpec) -> np.ndarray:
    """Nodal density ``e`` with ``sum w e = energy(u).total``."""
    _grid(u, spec)
    v = u.values
    return 0.5 * v * operator(spec).apply(v) - spec.nonlinearity.F(v)


def gradient(u: Field, spec: ProblemSpec) -> Field:
    g = _grid(u, spec)
    v = u.values
    return Field(g, operator(spec).apply(v) - spec.nonlinearity.f(v))


def norm_eps_sq(u: Field, spec: ProblemSpec) -> float:
    g = _grid(u, spec)
    return _backend.weighted_dot(operator(spec).apply(u.values), u.values, g.weights)


def y_norm(u: Field) -> float:
    """``||u||_Y``: the quadratic form with unit potential."""
    g = u.grid
    op = operator_for(g, _unit_potential(g.K), 1.0)
    return math.sqrt(_backend.weighted_dot(op.apply(u.values), u.values, g.weights))


_UNIT = {}


def _unit_potential(K):
    pot = _UNIT.get(K)
    if pot is None:
        pot = _UNIT[K] = builtin_potential("constant", [1.0], N=K + 1, K=K)
    return pot


def fiber_scale(u: Field, spec: ProblemSpec, rel_tol: float = 1e-12, check_max: bool = False) -> float:
    """The unique ``t > 0`` with ``t u`` on the Nehari manifold.

    Brackets from ``t = 1`` by doubling/halving inside ``[2^-60, 2^60]``,
    bisects to relative width ``rel_tol`` and polishes with Newton steps when
    the nonlinearity carries a derivative.
    """
    g = _grid(u, spec)
    v = u.values
    if not np.any(v):
        raise FiberError("fibering map undefined for u = 0")
    a = _backend.weighted_dot(operator(spec).apply(v), v, g.weights)
    f = spec.nonlinearity.f

    def phi(t):
        # a - sum w f(t u) u / t, decreasing in t
        return a - wsum(f(t * v) * v, g) / t

    lo = hi = 1.0
    val = phi(1.0)
    if val > 0:
        while val > 0:
            hi *= 2.0
            if hi > 2.0**60:
                raise FiberError("no Nehari crossing below t = 2^60 (degenerate ray)")
            val = phi(hi)
        lo = hi / 2.0
    elif val < 0:
        while val < 0:
            lo /= 2.0
            if lo < 2.0**-60:
                raise FiberError("no Nehari crossing above t = 2^-60 (degenerate ray)")
            val = phi(lo)
        hi = lo * 2.0
    else:
        return 1.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        pm = phi(mid)
        if pm > 0:
            lo = mid
        elif pm < 0:
            hi = mid
        else:
            lo = hi = mid
            break
    t = 0.5 * (lo + hi)
    df = spec.nonlinearity.df
    if df is not None:
        for _ in range(3):
            tv = t * v
            val = phi(t)
            if val == 0.0:
                break
            dphi = -wsum(v * (df(tv) * tv - f(tv)), g) / t**2
            if dphi >= 0 or not math.isfinite(dphi):
                break
            t_new = t - val / dphi
            if not lo <= t_new <= hi or t_new == t:
                break
            t = t_new
    if check_max:
        _check_max_on_ray(u, spec, t)
    return t


def _check_max_on_ray(u, spec, t_star, n=200):
    j_star = energy(u * t_star, spec).total
    for t in np.geomspace(t_star / 20.0, t_star * 20.0, n):
        jt = energy(u * t, spec).total
        if jt > j_star + 1e-12 * abs(j_star):
            raise FiberError(f"J(t u) = {jt} exceeds J at the Nehari scale ({j_star}) for t = {t}")


def nehari_project(u: Field, spec: ProblemSpec) -> Field:
    return u * fiber_scale(u, spec)


def ray_scan(u: Field, spec: ProblemSpec, t_max: float, n: int = 10_000):
    """``J(t u)`` on an even grid of ``n`` points in ``(0, t_max]``.

    Uses the homogeneity of the quadratic part so each point costs one
    nonlinear sum.
    """
    g = _grid(u, spec)
    v = u.values
    a = _backend.weighted_dot(operator(spec).apply(v), v, g.weights)
    ts = np.linspace(t_max / n, t_max, n)
    F = spec.nonlinearity.F
    vals = np.array([0.5 * t * t * a - wsum(F(t * v), g) for t in ts])
    return ts, vals
