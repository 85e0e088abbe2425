"""Potentials and nonlinearities.

A :class:`Potential` is a scalar field ``V(r, s)`` on the reduced half-plane
(``r = |y|`` the distance to the symmetry axis, ``s = z`` the axial
coordinate).  A :class:`Nonlinearity` bundles ``f``, its primitive ``F`` and
the growth exponent.  Both are immutable once built.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]


class ModelError(ValueError):
    """Invalid potential or nonlinearity parameters."""


@dataclass(frozen=True)
class Potential:
    """Cylindrically invariant potential ``V(r, s)``.

    ``eval`` must accept broadcastable arrays ``r >= 0`` and ``s`` and return
    the potential values.  ``V0`` is the infimum, ``Vinfty`` the limit at
    infinity.
    """

    eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    V0: float
    Vinfty: float
    name: str = "custom"
    params: tuple = ()
    holder_exponent_at_zero: Optional[float] = 1.0
    N: int = 3
    K: int = 2
    constant: bool = False

    def __post_init__(self):
        if not self.N > self.K >= 2:
            raise ModelError(f"need N > K >= 2, got N={self.N}, K={self.K}")
        if not self.V0 > 0:
            raise ModelError(f"V0 must be positive, got {self.V0}")

    def __call__(self, r, s):
        r = np.asarray(r, dtype=float)
        s = np.asarray(s, dtype=float)
        return np.broadcast_to(self.eval(r, s), np.broadcast_shapes(r.shape, s.shape)).astype(float)

    def scaled(self, epsilon: float) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        """Return ``(r, s) -> V(epsilon r, epsilon s)``."""
        return lambda r, s: self(epsilon * np.asarray(r), epsilon * np.asarray(s))

    def at_origin(self) -> float:
        return float(self(0.0, 0.0))

    def shifted(self, h: float) -> "Potential":
        """The potential ``V + h`` (used by continuity scans)."""
        if not self.V0 + h > 0:
            raise ModelError(f"shift {h} makes V0 + h = {self.V0 + h} nonpositive")
        return Potential(
            eval=_Shifted(self.eval, h),
            V0=self.V0 + h,
            Vinfty=self.Vinfty + h,
            name=f"{self.name}+{h!r}",
            params=self.params,
            holder_exponent_at_zero=self.holder_exponent_at_zero,
            N=self.N,
            K=self.K,
            constant=self.constant,
        )

    def check(self, radius: float = 10.0, n: int = 101, shells: Sequence[float] = (20.0, 40.0, 80.0),
              tol: float = 1e-6) -> None:
        """Sample-based check of the standing assumptions; raises on violation.

        Checks ``V >= V0`` on an ``n x n`` net of ``[0, radius] x [-radius, radius]``,
        ``V(0,0) < Vinfty`` for non-constant families, and that values on the
        expanding shells ``|x| = shells`` stay above ``Vinfty - tol``.
        """
        r = np.linspace(0.0, radius, n)
        s = np.linspace(-radius, radius, n)
        vals = self(r[:, None], s[None, :])
        if not np.all(np.isfinite(vals)):
            raise ModelError(f"{self.name}: non-finite values on sampling net")
        if vals.min() < self.V0 - tol:
            raise ModelError(f"{self.name}: sampled minimum {vals.min()} below V0={self.V0}")
        if self.constant:
            return
        if not self.at_origin() < self.Vinfty:
            raise ModelError(f"{self.name}: need V(0) < Vinfty, got {self.at_origin()} >= {self.Vinfty}")
        theta = np.linspace(0.0, math.pi, 64)
        for rho in shells:
            shell = self(rho * np.sin(theta), rho * np.cos(theta))
            if shell.min() < self.Vinfty - tol:
                raise ModelError(f"{self.name}: values below Vinfty on shell |x|={rho}")


# Potential families are small callable records rather than closures so that
# problem specs can be shipped to worker processes.

@dataclass(frozen=True)
class _Constant:
    k: float

    def __call__(self, r, s):
        return np.full(np.broadcast_shapes(np.shape(r), np.shape(s)), self.k)


@dataclass(frozen=True)
class _Shifted:
    base: Callable
    h: float

    def __call__(self, r, s):
        return self.base(r, s) + self.h


@dataclass(frozen=True)
class _Well:
    depth: float
    plateau: float
    width: float

    def __call__(self, r, s):
        amp = self.plateau - self.depth
        return self.plateau - amp * np.exp(-(r * r + s * s) / self.width**2)


@dataclass(frozen=True)
class _RadialStep:
    inner: float
    outer: float
    radius: float
    delta: float

    def __call__(self, r, s):
        x = np.hypot(r, s)
        return self.inner + (self.outer - self.inner) * 0.5 * (1.0 + np.tanh((x - self.radius) / self.delta))


@dataclass(frozen=True)
class _DoubleWell:
    depth: float
    plateau: float
    sep: float
    width: float

    def __call__(self, r, s):
        w2 = self.width**2
        g1 = np.exp(-(r * r + (s - self.sep) ** 2) / w2)
        g2 = np.exp(-(r * r + (s + self.sep) ** 2) / w2)
        return self.plateau - (self.plateau - self.depth) * (g1 + g2 - g1 * g2)


def _params(params, count, name):
    params = tuple(float(p) for p in params)
    if len(params) != count:
        raise ModelError(f"{name} expects {count} parameters, got {len(params)}")
    return params


def builtin_potential(name: str, params: Sequence[float] = (), N: int = 3, K: int = 2) -> Potential:
    """Build one of the named potential families.

    ``constant``          ``[k]``                              ``V = k``
    ``well``              ``[depth, plateau, width]``          Gaussian well on the plateau
    ``radial-step``       ``[inner, outer, radius, delta]``    tanh step in ``|x|``
    ``double-well-axis``  ``[depth, plateau, sep, width]``     two wells at ``s = +-sep``
    """
    key = name.replace("_", "-").lower()
    if key == "constant":
        (k,) = _params(params, 1, name)
        if not k > 0:
            raise ModelError(f"constant potential needs k > 0, got {k}")
        pot = Potential(eval=_Constant(k), V0=k, Vinfty=k, name="constant", params=(k,), N=N, K=K, constant=True)
    elif key == "well":
        depth, plateau, width = _params(params, 3, name)
        _check_well(depth, plateau, width)
        pot = Potential(eval=_Well(depth, plateau, width), V0=depth, Vinfty=plateau, name="well",
                        params=(depth, plateau, width), N=N, K=K)
    elif key == "radial-step":
        inner, outer, radius, delta = _params(params, 4, name)
        _check_well(inner, outer, delta)
        if not radius > 0:
            raise ModelError(f"radial-step radius must be positive, got {radius}")
        # monotone in |x|, so the infimum sits at the origin
        v0 = inner + (outer - inner) * 0.5 * (1.0 + math.tanh(-radius / delta))
        pot = Potential(eval=_RadialStep(inner, outer, radius, delta), V0=v0, Vinfty=outer, name="radial-step",
                        params=(inner, outer, radius, delta), N=N, K=K)
    elif key == "double-well-axis":
        depth, plateau, sep, width = _params(params, 4, name)
        _check_well(depth, plateau, width)
        if not sep > 0:
            raise ModelError(f"double-well-axis separation must be positive, got {sep}")
        pot = Potential(eval=_DoubleWell(depth, plateau, sep, width), V0=depth, Vinfty=plateau, name="double-well-axis",
                        params=(depth, plateau, sep, width), N=N, K=K)
    else:
        raise ModelError(f"unknown potential family {name!r}")
    pot.check()
    return pot


def _check_well(low, high, width):
    if not low > 0:
        raise ModelError(f"potential minimum must be positive, got {low}")
    if not high > low:
        raise ModelError(f"plateau {high} must exceed the well depth {low}")
    if not width > 0:
        raise ModelError(f"width must be positive, got {width}")


@dataclass(frozen=True)
class Nonlinearity:
    """Odd superlinear nonlinearity ``f`` with primitive ``F`` (``F(0) = 0``).

    ``df`` is the derivative, used only to polish fibering roots.
    """

    f: ArrayFn
    F: ArrayFn
    p: float
    df: Optional[ArrayFn] = None
    odd: bool = True
    kerr_chi3: Optional[float] = None
    name: str = "custom"
    params: tuple = field(default=())

    def critical_exponent(self, N: int) -> float:
        return math.inf if N <= 2 else 2.0 * N / (N - 2)

    def check(self, N: int = 3, bound: float = 10.0, n: int = 2001) -> None:
        """Sampled check of growth, superlinearity and monotonicity of ``f(u)/|u|`` on ``[-bound, bound]``."""
        if not 2.0 < self.p < self.critical_exponent(N):
            raise ModelError(f"{self.name}: growth exponent {self.p} outside (2, 2N/(N-2))")
        u = np.linspace(-bound, bound, n)
        fu = self.f(u)
        pos = u > 0
        ratio = self.f(u[pos]) / u[pos]
        if not np.all(np.diff(ratio) > 0):
            raise ModelError(f"{self.name}: f(u)/|u| not strictly increasing on (0, {bound}]")
        neg = u < 0
        ratio_neg = self.f(u[neg]) / np.abs(u[neg])
        if not np.all(np.diff(ratio_neg) > 0):
            raise ModelError(f"{self.name}: f(u)/|u| not strictly increasing on [-{bound}, 0)")
        small = np.logspace(-2, -12, 6)
        if not np.all(np.diff(np.abs(self.f(small) / small)) < 0):
            raise ModelError(f"{self.name}: f(u)/u does not decay towards 0")
        C = np.max(np.abs(fu) / (1.0 + np.abs(u) ** (self.p - 1.0)))
        if not np.isfinite(C):
            raise ModelError(f"{self.name}: growth bound not finite")
        if self.F(np.array([0.0]))[0] != 0.0:
            raise ModelError(f"{self.name}: F(0) != 0")


@dataclass(frozen=True)
class _PowerSum:
    """``sum_k c_k |u|^(p_k - 2) u`` (``which`` selects f, F or f')."""

    terms: tuple  # ((coef, p), ...)
    which: str = "f"

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        au = np.abs(u)
        for coef, p in self.terms:
            if p == 4.0:
                a2 = au * au
            else:
                a2 = au ** (p - 2.0)
            if self.which == "f":
                out += coef * a2 * u
            elif self.which == "F":
                out += coef * a2 * au * au / p
            else:
                out += coef * (p - 1.0) * a2
        return out


def _power_family(terms):
    terms = tuple((float(c), float(p)) for c, p in terms)
    return _PowerSum(terms, "f"), _PowerSum(terms, "F"), _PowerSum(terms, "df")


def builtin_nonlinearity(name: str, params: Sequence[float] = (), N: int = 3) -> Nonlinearity:
    """Build a named nonlinearity.

    ``kerr``        ``[chi3]``                 ``f(u) = chi3/2 |u|^2 u``
    ``pure-power``  ``[p]``                    ``f(u) = |u|^(p-2) u``
    ``mixed``       ``[p1, p2]`` or ``[p1, p2, a, b]``
                    ``f(u) = a |u|^(p1-2) u + b |u|^(p2-2) u`` (``a = b = 1`` by default)
    """
    key = name.replace("_", "-").lower()
    crit = math.inf if N <= 2 else 2.0 * N / (N - 2)
    params = tuple(float(p) for p in params)
    if key == "kerr":
        (chi3,) = _params(params, 1, name)
        if not chi3 > 0:
            raise ModelError(f"kerr needs chi3 > 0, got {chi3}")
        f, F, df = _power_family([(0.5 * chi3, 4.0)])
        nl = Nonlinearity(f=f, F=F, df=df, p=4.0, kerr_chi3=chi3, name="kerr", params=(chi3,))
    elif key == "pure-power":
        (p,) = _params(params, 1, name)
        if not 2.0 < p < crit:
            raise ModelError(f"pure-power exponent {p} outside (2, {crit})")
        f, F, df = _power_family([(1.0, p)])
        nl = Nonlinearity(f=f, F=F, df=df, p=p, name="pure-power", params=(p,))
    elif key == "mixed":
        if len(params) == 2:
            p1, p2 = params
            a = b = 1.0
        elif len(params) == 4:
            p1, p2, a, b = params
        else:
            raise ModelError(f"mixed expects 2 or 4 parameters, got {len(params)}")
        for q in (p1, p2):
            if not 2.0 < q < crit:
                raise ModelError(f"mixed exponent {q} outside (2, {crit})")
        if not (a > 0 and b > 0):
            raise ModelError("mixed coefficients must be positive")
        f, F, df = _power_family([(a, p1), (b, p2)])
        nl = Nonlinearity(f=f, F=F, df=df, p=max(p1, p2), name="mixed",
                          params=(p1, p2, a, b))
    else:
        raise ModelError(f"unknown nonlinearity family {name!r}")
    nl.check(N)
    return nl


@dataclass(frozen=True)
class ProblemSpec:
    """Everything that defines one discrete problem instance."""

    potential: Potential
    nonlinearity: Nonlinearity
    epsilon: float = 1.0
    R_max: float = 16.0
    S_max: float = 32.0
    n_r: int = 128
    n_s: int = 256

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ModelError(f"epsilon must be positive, got {self.epsilon}")
        if not (self.R_max > 0 and self.S_max > 0):
            raise ModelError("R_max and S_max must be positive")
        if self.n_r < 8 or self.n_s < 8:
            raise ModelError(f"resolution must be at least 8x8, got {self.n_r}x{self.n_s}")

    @property
    def N(self) -> int:
        return self.potential.N

    @property
    def K(self) -> int:
        return self.potential.K

    def with_(self, **changes) -> "ProblemSpec":
        from dataclasses import replace

        return replace(self, **changes)
