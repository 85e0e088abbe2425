"""Post-processing experiments on computed ground states.

Decay-rate fits, comparison and continuity of the ground-state level in the
potential, the cutoff comparison around a limiting ground state, and
concentration diagnostics across an epsilon sweep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .functional import energy, fiber_scale
from .grid import CylGrid, Field
from .model import Potential, ProblemSpec
from .solver import Solution, SolverConfig, constant_spec, solve_many


class AnalysisError(ValueError):
    pass


class BoundViolation(AssertionError):
    """A variational inequality failed beyond its tolerance."""


def nu_star(N: int) -> float:
    """Threshold decay exponent ``(N - 2 + sqrt((N - 2)^2 + 4)) / 2``."""
    a = N - 2
    return (a + math.sqrt(a * a + 4)) / 2.0


# --- decay ------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    nu_est: float
    window: tuple
    r2: float
    nu_star: float
    r2_exp: float
    n_samples: int
    r_ray: float


def _fit_line(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return coef[0], r2


def fit_power_law(x: np.ndarray, u: np.ndarray, window, N: int = 3) -> DecayFit:
    """Least-squares slope of ``log u`` against ``log x`` inside ``window``."""
    x_lo, x_hi = window
    if not x_lo < x_hi:
        raise AnalysisError(f"empty window [{x_lo}, {x_hi}]")
    x = np.asarray(x, dtype=float)
    u = np.abs(np.asarray(u, dtype=float))
    floor = 10.0 * np.finfo(float).eps * (u.max() if u.size else 0.0)
    keep = (x >= x_lo) & (x <= x_hi) & (u > floor) & (x > 0)
    if keep.sum() < 3:
        raise AnalysisError(f"fewer than 3 usable samples in window [{x_lo}, {x_hi}]")
    lx, lu = np.log(x[keep]), np.log(u[keep])
    slope, r2 = _fit_line(lx, lu)
    _, r2_exp = _fit_line(x[keep], lu)
    return DecayFit(nu_est=-float(slope), window=(float(x_lo), float(x_hi)), r2=r2, nu_star=nu_star(N),
                    r2_exp=r2_exp, n_samples=int(keep.sum()), r_ray=float("nan"))


def decay_fit(sol: Solution, window=(8.0, 20.0)) -> DecayFit:
    """Power-law decay exponent along the axial ray through the peak radius.

    The ray ``s -> (r_peak, s)`` runs parallel to the axis; ``|x|`` is measured
    from the origin.  ``x_hi`` must stay below ``0.8 S_max``.
    """
    u = sol.u.values
    grid = sol.u.grid
    x_lo, x_hi = window
    if x_hi > 0.8 * grid.S_max:
        raise AnalysisError(f"window end {x_hi} exceeds 0.8 * S_max = {0.8 * grid.S_max}")
    i_peak = int(np.unravel_index(np.argmax(np.abs(u)), u.shape)[0])
    r_peak = grid.r[i_peak]
    x = np.hypot(r_peak, grid.s)
    fit = fit_power_law(x, u[i_peak], window, sol.spec.N)
    return replace(fit, r_ray=float(r_peak))


# --- comparison and continuity ----------------------------------------------

@dataclass(frozen=True)
class Comparison:
    c_hi: float
    c_lo: float
    ordered: bool
    sol_hi: Solution
    sol_lo: Solution


def _pointwise_ge(V_hi: Potential, V_lo: Potential, spec: ProblemSpec) -> bool:
    R, S = CylGrid.from_spec(spec).mesh()
    e = spec.epsilon
    return bool(np.all(V_hi(e * R, e * S) >= V_lo(e * R, e * S)))


def compare_potentials(V_hi: Potential, V_lo: Potential, spec: ProblemSpec,
                       cfg: SolverConfig = SolverConfig(), tol_rel: float = 1e-6,
                       check: bool = True, workers: int = 1) -> Comparison:
    """Ground-state levels for two ordered potentials; ``c_hi >= c_lo`` is expected."""
    if not _pointwise_ge(V_hi, V_lo, spec):
        raise AnalysisError("V_hi >= V_lo fails on the grid")
    sol_hi, sol_lo = solve_many([replace(spec, potential=V_hi), replace(spec, potential=V_lo)], cfg, workers)
    ordered = sol_hi.c >= sol_lo.c - tol_rel * abs(sol_lo.c)
    if check and not ordered:
        raise BoundViolation(f"c(V_hi) = {sol_hi.c} < c(V_lo) = {sol_lo.c}")
    return Comparison(sol_hi.c, sol_lo.c, ordered, sol_hi, sol_lo)


@dataclass(frozen=True)
class ContinuityRow:
    h: float
    c: float
    diff: float
    ratio: float


@dataclass(frozen=True)
class ContinuityReport:
    baseline: float
    rows: tuple
    lipschitz_est: float
    monotone: bool
    sign_ok: bool


def continuity_scan(V: Potential, h_list: Sequence[float], spec: ProblemSpec,
                    cfg: SolverConfig = SolverConfig(), tol_rel: float = 1e-9,
                    workers: int = 1) -> ContinuityReport:
    """``c(V + h)`` for each shift, with monotonicity of ``|c(V + h) - c(V)|`` in ``|h|``."""
    h_list = [float(h) for h in h_list]
    if h_list and V.V0 + min(h_list) <= 0:
        raise AnalysisError(f"shift {min(h_list)} makes the potential nonpositive")
    specs = [replace(spec, potential=V)] + [replace(spec, potential=V.shifted(h)) for h in h_list]
    sols = solve_many(specs, cfg, workers)
    c0 = sols[0].c
    rows = []
    for h, sol in zip(h_list, sols[1:]):
        diff = abs(sol.c - c0)
        rows.append(ContinuityRow(h, sol.c, diff, diff / abs(h) if h else 0.0))
    by_size = sorted(rows, key=lambda row: abs(row.h), reverse=True)
    monotone = all(b.diff < a.diff for a, b in zip(by_size, by_size[1:]) if abs(b.h) < abs(a.h))
    sign_ok = all(row.c >= c0 - tol_rel * abs(c0) for row in rows if row.h > 0)
    sign_ok = sign_ok and all(row.c <= c0 + tol_rel * abs(c0) for row in rows if row.h < 0)
    lip = max((row.ratio for row in rows if row.h), default=0.0)
    return ContinuityReport(c0, tuple(rows), lip, monotone, sign_ok)


# --- cutoff comparison -------------------------------------------------------

def smoothstep_cutoff(t, R: float):
    """C^1 cutoff: 1 on ``[0, R]``, 0 on ``[R + 2, inf)``, cubic in between (slope at most 3/4)."""
    x = np.clip((np.asarray(t, dtype=float) - R) / 2.0, 0.0, 1.0)
    return 1.0 - x * x * (3.0 - 2.0 * x)


@dataclass(frozen=True)
class CutoffResult:
    R: float
    gamma: float
    psi: float
    t_scale: float
    base_energy: float


def _cutoff_field(R_cut: float, u: Field) -> Field:
    grid = u.grid
    far = math.hypot(grid.R_max, grid.S_max)
    if R_cut < far and R_cut + 2.0 > min(grid.R_max, grid.S_max):
        raise AnalysisError(f"cutoff band [{R_cut}, {R_cut + 2}] leaves the grid")
    R, S = grid.mesh()
    return Field(grid, smoothstep_cutoff(np.hypot(R, S), R_cut) * u.values)


def cutoff_gamma(R_cut: float, w: Solution, k: Optional[float] = None) -> CutoffResult:
    """``gamma_R = max_t Phi_k(t chi_R w)`` and ``psi_R = gamma_R - Phi_k(w)``."""
    if k is None:
        k = w.spec.potential.V0
    spec_k = replace(constant_spec(w.spec, k), epsilon=1.0)
    v = _cutoff_field(R_cut, w.u)
    t = fiber_scale(v, spec_k)
    gamma = energy(v * t, spec_k).total
    base = energy(w.u, spec_k).total
    return CutoffResult(float(R_cut), gamma, gamma - base, t, base)


def theta_hat(R_cut: float, w: Solution, spec: ProblemSpec) -> float:
    """Fibering scale of the cut-off limiting profile for the problem ``spec``."""
    return fiber_scale(_cutoff_field(R_cut, w.u), spec)


# --- concentration ----------------------------------------------------------

@dataclass(frozen=True)
class ConcentrationReport:
    eps: float
    peak_s: float
    mass_center: float
    width: float
    c_eps: float
    profile_count_est: int
    ell_bound: float
    grad_norm: float
    iterations: int

    @property
    def eps_times_peak_s(self) -> float:
        return self.eps * self.peak_s

    @property
    def count_ok(self) -> bool:
        return self.profile_count_est <= math.ceil(self.ell_bound)


def s_marginal(u: Field) -> np.ndarray:
    """Mass per unit length along the axis, ``int u^2 dy`` at each ``s``."""
    g = u.grid
    return np.sum(g.weights * u.values**2, axis=0) / g.h_s


def _refine_peak(s, rho, j):
    if 0 < j < len(rho) - 1:
        a, b, c = rho[j - 1], rho[j], rho[j + 1]
        den = a - 2.0 * b + c
        if den < 0:
            return s[j] + 0.5 * (a - c) / den * (s[1] - s[0])
    return s[j]


def count_profiles(s, rho, rel_height: float = 0.1, separation: float = 3.0) -> int:
    """Local maxima above ``rel_height * max`` at least ``separation`` peak widths apart."""
    top = rho.max()
    if not top > 0:
        return 0
    j0 = int(np.argmax(rho))
    half = rho >= 0.5 * top
    lo = j0
    while lo > 0 and half[lo - 1]:
        lo -= 1
    hi = j0
    while hi < len(rho) - 1 and half[hi + 1]:
        hi += 1
    sigma = max((s[hi] - s[lo] + (s[1] - s[0])) / 2.3548, s[1] - s[0])
    interior = (rho[1:-1] > rho[:-2]) & (rho[1:-1] >= rho[2:]) & (rho[1:-1] > rel_height * top)
    cand = list(np.nonzero(interior)[0] + 1)
    if rho[0] > rho[1] and rho[0] > rel_height * top:
        cand.append(0)
    if rho[-1] > rho[-2] and rho[-1] > rel_height * top:
        cand.append(len(rho) - 1)
    cand.sort(key=lambda j: -rho[j])
    kept = []
    for j in cand:
        if all(abs(s[j] - s[m]) >= separation * sigma for m in kept):
            kept.append(j)
    return max(len(kept), 1)


def concentration_scan(sweep: Sequence[Solution], m_V0: float, m_Vinf: float,
                       check: bool = False) -> list:
    """Peak location, spread and profile count of each sweep member."""
    if not sweep:
        raise AnalysisError("empty sweep")
    ell = m_Vinf / m_V0
    out = []
    for sol in sweep:
        g = sol.u.grid
        rho = s_marginal(sol.u)
        j = int(np.argmax(rho))
        total = rho.sum()
        center = float(np.sum(rho * g.s) / total)
        width = float(math.sqrt(np.sum(rho * (g.s - center) ** 2) / total))
        rep = ConcentrationReport(
            eps=sol.spec.epsilon,
            peak_s=float(_refine_peak(g.s, rho, j)),
            mass_center=center,
            width=width,
            c_eps=sol.c,
            profile_count_est=count_profiles(g.s, rho),
            ell_bound=ell,
            grad_norm=sol.grad_norm,
            iterations=sol.iterations,
        )
        if check and not rep.count_ok:
            raise BoundViolation(f"eps={rep.eps}: {rep.profile_count_est} profiles exceed ceil({ell})")
        out.append(rep)
    return out


def sandwich(c_values: Sequence[float], m_V0: float, m_Vinf: float, tol: float = 0.05) -> list:
    """Per value, whether ``m_V0 (1 - tol) <= c <= m_Vinf (1 + tol)``."""
    return [m_V0 * (1.0 - tol) <= c <= m_Vinf * (1.0 + tol) for c in c_values]
