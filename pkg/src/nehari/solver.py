"""Ground states by preconditioned gradient descent on the Nehari manifold.

Each step moves along ``d = -P grad J(u)`` (``P = A^-1`` when preconditioned),
backtracks until the reprojected trial point satisfies an Armijo decrease and
then scales it back onto the manifold with :func:`nehari_project`.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _backend
from .functional import EnergyBreakdown, FiberError, energy, fiber_scale, operator
from .grid import CylGrid, Field, LinearSolveError, solve_linear
from .model import Nonlinearity, ProblemSpec, builtin_potential

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    """Iteration budget exhausted; ``best`` holds the last accepted iterate."""

    def __init__(self, message, best: "Solution"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class SolverConfig:
    grad_tol: float = 1e-9
    max_iters: int = 2000
    precondition: bool = True
    method: str = "cg"  # "cg" (nonlinear conjugate gradient) or "sd" (steepest descent)
    linear_solver: str = "direct"  # "direct" (cached LU) or "cg"
    cg_tol: float = 1e-12
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    max_backtracks: int = 40
    step_init: float = 1.0
    step_max: float = 1.8
    seed: int = 0
    noise: float = 0.0
    center_s: float = 0.0
    width: float = 2.0
    nonnegative: bool = True
    snap_center: bool = True

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError(f"linear_solver must be 'direct' or 'cg', got {self.linear_solver!r}")
        if self.method not in ("cg", "sd"):
            raise ValueError(f"method must be 'cg' or 'sd', got {self.method!r}")
        if not 0 < self.armijo_shrink < 1:
            raise ValueError("armijo_shrink must lie in (0, 1)")
        if not self.width > 0:
            raise ValueError("width must be positive")


@dataclass(frozen=True)
class Solution:
    u: Field
    energy: EnergyBreakdown
    grad_norm: float
    iterations: int
    spec: ProblemSpec
    wallclock: float = 0.0
    converged: bool = True
    history: tuple = field(default=(), repr=False)

    @property
    def c(self) -> float:
        return self.energy.total


def initial_guess(spec: ProblemSpec, center_s: float = 0.0, width: float = 1.0,
                  seed: int = 0, noise: float = 0.0) -> Field:
    """``r exp(-(r^2 + (s - center_s)^2) / width^2)``, optionally with multiplicative noise."""
    if not width > 0:
        raise ValueError("width must be positive")
    grid = CylGrid.from_spec(spec)
    R, S = grid.mesh()
    u0 = R * np.exp(-(R**2 + (S - center_s) ** 2) / width**2)
    if noise:
        rng = np.random.default_rng(seed)
        u0 = u0 * (1.0 + noise * rng.uniform(-1.0, 1.0, size=u0.shape))
    return Field(grid, u0)


def _precondition(spec, cfg, g):
    if not cfg.precondition:
        return g.copy()
    op = operator(spec)
    if cfg.linear_solver == "direct":
        return op.solve_direct(g)
    return solve_linear(op, Field(op.grid, g), tol=cfg.cg_tol).values


_ROUNDOFF = 1e-13


def _grad_norm(u, spec):
    v = u.values
    g = operator(spec).apply(v) - spec.nonlinearity.f(v)
    return math.sqrt(_backend.weighted_dot(g, g, u.grid.weights))


def _secant_refine(spec, v, d, slope, accepted, e_cap, retract):
    """One secant step on the directional derivative along ``d``.

    Works from gradients only, so it keeps making progress after energy
    differences have sunk below round-off.
    """
    alpha, trial, Et = accepted
    tv = trial.values
    gt = operator(spec).apply(tv) - spec.nonlinearity.f(tv)
    slope_t = _backend.weighted_dot(gt, d, trial.grid.weights)
    if not slope_t - slope > 0:
        return accepted
    a_s = alpha * slope / (slope - slope_t)
    if not 0.05 * alpha < a_s < 20.0 * alpha or a_s == alpha:
        return accepted
    try:
        ts = retract(v + a_s * d)
    except FiberError:
        return accepted
    Es = energy(ts, spec)
    if Es.total <= min(e_cap, Et.total + _ROUNDOFF * abs(Et.total)):
        return a_s, ts, Es
    return accepted


def _descend(u: Field, spec: ProblemSpec, cfg: SolverConfig, t0: float):
    grid = u.grid
    w = grid.weights
    dot = _backend.weighted_dot
    f = spec.nonlinearity.f
    op = operator(spec)
    u = u * fiber_scale(u, spec)
    E = energy(u, spec)
    history = [E.total]
    step = cfg.step_init
    grad_norm = math.inf
    d_prev = g_prev = pg_prev = None

    def retract(x):
        trial = Field(grid, x)
        return trial * fiber_scale(trial, spec)

    for it in range(cfg.max_iters + 1):
        v = u.values
        g = op.apply(v) - f(v)
        grad_norm = math.sqrt(dot(g, g, w))
        unorm = math.sqrt(dot(v, v, w))
        if grad_norm <= cfg.grad_tol * unorm:
            return u, E, grad_norm, it, True, history
        if it == cfg.max_iters:
            break
        pg = _precondition(spec, cfg, g)
        d = -pg
        if cfg.method == "cg" and d_prev is not None:
            # Polak-Ribiere+, restarted whenever the result is not a descent direction
            beta = max(0.0, dot(g - g_prev, pg, w) / dot(g_prev, pg_prev, w))
            d = d + beta * d_prev
            if not dot(g, d, w) < 0:
                d = -pg
        slope = dot(g, d, w)
        if not slope < 0:
            log.debug("non-descent direction at iteration %d (slope %.3e)", it, slope)
            return u, E, grad_norm, it, grad_norm <= 10 * cfg.grad_tol * unorm, history
        if not cfg.precondition and it == 0:
            step = 1.0 / float(np.max(op.diag) + 1.0)
        alpha = step
        accepted = None
        noise = _ROUNDOFF * abs(E.total)
        for _ in range(cfg.max_backtracks):
            try:
                trial = retract(v + alpha * d)
            except FiberError:
                alpha *= cfg.armijo_shrink
                continue
            Et = energy(trial, spec)
            if Et.total <= E.total + cfg.armijo_c * alpha * slope:
                accepted = (alpha, trial, Et)
            elif Et.total <= E.total + noise and _grad_norm(trial, spec) < grad_norm:
                # below the energy's round-off floor the Armijo test is blind;
                # fall back to requiring a smaller gradient
                accepted = (alpha, trial, Et)
            if accepted is not None:
                if cfg.method == "cg":
                    accepted = _secant_refine(spec, v, d, slope, accepted, E.total + noise, retract)
                break
            alpha *= cfg.armijo_shrink
        if accepted is None:
            if cfg.method == "cg" and d_prev is not None:
                # drop the conjugate history and retry along -P g
                d_prev = None
                continue
            log.debug("line search failed at iteration %d", it)
            return u, E, grad_norm, it, grad_norm <= 10 * cfg.grad_tol * unorm, history
        alpha, trial, Et = accepted
        if cfg.nonnegative and spec.nonlinearity.odd:
            tv = trial.values
            if -tv.min() > tv.max():
                trial = -trial
                d = -d
        u, E = trial, Et
        history.append(E.total)
        d_prev, g_prev, pg_prev = d, g, pg
        if cfg.method == "cg":
            step = min(alpha, t0) if cfg.precondition else alpha
        else:
            # grow the step again after an unhindered acceptance
            step = min(alpha / cfg.armijo_shrink, t0) if alpha == step else alpha
    return u, E, grad_norm, cfg.max_iters, False, history


def solve_ground_state(spec: ProblemSpec, cfg: SolverConfig = SolverConfig(),
                       u0: Optional[Field] = None) -> Solution:
    """Minimise the energy over the Nehari manifold starting from ``u0``.

    Raises :class:`NonConvergence` (carrying the last iterate) when
    ``max_iters`` is exhausted.
    """
    start = time.perf_counter()
    if u0 is None:
        center = cfg.center_s
        if cfg.snap_center:
            # profiles centred between two nodes sit on an unstable lattice
            # saddle; start from the nearest node instead
            s_nodes = CylGrid.from_spec(spec).s
            center = float(s_nodes[np.argmin(np.abs(s_nodes - center))])
        u0 = initial_guess(spec, center, cfg.width, cfg.seed, cfg.noise)
    t_cap = cfg.step_max if cfg.precondition else 1.0
    u, E, gnorm, iters, ok, history = _descend(u0, spec, cfg, t_cap)
    if ok and cfg.nonnegative and spec.nonlinearity.odd:
        v = u.values
        neg = -v.min()
        if neg > 1e-12 * v.max():
            log.info("mixed-sign iterate; restarting from |u|")
            u, E, gnorm, it2, ok, h2 = _descend(Field(u.grid, np.abs(v)), spec, cfg, t_cap)
            iters += it2
            history += h2
        elif neg > 0:
            # round-off negatives in the far field
            u = Field(u.grid, np.abs(v))
            u = u * fiber_scale(u, spec)
            E = energy(u, spec)
    sol = Solution(u=u, energy=E, grad_norm=gnorm, iterations=iters, spec=spec,
                   wallclock=time.perf_counter() - start, converged=ok, history=tuple(history))
    if not ok:
        raise NonConvergence(f"no convergence within {cfg.max_iters} iterations "
                             f"(gradient {gnorm:.3e})", sol)
    return sol


def constant_spec(spec: ProblemSpec, k: float) -> ProblemSpec:
    pot = builtin_potential("constant", [k], N=spec.N, K=spec.K)
    return replace(spec, potential=pot)


def solve_limiting(k: float, geometry: ProblemSpec | tuple, nonlinearity: Nonlinearity | None = None,
                   cfg: SolverConfig = SolverConfig(), u0: Optional[Field] = None) -> Solution:
    """Ground state of the constant-potential problem; ``energy.total`` estimates ``m_k``.

    ``geometry`` is either a :class:`ProblemSpec` (its grid and nonlinearity are
    reused) or ``(R_max, S_max, n_r, n_s)``.
    """
    if not k > 0:
        raise ValueError(f"k must be positive, got {k}")
    if isinstance(geometry, ProblemSpec):
        spec = constant_spec(geometry, k)
        if nonlinearity is not None:
            spec = replace(spec, nonlinearity=nonlinearity)
        spec = replace(spec, epsilon=1.0)
    else:
        if nonlinearity is None:
            raise ValueError("nonlinearity required with a bare geometry tuple")
        R_max, S_max, n_r, n_s = geometry
        spec = ProblemSpec(builtin_potential("constant", [k]), nonlinearity, 1.0, R_max, S_max, n_r, n_s)
    return solve_ground_state(spec, cfg, u0)


@dataclass
class SweepEntry:
    epsilon: float
    solution: Optional[Solution]
    error: Optional[str] = None


def continuation_sweep(spec: ProblemSpec, eps_list, cfg: SolverConfig = SolverConfig(),
                       warm_start: bool = True) -> list:
    """Solve for each ``epsilon`` in descending order, warm-starting from the previous solution.

    Failures are recorded per entry and the sweep continues.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise ValueError("epsilons must be positive")
    if any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be descending")
    out = []
    prev = None
    for eps in eps_list:
        sp_eps = replace(spec, epsilon=eps)
        try:
            sol = solve_ground_state(sp_eps, cfg, prev.u if (warm_start and prev is not None) else None)
        except (NonConvergence, FiberError, LinearSolveError) as exc:
            log.warning("sweep member eps=%g failed: %s", eps, exc)
            out.append(SweepEntry(eps, getattr(exc, "best", None), str(exc)))
            continue
        out.append(SweepEntry(eps, sol))
        prev = sol
    return out


def _solve_one(args):
    spec, cfg = args
    return solve_ground_state(spec, cfg)


def solve_many(specs, cfg: SolverConfig = SolverConfig(), workers: int = 1) -> list:
    """Independent cold-start solves, optionally in worker processes; order is preserved."""
    specs = list(specs)
    if workers <= 1 or len(specs) <= 1:
        return [solve_ground_state(s, cfg) for s in specs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=min(workers, len(specs))) as pool:
        return list(pool.map(_solve_one, [(s, cfg) for s in specs]))
