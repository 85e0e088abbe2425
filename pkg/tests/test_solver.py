import math

import numpy as np
import pytest

from conftest import const, kerr, small_spec
from nehari import _backend
from nehari.functional import energy, fiber_scale, operator
from nehari.model import ProblemSpec, builtin_potential
from nehari.solver import (NonConvergence, SolverConfig, constant_spec, continuation_sweep, initial_guess,
                           solve_ground_state, solve_limiting, solve_many)

WELL = builtin_potential("well", [1.0, 2.0, 1.0])


def _residual(sol):
    v = sol.u.values
    g = operator(sol.spec).apply(v) - sol.spec.nonlinearity.f(v)
    w = sol.u.grid.weights
    return math.sqrt(_backend.weighted_dot(g, g, w)), math.sqrt(_backend.weighted_dot(v, v, w))


@pytest.mark.parametrize("bad", [dict(grad_tol=0.0), dict(max_iters=0), dict(method="newton"),
                                 dict(linear_solver="lu"), dict(armijo_shrink=1.0), dict(width=0.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SolverConfig(**bad)


def test_initial_guess_values():
    spec = ProblemSpec(const(), kerr(), 1.0, 8.0, 3.0, 12, 9)
    u0 = initial_guess(spec, center_s=0.0, width=1.0)
    g = u0.grid
    i, j = int(np.argmin(np.abs(g.r - 1.0))), int(np.argmin(np.abs(g.s)))
    assert (g.r[i], g.s[j]) == (pytest.approx(1.0), pytest.approx(0.0, abs=1e-15))
    assert u0.values[i, j] == pytest.approx(math.exp(-1.0), rel=1e-15)
    assert np.all(initial_guess(spec, 0.0, 2.0, seed=3, noise=0.5).values >= 0)


def test_initial_guess_fibers():
    spec = small_spec()
    t = fiber_scale(initial_guess(spec), spec)
    assert math.isfinite(t) and t > 0


@pytest.fixture(scope="module")
def small_runs():
    spec = small_spec()
    a = solve_ground_state(spec, SolverConfig(seed=1, noise=0.2))
    b = solve_ground_state(spec, SolverConfig(seed=7, noise=0.2, center_s=1.0))
    return a, b


def test_seeds_and_centres_agree(small_runs):
    a, b = small_runs
    assert a.converged and b.converged
    assert b.c == pytest.approx(a.c, rel=1e-6)


def test_solution_contract(small_runs):
    for sol in small_runs:
        res, unorm = _residual(sol)
        assert res <= 10 * SolverConfig().grad_tol * unorm
        assert sol.grad_norm <= SolverConfig().grad_tol * unorm
        assert np.all(sol.u.values >= 0)
        assert sol.energy.on_manifold()
        assert sol.c == energy(sol.u, sol.spec).total


def test_monotone_descent(small_runs):
    for sol in small_runs:
        h = np.array(sol.history)
        assert np.all(np.diff(h) <= 1e-12 * np.abs(h[1:]))


def test_steepest_descent_and_cg_linear_solver_agree(small_runs):
    ref = small_runs[0].c
    spec = small_spec()
    sd = solve_ground_state(spec, SolverConfig(method="sd", max_iters=3000))
    cg = solve_ground_state(spec, SolverConfig(linear_solver="cg"))
    assert sd.c == pytest.approx(ref, rel=1e-8)
    assert cg.c == pytest.approx(ref, rel=1e-8)


def test_unpreconditioned_descent_decreases_energy():
    spec = small_spec(n=32)
    with pytest.raises(NonConvergence) as err:
        solve_ground_state(spec, SolverConfig(precondition=False, max_iters=30))
    best = err.value.best
    assert best is not None and not best.converged
    h = np.array(best.history)
    assert np.all(np.diff(h) <= 1e-12 * np.abs(h[1:]))


def test_nonconvergence_carries_iterate():
    with pytest.raises(NonConvergence, match="within 1 iterations") as err:
        solve_ground_state(small_spec(), SolverConfig(max_iters=1))
    assert err.value.best.iterations == 1


def test_translation_invariance_of_limiting_problem():
    spec = small_spec()
    a = solve_limiting(1.0, spec)
    b = solve_limiting(1.0, spec, cfg=SolverConfig(center_s=3.0))
    assert b.c == pytest.approx(a.c, rel=1e-6)
    peak = lambda sol: sol.u.grid.s[np.argmax(sol.u.values.max(axis=0))]
    assert abs(peak(b) - peak(a) - 3.0) <= 0.5


def test_limiting_kerr_identity():
    sol = solve_limiting(2.0, (12.0, 12.0, 64, 64), kerr())
    E = sol.energy
    # int |grad u|^2 + u^2/r^2 + k u^2 = (chi/2) int u^4
    quart = float(np.sum(sol.u.grid.weights * sol.u.values**4))
    assert E.norm_sq == pytest.approx(0.5 * quart, rel=1e-8)
    with pytest.raises(ValueError):
        solve_limiting(0.0, small_spec())
    with pytest.raises(ValueError):
        solve_limiting(1.0, (12.0, 12.0, 64, 64))


def test_constant_spec():
    spec = constant_spec(small_spec(pot=WELL), 2.0)
    assert spec.potential.constant and spec.potential.V0 == 2.0


def test_sweep_single_member_reproduces_solve():
    spec = small_spec(pot=WELL)
    (entry,) = continuation_sweep(spec, [1.0])
    direct = solve_ground_state(spec)
    assert entry.error is None
    assert np.array_equal(entry.solution.u.values, direct.u.values)
    assert entry.solution.c == direct.c


def test_sweep_contract():
    spec = small_spec(pot=WELL)
    entries = continuation_sweep(spec, [0.5, 0.25])
    cs = [e.solution.c for e in entries]
    assert all(math.isfinite(c) and c > 0 for c in cs)
    with pytest.raises(ValueError, match="descending"):
        continuation_sweep(spec, [0.25, 0.5])
    with pytest.raises(ValueError):
        continuation_sweep(spec, [0.5, -0.1])


def test_sweep_records_failures():
    entries = continuation_sweep(small_spec(pot=WELL), [0.5, 0.25], SolverConfig(max_iters=1))
    assert all(e.error is not None and e.solution is not None for e in entries)


def test_solve_many_matches_serial():
    specs = [small_spec(n=32), small_spec(pot=WELL, n=32, eps=0.5)]
    serial = solve_many(specs)
    pooled = solve_many(specs, workers=2)
    for a, b in zip(serial, pooled):
        assert np.array_equal(a.u.values, b.u.values)
