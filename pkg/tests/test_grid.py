import math

import numpy as np
import pytest
from scipy.integrate import dblquad
from scipy.linalg import eigh

from nehari.grid import (CylGrid, Field, GridMismatch, LinearSolveError, apply_schrodinger_op, inner_weighted,
                         lowest_eigenpair, operator_for, read_field, solve_linear, sphere_measure, write_field)
from nehari.model import builtin_potential

ONE = builtin_potential("constant", [1.0])
WELL = builtin_potential("well", [1.0, 2.0, 1.0])


def test_sphere_measure():
    assert sphere_measure(1) == pytest.approx(2 * math.pi)
    assert sphere_measure(2) == pytest.approx(4 * math.pi)


def test_nodes_and_weights():
    g = CylGrid(10, 20, 5.0, 4.0)
    assert g.h_r == 0.5 and g.h_s == 0.4
    assert g.r[0] == pytest.approx(0.25) and np.all(g.r > 0)
    assert g.s[0] == pytest.approx(-3.8) and g.s[-1] == pytest.approx(3.8)
    assert np.all(g.weights > 0)
    assert g.weights.sum() == pytest.approx(g.total_measure(), rel=1e-12)


def test_single_cell_mass():
    g = CylGrid(8, 8, 2.0, 2.0)
    a = Field.zeros(g)
    a.values[3, 5] = 1.0
    assert inner_weighted(a, a) == pytest.approx(g.weights[3, 5], rel=1e-15)


def test_total_measure_unit_box():
    g = CylGrid(16, 16, 1.0, 1.0)
    one = Field(g, np.ones(g.shape))
    assert inner_weighted(one, one) == pytest.approx(2 * math.pi, rel=1e-12)


def test_gaussian_inner_product_against_adaptive_quadrature():
    g = CylGrid(256, 256, 6.0, 6.0)
    u = Field.from_function(g, lambda r, s: r * np.exp(-r**2 - s**2))
    oracle, _ = dblquad(lambda s, r: 2 * math.pi * r * (r * math.exp(-r * r - s * s)) ** 2,
                        0.0, 6.0, -6.0, 6.0, epsabs=1e-14, epsrel=1e-13)
    assert inner_weighted(u, u) == pytest.approx(oracle, rel=1e-6)


def test_grid_mismatch():
    a = Field.zeros(CylGrid(8, 8, 1.0, 1.0))
    b = Field.zeros(CylGrid(8, 8, 2.0, 1.0))
    with pytest.raises(GridMismatch):
        inner_weighted(a, b)
    with pytest.raises(GridMismatch):
        Field(a.grid, np.zeros((8, 9)))


def test_operator_zero_and_matrix():
    g = CylGrid(12, 10, 3.0, 2.0)
    op = operator_for(g, WELL, 0.7)
    assert np.all(op.apply(np.zeros(g.shape)) == 0.0)
    u = np.random.default_rng(1).standard_normal(g.shape)
    assert np.allclose(op.matrix() @ u.ravel(), op.apply(u).ravel(), rtol=1e-14, atol=1e-12)


def test_operator_is_self_adjoint_dense():
    g = CylGrid(8, 8, 2.0, 2.0)
    op = operator_for(g, WELL, 1.0)
    A = op.matrix().toarray()
    W = np.diag(g.weights.ravel())
    WA = W @ A
    assert np.allclose(WA, WA.T, rtol=0, atol=1e-12 * np.abs(WA).max())
    rng = np.random.default_rng(2)
    for _ in range(10):
        u = Field(g, rng.standard_normal(g.shape))
        v = Field(g, rng.standard_normal(g.shape))
        lhs = inner_weighted(op(u), v)
        rhs = inner_weighted(u, op(v))
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_lowest_eigenvalue_matches_dense_oracle():
    g = CylGrid(16, 16, 4.0, 4.0)
    op = operator_for(g, ONE, 1.0)
    A = op.matrix().toarray()
    W = np.diag(g.weights.ravel())
    oracle = eigh(W @ A, W, eigvals_only=True)[0]
    lam, vec = lowest_eigenpair(op)
    assert lam == pytest.approx(oracle, rel=1e-8)
    assert vec.norm() == pytest.approx(1.0)


def test_operator_consistent_with_continuum():
    # -Lap u + u/r^2 + u for u = r exp(-r^2 - s^2) is r (11 - 4 r^2 - 4 s^2) exp(-r^2 - s^2)
    errs = []
    for n in (64, 128):
        g = CylGrid(n, 2 * n, 6.0, 6.0)
        R, S = g.mesh()
        u = Field(g, R * np.exp(-R**2 - S**2))
        exact = R * (11.0 - 4 * R**2 - 4 * S**2) * np.exp(-R**2 - S**2)
        diff = Field(g, apply_schrodinger_op(u, ONE, 1.0).values - exact)
        errs.append(diff.norm() / Field(g, exact).norm())
    assert errs[1] < 1e-2
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.3)


def test_solve_linear_manufactured():
    g = CylGrid(32, 32, 6.0, 6.0)
    op = operator_for(g, WELL, 0.5)
    x = Field(g, np.random.default_rng(3).standard_normal(g.shape))
    sol = solve_linear(op, op(x), tol=1e-12)
    assert np.max(np.abs(sol.values - x.values)) <= 1e-8 * np.max(np.abs(x.values))


def test_solve_linear_residual_and_zero_rhs():
    g = CylGrid(64, 64, 8.0, 8.0)
    op = operator_for(g, ONE, 1.0)
    b = Field.from_function(g, lambda r, s: np.exp(-r**2 - s**2))
    x = solve_linear(op, b, tol=1e-10)
    assert (op(x) - b).norm() <= 1e-10 * b.norm()
    assert np.all(solve_linear(op, Field.zeros(g)).values == 0.0)


def test_solve_linear_reports_stall():
    g = CylGrid(32, 32, 6.0, 6.0)
    op = operator_for(g, ONE, 1.0)
    b = Field(g, np.random.default_rng(4).standard_normal(g.shape))
    with pytest.raises(LinearSolveError) as err:
        solve_linear(op, b, tol=1e-12, max_iter=2)
    assert err.value.iterations == 2 and err.value.residual > 1e-12


def test_direct_solve_agrees_with_cg():
    g = CylGrid(32, 48, 6.0, 6.0)
    op = operator_for(g, WELL, 1.0)
    b = np.random.default_rng(5).standard_normal(g.shape)
    x_cg = solve_linear(op, Field(g, b), tol=1e-13).values
    assert np.allclose(op.solve_direct(b), x_cg, rtol=1e-9, atol=1e-11)


def test_field_roundtrip(tmp_path):
    g = CylGrid(9, 11, 2.5, 1.5)
    u = Field(g, np.random.default_rng(6).standard_normal(g.shape))
    write_field(tmp_path / "u.txt", u)
    v = read_field(tmp_path / "u.txt")
    assert v.grid == g
    assert np.array_equal(u.values, v.values)
