import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad, simpson

from nehari.model import ModelError, Potential, ProblemSpec, builtin_nonlinearity, builtin_potential

ALL_NL = [("kerr", [1.0]), ("kerr", [2.5]), ("pure-power", [3.0]), ("pure-power", [5.0]),
          ("mixed", [3.0, 5.0]), ("mixed", [2.5, 4.0, 1.0, 0.5])]
ALL_POT = [("constant", [1.0]), ("well", [1.0, 2.0, 1.0]), ("radial-step", [1.0, 3.0, 4.0, 1.0]),
           ("double-well-axis", [0.5, 2.0, 3.0, 1.0])]


def test_constant_potential_is_flat():
    V = builtin_potential("constant", [1.0])
    r = np.linspace(0, 50, 7)
    assert V.constant
    assert V.V0 == V.Vinfty == 1.0
    assert np.all(V(r[:, None], r[None, :]) == 1.0)


def test_well_on_sampling_net():
    V = builtin_potential("well", [1.0, 2.0, 1.0])
    r = np.linspace(0.0, 10.0, 101)
    s = np.linspace(-10.0, 10.0, 101)
    vals = V(r[:, None], s[None, :])
    assert vals.min() == pytest.approx(1.0, abs=1e-15)
    assert V.at_origin() == 1.0 and V.V0 == 1.0 and V.Vinfty == 2.0
    # boundary shell of the net
    shell = np.concatenate([vals[-1, :], vals[:, 0], vals[:, -1]])
    assert np.all(np.abs(shell - 2.0) <= 1e-6)


@pytest.mark.parametrize("params", [[2.0, 1.0, 1.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0], [1.0, 2.0, -1.0]])
def test_well_rejects_bad_parameters(params):
    with pytest.raises(ModelError):
        builtin_potential("well", params)


def test_unknown_family_and_arity():
    with pytest.raises(ModelError, match="unknown"):
        builtin_potential("parabolic", [1.0])
    with pytest.raises(ModelError, match="expects 3"):
        builtin_potential("well", [1.0, 2.0])
    with pytest.raises(ModelError):
        builtin_potential("constant", [-1.0])


@pytest.mark.parametrize("name,params", ALL_POT)
def test_builtin_potentials_respect_infimum(name, params):
    V = builtin_potential(name, params)
    r = np.linspace(0, 30, 61)
    s = np.linspace(-30, 30, 121)
    assert V(r[:, None], s[None, :]).min() >= V.V0 - 1e-12
    if not V.constant:
        assert V.at_origin() < V.Vinfty
    pickle.loads(pickle.dumps(V))


def test_shifted_potential():
    V = builtin_potential("well", [1.0, 2.0, 1.0])
    W = V.shifted(0.5)
    assert W.V0 == 1.5 and W.Vinfty == 2.5
    assert W(0.3, -0.2) == pytest.approx(V(0.3, -0.2) + 0.5)
    with pytest.raises(ModelError):
        V.shifted(-1.0)


def test_check_flags_potential_below_infimum():
    V = Potential(eval=lambda r, s: 1.0 + 0 * r, V0=2.0, Vinfty=2.0, constant=True)
    with pytest.raises(ModelError, match="below V0"):
        V.check()


def test_kerr_values():
    nl = builtin_nonlinearity("kerr", [2.0])
    assert nl.f(np.array(1.0)) == pytest.approx(1.0)
    assert nl.F(np.array(1.0)) == pytest.approx(0.25)
    assert nl.p == 4 and nl.kerr_chi3 == 2.0


def test_pure_power_values():
    nl = builtin_nonlinearity("pure-power", [3.0])
    assert nl.f(np.array(2.0)) == pytest.approx(4.0)
    assert nl.F(np.array(2.0)) == pytest.approx(8.0 / 3.0)
    assert nl.f(np.array(-2.0)) == pytest.approx(-4.0)


def test_kerr_primitive_against_simpson():
    nl = builtin_nonlinearity("kerr", [1.0])
    for u in np.linspace(0.1, 2.0, 9):
        t = np.linspace(0.0, u, 2001)
        assert abs(nl.F(np.array(u)) - simpson(nl.f(t), x=t)) <= 1e-10


@pytest.mark.parametrize("name,params", ALL_NL)
def test_primitive_against_adaptive_quadrature(name, params):
    nl = builtin_nonlinearity(name, params)
    for u in [-1.7, 0.3, 1.0, 2.9]:
        val, _ = quad(lambda t: float(nl.f(np.array(t))), 0.0, u, epsabs=1e-13, epsrel=1e-13)
        assert nl.F(np.array(u)) == pytest.approx(val, rel=1e-10, abs=1e-12)
    assert nl.F(np.array(0.0)) == 0.0


@pytest.mark.parametrize("name,params", ALL_NL)
def test_derivative_by_finite_differences(name, params):
    nl = builtin_nonlinearity(name, params)
    # away from 0, where |u|^(p-2) is not smooth for p < 4
    u = np.array([-3.0, -1.2, -0.4, 0.25, 0.9, 2.7])
    d = 1e-6
    fd = (nl.f(u + d) - nl.f(u - d)) / (2 * d)
    assert np.allclose(nl.df(u), fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("name,params", ALL_NL)
@settings(max_examples=25, deadline=None)
@given(u=st.floats(min_value=0.01, max_value=10.0))
def test_ray_quotient_strictly_increasing(name, params, u):
    # t -> f(t u) u / t is strictly increasing for t > 0
    nl = builtin_nonlinearity(name, params)
    for sign in (1.0, -1.0):
        t = np.geomspace(1e-3, 1e2, 200)
        q = nl.f(t * sign * u) * sign * u / t
        assert np.all(np.diff(q) > 0)


@pytest.mark.parametrize("params", [[2.0], [6.0], [1.5]])
def test_pure_power_outside_growth_range(params):
    with pytest.raises(ModelError):
        builtin_nonlinearity("pure-power", params)


def test_kerr_needs_positive_chi():
    with pytest.raises(ModelError):
        builtin_nonlinearity("kerr", [0.0])
    with pytest.raises(ModelError):
        builtin_nonlinearity("cubic-quintic", [1.0])


def test_problem_spec_invariants():
    V, nl = builtin_potential("constant", [1.0]), builtin_nonlinearity("kerr", [1.0])
    spec = ProblemSpec(V, nl)
    assert (spec.N, spec.K) == (3, 2)
    assert spec.with_(epsilon=0.5).epsilon == 0.5
    for bad in [dict(epsilon=0.0), dict(n_r=4), dict(R_max=-1.0)]:
        with pytest.raises((ModelError, ValueError)):
            ProblemSpec(V, nl, **bad)
