import numpy as np
import pytest

from nehari.model import ProblemSpec, builtin_nonlinearity, builtin_potential
from nehari.solver import solve_ground_state


def kerr(chi=1.0):
    return builtin_nonlinearity("kerr", [chi])


def const(k=1.0):
    return builtin_potential("constant", [k])


def small_spec(pot=None, nl=None, n=64, L=12.0, eps=1.0):
    """64x64 on (0, L] x [-L, L]."""
    return ProblemSpec(pot or const(), nl or kerr(), eps, L, L, n, n)


def random_field(grid, rng, positive=False):
    R, S = grid.mesh()
    env = R * np.exp(-(R**2 + S**2) / 8.0)
    noise = rng.uniform(0.2, 1.0, grid.shape) if positive else rng.standard_normal(grid.shape)
    return env * noise


@pytest.fixture(scope="session")
def default_spec():
    return ProblemSpec(const(), kerr())


@pytest.fixture(scope="session")
def ground_state(default_spec):
    """Converged V = 1 Kerr ground state on the default 128x256 grid."""
    return solve_ground_state(default_spec)


@pytest.fixture(scope="session")
def small_ground_state():
    return solve_ground_state(small_spec())
