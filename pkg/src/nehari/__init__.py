"""Nehari-manifold ground states of -Lap u + u/|y|^2 + V(eps x) u = f(u).

The scalar problem is solved on a cylindrically reduced grid; ``nehari.maxwell``
lifts solutions to divergence-free fields of the curl-curl equation.
"""
from ._backend import BACKEND
from .grid import CylGrid, Field, inner_weighted, apply_schrodinger_op, solve_linear
from .model import ProblemSpec, Potential, Nonlinearity, builtin_potential, builtin_nonlinearity
from .functional import energy, gradient, fiber_scale, nehari_project

__all__ = [
    "BACKEND", "CylGrid", "Field", "inner_weighted", "apply_schrodinger_op", "solve_linear",
    "ProblemSpec", "Potential", "Nonlinearity", "builtin_potential", "builtin_nonlinearity",
    "energy", "gradient", "fiber_scale", "nehari_project",
]

__version__ = "0.1.0"
