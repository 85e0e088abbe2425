"""Pure numpy versions of the kernels in ``_kernels.pyx``."""
import numpy as np


def apply_stencil(u, diag, cp, cm, cs):
    out = diag * u
    out[:-1, :] -= cp[:-1, None] * u[1:, :]
    out[1:, :] -= cm[1:, None] * u[:-1, :]
    out[:, :-1] -= cs * u[:, 1:]
    out[:, 1:] -= cs * u[:, :-1]
    return out


def weighted_dot(a, b, w):
    return float(np.sum(np.sum(w * a * b, axis=1)))


def cg_update(x, r, p, ap, alpha):
    x += alpha * p
    r -= alpha * ap
