# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stencil kernels; ``nehari._fallback`` mirrors these in numpy."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def apply_stencil(const double[:, ::1] u, const double[:, ::1] diag,
                  const double[::1] cp, const double[::1] cm, double cs):
    """Five-point flux stencil with zero ghost values outside the rectangle."""
    cdef Py_ssize_t n_r = u.shape[0]
    cdef Py_ssize_t n_s = u.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc
    out = np.empty((n_r, n_s), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n_r):
        for j in range(n_s):
            acc = diag[i, j] * u[i, j]
            if i + 1 < n_r:
                acc -= cp[i] * u[i + 1, j]
            if i > 0:
                acc -= cm[i] * u[i - 1, j]
            if j + 1 < n_s:
                acc -= cs * u[i, j + 1]
            if j > 0:
                acc -= cs * u[i, j - 1]
            o[i, j] = acc
    return out


def weighted_dot(const double[:, ::1] a, const double[:, ::1] b, const double[:, ::1] w):
    """Sum of ``w * a * b`` in fixed row-major order."""
    cdef Py_ssize_t n_r = a.shape[0]
    cdef Py_ssize_t n_s = a.shape[1]
    cdef Py_ssize_t i, j
    cdef double total = 0.0
    cdef double row
    for i in range(n_r):
        row = 0.0
        for j in range(n_s):
            row += w[i, j] * a[i, j] * b[i, j]
        total += row
    return total


def cg_update(double[:, ::1] x, double[:, ::1] r, const double[:, ::1] p,
              const double[:, ::1] ap, double alpha):
    """In place ``x += alpha p``, ``r -= alpha Ap``."""
    cdef Py_ssize_t n_r = x.shape[0]
    cdef Py_ssize_t n_s = x.shape[1]
    cdef Py_ssize_t i, j
    for i in range(n_r):
        for j in range(n_s):
            x[i, j] += alpha * p[i, j]
            r[i, j] -= alpha * ap[i, j]
