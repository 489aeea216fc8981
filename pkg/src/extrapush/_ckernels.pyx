# cython: language_level=3
"""Compiled inner loops for the two-step mixing recursions.

Both kernels accumulate over senders in ascending index order and evaluate
the update with the same parenthesization as :mod:`extrapush._pykernels`,
so the two backends agree bit-for-bit.
"""
import numpy as np


def mix(const double[:, ::1] a, const double[:, ::1] z):
    """Return ``a @ z`` summed over columns of ``a`` in ascending order, skipping zeros."""
    cdef Py_ssize_t n = a.shape[0], m = a.shape[1], p = z.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double aij
    out = np.zeros((n, p), dtype=np.float64)
    cdef double[:, ::1] s = out
    with nogil:
        for i in range(n):
            for j in range(m):
                aij = a[i, j]
                if aij == 0.0:
                    continue
                for k in range(p):
                    s[i, k] = s[i, k] + aij * z[j, k]
    return out


def two_step(const double[:, ::1] z1, const double[:, ::1] s1,
             const double[:, ::1] z2, const double[:, ::1] s2,
             const double[:, ::1] g1, const double[:, ::1] g2, double alpha):
    """Return ``z1 + s1 - 0.5*(z2 + s2) - alpha*(g1 - g2)``."""
    cdef Py_ssize_t n = z1.shape[0], p = z1.shape[1]
    cdef Py_ssize_t i, k
    out = np.empty((n, p), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for k in range(p):
                o[i, k] = ((z1[i, k] + s1[i, k]) - 0.5 * (z2[i, k] + s2[i, k])) \
                    - alpha * (g1[i, k] - g2[i, k])
    return out
