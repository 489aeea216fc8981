"""Pure-numpy fallback for :mod:`extrapush._ckernels`.

Rounding matches the compiled kernels exactly: ascending-column accumulation
in :func:`mix` and identical grouping in :func:`two_step`.
"""
import numpy as np


def mix(a, z):
    n, m = a.shape
    s = np.zeros((n, z.shape[1]))
    for j in range(m):
        col = a[:, j]
        rows = np.flatnonzero(col)
        if rows.size:
            s[rows] += col[rows, None] * z[j]
    return s


def two_step(z1, s1, z2, s2, g1, g2, alpha):
    return ((z1 + s1) - 0.5 * (z2 + s2)) - alpha * (g1 - g2)
