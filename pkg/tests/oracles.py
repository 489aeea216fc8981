"""Independent reference computations used only by the tests.

Nothing here imports the package's linear algebra: eigenvalues come from a cyclic
Jacobi sweep, stationary vectors from a dense linear solve, gradients from central
differences.
"""
import math

import numpy as np


def jacobi_eigvals(s, tol=1e-15, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    a = np.array(s, dtype=np.float64)
    a = (a + a.T) / 2
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(np.tril(a, -1) ** 2)))
        if off <= tol * max(1.0, float(np.abs(a).max())):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                sn = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q], rot[q, p] = sn, -sn
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def stationary_by_solve(a):
    """phi with (A - I) phi = 0 and sum(phi) = 1, via a bordered linear system."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    sys_ = np.vstack([a - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    return np.linalg.lstsq(sys_, rhs, rcond=None)[0]


def central_difference(f, x, h=None):
    x = np.asarray(x, dtype=np.float64)
    if h is None:
        h = 1e-6 * (1 + np.abs(x).max())
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e.flat[k] = h
        g.flat[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def certificate_constants(a, phi, L_f, S_f, a_param, eta, sigma, alpha):
    """Transcription of the certificate's constant chain for fixed tunables.

    Every eigenvalue comes from :func:`jacobi_eigvals`.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    d = n * np.asarray(phi, dtype=np.float64)
    dinv = np.diag(1 / d)
    abar = (np.eye(n) + a) / 2
    N = dinv @ abar
    M = dinv @ (abar - a)
    ev = jacobi_eigvals
    mmt = ev(M @ M.T)
    mtm = ev(M.T @ M)
    lam_tilde = min(v for v in mtm if v > 1e-10 * mtm[-1])
    c1 = mmt[-1] / lam_tilde
    c2 = ev((M + M.T) / 2)[-1] / lam_tilde
    lam_nnt = ev(N @ N.T)[-1]
    lam_ntn = ev(N.T @ N)[-1]
    c3 = lam_nnt + 3 * c1 * lam_ntn
    nu = ev(N.T + N)[0]
    Lb = L_f / d.min() ** 2
    mb = S_f / d.max() ** 2
    D1 = (mb - eta / 2) ** 2 - 6 * c1 * Lb ** 2
    D2 = Lb ** 4 / (4 * eta ** 2) - 3 * c1 * Lb ** 2 * sigma * (c3 * sigma - nu)
    sq = lambda v: math.sqrt(v) if v >= 0 else math.nan
    mn = lambda u, v: math.nan if math.isnan(u) or math.isnan(v) else min(u, v)
    c4 = (mb - eta / 2) + sq(D1)
    c5 = Lb ** 2 / eta
    c6 = (2 * c4 * c5 + 12 * c1 * Lb ** 2) / c4 ** 2
    c7 = nu ** 2 / (4 * c3)
    c8 = a_param * (c7 + 2) - (2 - c7)
    D3 = nu ** 2 - 4 * c3 * c6
    r = math.sqrt(6 * c1 / (1 - a_param ** 2))
    mu_req = (r + math.sqrt((1 - a_param ** 2) / (6 * c1)) / c8) * Lb
    inner = 1 - 4 * Lb ** 2 / (c8 * mb ** 2)
    den = 3 * c1 * Lb ** 2 * sigma
    half_nsym_max = ev((N + N.T) / 2)[-1]
    t1 = (-1 / sigma + (mb - eta / 2) * alpha - 1.5 * c1 * Lb ** 2 * sigma * alpha ** 2) \
        / (half_nsym_max + 3 * c2 * alpha ** 2 * Lb ** 2)
    t2 = (nu / 2 - c3 * sigma / 2 - Lb ** 2 * alpha / (2 * eta) - 1.5 * c1 * Lb ** 2 * sigma * alpha ** 2) \
        / (3 * c2 * (lam_ntn + alpha ** 2 * Lb ** 2))
    return dict(
        L_bar=Lb, mu_bar=mb, c1=c1, c2=c2, c3=c3, c4=c4, c5=c5, c6=c6, c7=c7, c8=c8,
        Delta1=D1, Delta2=D2, Delta3=D3, mu_required=mu_req, a_lo=(2 - c7) / (2 + c7),
        eta_lo=mb * (1 - sq(inner)), eta_hi=mn(mb * (1 + sq(inner)), 2 * (mb - r * Lb)),
        sigma_lo=(nu - sq(D3)) / (2 * c3), sigma_hi=(nu + sq(D3)) / (2 * c3),
        alpha_lo=(mb - eta / 2 - sq(D1)) / den,
        alpha_hi=mn((mb - eta / 2 + sq(D1)) / den, (-Lb ** 2 / (2 * eta) + sq(D2)) / den),
        delta=mn(t1, t2), lam_max_MMt=mmt[-1], lam_tilde_min_MtM=lam_tilde,
        lam_min_NtN_sum=nu, lam_max_NtN=lam_ntn, lam_max_NNt=lam_nnt, lam_max_Nsym=half_nsym_max)
