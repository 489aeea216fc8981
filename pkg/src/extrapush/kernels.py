"""Backend selection for the mixing kernels.

The compiled extension is used when it was built; setting
``EXTRAPUSH_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("EXTRAPUSH_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        pass


def _c(arr):
    return np.ascontiguousarray(arr, dtype=np.float64)


def mix(a, z, impl=None):
    """Ordered product ``a @ z``; accepts a vector or an ``n x p`` matrix for ``z``."""
    impl = impl or _impl
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        return impl.mix(_c(a), _c(z[:, None]))[:, 0]
    return impl.mix(_c(a), _c(z))


def two_step(z1, s1, z2, s2, g1, g2, alpha, impl=None):
    """Two-step recursion ``z1 + s1 - (z2 + s2)/2 - alpha*(g1 - g2)``.

    With ``s = A z`` this is ``(I + A) z1 - Abar z2 - alpha*(g1 - g2)``.
    """
    impl = impl or _impl
    return impl.two_step(_c(z1), _c(s1), _c(z2), _c(s2), _c(g1), _c(g2), float(alpha))


def available_backends():
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
