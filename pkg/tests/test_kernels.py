import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from extrapush import kernels
from extrapush import graph as G

BACKENDS = kernels.available_backends()
needs_c = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in BACKENDS


def test_fallback_selected_by_env():
    code = "from extrapush import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, EXTRAPUSH_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_mix_matches_matmul(name, net5):
    _, m, _ = net5
    z = np.random.default_rng(0).standard_normal((5, 7))
    out = kernels.mix(m.a, z, impl=BACKENDS[name])
    assert np.allclose(out, m.a @ z, rtol=0, atol=1e-14)
    assert np.allclose(kernels.mix(m.a, z[:, 0], impl=BACKENDS[name]), m.a @ z[:, 0], atol=1e-14)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_two_step_formula(name):
    r = np.random.default_rng(1)
    z1, s1, z2, s2, g1, g2 = r.standard_normal((6, 4, 3))
    out = kernels.two_step(z1, s1, z2, s2, g1, g2, 0.3, impl=BACKENDS[name])
    assert np.allclose(out, z1 + s1 - 0.5 * (z2 + s2) - 0.3 * (g1 - g2), atol=1e-14)


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_subnormal=False)


@needs_c
@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(1, 6), st.integers(0, 2 ** 32 - 1), st.data())
def test_prop_backends_bit_identical_mix(n, p, seed, data):
    g = G.random_strongly_connected(n, np.random.default_rng(seed))
    a = G.build_out_degree_mixing(g).a
    z = data.draw(arrays(np.float64, (n, p), elements=finite))
    assert np.array_equal(kernels.mix(a, z, impl=BACKENDS["cython"]),
                          kernels.mix(a, z, impl=BACKENDS["python"]))


@needs_c
@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 5), finite, st.data())
def test_prop_backends_bit_identical_two_step(n, p, alpha, data):
    parts = [data.draw(arrays(np.float64, (n, p), elements=finite)) for _ in range(6)]
    assert np.array_equal(kernels.two_step(*parts, alpha, impl=BACKENDS["cython"]),
                          kernels.two_step(*parts, alpha, impl=BACKENDS["python"]))
