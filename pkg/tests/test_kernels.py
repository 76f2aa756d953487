import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supercm import _accel, kernels

from conftest import brute_cm_terms


def _instance(rng, n, k, d, alpha_hi=1.0):
    x = rng.normal(size=(n, d))
    gamma = kernels.softmax_rows_numpy(rng.normal(size=(n, k)) * 2)
    mu = rng.normal(size=(k, d))
    alpha = rng.uniform(1.0, alpha_hi, size=k)
    return x, gamma, mu, alpha


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 6), k=st.integers(1, 4), d=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_compiled_and_numpy_cm_kernels_agree(n, k, d, seed):
    x, gamma, mu, alpha = _instance(np.random.default_rng(seed), n, k, d, alpha_hi=3.0)
    a = kernels.cm_terms_grads_numba(x, gamma, mu, alpha)
    b = kernels.cm_terms_grads_numpy(x, gamma, mu, alpha)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-13)


def test_cm_kernel_terms_match_loop_oracle(rng):
    for _ in range(30):
        x, gamma, mu, alpha = _instance(rng, 5, 3, 4, alpha_hi=2.0)
        got = kernels.cm_terms_grads(x, gamma, mu, alpha)[:4]
        ref = brute_cm_terms(x.tolist(), gamma.tolist(), mu.tolist(), alpha.tolist())
        np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-12)


def test_compiled_softmax_matches_numpy(rng):
    z = rng.normal(size=(50, 4)) * 30
    np.testing.assert_allclose(kernels.softmax_rows_numba(z), kernels.softmax_rows_numpy(z), rtol=1e-14, atol=1e-300)


def test_dirichlet_gradient_zero_when_clamped():
    x = np.zeros((3, 2))
    gamma = np.array([[1.0, 0.0]] * 3)
    mu = np.zeros((2, 2))
    for fn in (kernels.cm_terms_grads_numba, kernels.cm_terms_grads_numpy):
        *_, dirichlet, gx, gg = fn(x, gamma, mu, np.array([2.0, 2.0]))
        assert np.all(np.isfinite(gg)) and gg[0, 1] == 0.0
        assert dirichlet == pytest.approx(-np.log(1e-12) / 3)


def test_float32_inputs(rng):
    x, gamma, mu, alpha = _instance(rng, 4, 2, 3)
    out = kernels.cm_terms_grads(x.astype(np.float32), gamma.astype(np.float32), mu.astype(np.float32), alpha)
    ref = kernels.cm_terms_grads_numpy(x, gamma, mu, alpha)
    for u, v in zip(out, ref):
        np.testing.assert_allclose(u, v, rtol=1e-4, atol=1e-5)


def test_backend_flag_selects_numpy_fallback():
    code = (
        "from supercm import _accel, kernels;"
        "print(_accel.backend_name(), kernels.cm_terms_grads is kernels.cm_terms_grads_numpy)"
    )
    env = dict(os.environ, SUPERCM_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "True"]


def test_default_backend_reported():
    assert _accel.backend_name() in ("numba", "numpy")
    expect = kernels.cm_terms_grads_numba if _accel.NUMBA_ENABLED else kernels.cm_terms_grads_numpy
    assert kernels.cm_terms_grads is expect
