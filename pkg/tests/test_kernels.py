"""The numba and numpy backends must agree on every kernel."""

import os
import subprocess
import sys

import numpy as np
import pytest

from ndpert import age, kernels
from ndpert.kernels import numpy_impl

needs_numba = pytest.mark.skipif(kernels.numba_impl is None, reason="numba backend unavailable")
BACKENDS = [numpy_impl] + ([kernels.numba_impl] if kernels.numba_impl is not None else [])


def _propagators(rng, N, d, h=0.05):
    A = rng.standard_normal((N, d, d)) * 0.5
    return np.eye(d)[None] + h * A


def _pair(fn):
    a = fn(numpy_impl)
    b = fn(kernels.numba_impl)
    return a, b


@needs_numba
@pytest.mark.parametrize("d", [1, 2, 3])
def test_renewal_and_upwind_parity(rng, d):
    N, n = 40, 90
    P = _propagators(rng, N, d)
    Cw = np.abs(rng.standard_normal((N + 1, d, d))) * 0.02
    lhs = np.linalg.inv(np.eye(d) - Cw[0])
    u0 = np.abs(rng.standard_normal((N + 1, d)))
    for name in ("renewal_march", "upwind_march"):
        fn = getattr(kernels, name)
        (fa, ba), (fb, bb) = _pair(lambda impl: fn(P, Cw, lhs, u0, n, impl=impl))
        assert np.allclose(fa, fb, rtol=1e-12, atol=1e-13)
        assert np.allclose(ba, bb, rtol=1e-12, atol=1e-13)


@needs_numba
@pytest.mark.parametrize("dtype", [float, complex])
def test_trapezoid_convolve_parity(rng, dtype):
    T = rng.standard_normal((2, 2)).astype(dtype) * 0.1 + np.eye(2)
    f = rng.standard_normal((200, 2, 3)).astype(dtype)
    a, b = _pair(lambda impl: kernels.trapezoid_convolve(T, f, 0.01, impl=impl))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


@needs_numba
def test_age_diamond_parity(rng):
    N, d, m = 30, 2, 4
    P = _propagators(rng, N, d)
    f1 = rng.standard_normal((50, d, m))
    f2 = rng.standard_normal((50, N + 1, d, m))
    a, b = _pair(lambda impl: kernels.age_diamond(P, f1, f2, 0.05, impl=impl))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


@needs_numba
def test_transport_kernel_parity(rng):
    N, d = 25, 2
    P = _propagators(rng, N, d)
    phi = rng.standard_normal((N + 1, d, 3))
    for m in (0, 7, N):
        a, b = _pair(lambda impl: kernels.howland_shift(P, phi, m, impl=impl))
        assert np.allclose(a, b, rtol=1e-13, atol=1e-15)
    a, b = _pair(lambda impl: kernels.howland_resolvent_rec(P, phi, 0.05, np.exp(-0.05 * (1 + 2j)), impl=impl))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
    a, b = _pair(lambda impl: kernels.propagator_table(P, impl=impl))
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
    starts = np.array([0, 3, 10])
    a, b = _pair(lambda impl: kernels.pair_norms(P, starts, impl=impl))
    assert np.array_equal(np.isnan(a), np.isnan(b))
    assert np.allclose(np.nan_to_num(a), np.nan_to_num(b), rtol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_transport_shift_matches_direct_product(rng, impl):
    N, d = 10, 2
    P = _propagators(rng, N, d)
    phi = rng.standard_normal((N + 1, d, 1))
    out = kernels.howland_shift(P, phi, 3, impl=impl)
    k = 7
    expect = P[6] @ P[5] @ P[4] @ phi[4]
    assert np.allclose(out[k], expect)
    assert not np.any(out[:3])


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_solvers_run_on_each_backend(impl):
    spec = age.scalar_spec(0.2, 0.5, 4.0, 0.05, 8.0)
    res = age.solve_renewal(spec, impl=impl)
    ref = age.solve_renewal(spec, impl=numpy_impl)
    assert np.allclose(res.field, ref.field, rtol=1e-12)


def test_environment_flag_forces_numpy_backend():
    env = dict(os.environ, NDPERT_DISABLE_NUMBA="1")
    code = ("import ndpert.kernels as k, ndpert.age as a; print(k.BACKEND); "
            "r = a.solve_renewal(a.scalar_spec(0.2, 0.5, 4.0, 0.05, 2.0)); print(r.metadata['backend'])")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "numpy"]
