"""Backend selection for the hot inner loops.

The numba backend is used when numba imports cleanly; set
``NDPERT_DISABLE_NUMBA=1`` before import to force the numpy fallback.
Both backends expose the same functions and are tested against each other.
"""

import os

import numpy as np

from . import numpy_impl

_NAMES = (
    "renewal_march",
    "upwind_march",
    "trapezoid_convolve",
    "age_diamond",
    "howland_shift",
    "howland_resolvent_rec",
    "pair_norms",
    "propagator_table",
)


def _load_numba():
    if os.environ.get("NDPERT_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes"):
        return None
    try:
        from . import numba_impl
    except ImportError:
        return None
    return numba_impl


numba_impl = _load_numba()
BACKEND = "numba" if numba_impl is not None else "numpy"
_impl = numba_impl if numba_impl is not None else numpy_impl


def _c(x, dtype=None):
    return np.ascontiguousarray(x, dtype=dtype)


def _cast_like(*arrays):
    dt = np.result_type(*arrays)
    if dt.kind not in "fc":
        dt = np.float64
    return dt


def renewal_march(P, Cw, lhs_inv, u0, n_steps, impl=None):
    impl = impl or _impl
    return impl.renewal_march(_c(P, float), _c(Cw, float), _c(lhs_inv, float), _c(u0, float), int(n_steps))


def upwind_march(E, Cw, lhs_inv, u0, n_steps, impl=None):
    impl = impl or _impl
    return impl.upwind_march(_c(E, float), _c(Cw, float), _c(lhs_inv, float), _c(u0, float), int(n_steps))


def trapezoid_convolve(T_h, f, h, impl=None):
    impl = impl or _impl
    dt = _cast_like(T_h, f)
    return impl.trapezoid_convolve(_c(T_h, dt), _c(f, dt), float(h))


def age_diamond(P, f1, f2, h, impl=None):
    impl = impl or _impl
    dt = _cast_like(P, f1, f2)
    return impl.age_diamond(_c(P, dt), _c(f1, dt), _c(f2, dt), float(h))


def howland_shift(P, phi, m, impl=None):
    impl = impl or _impl
    dt = _cast_like(P, phi)
    return impl.howland_shift(_c(P, dt), _c(phi, dt), int(m))


def howland_resolvent_rec(P, f, h, decay, impl=None):
    impl = impl or _impl
    return impl.howland_resolvent_rec(_c(P, np.complex128), _c(f, np.complex128), float(h), complex(decay))


def pair_norms(P, starts, impl=None):
    impl = impl or _impl
    return impl.pair_norms(_c(P, float), _c(starts, np.int64))


def propagator_table(P, impl=None):
    impl = impl or _impl
    return impl.propagator_table(_c(P, float))
