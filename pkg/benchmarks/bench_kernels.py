"""Time the numba and numpy backends on the hot loops.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Each kernel
is called once to warm up (compilation is excluded) and the best of N
timings is reported with the speed-up and the max deviation between
backends.
"""

import argparse
import time

import numpy as np

from ndpert import kernels
from ndpert.age import scalar_spec
from ndpert.kernels import numpy_impl


def _cases():
    spec = scalar_spec(0.2, 0.5, 4.0, 1 / 200, 40.0)
    U = spec.family
    Cw = spec.kernel.weighted(spec.da)
    lhs = np.linalg.inv(np.eye(1) - Cw[0])
    n = spec.grid.n_steps
    E = np.eye(1)[None] - spec.dt * 0.2 * np.ones((U.n_steps, 1, 1))
    rng = np.random.default_rng(0)
    T_h = np.array([[0.99, 0.01], [-0.02, 0.98]])
    f = rng.standard_normal((20001, 2, 2))
    small = scalar_spec(0.3, 0.5, 2.0, 0.02, 2.0).family
    f1 = rng.standard_normal((101, 1, 8))
    f2 = rng.standard_normal((101, 101, 1, 8))
    return {
        "renewal_march (N=800, 8000 steps)": lambda impl: kernels.renewal_march(
            U.step_propagators, Cw, lhs, spec.u0, n, impl=impl)[1],
        "upwind_march (N=800, 8000 steps)": lambda impl: kernels.upwind_march(E, Cw, lhs, spec.u0, n, impl=impl)[1],
        "trapezoid_convolve (20000 steps, 2x2)": lambda impl: kernels.trapezoid_convolve(T_h, f, 1e-4, impl=impl),
        "age_diamond (100 x 100, 8 probes)": lambda impl: kernels.age_diamond(
            small.step_propagators, f1, f2, small.da, impl=impl),
        "pair_norms (N=800, 128 starts)": lambda impl: kernels.pair_norms(
            U.step_propagators, np.arange(0, 800, 7), impl=impl),
    }


def _best(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if kernels.numba_impl is None:
        print("numba backend unavailable (disabled or not installed); timing numpy only")
    print(f"{'kernel':40s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speed-up':>9s} {'max |diff|':>11s}")
    for name, fn in _cases().items():
        t_np = _best(lambda: fn(numpy_impl), args.repeat)
        if kernels.numba_impl is None:
            print(f"{name:40s} {t_np:10.4f} {'-':>10s} {'-':>9s} {'-':>11s}")
            continue
        t_nb = _best(lambda: fn(kernels.numba_impl), args.repeat)
        diff = float(np.nanmax(np.abs(np.asarray(fn(numpy_impl)) - np.asarray(fn(kernels.numba_impl)))))
        print(f"{name:40s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:9.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
