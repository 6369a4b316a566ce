"""Loop implementations compiled with numba ``@njit``; mirror ``numpy_impl``."""

import numpy as np
from numba import njit


@njit(cache=True)
def _birth_sum(Cw, v, k0, out):
    N1, d, _ = Cw.shape
    for i in range(d):
        acc = 0.0
        for k in range(k0, N1):
            for j in range(d):
                acc += Cw[k, i, j] * v[k, j]
        out[i] = acc


@njit(cache=True)
def _transport(P, u, new):
    N, d, _ = P.shape
    for k in range(N):
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += P[k, i, j] * u[k, j]
            new[k + 1, i] = acc


@njit(cache=True)
def renewal_march(P, Cw, lhs_inv, u0, n_steps):
    N = P.shape[0]
    d = u0.shape[1]
    field = np.empty((n_steps + 1, N + 1, d))
    births = np.empty((n_steps + 1, d))
    field[0] = u0
    b = np.empty(d)
    _birth_sum(Cw, u0, 0, b)
    births[0] = b
    cohort = b.copy()
    tmp = np.empty(d)
    rhs = np.empty(d)
    for n in range(n_steps):
        u = field[n]
        new = field[n + 1]
        _transport(P, u, new)
        m = n + 1
        if m <= N:
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += P[n, i, j] * cohort[j]
                tmp[i] = acc
            cohort[:] = tmp
        _birth_sum(Cw, new, 1, rhs)
        if m <= N:
            half = 0.5 if m < N else 1.0
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc += Cw[m, i, j] * (cohort[j] - new[m, j])
                rhs[i] += half * acc
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += lhs_inv[i, j] * rhs[j]
            new[0, i] = acc
            births[m, i] = acc
    return field, births


@njit(cache=True)
def upwind_march(E, Cw, lhs_inv, u0, n_steps):
    N = E.shape[0]
    d = u0.shape[1]
    field = np.empty((n_steps + 1, N + 1, d))
    births = np.empty((n_steps + 1, d))
    field[0] = u0
    b = np.empty(d)
    _birth_sum(Cw, u0, 0, b)
    births[0] = b
    rhs = np.empty(d)
    for n in range(n_steps):
        new = field[n + 1]
        _transport(E, field[n], new)
        _birth_sum(Cw, new, 1, rhs)
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += lhs_inv[i, j] * rhs[j]
            new[0, i] = acc
            births[n + 1, i] = acc
    return field, births


@njit(cache=True)
def trapezoid_convolve(T_h, f, h):
    K1, n, m = f.shape
    y = np.zeros(f.shape, dtype=f.dtype)
    half = 0.5 * h
    w = np.empty((n, m), dtype=f.dtype)
    for k in range(K1 - 1):
        for i in range(n):
            for c in range(m):
                w[i, c] = y[k, i, c] + half * f[k, i, c]
        for i in range(n):
            for c in range(m):
                acc = half * f[k + 1, i, c]
                for j in range(n):
                    acc += T_h[i, j] * w[j, c]
                y[k + 1, i, c] = acc
    return y


@njit(cache=True)
def age_diamond(P, f1, f2, h):
    K1, N1, d, m = f2.shape
    y = np.zeros(f2.shape, dtype=f2.dtype)
    z = np.zeros(f2.shape, dtype=f2.dtype)
    half = 0.5 * h
    for n in range(K1 - 1):
        for k in range(N1 - 1):
            for i in range(d):
                for c in range(m):
                    ay = 0.0 * y[n, 0, 0, 0]
                    az = ay
                    for j in range(d):
                        ay += P[k, i, j] * y[n, k, j, c]
                        az += P[k, i, j] * (z[n, k, j, c] + half * f2[n, k, j, c])
                    y[n + 1, k + 1, i, c] = ay
                    z[n + 1, k + 1, i, c] = az
        for i in range(d):
            for c in range(m):
                y[n + 1, 0, i, c] = f1[n + 1, i, c]
                z[n + 1, 0, i, c] = 0.0
        for k in range(N1):
            for i in range(d):
                for c in range(m):
                    z[n + 1, k, i, c] += half * f2[n + 1, k, i, c]
    return y + z


@njit(cache=True)
def howland_shift(P, phi, m):
    N1, d, mc = phi.shape
    out = phi.copy()
    new = np.empty_like(out)
    for _ in range(m):
        new[0] = 0.0
        for k in range(N1 - 1):
            for i in range(d):
                for c in range(mc):
                    acc = 0.0 * out[0, 0, 0]
                    for j in range(d):
                        acc += P[k, i, j] * out[k, j, c]
                    new[k + 1, i, c] = acc
        out[:] = new
    return out


@njit(cache=True)
def howland_resolvent_rec(P, f, h, decay):
    N1, d, m = f.shape
    g = np.zeros((N1, d, m), dtype=np.complex128)
    half = 0.5 * h
    for k in range(N1 - 1):
        for i in range(d):
            for c in range(m):
                acc = 0.0j
                for j in range(d):
                    acc += P[k, i, j] * (g[k, j, c] + half * f[k, j, c])
                g[k + 1, i, c] = decay * acc + half * f[k + 1, i, c]
    return g


@njit(cache=True)
def _norm2(X):
    Xt = np.ascontiguousarray(X.T)
    return np.sqrt(max(np.max(np.linalg.eigvalsh(Xt @ X)), 0.0))


@njit(cache=True)
def pair_norms(P, starts):
    N, d, _ = P.shape
    S = starts.shape[0]
    out = np.full((S, N + 1), np.nan)
    for s in range(S):
        i0 = starts[s]
        X = np.eye(d)
        out[s, i0] = 1.0
        for j in range(i0, N):
            X = P[j] @ X
            out[s, j + 1] = _norm2(X)
    return out


@njit(cache=True)
def propagator_table(P):
    N, d, _ = P.shape
    table = np.zeros((N + 1, N + 1, d, d))
    for i in range(N + 1):
        for r in range(d):
            table[i, i, r, r] = 1.0
    for j in range(N):
        for i in range(j + 1):
            table[j + 1, i] = P[j] @ table[j, i]
    return table
