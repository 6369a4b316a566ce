"""Vectorised numpy implementations of the inner loops.

Each function loops only over the sequential axis (time or age) and
vectorises everything else. Signatures and results match ``numba_impl``.
"""

import numpy as np


def renewal_march(P, Cw, lhs_inv, u0, n_steps):
    """March the age profile along characteristics and close the birth law.

    ``P[k]`` maps age node k to k+1 over one step, ``Cw[k]`` is the
    trapezoid-weighted fertility at node k and ``lhs_inv`` inverts
    ``I - Cw[0]``. The node whose age equals the current time carries two
    one-sided values; the birth integral is split there.
    """
    N = P.shape[0]
    d = u0.shape[1]
    field = np.empty((n_steps + 1, N + 1, d))
    births = np.empty((n_steps + 1, d))
    u = u0.copy()
    field[0] = u
    b = np.einsum("kij,kj->i", Cw, u)
    births[0] = b
    cohort = b.copy()
    for n in range(n_steps):
        new = np.empty_like(u)
        new[1:] = np.einsum("kij,kj->ki", P, u[:-1])
        m = n + 1
        if m <= N:
            cohort = P[n] @ cohort
        rhs = np.einsum("kij,kj->i", Cw[1:], new[1:])
        if m < N:
            rhs += 0.5 * (Cw[m] @ (cohort - new[m]))
        elif m == N:
            rhs += Cw[N] @ (cohort - new[N])
        b = lhs_inv @ rhs
        new[0] = b
        u = new
        field[m] = u
        births[m] = b
    return field, births


def upwind_march(E, Cw, lhs_inv, u0, n_steps):
    """First-order upwind march at CFL one; ``E[k] = I + dt A(a_k)``."""
    N = E.shape[0]
    d = u0.shape[1]
    field = np.empty((n_steps + 1, N + 1, d))
    births = np.empty((n_steps + 1, d))
    u = u0.copy()
    field[0] = u
    births[0] = np.einsum("kij,kj->i", Cw, u)
    for n in range(n_steps):
        new = np.empty_like(u)
        new[1:] = np.einsum("kij,kj->ki", E, u[:-1])
        rhs = np.einsum("kij,kj->i", Cw[1:], new[1:])
        new[0] = lhs_inv @ rhs
        u = new
        field[n + 1] = u
        births[n + 1] = new[0]
    return field, births


def trapezoid_convolve(T_h, f, h):
    """Composite trapezoid for ``y(t_k) = int_0^{t_k} T(t_k - s) f(s) ds``.

    Uses ``T(t_k - t_j) = T_h^(k-j)``, so the recursion reproduces the
    composite rule exactly.
    """
    y = np.zeros(f.shape, dtype=np.result_type(T_h, f))
    half = 0.5 * h
    for k in range(f.shape[0] - 1):
        y[k + 1] = T_h @ (y[k] + half * f[k]) + half * f[k + 1]
    return y


def age_diamond(P, f1, f2, h):
    """Boundary transport of ``f1`` plus trapezoid Howland convolution of ``f2``.

    Output node k at time step n holds ``U(a_k, 0) f1(t_n - a_k)`` for
    ``a_k < t_n`` plus the convolution term.
    """
    K = f2.shape[0] - 1
    y = np.zeros(f2.shape, dtype=np.result_type(P, f1, f2))
    z = np.zeros_like(y)
    half = 0.5 * h
    for n in range(K):
        y[n + 1, 1:] = np.einsum("kij,kjm->kim", P, y[n, :-1])
        y[n + 1, 0] = f1[n + 1]
        w = z[n] + half * f2[n]
        z[n + 1, 1:] = np.einsum("kij,kjm->kim", P, w[:-1])
        z[n + 1, 0] = 0.0
        z[n + 1] += half * f2[n + 1]
    return y + z


def howland_shift(P, phi, m):
    """Apply the Howland semigroup ``m`` whole steps to ``phi``."""
    out = phi.copy()
    for _ in range(m):
        new = np.zeros_like(out)
        new[1:] = np.einsum("kij,kjm->kim", P, out[:-1])
        out = new
    return out


def howland_resolvent_rec(P, f, h, decay):
    """Trapezoid ``g(a_k) = int_0^{a_k} e^{-lam(a_k-s)} U(a_k,s) f(s) ds``; ``decay = e^{-lam h}``."""
    g = np.zeros(f.shape, dtype=np.complex128)
    half = 0.5 * h
    for k in range(f.shape[0] - 1):
        g[k + 1] = decay * (P[k] @ (g[k] + half * f[k])) + half * f[k + 1]
    return g


def _spectral_norms(X):
    return np.linalg.norm(X, ord=2, axis=(-2, -1))


def pair_norms(P, starts):
    """``out[s, j] = ||U(a_j, a_starts[s])||_2`` for ``j >= starts[s]``, NaN below."""
    N, d, _ = P.shape
    S = starts.shape[0]
    out = np.full((S, N + 1), np.nan)
    X = np.broadcast_to(np.eye(d), (S, d, d)).copy()
    out[np.arange(S), starts] = 1.0
    for j in range(N):
        active = starts <= j
        if not active.any():
            continue
        X[active] = P[j] @ X[active]
        out[active, j + 1] = _spectral_norms(X[active])
    return out


def propagator_table(P):
    """``table[j, i] = U(a_j, a_i)`` for ``j >= i``; zero above the diagonal."""
    N, d, _ = P.shape
    table = np.zeros((N + 1, N + 1, d, d))
    eye = np.eye(d)
    table[0, 0] = eye
    for j in range(N):
        table[j + 1, : j + 1] = P[j] @ table[j, : j + 1]
        table[j + 1, j + 1] = eye
    return table
