"""Semigroups, evolution families and integrated semigroups on finite grids.

Everything here is immutable after construction. Linear maps are plain
numpy arrays; age profiles are arrays whose leading axis runs over the age
nodes ``a_k = k * da``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from . import kernels
from .errors import GridAlignmentWarning, InvalidInput, ResolventDomainError

ALIGN_TOL = 1e-9
QUAD_TOL = 1e-8
H_FLOOR = 1e-5
TAIL_REL = 1e-12


def as_linear_map(x, name="map", allow_complex=False) -> np.ndarray:
    """Validate and return ``x`` as a finite square matrix (scalars become 1x1)."""
    a = np.asarray(x)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidInput(f"{name} must be a square matrix, got shape {a.shape}")
    if np.iscomplexobj(a) and not allow_complex:
        if np.any(a.imag != 0):
            raise InvalidInput(f"{name} must be real")
        a = a.real
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} has non-finite entries")
    return a.astype(np.complex128 if np.iscomplexobj(a) else np.float64)


def trapezoid_weights(n_intervals: int, h: float) -> np.ndarray:
    w = np.full(n_intervals + 1, h)
    w[0] = w[-1] = 0.5 * h
    if n_intervals == 0:
        w[:] = 0.0
    return w


def lp_norm(profile, da: float, p: float) -> np.ndarray:
    """Trapezoid L^p norm over the age axis.

    ``profile`` has shape ``(..., N+1, d)``; the pointwise norm in E is
    Euclidean.
    """
    u = np.asarray(profile)
    pointwise = np.linalg.norm(u, axis=-1)
    w = trapezoid_weights(u.shape[-2] - 1, da)
    if math.isinf(p):
        return pointwise.max(axis=-1)
    return (np.tensordot(pointwise**p, w, axes=([-1], [0]))) ** (1.0 / p)


def _is_multiple(x: float, h: float) -> tuple[bool, int]:
    q = x / h
    k = int(round(q))
    return abs(q - k) <= ALIGN_TOL * max(1.0, abs(q)), k


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_0 < ... < t_N = t_end`` with step ``dt``."""

    t_end: float
    dt: float

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidInput(f"dt must be positive, got {self.dt}")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise InvalidInput(f"t_end must be finite and nonnegative, got {self.t_end}")
        ok, _ = _is_multiple(self.t_end, self.dt)
        if not ok:
            raise InvalidInput(f"t_end={self.t_end} is not a multiple of dt={self.dt}")

    @classmethod
    def from_steps(cls, t_end: float, n_steps: int) -> "TimeGrid":
        return cls(t_end=float(t_end), dt=float(t_end) / int(n_steps))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def index(self, t: float) -> int:
        ok, k = _is_multiple(t, self.dt)
        if not ok or k < 0 or k > self.n_steps:
            raise InvalidInput(f"t={t} is not a node of the grid")
        return k


def matrix_semigroup(generator, t: float) -> np.ndarray:
    """``exp(t A)`` by scaling-and-squaring Pade (scipy)."""
    A = as_linear_map(generator, "generator", allow_complex=True)
    if not (math.isfinite(t) and t >= 0):
        raise InvalidInput(f"t must be finite and nonnegative, got {t}")
    return expm(t * A)


def log_norm(A: np.ndarray) -> float:
    """Euclidean logarithmic norm; ``||exp(tA)|| <= exp(t * log_norm(A))``."""
    sym = 0.5 * (A + A.conj().T)
    return float(np.max(np.linalg.eigvalsh(sym)))


def uniform_powers(E: np.ndarray, count: int, block: int = 256) -> np.ndarray:
    """``E^0, ..., E^{count-1}`` stacked, built blockwise with batched products."""
    n = E.shape[0]
    head = np.empty((min(block, count), n, n), dtype=E.dtype)
    head[0] = np.eye(n)
    for k in range(1, head.shape[0]):
        head[k] = E @ head[k - 1]
    if count <= block:
        return head
    step = E @ head[-1]
    out = np.empty((count, n, n), dtype=E.dtype)
    out[:block] = head
    lead = step
    for s in range(block, count, block):
        m = min(block, count - s)
        out[s : s + m] = head[:m] @ lead
        lead = step @ lead
    return out


@dataclass(frozen=True, eq=False)
class SemigroupPath:
    """A family ``t -> T(t)`` with ``||T(t)|| <= M exp(omega t)``."""

    eval: Callable[[float], np.ndarray]
    M: float
    omega: float
    dim: int
    generator: Optional[np.ndarray] = None
    grid: Optional[TimeGrid] = None
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)

    @classmethod
    def from_generator(cls, generator) -> "SemigroupPath":
        A = as_linear_map(generator, "generator")
        A.setflags(write=False)
        return cls(eval=lambda t: matrix_semigroup(A, t), M=1.0, omega=log_norm(A), dim=A.shape[0], generator=A)

    @classmethod
    def from_samples(cls, grid: TimeGrid, samples, M=None, omega=None) -> "SemigroupPath":
        """Grid-backed path; values between nodes are linearly interpolated."""
        vals = np.array(samples, dtype=float)
        if vals.shape[0] != grid.n_steps + 1 or vals.ndim != 3:
            raise InvalidInput("samples must have shape (n_steps + 1, n, m)")
        vals.setflags(write=False)
        if M is None or omega is None:
            M, omega = _empirical_bound(grid.nodes, np.linalg.norm(vals, ord=2, axis=(1, 2)))

        def _eval(t):
            if not (0 <= t <= grid.t_end * (1 + ALIGN_TOL)):
                raise InvalidInput(f"t={t} outside [0, {grid.t_end}]")
            q = min(t / grid.dt, grid.n_steps)
            k = min(int(math.floor(q)), grid.n_steps - 1) if grid.n_steps else 0
            th = q - k
            if th <= ALIGN_TOL or grid.n_steps == 0:
                return vals[k].copy()
            return (1 - th) * vals[k] + th * vals[k + 1]

        return cls(eval=_eval, M=float(M), omega=float(omega), dim=vals.shape[1], grid=grid, samples=vals)

    def sample(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if self.generator is not None and times.size > 2:
            steps = np.diff(times)
            if np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                Th = matrix_semigroup(self.generator, (times[-1] - times[0]) / (times.size - 1))
                return uniform_powers(Th, times.size) @ matrix_semigroup(self.generator, times[0])
        return np.stack([self.eval(t) for t in times])

    def law_residual(self, ts, ss) -> float:
        """``max ||T(t+s) - T(t)T(s)||`` over the lattice ``ts x ss``."""
        worst = 0.0
        for t in ts:
            Tt = self.eval(t)
            for s in ss:
                worst = max(worst, float(np.linalg.norm(self.eval(t + s) - Tt @ self.eval(s), 2)))
        return worst


def _empirical_bound(times: np.ndarray, norms: np.ndarray) -> tuple[float, float]:
    pos = norms > 0
    half = times >= 0.5 * times[-1]
    sel = pos & half & (times > 0)
    if sel.sum() >= 2:
        omega = float(np.polyfit(times[sel], np.log(norms[sel]), 1)[0])
    else:
        omega = 0.0
    M = max(1.0, float(np.max(norms * np.exp(-omega * times))))
    return M, omega


# --------------------------------------------------------------------------
# evolution families


def _sample_coeffs(coeffs, points: np.ndarray, dim: Optional[int] = None) -> np.ndarray:
    if callable(coeffs):
        vals = [np.atleast_2d(np.asarray(coeffs(float(a)), dtype=float)) for a in points]
        out = np.stack(vals)
    else:
        A = as_linear_map(coeffs, "coefficients")
        out = np.broadcast_to(A, (points.size,) + A.shape).copy()
    if out.ndim != 3 or out.shape[1] != out.shape[2]:
        raise InvalidInput("coefficients must be square matrices")
    if not np.all(np.isfinite(out)) or np.max(np.abs(out)) > 1e12:
        raise InvalidInput("coefficient samples are unbounded or non-finite")
    return out


def _rk4_step_matrices(A0, Ah, A1, h):
    """Batched classical RK4 step matrices for ``dU/da = A(a) U``."""
    d = A0.shape[-1]
    eye = np.eye(d)
    K1 = A0
    K2 = Ah @ (eye + 0.5 * h * K1)
    K3 = Ah @ (eye + 0.5 * h * K2)
    K4 = A1 @ (eye + h * K3)
    return eye + (h / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)


class _ConstantCoeffs:
    """``a -> A`` for a fixed matrix; propagators are exact exponentials."""

    def __init__(self, A: np.ndarray):
        self.A = A

    def __call__(self, a):
        return self.A


def _propagate_fraction(coeffs, s: float, a: float, substeps: int = 4) -> np.ndarray:
    if isinstance(coeffs, _ConstantCoeffs):
        return expm((a - s) * coeffs.A)
    h = (a - s) / substeps
    pts = s + 0.5 * h * np.arange(2 * substeps + 1)
    S = _sample_coeffs(coeffs, pts)
    U = np.eye(S.shape[1])
    for j in range(substeps):
        U = _rk4_step_matrices(S[2 * j], S[2 * j + 1], S[2 * j + 2], h) @ U
    return U


@dataclass(frozen=True, eq=False)
class EvolutionFamily:
    """Grid-backed evolution family ``U(a, s)``, ``0 <= s <= a <= c``.

    Only the one-step propagators ``U(a_{k+1}, a_k)`` are stored; other
    pairs are composed on demand and never obtained by inversion.
    """

    step_propagators: np.ndarray = field(repr=False)
    da: float
    C: float
    omega: float
    coeffs: Optional[Callable] = field(default=None, repr=False)
    c_is_truncated: bool = False

    @property
    def n_steps(self) -> int:
        return self.step_propagators.shape[0]

    @property
    def dim(self) -> int:
        return self.step_propagators.shape[1]

    @property
    def c(self) -> float:
        return self.n_steps * self.da

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.da

    @cached_property
    def from_origin(self) -> np.ndarray:
        """``U(a_k, 0)`` for every node, shape ``(N+1, d, d)``."""
        out = np.empty((self.n_steps + 1, self.dim, self.dim))
        out[0] = np.eye(self.dim)
        for k in range(self.n_steps):
            out[k + 1] = self.step_propagators[k] @ out[k]
        out.setflags(write=False)
        return out

    @cached_property
    def table(self) -> np.ndarray:
        """All grid pairs, ``table[j, i] = U(a_j, a_i)`` (zero for ``j < i``)."""
        t = kernels.propagator_table(self.step_propagators)
        t.setflags(write=False)
        return t

    def eval(self, a: float, s: float) -> np.ndarray:
        c = self.c
        if not (0 <= s <= a + ALIGN_TOL * self.da) or a > c * (1 + ALIGN_TOL) + ALIGN_TOL:
            raise InvalidInput(f"need 0 <= s <= a <= c, got a={a}, s={s}, c={c}")
        a = min(max(a, s), c)
        ok_s, i = _is_multiple(s, self.da)
        ok_a, j = _is_multiple(a, self.da)
        if ok_s and ok_a:
            return self._compose(i, j)
        if self.coeffs is None:
            raise InvalidInput("off-grid evaluation needs the coefficient function")
        i_up = i if ok_s else int(math.floor(s / self.da)) + 1
        j_dn = j if ok_a else int(math.floor(a / self.da))
        if i_up > j_dn:
            return _propagate_fraction(self.coeffs, s, a)
        left = np.eye(self.dim) if ok_s else _propagate_fraction(self.coeffs, s, i_up * self.da)
        right = np.eye(self.dim) if ok_a else _propagate_fraction(self.coeffs, j_dn * self.da, a)
        return right @ self._compose(i_up, j_dn) @ left

    __call__ = eval

    def _compose(self, i: int, j: int) -> np.ndarray:
        U = np.eye(self.dim)
        for k in range(i, j):
            U = self.step_propagators[k] @ U
        return U

    def cocycle_residual(self, triples) -> float:
        """``max ||U(a,s) - U(a,tau) U(tau,s)||`` over ``(s, tau, a)`` triples."""
        return max(
            float(np.linalg.norm(self.eval(a, s) - self.eval(a, tau) @ self.eval(tau, s), 2))
            for s, tau, a in triples
        )


def _growth_metadata(P: np.ndarray, da: float, min_lag: float = 0.5, max_starts: int = 128):
    N = P.shape[0]
    if N == 0:
        return 1.0, 0.0
    stride = max(1, int(math.ceil(N / max_starts)))
    starts = np.arange(0, N, stride)
    norms = kernels.pair_norms(P, starts)
    lags = (np.arange(N + 1)[None, :] - starts[:, None]) * da
    lag_min = min(min_lag, N * da)
    sel = (lags >= lag_min - ALIGN_TOL * da) & np.isfinite(norms)
    with np.errstate(divide="ignore"):
        rates = np.log(np.maximum(norms[sel], 1e-300)) / lags[sel]
    omega = float(np.max(rates))
    fin = np.isfinite(norms) & (lags >= 0)
    C = max(1.0, float(np.max(norms[fin] * np.exp(-omega * lags[fin]))))
    return C, omega


def build_evolution_family(coeffs, c: float, da: float, *, c_is_truncated: bool = False) -> EvolutionFamily:
    """Propagate ``dU/da = A(a) U`` with RK4 at substep ``da/4``.

    ``coeffs`` is a callable ``a -> A(a)`` or a constant matrix. A constant
    matrix gets exact steps ``expm(da A)`` instead, so the cocycle law holds
    to rounding even off the grid.
    """
    if not (da > 0 and math.isfinite(da)):
        raise InvalidInput(f"da must be positive, got {da}")
    if not (c > 0 and math.isfinite(c)):
        raise InvalidInput(f"c must be finite and positive (truncate infinite horizons), got {c}")
    ok, N = _is_multiple(c, da)
    if not ok:
        raise InvalidInput(f"c={c} is not a multiple of da={da}")
    if not callable(coeffs):
        coeffs = _ConstantCoeffs(as_linear_map(coeffs))
        P = np.broadcast_to(expm(da * coeffs.A), (N,) + coeffs.A.shape).copy()
    else:
        h = da / 4
        pts = np.arange(8 * N + 1) * (da / 8)
        S = _sample_coeffs(coeffs, pts)
        P = np.broadcast_to(np.eye(S.shape[1]), (N,) + S.shape[1:]).copy()
        for j in range(4):
            i0 = 2 * j
            M = _rk4_step_matrices(S[i0:-1:8][:N], S[i0 + 1 :: 8][:N], S[i0 + 2 :: 8][:N], h)
            P = M @ P
    P.setflags(write=False)
    Cb, omega = _growth_metadata(P, da)
    return EvolutionFamily(
        step_propagators=P,
        da=float(da),
        C=Cb,
        omega=omega,
        coeffs=coeffs,
        c_is_truncated=c_is_truncated,
    )


def _as_profile(phi, N1: int, d: int):
    """Return ``(array (N+1, d, m), restore)`` for 1-, 2- or 3-d profiles."""
    x = np.asarray(phi)
    orig = x.shape
    if x.ndim == 1:
        if d != 1 or x.shape[0] != N1:
            raise InvalidInput(f"profile shape {orig} incompatible with ({N1}, {d})")
        x = x.reshape(N1, 1, 1)
    elif x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[0] != N1 or x.shape[1] != d:
        raise InvalidInput(f"profile shape {orig} incompatible with ({N1}, {d})")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("profile has non-finite values")
    return x, (lambda y: y.reshape(y.shape[:1] + orig[1:]) if len(orig) < 3 else y)


def howland_apply(U: EvolutionFamily, phi, t: float) -> np.ndarray:
    """``(T0(t) phi)(a) = U(a, a-t) phi(a-t)`` for ``a >= t``, zero below.

    Exact along characteristics when ``t`` is a multiple of ``da``;
    otherwise ``phi`` is linearly interpolated in age and a
    ``GridAlignmentWarning`` is emitted.
    """
    if not (t >= 0 and math.isfinite(t)):
        raise InvalidInput(f"t must be nonnegative, got {t}")
    x, restore = _as_profile(phi, U.n_steps + 1, U.dim)
    ok, m = _is_multiple(t, U.da)
    if ok:
        if m > U.n_steps:
            return restore(np.zeros_like(x, dtype=float))
        return restore(kernels.howland_shift(U.step_propagators, x, m))
    warnings.warn(f"t={t} is not a multiple of da={U.da}; interpolating in age", GridAlignmentWarning, stacklevel=2)
    m = int(math.floor(t / U.da))
    tau = t - m * U.da
    ages = U.ages
    frac = np.zeros_like(x, dtype=float)
    for k in range(1, U.n_steps + 1):
        src = ages[k] - tau
        th = (src - ages[k - 1]) / U.da
        val = (1 - th) * x[k - 1] + th * x[k]
        frac[k] = _propagate_fraction(U.coeffs, src, ages[k], substeps=1) @ val
    if m > U.n_steps:
        return restore(np.zeros_like(frac))
    return restore(kernels.howland_shift(U.step_propagators, frac, m))


def howland_resolvent(U: EvolutionFamily, lam: complex, f) -> np.ndarray:
    """``a -> int_0^a exp(-lam (a - s)) U(a, s) f(s) ds`` by composite trapezoid."""
    lam = complex(lam)
    if not lam.real > U.omega:
        raise ResolventDomainError(lam, U.omega, "Howland resolvent")
    x, restore = _as_profile(f, U.n_steps + 1, U.dim)
    g = kernels.howland_resolvent_rec(U.step_propagators, x, U.da, np.exp(-lam * U.da))
    if lam.imag == 0 and not np.iscomplexobj(x):
        g = g.real
    return restore(g)


# --------------------------------------------------------------------------
# integrated semigroups and Laplace transforms


@dataclass(frozen=True, eq=False)
class IntegratedSemigroupPath:
    """``t -> S(t)`` with ``||S(t)|| <= delta(t)`` and ``||S(t)|| <= M e^{omega t}``.

    ``breakpoint_step`` marks paths that jump at its multiples (age models
    on a grid); quadratures then integrate panel by panel.
    """

    eval: Callable[[float], np.ndarray]
    delta: Callable[[float], float]
    M: float
    omega: float
    size: int
    breakpoint_step: Optional[float] = None
    sampler: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __call__(self, t: float) -> np.ndarray:
        return self.eval(t)

    def sample(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        if self.sampler is not None:
            return self.sampler(times)
        return np.stack([self.eval(t) for t in times])

    @classmethod
    def from_generator(cls, generator) -> "IntegratedSemigroupPath":
        """``S(t) = int_0^t exp(sA) ds`` via the augmented exponential."""
        A = as_linear_map(generator, "generator")
        n = A.shape[0]
        aug = np.zeros((2 * n, 2 * n))
        aug[:n, :n] = A
        aug[:n, n:] = np.eye(n)
        w = log_norm(A)

        def _eval(t):
            if t < 0:
                raise InvalidInput("t must be nonnegative")
            return expm(t * aug)[:n, n:]

        def _sampler(times):
            steps = np.diff(times)
            if times.size < 3 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                return np.stack([_eval(t) for t in times])
            h = (times[-1] - times[0]) / (times.size - 1)
            P = uniform_powers(expm(h * aug), times.size) @ expm(times[0] * aug)
            return P[:, :n, n:].copy()

        def _delta(t):
            return t if abs(w) < 1e-14 else (math.exp(w * t) - 1.0) / w

        if w < 0:
            M, om = 1.0 / abs(w), 0.0
        else:
            eps = 1e-3
            M, om = 1.0 / (math.e * eps), w + eps
        return cls(eval=_eval, delta=_delta, M=M, omega=om, size=n, sampler=_sampler)

    def composition_residual(self, t: float, s: float, h: float = 1e-3) -> float:
        """``||S(t)S(s) - int_0^t (S(r+s) - S(r)) dr||`` (trapezoid at step ``h``)."""
        n = max(1, int(round(t / h)))
        r = np.linspace(0.0, t, n + 1)
        vals = self.sample(r + s) - self.sample(r)
        integral = np.tensordot(trapezoid_weights(n, t / n), vals, axes=(0, 0))
        return float(np.linalg.norm(self.eval(t) @ self.eval(s) - integral, 2))

    def is_nondegenerate(self, times, probes=None, tol=1e-12) -> bool:
        """True when no probe vector is annihilated by every sampled ``S(t)``."""
        probes = np.eye(self.size) if probes is None else np.asarray(probes)
        stacked = np.concatenate([self.eval(t) @ probes for t in times], axis=0)
        return bool(np.all(np.linalg.norm(stacked, axis=0) > tol))


def _refined_trapezoid(sample_fn, a: float, b: float, weight_fn, tol: float, h_floor: float, n0: int = 16,
                       panel: Optional[float] = None):
    """Composite trapezoid of ``weight(t) * F(t)`` on ``[a, b]``, halving until converged.

    With ``panel`` set the rule is applied panel by panel and endpoints are
    nudged inward so one-sided values are used at the jumps.
    """
    prev = None
    n = n0
    while True:
        if panel is None:
            t = np.linspace(a, b, n + 1)
            w = trapezoid_weights(n, (b - a) / n)
            h = (b - a) / n
        else:
            n_pan = int(round((b - a) / panel))
            sub = max(1, n // max(n_pan, 1))
            loc = np.linspace(0.0, panel, sub + 1)
            nudge = 1e-9 * panel
            loc[0] += nudge
            loc[-1] -= nudge
            t = (a + panel * np.arange(n_pan)[:, None] + loc[None, :]).ravel()
            w = np.tile(trapezoid_weights(sub, panel / sub), n_pan)
            h = panel / sub
        vals = sample_fn(t)
        wt = w * weight_fn(t)
        cur = np.tensordot(wt, vals, axes=(0, 0))
        if prev is not None:
            diff = float(np.max(np.abs(cur - prev)))
            scale = max(1.0, float(np.max(np.abs(cur))))
            if diff <= tol * scale or h / 2 < h_floor:
                return cur, h
        prev = cur
        n *= 2


def laplace_integral(sample_fn, lam: complex, M: float, omega: float, *, scale: float = 1.0,
                     tol: float = QUAD_TOL, panel: Optional[float] = None, h_floor: float = H_FLOOR):
    """``int_0^inf exp(-lam t) F(t) dt`` truncated by the ``(M, omega)`` tail bound.

    Returns ``(value, t_trunc)``; the tail beyond ``t_trunc`` is below
    ``1e-12`` of the accumulated value.
    """
    gap = lam.real - omega
    T = max(1.0, math.log(max(M * abs(scale), 1e-300) / (gap * TAIL_REL)) / gap)
    if panel is not None:
        T = panel * math.ceil(T / panel)
    while True:
        n0 = max(16, int(math.ceil(T / 0.05)))
        if panel is not None:
            n0 = int(round(T / panel)) * 2
        val, _ = _refined_trapezoid(sample_fn, 0.0, T, lambda t: np.exp(-lam * t), tol, h_floor, n0=n0, panel=panel)
        tail = M * abs(scale) * math.exp(-gap * T) / gap
        if tail <= TAIL_REL * max(float(np.max(np.abs(val))), 1e-300) or T > 1e4:
            return val, T
        T *= 1.5
        if panel is not None:
            T = panel * math.ceil(T / panel)


def laplace_resolvent(S: IntegratedSemigroupPath, lam: complex, x=None, *, tol: float = QUAD_TOL) -> np.ndarray:
    """``lam * int_0^inf exp(-lam s) S(s) ds`` (applied to ``x`` when given)."""
    lam = complex(lam)
    if not lam.real > S.omega:
        raise ResolventDomainError(lam, S.omega, "Laplace transform of the integrated semigroup")
    if x is None:
        fn = S.sample
    else:
        xv = np.asarray(x)
        fn = lambda t: S.sample(t) @ xv  # noqa: E731
    val, _ = laplace_integral(fn, lam, S.M, S.omega, scale=abs(lam), tol=tol, panel=S.breakpoint_step)
    out = lam * val
    if lam.imag == 0:
        out = out.real
    return out


def integrated_from_semigroup(T: SemigroupPath, R_mu, mu: float, t: float, *, tol: float = QUAD_TOL,
                              h_floor: float = H_FLOOR) -> np.ndarray:
    """``mu int_0^t T(s) R ds - T(t) R + R`` with ``R = R(mu, A)``, trapezoid refinement."""
    R = np.asarray(R_mu)
    if R.ndim == 0:
        R = R.reshape(1, 1)
    if not np.all(np.isfinite(R)) or R.ndim != 2:
        raise InvalidInput("resolvent input must be a finite matrix")
    if np.linalg.cond(R) > 1e14:
        raise InvalidInput("resolvent input is singular")
    if not (t >= 0 and math.isfinite(t)):
        raise InvalidInput(f"t must be nonnegative, got {t}")
    if t == 0:
        return np.zeros((T.dim, R.shape[1]))
    n = 16
    prev = None
    TtR = T.eval(t) @ R
    while True:
        times = np.linspace(0.0, t, n + 1)
        vals = T.sample(times)
        integral = np.tensordot(trapezoid_weights(n, t / n), vals, axes=(0, 0)) @ R
        cur = mu * integral - TtR + R
        if prev is not None and (np.max(np.abs(cur - prev)) <= tol or t / (2 * n) < h_floor):
            return cur
        prev = cur
        n *= 2


def age_integrated_semigroup(U: EvolutionFamily, p: float = 1.0) -> IntegratedSemigroupPath:
    """Integrated semigroup of the age-model operator on ``X = E x profiles``.

    ``S(t)(y, f) = (0, U0(t) y + int_0^t T0(s) f ds)`` discretised on the age
    grid; vectors of X are flattened as ``[y, f(a_0), ..., f(a_N)]``.
    """
    N, d, da = U.n_steps, U.dim, U.da
    table = U.table
    ages = U.ages
    size = d * (N + 2)
    k_idx = np.arange(N + 1)

    def weights(ts):
        # W[t, k, j]: quadrature weight of node j in int_{max(0, a_k - t)}^{a_k}
        lo_age = ages[None, :] - ts[:, None]
        inside = lo_age <= ALIGN_TOL * da
        j0 = np.minimum(np.floor(np.maximum(lo_age, 0.0) / da).astype(int), np.maximum(k_idx - 1, 0)[None, :])
        j0 = np.where(inside, 0, j0)
        theta = np.where(inside, 0.0, np.clip(((j0 + 1) * da - lo_age) / da, 0.0, 1.0))
        lo = np.where(inside, 0, j0 + 1)[:, :, None]
        J = k_idx[None, None, :]
        K = k_idx[None, :, None]
        W = np.where((J > lo) & (J < K), da, 0.0)
        W += np.where((J == lo) & (lo < K), 0.5 * da, 0.0)
        W += np.where((J == K) & (lo < K), 0.5 * da, 0.0)
        tt, kk = np.nonzero(~inside)
        jj = j0[tt, kk]
        th = theta[tt, kk]
        np.add.at(W, (tt, kk, jj), 0.5 * da * th**2)
        np.add.at(W, (tt, kk, jj + 1), 0.5 * da * th * (2 - th))
        return W

    def _batch(ts):
        ts = np.asarray(ts, dtype=float)
        if np.any(ts < 0):
            raise InvalidInput("t must be nonnegative")
        out = np.zeros((ts.size, size, size))
        chunk = max(1, 2**22 // max(1, (N + 1) ** 2 * d * d))
        for s0 in range(0, ts.size, chunk):
            t = ts[s0 : s0 + chunk]
            block = np.zeros((t.size, N + 1, d, N + 2, d))
            born = ages[None, :] <= t[:, None] * (1 + 1e-15)
            block[:, :, :, 0, :] = born[:, :, None, None] * U.from_origin[None]
            block[:, :, :, 1:, :] = np.einsum("tkj,kjab->tkajb", weights(t), table)
            out[s0 : s0 + chunk, d:, :] = block.reshape(t.size, (N + 1) * d, size)
        return out

    # T0 vanishes beyond c, so S(t) is constant for t >= c
    M = U.C * math.exp(max(U.omega, 0.0) * U.c) * (1.0 + U.c)
    return IntegratedSemigroupPath(
        eval=lambda t: _batch(np.array([t]))[0],
        delta=lambda t: U.C * (t + min(t, U.c) ** (1.0 / p)) * math.exp(max(U.omega, 0.0) * t),
        M=M,
        omega=0.0,
        size=size,
        breakpoint_step=da,
        sampler=_batch,
    )
