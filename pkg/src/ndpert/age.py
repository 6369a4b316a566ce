"""Linear age-structured population model on a finite age window.

``u_t + u_a = A(a) u`` for ``0 < a < c``, with births
``u(t, 0) = int_0^c C(a) u(t, a) da``. Time and age share one step so the
characteristics pass exactly through grid nodes.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from . import kernels
from .core import (
    EvolutionFamily,
    TimeGrid,
    build_evolution_family,
    howland_resolvent,
    lp_norm,
    trapezoid_weights,
)
from .errors import ConsistencyWarning, InvalidInput, ResolventDomainError, StepFailure
from .spectral import (
    Hypotheses,
    SpectralReport,
    classify,
    expanding_lotka_roots,
    growth_fit,
    transfer_report,
)

COHERENCE_TOL = 5e-3


def _n_nodes(c: float, da: float) -> int:
    q = c / da
    n = int(round(q))
    if abs(q - n) > 1e-9 * max(1.0, q):
        raise InvalidInput(f"c={c} is not a multiple of da={da}")
    return n


def conjugate_exponent(p: float) -> float:
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1)


@dataclass(frozen=True, eq=False)
class BoundaryKernel:
    """Fertility ``C(a)`` sampled on the age grid with a dominating profile ``gamma``."""

    samples: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None, None]
        g = np.asarray(self.gamma, dtype=float)
        if s.ndim != 3 or s.shape[1] != s.shape[2] or g.shape != s.shape[:1]:
            raise InvalidInput("kernel samples must have shape (N+1, d, d) and gamma (N+1,)")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(g))):
            raise InvalidInput("kernel has non-finite values")
        if np.any(g < 0):
            raise InvalidInput("gamma must be nonnegative")
        norms = np.linalg.norm(s, ord=2, axis=(1, 2))
        if np.any(norms > g * (1 + 1e-12) + 1e-300):
            k = int(np.argmax(norms - g))
            raise InvalidInput(f"||C(a)|| exceeds gamma(a) at node {k}")
        s.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "gamma", g)

    @classmethod
    def from_samples(cls, samples) -> "BoundaryKernel":
        s = np.asarray(samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None, None]
        return cls(s, np.linalg.norm(s, ord=2, axis=(1, 2)))

    @classmethod
    def from_function(cls, fn: Callable[[float], object], c: float, da: float, dim: int = 1) -> "BoundaryKernel":
        ages = np.arange(_n_nodes(c, da) + 1) * da
        vals = np.stack([np.broadcast_to(np.asarray(fn(a), dtype=float), (dim, dim)) for a in ages])
        return cls.from_samples(vals)

    @classmethod
    def constant(cls, beta, c: float, da: float, dim: int = 1) -> "BoundaryKernel":
        B = np.asarray(beta, dtype=float)
        B = B * np.eye(dim) if B.ndim == 0 else B
        return cls.from_function(lambda a: B, c, da, dim)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def weighted(self, da: float) -> np.ndarray:
        """Trapezoid-weighted samples ``w_k C(a_k)``."""
        w = trapezoid_weights(self.samples.shape[0] - 1, da)
        return self.samples * w[:, None, None]

    def gamma_norm(self, q: float, da: float) -> float:
        w = trapezoid_weights(self.samples.shape[0] - 1, da)
        if math.isinf(q):
            return float(self.gamma.max())
        return float(np.dot(w, self.gamma**q) ** (1 / q))


@dataclass(frozen=True, eq=False)
class AgeModelSpec:
    """Model data plus the shared time/age grid (``dt == da``)."""

    c: float
    p: float
    dim: int
    coeff: Union[Callable[[float], object], np.ndarray]
    kernel: BoundaryKernel
    u0: np.ndarray = field(repr=False)
    da: float
    dt: float
    t_end: float
    c_is_truncated: bool = False

    def __post_init__(self):
        if not (self.p >= 1):
            raise InvalidInput(f"p must be >= 1, got {self.p}")
        if not (self.da > 0 and self.dt > 0):
            raise InvalidInput("grid steps must be positive")
        if abs(self.dt - self.da) > 1e-12 * self.da:
            raise InvalidInput(f"dt={self.dt} must equal da={self.da} (characteristics alignment)")
        if self.dim < 1:
            raise InvalidInput("dim must be >= 1")
        N = _n_nodes(self.c, self.da)
        TimeGrid(self.t_end, self.dt)
        u0 = np.asarray(self.u0, dtype=float)
        if u0.ndim == 1 and self.dim == 1:
            u0 = u0[:, None]
        if u0.shape != (N + 1, self.dim):
            raise InvalidInput(f"u0 must have shape {(N + 1, self.dim)}, got {np.shape(self.u0)}")
        if not np.all(np.isfinite(u0)):
            raise InvalidInput("u0 has non-finite values")
        u0.setflags(write=False)
        object.__setattr__(self, "u0", u0)
        if self.kernel.samples.shape != (N + 1, self.dim, self.dim):
            raise InvalidInput("kernel is not sampled on the age grid")
        if not math.isfinite(self.kernel.gamma_norm(conjugate_exponent(self.p), self.da)):
            raise InvalidInput("gamma is not in L^{p'}")

    @property
    def n_ages(self) -> int:
        return _n_nodes(self.c, self.da) + 1

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.n_ages) * self.da

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.t_end, self.dt)

    @cached_property
    def family(self) -> EvolutionFamily:
        return build_evolution_family(self.coeff, self.c, self.da, c_is_truncated=self.c_is_truncated)

    def with_family(self, U: EvolutionFamily) -> "AgeModelSpec":
        """Copy whose evolution family is replaced (used for fault injection and reuse)."""
        new = AgeModelSpec(self.c, self.p, self.dim, self.coeff, self.kernel, self.u0, self.da, self.dt,
                           self.t_end, self.c_is_truncated)
        new.__dict__["family"] = U
        return new

    def boundary_operator(self) -> np.ndarray:
        """Matrix of ``phi -> (int C phi, 0)`` from profiles to ``E x profiles``."""
        d, N1 = self.dim, self.n_ages
        Cw = self.kernel.weighted(self.da)
        L = np.zeros((d * (N1 + 1), d * N1))
        L[:d] = Cw.transpose(1, 0, 2).reshape(d, N1 * d)
        return L


def scalar_spec(mu: float, beta: float, c: float, da: float, t_end: float, p: float = 1.0,
                u0: Union[float, np.ndarray] = 1.0) -> AgeModelSpec:
    """Scalar model with constant mortality ``mu`` and constant fertility ``beta``."""
    N1 = _n_nodes(c, da) + 1
    u = np.full(N1, float(u0)) if np.ndim(u0) == 0 else np.asarray(u0, dtype=float)
    return AgeModelSpec(
        c=c, p=p, dim=1, coeff=np.array([[-float(mu)]]),
        kernel=BoundaryKernel.constant(beta, c, da), u0=u[:, None], da=da, dt=da, t_end=t_end,
    )


def truncation_age(omega: float, gamma_sup: float, tol: float = 1e-10) -> float:
    """Age beyond which ``exp(omega a) * sup gamma < tol`` (needs ``omega < 0``)."""
    if not omega < 0:
        raise InvalidInput("an infinite age window can only be truncated when omega(U) < 0")
    if gamma_sup <= tol:
        return 0.0
    return math.log(tol / gamma_sup) / omega


# --------------------------------------------------------------------------
# solvers


@dataclass(frozen=True)
class BirthPath:
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SimulationResult:
    times: np.ndarray = field(repr=False)
    ages: np.ndarray = field(repr=False)
    field: np.ndarray = dataclasses.field(repr=False)
    births: BirthPath
    norms: np.ndarray = dataclasses.field(repr=False)
    metadata: dict = dataclasses.field(default_factory=dict)


def _diagonal_inverse(Cw0: np.ndarray, da: float) -> np.ndarray:
    lhs = np.eye(Cw0.shape[0]) - Cw0
    if np.linalg.cond(lhs) > 1e12:
        raise StepFailure(f"I - (da/2) C(0) is singular at da={da}; try a smaller age step")
    return np.linalg.inv(lhs)


def _result(spec, field_, births, method, **meta):
    times = spec.grid.nodes
    norms = lp_norm(field_, spec.da, spec.p)
    md = {"method": method, "da": spec.da, "dt": spec.dt, "t_end": spec.t_end, "c": spec.c, "p": spec.p,
          "c_is_truncated": spec.c_is_truncated, "backend": kernels.BACKEND}
    md.update(meta)
    return SimulationResult(times, spec.ages, field_, BirthPath(times, births), norms, md)


def solve_renewal(spec: AgeModelSpec, *, impl=None) -> SimulationResult:
    """Exact transport along characteristics plus a trapezoid Volterra law for births.

    Where the diagonal ``a = t`` meets a node, the field stores the
    transported initial value and the birth quadrature is split there.
    """
    U = spec.family
    Cw = spec.kernel.weighted(spec.da)
    lhs_inv = _diagonal_inverse(Cw[0], spec.da)
    field_, births = kernels.renewal_march(U.step_propagators, Cw, lhs_inv, spec.u0, spec.grid.n_steps, impl=impl)
    return _result(spec, field_, births, "renewal", omega_U=U.omega)


def upwind_oracle(spec: AgeModelSpec, *, impl=None) -> SimulationResult:
    """First-order upwind in age, explicit Euler in time at CFL one."""
    if abs(spec.dt - spec.da) > 1e-12 * spec.da:
        raise InvalidInput("upwind scheme needs dt == da")
    ages = spec.ages[:-1]
    if callable(spec.coeff):
        A = np.stack([np.atleast_2d(np.asarray(spec.coeff(float(a)), dtype=float)) for a in ages])
    else:
        A = np.broadcast_to(np.atleast_2d(np.asarray(spec.coeff, dtype=float)), (ages.size, spec.dim, spec.dim))
    E = np.eye(spec.dim)[None] + spec.dt * A
    Cw = spec.kernel.weighted(spec.da)
    lhs_inv = _diagonal_inverse(Cw[0], spec.da)
    field_, births = kernels.upwind_march(E, Cw, lhs_inv, spec.u0, spec.grid.n_steps, impl=impl)
    return _result(spec, field_, births, "upwind")


# --------------------------------------------------------------------------
# resolvent-side objects


def _family(obj) -> EvolutionFamily:
    return obj.family if isinstance(obj, AgeModelSpec) else obj


def resolvent_power(model, lam: complex, n: int, y, f) -> np.ndarray:
    """n-th power of the model resolvent applied to ``(y, f)``; returns the age profile.

    ``a^{n-1} e^{-lam a} U(a, 0) y / (n-1)!`` plus ``n`` Howland resolvents of ``f``.
    """
    U = _family(model)
    if n < 1:
        raise InvalidInput("n must be >= 1")
    lam = complex(lam)
    if not lam.real > U.omega:
        raise ResolventDomainError(lam, U.omega, "model resolvent")
    y = np.asarray(y, dtype=float).reshape(U.dim)
    f = np.asarray(f)
    if f.ndim == 1:
        f = f.reshape(U.n_steps + 1, U.dim)
    a = U.ages
    head = (a ** (n - 1) * np.exp(-lam * a) / math.factorial(n - 1))[:, None] * (U.from_origin @ y)
    g = f.astype(complex)
    for _ in range(n):
        g = howland_resolvent(U, lam, g)
    out = head + g
    return out.real if lam.imag == 0 else out


def model_resolvent_matrix(model, lam: complex) -> np.ndarray:
    """Model resolvent as a matrix from ``[y, f]`` coordinates to profile coordinates."""
    U = _family(model)
    d, N1 = U.dim, U.n_steps + 1
    cols = d * (N1 + 1)
    out = np.zeros((N1 * d, cols), dtype=complex)
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        out[:, j] = resolvent_power(U, lam, 1, e, np.zeros((N1, d))).reshape(-1)
    eye = np.eye(N1 * d).reshape(N1, d, N1 * d)
    out[:, d:] = howland_resolvent(U, lam, eye).reshape(N1 * d, N1 * d)
    return out.real if complex(lam).imag == 0 else out


def _exp_fitted_integral(g: np.ndarray, h: float, rate: float) -> float:
    """``int_0^{Nh} exp(-rate a) g(a) da`` with ``g`` piecewise linear, weight integrated exactly."""
    z = rate * h
    if abs(z) < 1e-6:
        w0, w1 = h * (0.5 - z / 6), h * (0.5 - z / 3)
    else:
        em = math.exp(-z)
        w1 = h * (1 - em * (1 + z)) / z**2
        w0 = h * (1 - em) / z - w1
    k = np.arange(g.size - 1)
    damp = np.exp(-rate * h * k)
    return float(np.sum(damp * (w0 * g[:-1] + w1 * g[1:])))


@dataclass(frozen=True)
class AmbientResolventNorm:
    lam: float
    boundary_part: float
    howland_part: float

    @property
    def value(self) -> float:
        return max(self.boundary_part, self.howland_part)


def ambient_resolvent_norm(model, lam: float, p: float, n_dirs: int = 64) -> AmbientResolventNorm:
    """Norm of the model resolvent on ``E x L^p`` with the sum norm, for real ``lam``.

    The boundary column ``y -> e^{-lam a} U(a, 0) y`` is integrated with
    exponential fitting so large ``lam`` stays accurate on a coarse grid;
    the transport part uses the Young bound ``C (1 - e^{-(lam-w)c}) / (lam - w)``.
    """
    U = _family(model)
    lam = float(lam)
    if not lam > U.omega:
        raise ResolventDomainError(lam, U.omega, "model resolvent")
    V = U.from_origin
    if U.dim == 1:
        g = np.abs(V[:, 0, 0]) ** p
        bnd = _exp_fitted_integral(g, U.da, p * lam) ** (1 / p)
    elif p == 2:
        G = np.einsum("kji,kjl->kil", V, V)
        gram = np.array([[_exp_fitted_integral(G[:, i, j], U.da, 2 * lam) for j in range(U.dim)]
                         for i in range(U.dim)])
        bnd = float(np.sqrt(max(np.linalg.eigvalsh(gram).max(), 0.0)))
    else:
        rng = np.random.default_rng(0)
        dirs = np.concatenate([np.eye(U.dim), rng.standard_normal((n_dirs, U.dim))])
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        bnd = max(_exp_fitted_integral(np.linalg.norm(V @ y, axis=1) ** p, U.da, p * lam) ** (1 / p) for y in dirs)
    gap = lam - U.omega
    how = U.C * (-math.expm1(-gap * U.c)) / gap
    return AmbientResolventNorm(lam, float(bnd), float(how))


@dataclass(frozen=True)
class FluxKernel:
    """``F(t_n)`` as matrices from profiles to ``E``, with a norm-continuity diagnostic."""

    grid: TimeGrid
    samples: np.ndarray = field(repr=False)
    max_jump: float


def flux_kernel(spec: AgeModelSpec, grid: Optional[TimeGrid] = None) -> FluxKernel:
    """``F(t) = int C(t-a) U(t-a, 0) L T0(a) da`` over ``a in [max(0, t-c), t]``."""
    grid = grid or spec.grid
    if abs(grid.dt - spec.da) > 1e-12 * spec.da:
        raise InvalidInput("flux kernel needs the time step to equal the age step")
    U = spec.family
    d, N1 = spec.dim, spec.n_ages
    N = N1 - 1
    table = U.table
    # ell[j] = L T0(t_j): row block of shape (d, N1, d); zero once t_j >= c.
    # T0(t_j) phi jumps at s = t_j, so the inner integral gets its own trapezoid on [t_j, c]
    ell = np.zeros((N1, d, N1, d))
    C = spec.kernel.samples
    for j in range(N):
        k = np.arange(j, N1)
        Cw_j = C[k] * trapezoid_weights(N - j, spec.da)[:, None, None]
        ell[j, :, k - j, :] = np.einsum("kab,kbc->kac", Cw_j, table[k, k - j])
    CU = np.einsum("kab,kbc->kac", spec.kernel.samples, U.from_origin)
    K = grid.n_steps
    out = np.zeros((K + 1, d, N1, d))
    for n in range(1, K + 1):
        lo = max(0, n - N)
        hi = min(n, N)
        if hi < lo:
            continue
        js = np.arange(lo, hi + 1)
        w = trapezoid_weights(hi - lo, spec.da)
        out[n] = np.einsum("j,jab,jbkc->akc", w, CU[n - js], ell[js])
    flat = out.reshape(K + 1, d, N1 * d)
    wts = trapezoid_weights(N, spec.da)
    q = conjugate_exponent(spec.p)
    diffs = np.diff(out, axis=0)  # (K, d, N1, d)
    col = np.linalg.norm(diffs, axis=(1, 3)) / np.where(wts > 0, wts, 1.0)[None, :]
    if math.isinf(q):
        jumps = col.max(axis=1)
    else:
        jumps = (col**q @ wts) ** (1 / q)
    return FluxKernel(grid, flat, float(jumps.max()) if jumps.size else 0.0)


# --------------------------------------------------------------------------
# reporting


def stability_report(spec: AgeModelSpec, window=(-1.0, 1.0), mode: str = "ess",
                     result: Optional[SimulationResult] = None) -> SpectralReport:
    """Characteristic roots, simulated growth rate and the transferred classification."""
    U = spec.family
    notes = []
    samples = spec.kernel.samples
    if np.any(samples):
        roots, used = expanding_lotka_roots(U, spec.kernel, window)
    else:
        roots, used = [], tuple(window)
        notes.append("zero fertility: empty boundary spectrum")
    s_hat = max(roots) if roots else None
    sim = result if result is not None else solve_renewal(spec)
    fitted = None
    if np.all(sim.norms[sim.times >= 0.5 * spec.t_end] > 0):
        fitted = growth_fit(sim.norms, sim.times).rate
    else:
        notes.append("norm vanished in the fit window")
    if s_hat is not None and fitted is not None and abs(fitted - s_hat) > COHERENCE_TOL:
        msg = f"fitted rate {fitted:.6g} differs from the dominant root {s_hat:.6g} by more than {COHERENCE_TOL}"
        warnings.warn(msg, ConsistencyWarning, stacklevel=2)
        notes.append(msg)
    hyp = Hypotheses(finite_c=not spec.c_is_truncated, compact_L=True, compact_U=True)
    frag = transfer_report(U.omega, mode, hyp)
    notes.extend(frag.lines)
    cls = classify(s_hat, frag)
    return SpectralReport(
        lotka_roots=tuple(roots), s_hat=s_hat, omega_U=U.omega, omega_ess_bound=frag.omega_ess_bound,
        classification=cls, notes=tuple(notes), fitted_rate=fitted, window=tuple(used), transfer=frag,
    )
