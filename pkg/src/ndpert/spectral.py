"""Resolvents, decay scans, characteristic roots and growth-bound reporting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, stats

from .core import EvolutionFamily, as_linear_map, trapezoid_weights
from .errors import (
    FitDomainError,
    InvalidInput,
    NoRootInWindow,
    PreconditionViolation,
    SpectrumProximity,
)

COND_LIMIT = 1e8


# --------------------------------------------------------------------------
# resolvents


def _near_singular(M: np.ndarray, scale: float) -> bool:
    # cond() alone misses scalars, so also compare the smallest singular value with the scale
    s = np.linalg.svd(M, compute_uv=False)
    return not np.all(np.isfinite(s)) or s[-1] * COND_LIMIT <= max(s[0], scale)


def matrix_resolvent(A) -> Callable[[complex], np.ndarray]:
    """Evaluator ``lam -> (lam I - A)^{-1}``; raises ``SpectrumProximity`` near eigenvalues."""
    A = as_linear_map(A, "generator")
    eye = np.eye(A.shape[0])
    nA = float(np.linalg.norm(A, 2))

    def R(lam):
        M = lam * eye - A
        if _near_singular(M, abs(lam) + nA):
            raise SpectrumProximity(lam, "lam I - A is numerically singular")
        return np.linalg.solve(M, eye)

    return R


def perturbed_resolvent(R_A, L, lam: complex, R_A0=None) -> np.ndarray:
    """``(I - R(lam, A) L)^{-1} R(lam, A0)``.

    ``R_A`` maps ``X`` into ``X0`` and ``R_A0`` is its restriction to
    ``X0``; both may be matrices or evaluators. When ``R_A0`` is omitted
    the two coincide (dense case).
    """
    RA = np.asarray(R_A(lam) if callable(R_A) else R_A)
    if R_A0 is None:
        RA0 = RA
    else:
        RA0 = np.asarray(R_A0(lam) if callable(R_A0) else R_A0)
    L = np.asarray(L)
    if L.ndim == 0:
        L = L.reshape(1, 1)
    if RA.ndim != 2 or L.ndim != 2 or RA.shape[1] != L.shape[0] or L.shape[1] != RA.shape[0]:
        raise InvalidInput(f"incompatible shapes R {RA.shape}, L {L.shape}")
    M = np.eye(RA.shape[0]) - RA @ L
    if _near_singular(M, 1.0):
        raise SpectrumProximity(lam, f"cond(I - R L) = {np.linalg.cond(M):.3g}")
    return np.linalg.solve(M, RA0)


def neumann_bound(norm_R_A0: float, norm_R_A: float, norm_L: float) -> float:
    """``||R(lam,A0)|| / (1 - ||R(lam,A)|| ||L||)`` when the Neumann condition holds."""
    q = norm_R_A * norm_L
    return math.inf if q >= 1 else norm_R_A0 / (1 - q)


# --------------------------------------------------------------------------
# decay scans


@dataclass(frozen=True)
class ScanPath:
    """Where to sample ``lam`` as a function of the scan parameter ``y > 0``.

    ``imaginary``: ``shift + i y``; ``sector``: ``y exp(i theta)``;
    ``region``: ``c - beta log y + i y``; ``real``: ``y``.
    """

    kind: str = "imaginary"
    shift: float = 0.0
    theta: float = math.pi / 2
    beta: float = 1.0
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in ("imaginary", "sector", "region", "real"):
            raise InvalidInput(f"unknown scan path kind {self.kind!r}")

    def point(self, y: float) -> complex:
        if self.kind == "imaginary":
            return complex(self.shift, y)
        if self.kind == "sector":
            return y * complex(math.cos(self.theta), math.sin(self.theta))
        if self.kind == "region":
            return complex(self.c - self.beta * math.log(y), y)
        return complex(y, 0.0)

    def abscissa(self, lam: complex) -> float:
        return abs(lam.real) if self.kind == "real" else abs(lam.imag)


@dataclass(frozen=True)
class ResolventScan:
    path: ScanPath
    samples: tuple
    beta_hat: float
    beta_band: tuple
    intercept: float
    classification: str

    @property
    def lams(self) -> np.ndarray:
        return np.array([s[0] for s in self.samples])

    @property
    def norms(self) -> np.ndarray:
        return np.array([s[1] for s in self.samples])


def _norm_of(value, norm) -> float:
    if np.ndim(value) == 0:
        return float(abs(value))
    return float(norm(value)) if norm is not None else float(np.linalg.norm(np.asarray(value), 2))


def resolvent_decay_scan(R, path: ScanPath, window, samples: int = 64, *, norm=None,
                         analytic_tol: float = 0.05) -> ResolventScan:
    """Sample ``||R(lam)||`` along ``path`` and fit ``||R|| ~ y^{-beta}``.

    ``R`` returns a matrix or directly a norm. Samples are log-spaced in
    the window ``[y_min, y_max]``.
    """
    y_min, y_max = map(float, window)
    if not (0 < y_min < y_max and math.isfinite(y_max)):
        raise InvalidInput(f"window must satisfy 0 < lo < hi, got {window}")
    if samples < 2:
        raise InvalidInput("need at least two samples")
    rows = []
    for y in np.geomspace(y_min, y_max, samples):
        lam = path.point(float(y))
        try:
            val = _norm_of(R(lam), norm)
        except (np.linalg.LinAlgError, ZeroDivisionError) as exc:
            raise SpectrumProximity(lam, str(exc)) from exc
        if not (math.isfinite(val) and val >= 0):
            raise SpectrumProximity(lam, "non-finite resolvent norm")
        rows.append((lam, val))
    x = np.log([path.abscissa(lam) for lam, _ in rows])
    v = np.array([val for _, val in rows])
    if np.any(v <= 0):
        raise FitDomainError("resolvent norm vanished on the scan path")
    fit = stats.linregress(x, np.log(v))
    beta = -float(fit.slope)
    half = 1.96 * float(fit.stderr)
    if path.kind == "region":
        cls = "pazy-iley" if beta <= analytic_tol else "unbounded-on-region"
    elif abs(beta - 1.0) <= analytic_tol:
        cls = "analytic-type"
    elif 0 < beta < 1:
        cls = "crandall-pazy"
    elif beta <= 0:
        cls = "no-decay"
    else:
        cls = "super-linear-decay"
    return ResolventScan(path, tuple(rows), beta, (beta - half, beta + half), float(fit.intercept), cls)


# --------------------------------------------------------------------------
# characteristic equation


def _kernel_samples(U: EvolutionFamily, C) -> np.ndarray:
    samples = np.asarray(getattr(C, "samples", C), dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None, None]
    if samples.shape != (U.n_steps + 1, U.dim, U.dim):
        raise InvalidInput(f"kernel samples have shape {samples.shape}, expected {(U.n_steps + 1, U.dim, U.dim)}")
    return samples


def lotka_matrix(U: EvolutionFamily, C) -> Callable[[float], np.ndarray]:
    """``lam -> K(lam) = int_0^c exp(-lam a) C(a) U(a, 0) da`` by trapezoid."""
    CU = np.einsum("kij,kjl->kil", _kernel_samples(U, C), U.from_origin)
    w = trapezoid_weights(U.n_steps, U.da)
    ages = U.ages

    def K(lam):
        return np.tensordot(w * np.exp(-lam * ages), CU, axes=(0, 0))

    return K


def characteristic_function(U: EvolutionFamily, C) -> Callable[[float], float]:
    """``g(lam) = det(I - K(lam))``."""
    K = lotka_matrix(U, C)
    eye = np.eye(U.dim)
    return lambda lam: float(np.linalg.det(eye - K(lam)))


def lotka_roots(U: EvolutionFamily, C, window=(-1.0, 1.0), tol: float = 1e-12, scan_points: int = 401) -> list:
    """Real roots of ``det(I - K(lam))`` on ``window``, bracketed by sign changes.

    An identically zero kernel has no roots. Otherwise a window without a
    sign change raises ``NoRootInWindow``.
    """
    lo, hi = map(float, window)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise InvalidInput(f"bad window {window}")
    samples = _kernel_samples(U, C)
    if not np.any(samples):
        return []
    g = characteristic_function(U, C)
    xs = np.linspace(lo, hi, scan_points)
    gs = np.array([g(x) for x in xs])
    roots = []
    for i in range(scan_points - 1):
        if gs[i] == 0:
            roots.append(float(xs[i]))
        elif gs[i] * gs[i + 1] < 0:
            r = optimize.brentq(g, xs[i], xs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
            if abs(g(r)) > tol:
                # polish with a secant step pinned inside the bracket
                r = optimize.newton(g, r, tol=1e-15, maxiter=50)
            roots.append(float(r))
    if gs[-1] == 0:
        roots.append(float(xs[-1]))
    if not roots:
        raise NoRootInWindow((lo, hi), float(gs[0]), float(gs[-1]))
    return sorted(roots)


def expanding_lotka_roots(U: EvolutionFamily, C, window=(-1.0, 1.0), max_doublings: int = 64, **kw) -> tuple:
    """Like ``lotka_roots`` but doubles the window until a root is bracketed."""
    lo, hi = map(float, window)
    last = None
    for _ in range(max_doublings + 1):
        try:
            return lotka_roots(U, C, (lo, hi), **kw), (lo, hi)
        except NoRootInWindow as exc:
            last = exc
            mid, half = 0.5 * (lo + hi), hi - lo
            lo, hi = mid - half, mid + half
    raise last


# --------------------------------------------------------------------------
# growth fitting and subconvolutive bounds


@dataclass(frozen=True)
class GrowthFit:
    rate: float
    residual: float
    t_start: float


def growth_fit(values, times=None, window_fraction: float = 0.5) -> GrowthFit:
    """Least-squares slope of ``log values`` over the trailing ``window_fraction`` of the horizon."""
    y = np.asarray(values, dtype=float)
    t = np.arange(y.size, dtype=float) if times is None else np.asarray(times, dtype=float)
    if y.shape != t.shape or y.ndim != 1 or y.size < 2:
        raise InvalidInput("values and times must be 1-d arrays of equal length >= 2")
    if not 0 < window_fraction <= 1:
        raise InvalidInput("window_fraction must lie in (0, 1]")
    t_start = t[-1] - window_fraction * (t[-1] - t[0])
    sel = t >= t_start - 1e-12 * max(1.0, abs(t_start))
    if sel.sum() < 2:
        sel[-2:] = True
    ys = y[sel]
    if np.any(~(ys > 0)):
        raise FitDomainError("trajectory has nonpositive values in the fit window")
    coef = np.polyfit(t[sel], np.log(ys), 1)
    res = np.log(ys) - np.polyval(coef, t[sel])
    return GrowthFit(float(coef[0]), float(np.sqrt(np.mean(res**2))), float(t[sel][0]))


@dataclass(frozen=True)
class SubconvolutiveCertificate:
    M: tuple
    gamma: float
    omega: float
    t0: float


def subconvolutive_bound(f_samples, gamma: float, times, rel_tol: float = 1e-9) -> SubconvolutiveCertificate:
    """Constants ``M_j`` with ``f_j(t) <= M_j exp(gamma t)`` on the grid.

    ``f_samples[j, k] = f_j(t_k)`` on a uniform grid starting at 0. The
    construction halves at the first node ``t0`` with
    ``f_0(t0) <= exp(gamma t0) / 2`` and sets ``M_j = B_j + 2 M'_j``.
    """
    f = np.asarray(f_samples, dtype=float)
    t = np.asarray(times, dtype=float)
    if f.ndim != 2 or f.shape[1] != t.size or t.size < 2:
        raise InvalidInput("f_samples must have shape (J+1, len(times))")
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise InvalidInput("f_j must be finite and nonnegative")
    J1, K1 = f.shape
    # lattice check f_j(t_i + t_k) <= sum_l f_l(t_i) f_{j-l}(t_k)
    for j in range(J1):
        conv = sum(np.outer(f[l], f[j - l]) for l in range(j + 1))
        idx = np.add.outer(np.arange(K1), np.arange(K1))
        ok = idx < K1
        lhs = np.where(ok, f[j][np.minimum(idx, K1 - 1)], 0.0)
        bad = ok & (lhs > conv * (1 + rel_tol) + 1e-300)
        if bad.any():
            i, k = map(int, np.argwhere(bad)[0])
            raise PreconditionViolation(
                "subconvolutivity fails", {"j": j, "t": float(t[i]), "s": float(t[k]), "lhs": float(lhs[i, k]),
                                           "rhs": float(conv[i, k])}
            )
    pos = (t > 0) & (f[0] > 0)
    omega = float(np.min(np.log(f[0][pos]) / t[pos])) if pos.any() else -math.inf
    if not gamma > omega:
        k = int(np.argmin(np.where(pos, np.log(np.where(pos, f[0], 1.0)) / np.where(t > 0, t, 1.0), np.inf)))
        raise PreconditionViolation("gamma must exceed the growth exponent of f_0",
                                    {"gamma": gamma, "omega": omega, "t": float(t[k])})
    half = np.nonzero((t > 0) & (f[0] <= 0.5 * np.exp(gamma * t)))[0]
    if half.size == 0:
        raise PreconditionViolation("horizon too short: f_0(t) > exp(gamma t)/2 at every node",
                                    {"t_end": float(t[-1])})
    k0 = int(half[0])
    t0 = float(t[k0])
    scaled = f * np.exp(-gamma * t)[None, :]
    B = scaled[:, : k0 + 1].max(axis=1)
    M = []
    for j in range(J1):
        Mp = sum(M[k] * math.exp(-gamma * t0) * f[j - k, k0] for k in range(j))
        M.append(float(B[j] + 2 * Mp))
    viol = scaled > (np.array(M)[:, None] * (1 + rel_tol))
    if viol.any():
        j, k = map(int, np.argwhere(viol)[0])
        raise PreconditionViolation("certificate re-check failed", {"j": j, "t": float(t[k])})
    return SubconvolutiveCertificate(tuple(M), float(gamma), omega, t0)


# --------------------------------------------------------------------------
# transfer and classification


@dataclass(frozen=True)
class Hypotheses:
    """Caller-supplied facts; ``None`` means unknown."""

    finite_c: Optional[bool] = None
    compact_L: Optional[bool] = None
    compact_U: Optional[bool] = None
    norm_continuous: Optional[bool] = None

    def any_set(self) -> bool:
        return any(v is not None for v in (self.finite_c, self.compact_L, self.compact_U, self.norm_continuous))


@dataclass(frozen=True)
class TransferFragment:
    mode: str
    lines: tuple
    omega_ess_bound: Optional[float]
    omega_equals_s: bool
    conclusive: bool


def transfer_report(omega_U: float, mode: str = "ess", hypotheses: Hypotheses = Hypotheses()) -> TransferFragment:
    """Transfer growth bounds from the unperturbed transport semigroup to the perturbed one.

    ``omega_U`` is the growth bound of the evolution family, which equals
    that of the transport semigroup. Nothing is inferred from unknown flags.
    """
    if mode not in ("ess", "crit"):
        raise InvalidInput(f"mode must be 'ess' or 'crit', got {mode!r}")
    h = hypotheses
    if not h.any_set():
        return TransferFragment(mode, ("no hypotheses supplied: inconclusive",), None, False, False)
    compact = bool(h.compact_L) or bool(h.compact_U)
    lines = []
    if mode == "ess":
        if not compact:
            lines.append("perturbation not known to be compact: essential bound not transferred")
            return TransferFragment(mode, tuple(lines), None, False, False)
        lines.append("compact perturbation: omega_ess(perturbed) = omega_ess(T0)")
        label = "omega_ess"
    else:
        if not (compact or h.norm_continuous):
            lines.append("no compactness or norm-continuity flag: critical bound not transferred")
            return TransferFragment(mode, tuple(lines), None, False, False)
        lines.append("omega_crit(perturbed) = omega_crit(T0); omega = max(s(A+L), omega_crit)")
        label = "omega_crit"
    if h.finite_c is True:
        lines.append("finite max age: T0(t) = 0 for t > c, so T0 is nilpotent")
        lines.append(f"{label}(T0) = -inf, hence {label}(perturbed) = -inf")
        lines.append("perturbed semigroup eventually compact: omega = s(A+L)")
        return TransferFragment(mode, tuple(lines), -math.inf, True, True)
    if h.finite_c is False:
        lines.append(f"unbounded ages: {label}(T0) <= omega(T0) = omega(U) = {omega_U:.6g}")
        lines.append(f"{label}(perturbed) <= {omega_U:.6g}")
        return TransferFragment(mode, tuple(lines), float(omega_U), False, True)
    lines.append("max age finiteness unknown: bound not transferred")
    return TransferFragment(mode, tuple(lines), None, False, False)


def classify(s_hat: Optional[float], fragment: TransferFragment, s_tol: float = 1e-9) -> str:
    """``stable`` / ``unstable`` / ``inconclusive`` from the spectral bound and transferred facts."""
    if not fragment.conclusive or fragment.omega_ess_bound is None:
        return "inconclusive"
    w_ess = fragment.omega_ess_bound
    s = -math.inf if s_hat is None else s_hat
    if w_ess < 0 and s < -s_tol:
        return "stable"
    if s > s_tol and s > w_ess:
        return "unstable"
    return "inconclusive"


@dataclass(frozen=True)
class SpectralReport:
    lotka_roots: tuple
    s_hat: Optional[float]
    omega_U: float
    omega_ess_bound: Optional[float]
    classification: str
    notes: tuple = ()
    fitted_rate: Optional[float] = None
    window: Optional[tuple] = None
    transfer: Optional[TransferFragment] = field(default=None, repr=False)

    def render(self) -> str:
        def fmt(x):
            return "none" if x is None else f"{x:.10g}"

        rows = [
            ("classification", self.classification),
            ("s_hat", fmt(self.s_hat)),
            ("fitted_rate", fmt(self.fitted_rate)),
            ("omega_U", fmt(self.omega_U)),
            ("omega_ess_bound", fmt(self.omega_ess_bound)),
            ("roots", ", ".join(f"{r:.10g}" for r in self.lotka_roots) or "none"),
        ]
        width = max(len(k) for k, _ in rows)
        out = [f"{k.ljust(width)}  {v}" for k, v in rows]
        out += [f"note: {n}" for n in self.notes]
        return "\n".join(out)
