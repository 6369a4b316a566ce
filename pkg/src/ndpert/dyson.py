"""Diamond convolution, Dyson–Phillips terms and the perturbed semigroup.

A kernel fixes the ambient space ``X`` and its closed subspace ``X0``
(both flattened to coordinate vectors) and knows how to evaluate
``(S_A diamond f)(t)`` on a time grid. Paths are arrays whose leading axis
runs over grid nodes; the trailing axis holds columns, so a path of linear
maps is a stack of matrices.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .core import (
    EvolutionFamily,
    SemigroupPath,
    TimeGrid,
    as_linear_map,
    trapezoid_weights,
)
from .errors import ContractionFailure, InvalidInput

CONTRACTION_RATIO = 0.5
DELTA_SAFETY = 2.0
DEFAULT_PROBES = 8


def _as_columns(f, K1: int, size: int):
    x = np.asarray(f)
    vector = x.ndim == 2
    if vector:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[0] != K1 or x.shape[1] != size:
        raise InvalidInput(f"path of shape {np.shape(f)} does not match grid ({K1} nodes) and space size {size}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("path has non-finite values")
    return x, vector


class DiamondKernel(ABC):
    """Evaluates ``(S_A diamond f)`` for a fixed operator structure."""

    form: str
    x_size: int
    x0_size: int
    M: float
    omega: float

    @abstractmethod
    def check_grid(self, grid: TimeGrid) -> None: ...

    @abstractmethod
    def base_path(self, grid: TimeGrid) -> np.ndarray:
        """``T_{A0}(t_k)`` as matrices on ``X0``, shape ``(K+1, x0, x0)``."""

    @abstractmethod
    def _diamond(self, f: np.ndarray, grid: TimeGrid) -> np.ndarray: ...

    @abstractmethod
    def x_norm(self, v: np.ndarray) -> np.ndarray:
        """Norm in ``X`` of vectors stored along axis -2."""

    @abstractmethod
    def x0_norm(self, v: np.ndarray) -> np.ndarray:
        """Norm in ``X0`` of vectors stored along axis -2."""

    @abstractmethod
    def map_norm(self, maps: np.ndarray) -> np.ndarray:
        """Induced ``X0 -> X0`` norm (or an upper bound) of a stack of matrices."""

    @abstractmethod
    def operator_norm(self, L: np.ndarray) -> float:
        """Induced ``X0 -> X`` norm (or an upper bound) of the perturbation."""

    def random_probes(self, grid: TimeGrid, probes: int, rng: np.random.Generator) -> np.ndarray:
        """Trigonometric C^1 paths in ``X`` with sup-norm one, shape ``(K+1, x, probes)``."""
        t = grid.nodes / max(grid.t_end, grid.dt)
        n_freq = 3
        out = np.zeros((t.size, self.x_size, probes))
        for j in range(1, n_freq + 1):
            a = rng.standard_normal((self.x_size, probes)) / j
            b = rng.standard_normal((self.x_size, probes)) / j
            phase = 2 * np.pi * j * t
            out += np.cos(phase)[:, None, None] * a + np.sin(phase)[:, None, None] * b
        out += rng.standard_normal((self.x_size, probes))
        sup = self.x_norm(out).max(axis=0)
        return out / sup

    def delta_bound(self, t: float) -> float:
        """``int_0^t M exp(omega s) ds``."""
        if abs(self.omega) < 1e-14:
            return self.M * t
        return self.M * math.expm1(self.omega * t) / self.omega

    def diamond(self, f, grid: TimeGrid) -> np.ndarray:
        self.check_grid(grid)
        x, vector = _as_columns(f, grid.n_steps + 1, self.x_size)
        out = self._diamond(x, grid)
        return out[:, :, 0] if vector else out


class ClassicalKernel(DiamondKernel):
    """Dense case ``X0 = X = R^n``: ``(S ⋄ f)(t) = int_0^t T(t-s) f(s) ds``."""

    form = "classical"

    def __init__(self, T: SemigroupPath):
        self.T = T
        self.x_size = self.x0_size = T.dim
        self.M = T.M
        self.omega = T.omega

    @classmethod
    def from_generator(cls, A) -> "ClassicalKernel":
        return cls(SemigroupPath.from_generator(A))

    def check_grid(self, grid):
        pass

    def base_path(self, grid):
        return self.T.sample(grid.nodes)

    def _diamond(self, f, grid):
        return kernels.trapezoid_convolve(self.T.eval(grid.dt), f, grid.dt)

    def x_norm(self, v):
        return np.linalg.norm(v, axis=-2)

    x0_norm = x_norm

    def map_norm(self, maps):
        return np.linalg.norm(maps, ord=2, axis=(-2, -1))

    def operator_norm(self, L):
        return float(np.linalg.norm(L, 2))


def _lp_map_norm(maps: np.ndarray, w: np.ndarray, d: int, p: float) -> np.ndarray:
    """Induced discrete L^p norm of profile maps; exact for ``p = 2``, Riesz–Thorin bound otherwise."""
    K = maps.shape[0]
    n = w.size
    if p == 2:
        sw = np.repeat(np.sqrt(w), d)
        scaled = maps * sw[None, :, None] / sw[None, None, :]
        return np.linalg.norm(scaled, ord=2, axis=(-2, -1))
    blocks = maps.reshape(K, n, d, n, d).transpose(0, 1, 3, 2, 4)
    G = np.linalg.norm(blocks, ord=2, axis=(-2, -1))
    n1 = np.max(np.einsum("kji,j->ki", G, w) / w[None, :], axis=1)
    ninf = np.max(G.sum(axis=2), axis=1)
    if p == 1:
        return n1
    if math.isinf(p):
        return ninf
    return n1 ** (1 / p) * ninf ** (1 - 1 / p)


class AgeModelKernel(DiamondKernel):
    """Age-structured structure ``X = E x L^p``, ``X0 = {0} x L^p``.

    Vectors of ``X`` are ``[y, f(a_0), ..., f(a_N)]``; vectors of ``X0``
    drop the leading ``y``. The time step must equal the age step.
    """

    form = "age-model"

    def __init__(self, U: EvolutionFamily, p: float = 1.0):
        if not p >= 1:
            raise InvalidInput(f"p must be >= 1, got {p}")
        self.U = U
        self.p = float(p)
        self.d = U.dim
        self.n_ages = U.n_steps + 1
        self.x0_size = self.n_ages * self.d
        self.x_size = self.x0_size + self.d
        self.weights = trapezoid_weights(U.n_steps, U.da)
        self.M = U.C
        self.omega = U.omega

    def check_grid(self, grid):
        if abs(grid.dt - self.U.da) > 1e-12 * self.U.da:
            raise InvalidInput(f"time step {grid.dt} must equal the age step {self.U.da}")

    def base_path(self, grid):
        self.check_grid(grid)
        N1, d = self.n_ages, self.d
        table = self.U.table
        out = np.zeros((grid.n_steps + 1, N1, d, N1, d))
        for k in range(min(grid.n_steps, N1 - 1) + 1):
            j = np.arange(k, N1)
            out[k, j, :, j - k, :] = table[j, j - k]
        return out.reshape(grid.n_steps + 1, self.x0_size, self.x0_size)

    def _diamond(self, f, grid):
        K1, _, m = f.shape
        f1 = f[:, : self.d, :]
        f2 = f[:, self.d :, :].reshape(K1, self.n_ages, self.d, m)
        out = kernels.age_diamond(self.U.step_propagators, f1, f2, grid.dt)
        return out.reshape(K1, self.x0_size, m)

    def _profile_norm(self, prof):
        # prof: (..., N+1, d, m)
        pointwise = np.linalg.norm(prof, axis=-2)
        w = self.weights
        if math.isinf(self.p):
            return pointwise.max(axis=-2)
        return np.einsum("...km,k->...m", pointwise**self.p, w) ** (1 / self.p)

    def x0_norm(self, v):
        shp = v.shape[:-2] + (self.n_ages, self.d, v.shape[-1])
        return self._profile_norm(v.reshape(shp))

    def x_norm(self, v):
        y = np.linalg.norm(v[..., : self.d, :], axis=-2)
        shp = v.shape[:-2] + (self.n_ages, self.d, v.shape[-1])
        return y + self._profile_norm(v[..., self.d :, :].reshape(shp))

    def map_norm(self, maps):
        return _lp_map_norm(np.asarray(maps), self.weights, self.d, self.p)

    def operator_norm(self, L):
        """Hölder bound ``||L|| <= || ||C(.)|| ||_{L^{p'}}`` plus the profile part."""
        L = np.asarray(L)
        if L.shape != (self.x_size, self.x0_size):
            raise InvalidInput(f"perturbation must have shape {(self.x_size, self.x0_size)}")
        top = L[: self.d].reshape(self.d, self.n_ages, self.d).transpose(1, 0, 2)
        w = self.weights
        safe = np.where(w > 0, w, 1.0)
        Ck = np.linalg.norm(top, ord=2, axis=(-2, -1)) / safe
        q = math.inf if self.p == 1 else (1.0 if math.isinf(self.p) else self.p / (self.p - 1))
        top_norm = float(Ck.max()) if math.isinf(q) else float(np.dot(w, Ck**q) ** (1 / q))
        rest = L[self.d :]
        rest_norm = float(self.map_norm(rest[None])[0]) if np.any(rest) else 0.0
        return top_norm + rest_norm


# --------------------------------------------------------------------------
# series


@dataclass(frozen=True)
class SeriesTerm:
    """The n-th Dyson–Phillips term sampled on a grid, shape ``(K+1, x0, x0)``."""

    index: int
    grid: TimeGrid
    samples: np.ndarray = field(repr=False)

    def sup_norm(self, kernel: DiamondKernel) -> float:
        return float(np.max(kernel.map_norm(self.samples)))


def _check_L(kernel: DiamondKernel, L) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    if L.ndim == 0 and kernel.x_size == 1:
        L = L.reshape(1, 1)
    if L.shape != (kernel.x_size, kernel.x0_size):
        raise InvalidInput(f"perturbation has shape {L.shape}, expected {(kernel.x_size, kernel.x0_size)}")
    if not np.all(np.isfinite(L)):
        raise InvalidInput("perturbation has non-finite entries")
    return L


def _apply(L, path):
    return np.einsum("ij,kjm->kim", L, path)


def dyson_terms(kernel: DiamondKernel, L, order: int, grid: TimeGrid, seed=None) -> list[SeriesTerm]:
    """Terms ``S_0..S_order`` with ``S_{n+1} = S_A ⋄ (L S_n)`` and ``S_0 = seed or T_{A0}``."""
    if order < 0:
        raise InvalidInput("order must be nonnegative")
    L = _check_L(kernel, L)
    kernel.check_grid(grid)
    cur = kernel.base_path(grid) if seed is None else np.asarray(seed, dtype=float)
    out = [SeriesTerm(0, grid, cur)]
    for n in range(1, order + 1):
        cur = kernel.diamond(_apply(L, cur), grid)
        out.append(SeriesTerm(n, grid, cur))
    return out


def dyson_term(kernel: DiamondKernel, L, n: int, grid: TimeGrid) -> SeriesTerm:
    return dyson_terms(kernel, L, n, grid)[-1]


# --------------------------------------------------------------------------
# bound estimators


@dataclass(frozen=True)
class DeltaEstimate:
    """Sampled, monotone estimate of the diamond bound ``delta(t)``."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.grid.nodes, self.values))


def mr_delta_estimate(kernel: DiamondKernel, grid: TimeGrid, probes: int = DEFAULT_PROBES,
                      seed: int = 0) -> DeltaEstimate:
    """Largest ``||(S ⋄ f)(t)||`` over random unit probes, made monotone by a running max."""
    if probes < 1:
        raise InvalidInput("probes must be >= 1")
    kernel.check_grid(grid)
    rng = np.random.default_rng(seed)
    f = kernel.random_probes(grid, probes, rng)
    y = kernel.diamond(f, grid)
    vals = np.maximum.accumulate(kernel.x0_norm(y).max(axis=1))
    vals[0] = 0.0
    return DeltaEstimate(grid, vals)


@dataclass(frozen=True)
class QuasiHYReport:
    M_hat: float
    omega_hat: float
    max_violation: float
    worst_probe: int
    worst_time: float


def quasi_hy_check(kernel: DiamondKernel, p: float, grid: TimeGrid, probes: int = DEFAULT_PROBES,
                   seed: int = 0, M_claim: Optional[float] = None, f=None) -> QuasiHYReport:
    """Smallest ``M`` with ``||(S ⋄ f)(t)|| <= M ||e^{w(t-.)} f||_{L^p(0,t)}`` over probes.

    ``max_violation`` compares against ``M_claim`` (kernel metadata by
    default); a nonpositive value means the claim held on every probe.
    """
    if not p >= 1:
        raise InvalidInput("p must be >= 1")
    kernel.check_grid(grid)
    w_hat = kernel.omega
    if f is None:
        f = kernel.random_probes(grid, probes, np.random.default_rng(seed))
    f, _ = _as_columns(f, grid.n_steps + 1, kernel.x_size)
    y = kernel.x0_norm(kernel.diamond(f, grid))
    fn = kernel.x_norm(f)  # (K+1, m)
    t = grid.nodes
    K = grid.n_steps
    denom = np.zeros_like(y)
    for k in range(1, K + 1):
        wts = trapezoid_weights(k, grid.dt)
        g = fn[: k + 1] * np.exp(w_hat * (t[k] - t[: k + 1]))[:, None]
        denom[k] = (wts @ g**p) ** (1 / p) if not math.isinf(p) else g.max(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(denom > 0, y / denom, 0.0)
    idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    M_hat = float(ratio[idx])
    claim = kernel.M if M_claim is None else M_claim
    viol = float(np.max(y - claim * denom)) if y.size else 0.0
    return QuasiHYReport(M_hat, w_hat, viol, int(idx[1]), float(t[idx[0]]))


# --------------------------------------------------------------------------
# perturbed semigroup


@dataclass(frozen=True)
class PerturbationResult:
    path: SemigroupPath
    samples: np.ndarray = field(repr=False)
    window_steps: int
    window: float
    ratio: float
    term_norms: tuple
    delta: DeltaEstimate = field(repr=False)
    L_norm: float


def _contraction_window(delta: DeltaEstimate, L_norm: float, r: float) -> int:
    if L_norm == 0:
        return delta.grid.n_steps
    ok = DELTA_SAFETY * delta.values * L_norm <= r
    ok[0] = True
    bad = np.nonzero(~ok)[0]
    m = (bad[0] - 1) if bad.size else delta.grid.n_steps
    return int(m)


def perturbed_semigroup_details(kernel: DiamondKernel, L, grid: TimeGrid, tol: float = 1e-12, *,
                                probes: int = DEFAULT_PROBES, seed: int = 0, max_terms: int = 200,
                                r: float = CONTRACTION_RATIO) -> PerturbationResult:
    """Solve ``W = T_{A0} + S_A ⋄ (L W)`` on a contraction window and chain it.

    The window map is linear in its seed, so after the first window the
    re-seeded problem with seed ``T_{A0}(.) W(d0)`` is ``W_win(.) W(d0)``.
    """
    L = _check_L(kernel, L)
    kernel.check_grid(grid)
    delta = mr_delta_estimate(kernel, grid, probes, seed)
    L_norm = kernel.operator_norm(L)
    m = _contraction_window(delta, L_norm, r)
    if m < 1:
        raise ContractionFailure(
            f"2*delta(dt)*||L|| = {DELTA_SAFETY * delta.values[1] * L_norm:.3g} exceeds {r} already at dt={grid.dt}"
        )
    win = TimeGrid(m * grid.dt, grid.dt)
    term = kernel.base_path(win)
    W = term.copy()
    norms = [float(np.max(kernel.map_norm(term)))]
    n = 0
    while True:
        n += 1
        term = kernel.diamond(_apply(L, term), win)
        W += term
        norms.append(float(np.max(kernel.map_norm(term))))
        if (norms[-1] <= tol and n >= 2) or n >= max_terms:
            break
    if norms[-1] > tol:
        raise ContractionFailure(f"series did not reach tol={tol} in {max_terms} terms")
    K = grid.n_steps
    out = np.empty((K + 1,) + W.shape[1:])
    out[: m + 1] = W
    start = m
    while start < K:
        span = min(m, K - start)
        out[start + 1 : start + span + 1] = np.einsum("kij,jl->kil", W[1 : span + 1], out[start])
        start += span
    path = SemigroupPath.from_samples(grid, out)
    return PerturbationResult(path, out, m, win.t_end, r, tuple(norms), delta, L_norm)


def perturbed_semigroup(kernel: DiamondKernel, L, grid: TimeGrid, tol: float = 1e-12, **kw) -> SemigroupPath:
    """Semigroup generated by the part of ``A + L`` in ``X0``, sampled on ``grid``."""
    return perturbed_semigroup_details(kernel, L, grid, tol, **kw).path


def fitted_ratio(norms) -> float:
    """Geometric ratio from a log-linear fit of positive term norms."""
    v = np.asarray(norms, dtype=float)
    idx = np.nonzero(v > 0)[0]
    if idx.size < 2:
        return 0.0
    slope = np.polyfit(idx, np.log(v[idx]), 1)[0]
    return float(np.exp(slope))


def classical_kernel(A) -> ClassicalKernel:
    return ClassicalKernel.from_generator(as_linear_map(A, "generator"))
