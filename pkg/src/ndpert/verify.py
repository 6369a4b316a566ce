"""Invariant suite run by ``ndpert verify``.

Each check is a small deterministic computation on a built-in case and
returns the measured residual next to its threshold. Output is TAP.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import age, core, dyson, spectral
from .errors import NdpertError


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass
class Context:
    seed: int = 0
    break_cocycle: bool = False
    _cache: dict = dataclasses.field(default_factory=dict)

    def rng(self, salt: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def random_pair(self):
        if "pair" not in self._cache:
            rng = self.rng(1)
            A = rng.standard_normal((2, 2))
            L = rng.standard_normal((2, 2))
            self._cache["pair"] = (A / np.linalg.norm(A, 2), L / np.linalg.norm(L, 2))
        return self._cache["pair"]

    def family(self, coeffs, c, da, key):
        if key not in self._cache:
            U = core.build_evolution_family(coeffs, c, da)
            if self.break_cocycle:
                P = np.array(U.step_propagators)
                P[P.shape[0] // 2] *= 1.01
                P.setflags(write=False)
                U = dataclasses.replace(U, step_propagators=P)
            self._cache[key] = U
        return self._cache[key]

    def scalar_spec(self, mu, beta, c, da, t_end, key):
        spec = age.scalar_spec(mu, beta, c, da, t_end)
        U = self.family(np.array([[-float(mu)]]), c, da, ("fam", key))
        return spec.with_family(U)


def _le(name, value, threshold, detail=""):
    return CheckResult(name, bool(value <= threshold), float(value), float(threshold), detail)


# --------------------------------------------------------------------------
# semigroup core


def check_semigroup_law(ctx):
    A, _ = ctx.random_pair()
    T = core.SemigroupPath.from_generator(A)
    ts = np.linspace(0.0, 2.0, 10)
    return _le("semigroup law, closed-form 2x2 path", T.law_residual(ts, ts), 1e-9)


def check_cocycle_constant(ctx):
    U = ctx.family(np.array([[-0.5, 0.2], [0.1, -0.3]]), 4.0, 0.05, "const")
    triples = [(s, tau, a) for s in (0.0, 0.35, 1.0) for tau in (1.02, 2.013) for a in (2.5, 3.95) if s <= tau <= a]
    res = U.cocycle_residual(triples)
    eye = max(float(np.linalg.norm(U(a, a) - np.eye(2), 2)) for a in (0.0, 1.3, 4.0))
    return _le("cocycle law and U(a,a)=I, constant coefficients", max(res, eye), 1e-8)


def check_cocycle_integrated(ctx):
    U = ctx.family(lambda a: -a * np.eye(1), 3.0, 0.02, "ramp")
    triples = [(s, tau, a) for s in (0.0, 0.5) for tau in (0.777, 1.5051) for a in (2.0, 2.99)]
    res = U.cocycle_residual(triples)
    exact = max(abs(U(a, s)[0, 0] - math.exp(-(a * a - s * s) / 2)) for s, _, a in triples)
    return _le("cocycle law, age-dependent coefficients", max(res, exact), 1e-6)


def check_composition_identity(ctx):
    worst = 0.0
    for A in ([[-0.7]], [[-1.0, 0.5], [0.2, -0.3]]):
        S = core.IntegratedSemigroupPath.from_generator(A)
        for t, s in ((0.5, 0.3), (1.0, 0.7), (1.3, 1.1)):
            worst = max(worst, S.composition_residual(t, s, h=1e-3))
    return _le("integrated semigroup composition identity", worst, 1e-6)


def check_semigroup_integrated_shift(ctx):
    A, _ = ctx.random_pair()
    T = core.SemigroupPath.from_generator(A)
    S = core.IntegratedSemigroupPath.from_generator(A)
    worst = 0.0
    for t in np.linspace(0, 2, 5):
        for s in np.linspace(0, 2, 5):
            worst = max(worst, float(np.linalg.norm(T(t) @ S(s) - S(t + s) + S(t), 2)))
    return _le("T(t)S(s) = S(t+s) - S(t)", worst, 1e-6)


def check_resolvent_identity(ctx):
    A = np.array([[-1.0, 0.5], [0.2, -0.3]])
    S = core.IntegratedSemigroupPath.from_generator(A)
    worst = 0.0
    for lam, mu in ((1.0, 2.5), (0.5, 4.0)):
        Rl, Rm = core.laplace_resolvent(S, lam, tol=1e-9), core.laplace_resolvent(S, mu, tol=1e-9)
        worst = max(worst, float(np.linalg.norm(Rl - Rm - (mu - lam) * Rl @ Rm, 2)))
    return _le("resolvent identity from Laplace transforms", worst, 1e-7)


def check_howland_resolvent(ctx):
    U = ctx.family(np.array([[-0.5]]), 2.0, 0.01, "howl")
    lam = 1.0
    got = core.howland_resolvent(U, lam, np.ones(U.n_steps + 1))
    exact = -np.expm1(-(lam + 0.5) * U.ages) / (lam + 0.5)
    return _le("transport resolvent against closed form", float(np.max(np.abs(got - exact))), 1e-4)


# --------------------------------------------------------------------------
# Dyson–Phillips


def check_convolution_identity(ctx):
    worst = 0.0
    A, L = ctx.random_pair()
    grid = core.TimeGrid(2.0, 1e-3)
    for Ak, Lk in ((np.array([[-0.8]]), np.array([[0.6]])), (A, L)):
        terms = dyson.dyson_terms(dyson.ClassicalKernel.from_generator(Ak), Lk, 3, grid)
        for n in range(4):
            for i in range(0, 1001, 125):
                for j in range(0, 1001 - i, 125):
                    rhs = sum(terms[k].samples[i] @ terms[n - k].samples[j] for k in range(n + 1))
                    worst = max(worst, float(np.max(np.abs(terms[n].samples[i + j] - rhs))))
    return _le("series convolution identity, n <= 3", worst, 1e-6)


def check_fixed_equation(ctx):
    A, L = ctx.random_pair()
    k = dyson.ClassicalKernel.from_generator(A)
    grid = core.TimeGrid(1.0, 1e-3)
    tol = 1e-12
    W = dyson.perturbed_semigroup_details(k, L, grid, tol, seed=ctx.seed).samples
    res = W - k.base_path(grid) - k.diamond(np.einsum("ij,kjl->kil", L, W), grid)
    return _le("perturbed semigroup solves the fixed equation", float(np.max(np.abs(res))), 10 * tol + 1e-12)


def check_splitting(ctx):
    A, _ = ctx.random_pair()
    k = dyson.ClassicalKernel.from_generator(A)
    grid = core.TimeGrid(2.0, 1e-3)
    t = grid.nodes
    f = np.stack([np.sin(3 * t), np.cos(t) * t], axis=1)
    y = k.diamond(f, grid)
    T = k.base_path(grid)
    worst = 0.0
    for i in (300, 1000, 1500):
        sub = core.TimeGrid(grid.t_end - t[i], grid.dt)
        ys = k.diamond(f[i:], sub)
        for j in range(i, grid.n_steps + 1, 250):
            worst = max(worst, float(np.max(np.abs(y[j] - T[j - i] @ y[i] - ys[j - i]))))
    return _le("diamond splits at an intermediate time", worst, 1e-6)


def check_laplace_identity(ctx):
    A, L = ctx.random_pair()
    k = dyson.ClassicalKernel.from_generator(A)
    grid = core.TimeGrid(30.0, 1e-3)
    terms = dyson.dyson_terms(k, L, 2, grid)
    lam = k.omega + 1.5
    w = core.trapezoid_weights(grid.n_steps, grid.dt) * np.exp(-lam * grid.nodes)
    R = np.linalg.inv(lam * np.eye(2) - A)
    worst = max(
        float(np.max(np.abs(np.tensordot(w, terms[n].samples, axes=(0, 0)) - np.linalg.matrix_power(R @ L, n) @ R)))
        for n in range(3)
    )
    return _le("Laplace transform of series terms, n <= 2", worst, 1e-5)


def check_truncation_decay(ctx):
    A, L = ctx.random_pair()
    k = dyson.ClassicalKernel.from_generator(A)
    det = dyson.perturbed_semigroup_details(k, L, core.TimeGrid(1.0, 1e-3), 1e-12, seed=ctx.seed)
    r = dyson.DELTA_SAFETY * det.delta(det.window) * det.L_norm
    ratio = dyson.fitted_ratio(det.term_norms)
    return _le("series terms decay at most at the contraction ratio", ratio / r, 1.15,
               f"fitted ratio {ratio:.3g}, window ratio {r:.3g}")


def check_delta_bound(ctx):
    A, _ = ctx.random_pair()
    k = dyson.ClassicalKernel.from_generator(A)
    grid = core.TimeGrid(1.0, 1e-3)
    est = dyson.mr_delta_estimate(k, grid, seed=ctx.seed)
    bound = np.array([k.delta_bound(t) for t in grid.nodes])
    return _le("probe estimate of delta within the growth bound", float(np.max(est.values - bound)), 1e-12)


# --------------------------------------------------------------------------
# spectral


def check_perturbed_resolvent(ctx):
    A, L = ctx.random_pair()
    worst = 0.0
    for lam in (3.0, 2.5 + 1.0j, 5.0):
        got = spectral.perturbed_resolvent(spectral.matrix_resolvent(A), L, lam)
        worst = max(worst, float(np.max(np.abs(got - np.linalg.inv(lam * np.eye(2) - A - L)))))
    return _le("perturbed resolvent matches direct inverse", worst, 1e-9)


def check_lotka(ctx):
    rows = []
    for da in (0.1, 0.05, 0.025):
        spec = ctx.scalar_spec(0.2, 0.5, 4.0, da, 0.0, ("lotka", da))
        g = spectral.characteristic_function(spec.family, spec.kernel)
        r = spectral.lotka_roots(spec.family, spec.kernel, (-1, 1))[-1]
        rows.append((r, abs(g(r))))
    resid = max(v for _, v in rows)
    m1, m2 = abs(rows[1][0] - rows[0][0]), abs(rows[2][0] - rows[1][0])
    ok = resid <= 1e-12 and m2 <= m1
    return CheckResult("characteristic root residual and refinement", ok, resid, 1e-12,
                       f"movements {m1:.3g} -> {m2:.3g}")


def check_scan(ctx):
    sc = spectral.resolvent_decay_scan(spectral.matrix_resolvent(np.diag([-1.0, -2.0])),
                                       spectral.ScanPath("imaginary"), (10.0, 1000.0), 48)
    return _le("imaginary-axis decay exponent of diag(-1,-2)", abs(sc.beta_hat - 1.0), 0.02)


def check_subconvolutive(ctx):
    t = np.linspace(0.0, 20.0, 201)
    om = 0.3
    f = np.array([t**j * np.exp(om * t) / math.factorial(j) for j in range(4)])
    cert = spectral.subconvolutive_bound(f, om + 0.1, t)
    excess = float(np.max(f - np.array(cert.M)[:, None] * np.exp(cert.gamma * t)[None, :]))
    return _le("subconvolutive certificates hold at every node", excess, 0.0)


def check_report_logic(ctx):
    h = spectral.Hypotheses(finite_c=True, compact_L=True)
    a = spectral.classify(-0.3, spectral.transfer_report(-0.1, "ess", h))
    b = spectral.classify(-0.3, spectral.transfer_report(-0.1, "ess", h))
    c = spectral.classify(0.2, spectral.transfer_report(-0.1, "ess", h))
    d = spectral.classify(-0.3, spectral.transfer_report(-0.1, "ess", spectral.Hypotheses()))
    ok = (a, b, c, d) == ("stable", "stable", "unstable", "inconclusive")
    return CheckResult("classification is a pure function of its inputs", ok, float(not ok), 0.0)


# --------------------------------------------------------------------------
# age model


def check_mild_consistency(ctx):
    spec = ctx.scalar_spec(0.3, 0.6, 4.0, 0.02, 3.0, "mild")
    res = age.solve_renewal(spec)
    U = spec.family
    worst = 0.0
    for n in range(0, spec.grid.n_steps + 1, 10):
        k = np.arange(n, spec.n_ages)
        pred = np.array([U(spec.ages[j], spec.ages[j - n]) @ spec.u0[j - n] for j in k])
        worst = max(worst, float(np.max(np.abs(res.field[n, k] - pred))))
    return _le("field equals transported initial data above the diagonal", worst, 1e-12)


def check_renewal_upwind(ctx):
    errs = []
    for n in (20, 40, 80):
        spec = ctx.scalar_spec(0.2, 0.5, 4.0, 1.0 / n, 10.0, ("conv", n))
        errs.append(float(np.max(np.abs(age.solve_renewal(spec).field[-1] - age.upwind_oracle(spec).field[-1]))))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    ok = all(1.6 <= r <= 2.4 for r in ratios)
    return CheckResult("renewal/upwind gap halves under refinement", ok, min(ratios), 1.6,
                       "ratios " + ", ".join(f"{r:.3f}" for r in ratios))


def check_growth_coherence(ctx):
    spec = ctx.scalar_spec(0.2, 0.5, 4.0, 0.01, 40.0, "growth")
    res = age.solve_renewal(spec)
    rate = spectral.growth_fit(res.norms, res.times).rate
    root = spectral.lotka_roots(spec.family, spec.kernel, (-1, 1))[-1]
    return _le("fitted growth rate matches dominant root", abs(rate - root), 5e-3)


def check_positivity(ctx):
    coeff = lambda a: np.array([[-0.5, 0.3], [0.2, -0.4 - 0.1 * a]])  # noqa: E731
    c, da = 3.0, 0.03
    kernel = age.BoundaryKernel.constant(np.array([[0.2, 0.4], [0.1, 0.3]]), c, da, 2)
    ages = np.arange(101) * da
    u0 = np.stack([np.exp(-ages), (ages < 1.5).astype(float)], axis=1)
    spec = age.AgeModelSpec(c, 1.0, 2, coeff, kernel, u0, da, da, 6.0)
    spec = spec.with_family(ctx.family(coeff, c, da, "metzler"))
    res = age.solve_renewal(spec)
    return _le("nonnegative data give a nonnegative field", -float(res.field.min()), 0.0)


def check_nilpotency(ctx):
    spec = ctx.scalar_spec(0.3, 0.0, 2.0, 0.02, 3.0, "nil")
    res = age.solve_renewal(spec)
    tail = res.norms[res.times > spec.c + 1e-12]
    return _le("transport without births vanishes after the max age", float(np.max(np.abs(tail))), 0.0)


CHECKS: tuple = (
    check_semigroup_law,
    check_cocycle_constant,
    check_cocycle_integrated,
    check_composition_identity,
    check_semigroup_integrated_shift,
    check_resolvent_identity,
    check_howland_resolvent,
    check_convolution_identity,
    check_fixed_equation,
    check_splitting,
    check_laplace_identity,
    check_truncation_decay,
    check_delta_bound,
    check_perturbed_resolvent,
    check_lotka,
    check_scan,
    check_subconvolutive,
    check_report_logic,
    check_mild_consistency,
    check_renewal_upwind,
    check_growth_coherence,
    check_positivity,
    check_nilpotency,
)


def run_suite(seed: int = 0, break_cocycle: bool = False, emit: Optional[Callable[[str], None]] = print,
              checks=CHECKS) -> list:
    """Run every check and emit TAP lines; returns the results."""
    ctx = Context(seed=seed, break_cocycle=break_cocycle)
    results = []
    if emit:
        emit("TAP version 13")
        emit(f"1..{len(checks)}")
    for i, check in enumerate(checks, 1):
        try:
            r = check(ctx)
        except (NdpertError, ValueError, np.linalg.LinAlgError) as exc:
            r = CheckResult(check.__name__[6:].replace("_", " "), False, math.nan, math.nan,
                            f"{type(exc).__name__}: {exc}")
        results.append(r)
        if emit:
            status = "ok" if r.ok else "not ok"
            emit(f"{status} {i} - {r.name}")
            emit(f"  # value={r.value:.6g} threshold={r.threshold:.6g}" + (f" {r.detail}" if r.detail else ""))
    return results
