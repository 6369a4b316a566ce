"""Property-based checks of the structural laws."""

import math

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ndpert import age, core, dyson, spectral
from ndpert.errors import PreconditionViolation

SETTINGS = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])

entry = st.floats(-1.5, 1.5, allow_nan=False, allow_infinity=False)
matrix2 = arrays(np.float64, (2, 2), elements=entry)
time = st.floats(0.0, 2.0, allow_nan=False)


@SETTINGS
@given(matrix2, time, time)
def test_semigroup_law(A, t, s):
    T = core.SemigroupPath.from_generator(A)
    assert np.linalg.norm(T(t + s) - T(t) @ T(s), 2) <= 1e-9 * max(1.0, np.linalg.norm(T(t + s), 2))


@SETTINGS
@given(matrix2, st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_cocycle_law_constant_coefficients(A, x, y, z):
    U = core.build_evolution_family(A, 3.0, 0.05)
    s, tau, a = sorted((3 * x, 3 * y, 3 * z))
    assert U.cocycle_residual([(s, tau, a)]) <= 1e-8
    assert np.allclose(U(a, a), np.eye(2), atol=1e-14)


@SETTINGS
@given(matrix2, time, time)
def test_integrated_shift_identity(A, t, s):
    T = core.SemigroupPath.from_generator(A)
    S = core.IntegratedSemigroupPath.from_generator(A)
    assert np.linalg.norm(T(t) @ S(s) - S(t + s) + S(t), 2) <= 1e-6


@SETTINGS
@given(matrix2, arrays(np.float64, (3, 2), elements=entry))
def test_diamond_linear_and_bounded(A, coef):
    grid = core.TimeGrid(1.0, 0.01)
    k = dyson.ClassicalKernel.from_generator(A)
    t = grid.nodes[:, None]
    f = coef[0] + coef[1] * np.sin(3 * t) + coef[2] * np.cos(5 * t)
    y = k.diamond(f, grid)
    assert not np.any(y[0])
    sup = np.max(np.linalg.norm(f, axis=1))
    bound = np.array([k.delta_bound(s) for s in grid.nodes]) * sup
    assert np.all(np.linalg.norm(y, axis=1) <= bound * (1 + 1e-4) + 1e-14)
    assert np.allclose(k.diamond(-2.0 * f, grid), -2.0 * y)


@SETTINGS
@given(st.floats(-1.5, 1.0), st.floats(-1.0, 1.0))
def test_series_convolution_identity(a, l):
    grid = core.TimeGrid(1.0, 1e-3)
    terms = dyson.dyson_terms(dyson.ClassicalKernel.from_generator([[a]]), [[l]], 3, grid)
    for n in range(4):
        for i, j in ((100, 300), (250, 750), (500, 500)):
            rhs = sum(terms[k].samples[i] @ terms[n - k].samples[j] for k in range(n + 1))
            assert abs(terms[n].samples[i + j, 0, 0] - rhs[0, 0]) <= 1e-6


@SETTINGS
@given(matrix2, matrix2, st.floats(3.0, 10.0), st.floats(-5.0, 5.0))
def test_perturbed_resolvent_matches_inverse(A, L, re, im):
    lam = complex(re + np.linalg.norm(A, 2) + np.linalg.norm(L, 2), im)
    got = spectral.perturbed_resolvent(spectral.matrix_resolvent(A), L, lam)
    assert np.allclose(got, np.linalg.inv(lam * np.eye(2) - A - L), atol=1e-9)


@SETTINGS
@given(st.floats(-3.0, 3.0), st.floats(0.1, 10.0))
def test_growth_fit_recovers_rate(rate, scale):
    t = np.linspace(0.0, 10.0, 101)
    assert abs(spectral.growth_fit(scale * np.exp(rate * t), t).rate - rate) <= 1e-9


@SETTINGS
@given(st.floats(-1.0, 1.0), st.floats(0.01, 1.0), st.integers(0, 4))
def test_subconvolutive_certificate_holds(omega, margin, J):
    t = np.linspace(0.0, 10.0, 101)
    f = np.array([t**j * np.exp(omega * t) / math.factorial(j) for j in range(J + 1)])
    try:
        cert = spectral.subconvolutive_bound(f, omega + margin, t)
    except PreconditionViolation as exc:  # horizon may be too short for a small margin
        assert "horizon too short" in str(exc)
        return
    assert np.all(f <= np.array(cert.M)[:, None] * np.exp(cert.gamma * t) * (1 + 1e-9))


@SETTINGS
@given(st.one_of(st.none(), st.floats(-2.0, 2.0)), st.floats(-2.0, 2.0),
       st.sampled_from([None, True, False]), st.sampled_from([None, True, False]), st.sampled_from(["ess", "crit"]))
def test_classification_is_pure_and_sign_consistent(s, omega_U, finite_c, compact, mode):
    h = spectral.Hypotheses(finite_c=finite_c, compact_L=compact)
    a = spectral.classify(s, spectral.transfer_report(omega_U, mode, h))
    b = spectral.classify(s, spectral.transfer_report(omega_U, mode, h))
    assert a == b
    if a == "stable":
        assert s is None or s < 0
    if a == "unstable":
        assert s is not None and s > 0


@SETTINGS
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), arrays(np.float64, 21, elements=st.floats(0.0, 2.0)))
def test_positivity_scalar(mu, beta, u0):
    spec = age.scalar_spec(mu, beta, 2.0, 0.1, 4.0, u0=u0)
    assert age.solve_renewal(spec).field.min() >= 0.0
    assert age.upwind_oracle(spec).field.min() >= 0.0


@SETTINGS
@given(st.floats(-0.5, 1.0), arrays(np.float64, 21, elements=st.floats(-2.0, 2.0)))
def test_nilpotency_without_births(mu, u0):
    spec = age.scalar_spec(mu, 0.0, 2.0, 0.1, 3.0, u0=u0)
    res = age.solve_renewal(spec)
    assert np.all(res.norms[res.times > spec.c + 1e-12] == 0.0)


@SETTINGS
@given(st.floats(0.0, 1.0), st.floats(0.1, 2.0), st.floats(1.05, 2.0))
def test_dominant_root_increases_with_fertility(mu, beta, factor):
    roots = []
    for b in (beta, beta * factor):
        spec = age.scalar_spec(mu, b, 2.0, 0.05, 0.0)
        roots.append(spectral.expanding_lotka_roots(spec.family, spec.kernel, (-1.0, 1.0))[0][-1])
    assert roots[1] > roots[0]


@SETTINGS
@given(st.floats(0.1, 1.0), st.floats(0.1, 1.0), st.floats(0.2, 3.0))
def test_first_resolvent_power_closed_form(mu, y, lam_gap):
    spec = age.scalar_spec(mu, 0.0, 2.0, 0.05, 0.0)
    lam = -mu + lam_gap
    assume(lam > spec.family.omega + 1e-6)
    got = age.resolvent_power(spec, lam, 1, [y], np.zeros(41))[:, 0]
    assert np.allclose(got, y * np.exp(-(lam + mu) * spec.ages), rtol=1e-9)
