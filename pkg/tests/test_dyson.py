import math

import numpy as np
import pytest
from scipy.linalg import expm

from ndpert import age, core, dyson
from ndpert.errors import ContractionFailure, InvalidInput

GRID = core.TimeGrid(2.0, 1e-3)


def scalar_kernel(a):
    return dyson.ClassicalKernel.from_generator([[a]])


# --- diamond --------------------------------------------------------------------

def test_diamond_of_zero_is_zero():
    k = scalar_kernel(-0.3)
    assert not np.any(k.diamond(np.zeros((GRID.n_steps + 1, 1)), GRID))


def test_diamond_zero_generator_integrates():
    out = scalar_kernel(0.0).diamond(np.ones((GRID.n_steps + 1, 1)), GRID)
    assert np.allclose(out[:, 0], GRID.nodes, atol=1e-12)


def test_diamond_is_linear(rng):
    A = rng.standard_normal((2, 2))
    k = dyson.ClassicalKernel.from_generator(A)
    f = rng.standard_normal((GRID.n_steps + 1, 2))
    g = rng.standard_normal((GRID.n_steps + 1, 2))
    lhs = k.diamond(2.0 * f - 3.0 * g, GRID)
    rhs = 2.0 * k.diamond(f, GRID) - 3.0 * k.diamond(g, GRID)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_diamond_second_order_against_closed_form():
    # (S ⋄ 1)(t) = (e^{at} - 1)/a
    a = -0.8
    errs = []
    for dt in (1e-2, 5e-3):
        g = core.TimeGrid(2.0, dt)
        out = scalar_kernel(a).diamond(np.ones((g.n_steps + 1, 1)), g)[:, 0]
        errs.append(np.max(np.abs(out - np.expm1(a * g.nodes) / a)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_age_diamond_boundary_input():
    mu, da = 0.4, 0.05
    U = core.build_evolution_family(np.array([[-mu]]), 3.0, da)
    k = dyson.AgeModelKernel(U)
    grid = core.TimeGrid(2.0, da)
    f = np.zeros((grid.n_steps + 1, k.x_size))
    f[:, 0] = 1.0
    out = k.diamond(f, grid)
    ages = U.ages
    for n in (10, 25, 40):
        t = grid.nodes[n]
        expect = np.where(ages < t - 1e-12, np.exp(-mu * ages), 0.0)
        assert np.allclose(out[n], expect, atol=1e-12)


def test_age_kernel_rejects_mismatched_grid():
    U = core.build_evolution_family(np.array([[-0.4]]), 1.0, 0.05)
    with pytest.raises(InvalidInput):
        dyson.AgeModelKernel(U).diamond(np.zeros((21, 22)), core.TimeGrid(1.0, 0.05 / 2))


def test_diamond_shape_mismatch():
    with pytest.raises(InvalidInput):
        scalar_kernel(-1.0).diamond(np.zeros((5, 1)), GRID)


# --- series terms ---------------------------------------------------------------

def test_zeroth_term_is_base_semigroup(rng):
    A = rng.standard_normal((2, 2))
    k = dyson.ClassicalKernel.from_generator(A)
    t0 = dyson.dyson_term(k, np.zeros((2, 2)), 0, GRID)
    assert np.allclose(t0.samples[-1], expm(2.0 * A), atol=1e-12)


def test_first_term_vanishes_without_perturbation(rng):
    k = dyson.ClassicalKernel.from_generator(rng.standard_normal((2, 2)))
    assert not np.any(dyson.dyson_term(k, np.zeros((2, 2)), 1, GRID).samples)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_scalar_terms_closed_form(n):
    a, l = -1.0, 0.5
    term = dyson.dyson_term(scalar_kernel(a), [[l]], n, GRID)
    t = GRID.nodes
    exact = (l * t) ** n * np.exp(a * t) / math.factorial(n)
    assert np.max(np.abs(term.samples[:, 0, 0] - exact)) <= 1e-6
    assert term.samples[0, 0, 0] == 0.0


def test_terms_reject_bad_perturbation():
    with pytest.raises(InvalidInput):
        dyson.dyson_terms(scalar_kernel(-1.0), np.eye(2), 2, GRID)
    with pytest.raises(InvalidInput):
        dyson.dyson_terms(scalar_kernel(-1.0), [[1.0]], -1, GRID)


# --- perturbed semigroup ----------------------------------------------------------

def test_perturbed_without_perturbation_is_base(rng):
    A = rng.standard_normal((2, 2))
    k = dyson.ClassicalKernel.from_generator(A)
    W = dyson.perturbed_semigroup(k, np.zeros((2, 2)), GRID)
    assert np.allclose(W(1.5), expm(1.5 * A), atol=1e-12)


def test_perturbed_scalar_is_shifted_exponential():
    W = dyson.perturbed_semigroup(scalar_kernel(-1.0), [[0.7]], GRID)
    t = GRID.nodes
    assert np.max(np.abs(W.samples[:, 0, 0] - np.exp(-0.3 * t))) <= 1e-6


def test_perturbed_chains_beyond_window():
    det = dyson.perturbed_semigroup_details(scalar_kernel(0.5), [[3.0]], core.TimeGrid(3.0, 1e-3))
    assert det.window < 3.0
    assert det.path(3.0)[0, 0] == pytest.approx(math.exp(3.5 * 3.0), rel=1e-5)


def test_perturbed_contraction_failure():
    with pytest.raises(ContractionFailure):
        dyson.perturbed_semigroup(scalar_kernel(0.0), [[1e4]], core.TimeGrid(1.0, 0.1))


def test_truncation_ratio_within_window_ratio(rng):
    A = rng.standard_normal((2, 2))
    L = rng.standard_normal((2, 2))
    k = dyson.ClassicalKernel.from_generator(A)
    det = dyson.perturbed_semigroup_details(k, L, core.TimeGrid(1.0, 1e-3))
    r = dyson.DELTA_SAFETY * det.delta(det.window) * det.L_norm
    assert r <= dyson.CONTRACTION_RATIO + 1e-12
    assert dyson.fitted_ratio(det.term_norms) <= 1.15 * r


def test_age_fixed_point_reproduces_renewal_solver():
    spec = age.scalar_spec(0.2, 0.5, 2.0, 0.05, 3.0)
    k = dyson.AgeModelKernel(spec.family, 1.0)
    W = dyson.perturbed_semigroup_details(k, spec.boundary_operator(), spec.grid).samples
    res = age.solve_renewal(spec)
    pred = np.einsum("kij,j->ki", W, spec.u0[:, 0])
    assert np.max(np.abs(pred - res.field[:, :, 0])) <= 1e-10


# --- bound estimators -------------------------------------------------------------

def test_delta_estimate_below_growth_bound(rng):
    k = dyson.ClassicalKernel.from_generator(rng.standard_normal((3, 3)))
    est = dyson.mr_delta_estimate(k, GRID, probes=8, seed=1)
    assert est.values[0] == 0.0
    assert np.all(np.diff(est.values) >= 0)
    bound = np.array([k.delta_bound(t) for t in GRID.nodes])
    assert np.all(est.values <= bound + 1e-12)


def test_delta_estimate_age_model_vanishes_at_zero():
    spec = age.scalar_spec(1.0, 0.0, 2.0, 0.02, 2.0)
    k = dyson.AgeModelKernel(spec.family)
    est = dyson.mr_delta_estimate(k, spec.grid)
    assert est.values[0] == 0.0
    assert est.values[1] <= 0.05
    assert np.all(np.diff(est.values) >= 0)


def test_delta_estimate_is_seeded(rng):
    k = dyson.ClassicalKernel.from_generator(rng.standard_normal((2, 2)))
    a = dyson.mr_delta_estimate(k, GRID, seed=4).values
    b = dyson.mr_delta_estimate(k, GRID, seed=4).values
    assert np.array_equal(a, b)


def test_quasi_hy_zero_probe_is_vacuous():
    k = scalar_kernel(-1.0)
    rep = dyson.quasi_hy_check(k, 1.0, GRID, f=np.zeros((GRID.n_steps + 1, 1, 1)))
    assert rep.M_hat == 0.0 and rep.max_violation <= 0.0


def test_quasi_hy_classical_young_constant():
    # constant input: (S ⋄ 1)(t) equals the weighted L^1 norm, so M_hat = sup ||T|| e^{-wt} = 1
    k = scalar_kernel(-1.0)
    rep = dyson.quasi_hy_check(k, 1.0, GRID, f=np.ones((GRID.n_steps + 1, 1, 1)))
    assert rep.M_hat == pytest.approx(1.0, abs=1e-6)
    assert dyson.quasi_hy_check(k, 1.0, GRID, probes=8).max_violation <= 1e-12


def test_quasi_hy_age_model_stable_under_refinement():
    vals = []
    for da in (0.04, 0.02, 0.01):
        spec = age.scalar_spec(1.0, 0.0, 2.0, da, 2.0, p=2.0)
        k = dyson.AgeModelKernel(spec.family, 2.0)
        vals.append(dyson.quasi_hy_check(k, 2.0, spec.grid, probes=8, seed=0).M_hat)
    assert all(math.isfinite(v) for v in vals)
    assert abs(vals[2] - vals[1]) <= abs(vals[1] - vals[0]) + 0.05 * vals[1]
