import math
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from ndpert import core
from ndpert.errors import GridAlignmentWarning, InvalidInput, ResolventDomainError


# --- TimeGrid and helpers ---------------------------------------------------

def test_time_grid_nodes_are_uniform():
    g = core.TimeGrid(2.0, 0.25)
    assert g.n_steps == 8
    assert np.allclose(np.diff(g.nodes), 0.25)
    assert g.nodes[0] == 0.0 and g.nodes[-1] == 2.0
    assert g.index(1.5) == 6


@pytest.mark.parametrize("t_end, dt", [(1.0, 0.0), (1.0, -0.1), (1.0, 0.3)])
def test_time_grid_rejects_bad_steps(t_end, dt):
    with pytest.raises(InvalidInput):
        core.TimeGrid(t_end, dt)


def test_time_grid_index_off_node():
    with pytest.raises(InvalidInput):
        core.TimeGrid(1.0, 0.1).index(0.15)


def test_trapezoid_weights_integrate_linear_exactly():
    w = core.trapezoid_weights(10, 0.1)
    x = np.linspace(0, 1, 11)
    assert w.sum() == pytest.approx(1.0)
    assert w @ (3 * x + 1) == pytest.approx(2.5)


def test_lp_norm_matches_trapezoid():
    da = 0.01
    a = np.arange(101) * da
    prof = np.exp(-a)[:, None]
    assert core.lp_norm(prof, da, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-4)
    assert core.lp_norm(prof, da, 2.0) == pytest.approx(math.sqrt((1 - math.exp(-2)) / 2), rel=1e-4)


# --- matrix_semigroup ---------------------------------------------------------

def test_matrix_semigroup_zero_generator_is_identity():
    assert np.array_equal(core.matrix_semigroup(np.zeros((3, 3)), 5.0), np.eye(3))


def test_matrix_semigroup_scalar_exponential():
    assert core.matrix_semigroup([[-1.0]], 1.0)[0, 0] == pytest.approx(math.exp(-1), rel=1e-14)


def test_matrix_semigroup_nilpotent_against_taylor():
    N = np.array([[0.0, 1.0], [0.0, 0.0]])
    taylor = np.eye(2) + 2.0 * N  # higher terms vanish
    assert np.allclose(core.matrix_semigroup(N, 2.0), taylor, atol=1e-15, rtol=0)
    assert np.array_equal(taylor, [[1, 2], [0, 1]])


def test_matrix_semigroup_rejects_non_finite():
    with pytest.raises(InvalidInput):
        core.matrix_semigroup([[np.nan]], 1.0)
    with pytest.raises(InvalidInput):
        core.matrix_semigroup([[1.0]], -1.0)


def test_semigroup_path_bound_and_identity(rng):
    A = rng.standard_normal((3, 3))
    T = core.SemigroupPath.from_generator(A)
    assert np.allclose(T(0.0), np.eye(3))
    for t in np.linspace(0, 3, 7):
        assert np.linalg.norm(T(t), 2) <= T.M * math.exp(T.omega * t) * (1 + 1e-12)


def test_semigroup_sample_matches_pointwise(rng):
    A = rng.standard_normal((2, 2))
    T = core.SemigroupPath.from_generator(A)
    ts = np.linspace(0.3, 2.3, 401)
    S = T.sample(ts)
    for k in (0, 77, 400):
        assert np.allclose(S[k], T(ts[k]), atol=1e-12)


def test_semigroup_from_samples_interpolates():
    g = core.TimeGrid(1.0, 0.5)
    P = core.SemigroupPath.from_samples(g, np.array([[[1.0]], [[2.0]], [[4.0]]]))
    assert P(0.25)[0, 0] == pytest.approx(1.5)
    with pytest.raises(InvalidInput):
        P(2.0)


# --- evolution families -------------------------------------------------------

def test_constant_mortality_family_is_exponential():
    U = core.build_evolution_family(np.array([[-1.0]]), 4.0, 0.05)
    for a, s in ((1.0, 0.0), (3.95, 0.35), (2.0, 2.0)):
        assert U(a, s)[0, 0] == pytest.approx(math.exp(-(a - s)), rel=1e-9)


def test_zero_coefficients_give_identity_family():
    U = core.build_evolution_family(np.zeros((2, 2)), 2.0, 0.1)
    assert np.allclose(U(1.7, 0.3), np.eye(2), atol=1e-15)


def test_ramp_family_against_quadrature():
    U = core.build_evolution_family(lambda a: -a * np.eye(2), 3.0, 0.02)
    for a, s in ((2.0, 0.0), (2.99, 0.5), (1.505, 0.777)):
        integral, _ = quad(lambda r: r, s, a)
        assert np.allclose(U(a, s), math.exp(-integral) * np.eye(2), atol=1e-9)


def test_family_growth_metadata_bounds_norms():
    A = np.array([[-0.5, 0.3], [0.2, -0.4]])
    U = core.build_evolution_family(A, 4.0, 0.1)
    for a, s in ((4.0, 0.0), (3.0, 2.5), (1.0, 0.0)):
        assert np.linalg.norm(U(a, s), 2) <= U.C * math.exp(U.omega * (a - s)) * (1 + 1e-9)


def test_family_rejects_unbounded_coefficients():
    with pytest.raises(InvalidInput):
        core.build_evolution_family(lambda a: np.array([[np.inf]]), 1.0, 0.1)


# --- Howland transport --------------------------------------------------------

def _mortality_family(mu=0.5, c=2.0, da=0.01):
    return core.build_evolution_family(np.array([[-mu]]), c, da)


def test_howland_identity_at_zero():
    U = _mortality_family()
    phi = np.sin(U.ages)
    assert np.array_equal(core.howland_apply(U, phi, 0.0), phi)


def test_howland_shift_on_grid():
    mu, U = 0.5, _mortality_family()
    t = 0.7
    out = core.howland_apply(U, np.ones(U.n_steps + 1), t)
    above = U.ages >= t - 1e-12
    assert np.allclose(out[above], math.exp(-mu * t), rtol=1e-11)
    assert np.all(out[~above] == 0.0)


def test_howland_past_max_age_is_zero():
    U = _mortality_family()
    assert not np.any(core.howland_apply(U, np.ones(U.n_steps + 1), 2.5))


def test_howland_off_grid_warns_and_interpolates():
    mu, U = 0.5, _mortality_family()
    with pytest.warns(GridAlignmentWarning):
        out = core.howland_apply(U, np.ones(U.n_steps + 1), 0.705)
    assert out[-1] == pytest.approx(math.exp(-mu * 0.705), rel=1e-6)


def test_howland_negative_time_rejected():
    with pytest.raises(InvalidInput):
        core.howland_apply(_mortality_family(), np.ones(201), -0.1)


def test_howland_resolvent_zero_input():
    U = _mortality_family()
    assert not np.any(core.howland_resolvent(U, 1.0, np.zeros(U.n_steps + 1)))


def test_howland_resolvent_pure_transport_closed_form():
    U = core.build_evolution_family(np.zeros((1, 1)), 2.0, 0.01)
    lam = 0.8
    got = core.howland_resolvent(U, lam, np.ones(U.n_steps + 1))
    assert np.allclose(got, (1 - np.exp(-lam * U.ages)) / lam, atol=2e-5)


def test_howland_resolvent_second_order_refinement():
    errs = []
    for da in (0.02, 0.01):
        U = core.build_evolution_family(np.zeros((1, 1)), 2.0, da)
        got = core.howland_resolvent(U, 0.8, np.ones(U.n_steps + 1))
        errs.append(np.max(np.abs(got - (1 - np.exp(-0.8 * U.ages)) / 0.8)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_howland_resolvent_equals_laplace_of_transport():
    U = _mortality_family(0.5, 2.0, 0.02)
    lam = 1.0
    f = np.cos(U.ages)
    # T0(t) vanishes for t > c, so the Laplace integral stops at c
    times = np.arange(U.n_steps + 1) * U.da
    shifted = np.array([core.howland_apply(U, f, t) for t in times])
    # the integrand jumps at t = a; trapezoid needs the midpoint value there
    # (except at a = c, where the jump sits on the endpoint)
    idx = np.arange(U.n_steps)
    shifted[idx, idx] *= 0.5
    w = core.trapezoid_weights(U.n_steps, U.da) * np.exp(-lam * times)
    laplace = w @ shifted
    got = core.howland_resolvent(U, lam, f)
    # at a = 0 the integration interval is a single point
    assert got[0] == 0.0
    assert np.allclose(got[1:], laplace[1:], atol=1e-12)


def test_howland_resolvent_domain():
    with pytest.raises(ResolventDomainError):
        core.howland_resolvent(_mortality_family(0.5), -0.6, np.ones(201))


# --- integrated semigroups ----------------------------------------------------

def test_integrated_from_semigroup_scalar():
    a = -0.7
    T = core.SemigroupPath.from_generator([[a]])
    mu = 2.0
    S = core.integrated_from_semigroup(T, [[1 / (mu - a)]], mu, 1.3)
    assert S[0, 0] == pytest.approx((math.exp(a * 1.3) - 1) / a, abs=1e-8)
    assert not np.any(core.integrated_from_semigroup(T, [[1 / (mu - a)]], mu, 0.0))


def test_integrated_from_semigroup_independent_of_mu(rng):
    A = rng.standard_normal((2, 2))
    T = core.SemigroupPath.from_generator(A)
    vals = []
    for mu in (5.0, 9.0):
        R = np.linalg.inv(mu * np.eye(2) - A)
        vals.append(core.integrated_from_semigroup(T, R, mu, 1.0))
    assert np.max(np.abs(vals[0] - vals[1])) <= 1e-8


def test_integrated_from_semigroup_singular_input():
    T = core.SemigroupPath.from_generator([[0.0, 0.0], [0.0, 0.0]])
    with pytest.raises(InvalidInput):
        core.integrated_from_semigroup(T, np.zeros((2, 2)), 1.0, 1.0)


def test_integrated_semigroup_basic_properties(rng):
    A = rng.standard_normal((2, 2))
    S = core.IntegratedSemigroupPath.from_generator(A)
    assert not np.any(S(0.0))
    assert S.is_nondegenerate([0.5, 1.0])
    for t in (0.1, 0.5, 1.5):
        assert np.linalg.norm(S(t), 2) <= S.delta(t) * (1 + 1e-12)


def test_laplace_resolvent_scalar():
    S = core.IntegratedSemigroupPath.from_generator([[-0.4]])
    assert core.laplace_resolvent(S, 1.1)[0, 0] == pytest.approx(1 / 1.5, abs=1e-7)


def test_laplace_resolvent_complex(rng):
    A = rng.standard_normal((2, 2))
    A -= 2 * np.eye(2)
    S = core.IntegratedSemigroupPath.from_generator(A)
    lam = 1.0 + 2.0j
    assert np.allclose(core.laplace_resolvent(S, lam), np.linalg.inv(lam * np.eye(2) - A), atol=1e-6)


def test_laplace_resolvent_domain():
    S = core.IntegratedSemigroupPath.from_generator([[1.0]])
    with pytest.raises(ResolventDomainError):
        core.laplace_resolvent(S, 0.5)


@pytest.mark.slow
def test_age_laplace_matches_block_resolvent():
    from ndpert import age

    U = core.build_evolution_family(np.array([[-0.5]]), 2.0, 0.05)
    S = core.age_integrated_semigroup(U)
    lam = 1.5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        R = core.laplace_resolvent(S, lam, tol=1e-6)
    block = age.model_resolvent_matrix(U, lam)
    # R acts on X = [y, f]; its profile rows are the block resolvent
    assert np.max(np.abs(R[1:] - block)) <= 1e-3
