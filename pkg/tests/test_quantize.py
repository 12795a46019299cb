import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from moller_dirac import geometry as geo
from moller_dirac.boundary import boundary_pair
from moller_dirac.clifford import slice_weights
from moller_dirac.dirac import build_dirac
from moller_dirac.moller import make_plan
from moller_dirac.quantize import (
    DoubledSpace,
    QuasiFreeState,
    ResourceError,
    SplittingError,
    UnitarityBudgetError,
    car_representation,
    car_residuals,
    four_point_residual,
    ground_state_Q,
    jordan_wigner,
    positivity_check,
    pullback_state,
    two_point,
)
from moller_dirac.sections import random_bump_data
from moller_dirac.verify import shooting_mit_eigenvalue

G1 = geo.ultrastatic(0.2)
N = 60


def _space(k, seed=0, g=G1, n=N):
    rng = np.random.default_rng(seed)
    xs = geo.spatial_grid(1.0, n)
    fam = np.stack([random_bump_data(rng, 1.0, 0.1)(xs) for _ in range(k)])
    return DoubledSpace(fam, slice_weights(g, 0.0, n))


def _gauge_state(space, occupations, seed=1):
    rng = np.random.default_rng(seed)
    k = space.k
    u, _ = np.linalg.qr(rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k)))
    chol = space.cholesky
    herm = u @ np.diag(occupations) @ u.conj().T
    return QuasiFreeState.from_projector(space, np.linalg.solve(chol.conj().T, herm @ chol.conj().T))


def test_doubled_space_certificate():
    cert = _space(3).certify()
    assert cert["gram_min_eig"] > 0
    assert max(v for key, v in cert.items() if key != "gram_min_eig") < 1e-14


def test_dependent_family_rejected():
    sp = _space(2)
    with pytest.raises(ValueError):
        DoubledSpace(np.stack([sp.basis[0], 2 * sp.basis[0]]), sp.weights)


def test_jordan_wigner_limit():
    assert len(jordan_wigner(3)) == 3
    with pytest.raises(ResourceError):
        jordan_wigner(7)


vec = st.tuples(*[st.floats(-2, 2)] * 8)


@given(st.integers(1, 4), vec, vec)
def test_car_relations(k, a, b):
    space = _space(k, seed=k)
    car = car_representation(space)
    x = np.array(a[: space.dim]) + 1j * np.array(a[::-1][: space.dim])
    y = np.array(b[: space.dim]) - 0.5j * np.array(b[::-1][: space.dim])
    assert max(car_residuals(car, x, y).values()) < 1e-13 * max(1.0, np.abs(x).max() * np.abs(y).max())


@pytest.mark.parametrize("occ", [[1.0, 0.0], [0.3, 0.8]])
def test_quasi_free_four_point_and_positivity(occ):
    space = _space(2, seed=5)
    car = car_representation(space)
    state = _gauge_state(space, np.array(occ))
    cert = state.certify()
    assert cert["gamma_residual"] < 1e-14 and cert["self_adjoint"] < 1e-14
    assert -1e-12 <= cert["spectrum_min"] and cert["spectrum_max"] <= 1 + 1e-12
    rng = np.random.default_rng(2)
    for _ in range(5):
        vecs = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        assert four_point_residual(car, state, vecs) < 1e-12
    assert positivity_check(car, state, rng, 10) > -1e-12


def test_density_requires_gauge_invariance():
    space = _space(2)
    q = np.eye(4) * 0.5
    q[0, 2] = 0.1
    with pytest.raises(NotImplementedError):
        car_representation(space).density(QuasiFreeState(space, q))


def test_shooting_root_matches_closed_form_levels():
    for g in (geo.minkowski(), G1, geo.ultrastatic(0.3, 0.2)):
        assert shooting_mit_eigenvalue(g) == pytest.approx(oracles.mit_levels(g, 1)[0], rel=1e-10)


def test_ground_state_spectrum_and_invariants():
    g = geo.ultrastatic(0.3, 0.2)
    exact = oracles.mit_levels(g, 3)
    errors = []
    for n in (80, 160):
        gs = ground_state_Q(build_dirac(g), boundary_pair("mit", None, g), n)
        positive = np.sort(gs.eigenvalues[gs.eigenvalues > 0])[:6]
        # central differences pair every level with a grid-scale partner; both converge to it
        errors.append(np.abs(positive.reshape(3, 2) - exact[:, None]) / exact[:, None])
    assert errors[1].max() < 2e-3
    assert np.all(errors[0] / errors[1] > 3.5)
    assert gs.imag_max < 1e-8
    # the spectrum is symmetric under E -> -E (charge conjugation)
    assert np.allclose(np.sort(gs.eigenvalues), -np.sort(gs.eigenvalues)[::-1], atol=1e-8)
    cert = gs.state.certify()
    assert cert["gamma_residual"] < 1e-12 and cert["self_adjoint"] < 1e-12
    assert cert["spectrum_min"] > -1e-12 and cert["spectrum_max"] < 1 + 1e-12


def test_ground_state_needs_static_metric_and_gap():
    with pytest.raises(ValueError):
        ground_state_Q(build_dirac(geo.bump()), boundary_pair("mit", None, geo.bump()), 20)
    with pytest.raises(SplittingError):
        ground_state_Q(build_dirac(G1), boundary_pair("mit", None, G1), 20, zero_tol=10.0)


def test_pullback_on_equal_metrics_reproduces_ground_state():
    plan = make_plan(G1, G1, 0.2, 0.6, N)
    gs = ground_state_Q(plan.d1, plan.spaces1, N)
    space = _space(3, seed=8)
    state0 = pullback_state(gs.state, plan, space.basis)
    assert state0.meta["unitarity_deviation"] < 1e-12
    for i in range(3):
        for j in range(3):
            w0 = two_point(state0, space.basis[i], space.basis[j])
            w1 = two_point(gs.state, space.basis[i], space.basis[j])
            assert abs(w0 - w1) < 1e-10 * max(1.0, abs(w1))


def test_pullback_budget_enforced():
    g0 = geo.bump(0.3, 0.4, 0.4, 0.5, 0.3, 0.4)
    plan = make_plan(g0, G1, 0.1, 0.6, 40)
    gs = ground_state_Q(plan.d1, plan.spaces1, 40)
    fam = _space(2, n=40).basis
    with pytest.raises(UnitarityBudgetError):
        pullback_state(gs.state, plan, fam, budget=1e-14)
    state0 = pullback_state(gs.state, plan, fam)
    eps = state0.meta["unitarity_deviation"]
    assert state0.certify()["gamma_residual"] <= eps * (1 + 1e-6) + 1e-12


def test_two_point_needs_propagator_for_sources():
    space = _space(1)
    state = _gauge_state(space, np.array([1.0]))
    with pytest.raises(ValueError):
        two_point(state, lambda t, x: 0, lambda t, x: 0)
