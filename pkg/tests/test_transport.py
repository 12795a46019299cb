import numpy as np
from hypothesis import given
from hypothesis import strategies as st

import oracles
from moller_dirac import geometry as geo
from moller_dirac.clifford import clifford_of, make_canonical_rep
from moller_dirac.transport import (
    frame_transport,
    frame_transport_exact,
    kappa_field,
    normal_pairing,
    transport,
    transport_vector,
)

amp = st.floats(-0.5, 0.7)
FACTOR = oracles.transport_factor()


@given(amp, amp, amp, st.floats(0, 1), st.floats(0, 1))
def test_ode_transport_matches_symbolic_solution(a, b, c, t, x):
    path = geo.MetricPath(geo.bump(a, b), geo.ultrastatic(c))
    wp = frame_transport(path, t, x, 1e-3)
    h0, h1 = float(path.g0.spatial(t, x)), float(path.g1.spatial(t, x))
    assert abs(wp[1, 1] - FACTOR(h0, h1)) < 1e-10
    assert np.allclose(wp, frame_transport_exact(path, t, x), atol=1e-10)


@given(amp, amp, st.floats(0, 1), st.floats(0, 1))
def test_transported_vectors_are_unit_in_target_metric(a, b, t, x):
    path = geo.MetricPath(geo.bump(a, 0.2), geo.conformal(b * 0.5))
    n0 = np.array([0.0, 1.0 / np.sqrt(path.g0.spatial(t, x))])
    moved = transport_vector(path, (t, x), n0)
    assert abs(path.g1.norm2(t, x, moved) - 1.0) < 1e-9


def test_kappa_isometry_and_intertwining():
    rep = make_canonical_rep()
    path = geo.MetricPath(geo.bump(0.3, 0.4), geo.ultrastatic(0.2))
    rng = np.random.default_rng(3)
    t, x = rng.uniform(0, 1, 20), rng.uniform(0, 1, 20)
    res = transport(path, t, x, 1e-3, rep)
    k = res.kappa
    m = rep.spin_form
    assert np.abs(np.conj(np.swapaxes(k, -1, -2)) @ m @ k - m).max() < 1e-12
    v = rng.normal(size=(20, 2))
    lhs = k @ clifford_of(path.g0, t, x, v, rep) @ np.linalg.inv(k)
    rhs = clifford_of(path.g1, t, x, np.einsum("pij,pj->pi", res.wp, v), rep)
    assert np.abs(lhs - rhs).max() < 1e-8


def test_kappa_is_identity_for_equal_metrics():
    path = geo.MetricPath(geo.bump(0.3, 0.4), geo.bump(0.3, 0.4))
    k = kappa_field(path)(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
    assert np.abs(k - np.eye(2)).max() <= 1e-12


def test_normal_pairing_positive_at_both_walls():
    path = geo.MetricPath(geo.conformal(0.4), geo.ultrastatic(-0.3))
    for side in ("left", "right"):
        assert normal_pairing(path, 0.5, side) > 0
