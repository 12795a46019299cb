import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from moller_dirac import geometry as geo
from moller_dirac.boundary import (
    BoundarySpace,
    boundary_pair,
    certify,
    check_compatibility,
    interpolate_subspace,
    same_space,
)
from moller_dirac.clifford import make_canonical_rep
from moller_dirac.dirac import build_dirac, characteristic_margin
from moller_dirac.sections import BumpData

NAMES = ("mit", "chiral+", "chiral-")


@given(st.sampled_from(NAMES), st.floats(-0.5, 0.5), st.floats(-0.5, 0.6), st.floats(0, 1))
def test_named_conditions_are_admissible_and_self_adjoint(name, a, b, t):
    rep = make_canonical_rep()
    g = geo.bump(a, b)
    d = build_dirac(g, rep)
    for sp in boundary_pair(name, rep, g):
        cert = certify(sp, d, t)
        assert max(cert.values()) < 1e-12
        p, c = sp.projector(t), sp.complement(t)
        assert np.abs(p @ c).max() < 1e-12 and np.allclose(p + c, np.eye(2))


def test_mit_spaces_on_minkowski():
    left, right = boundary_pair("mit", None, geo.minkowski())
    assert same_space(left.projector(), np.outer([1, -1j], [1, 1j]) / 2) < 1e-12
    assert same_space(right.projector(), np.outer([1, 1j], [1, -1j]) / 2) < 1e-12


def test_chiral_conditions_differ_by_chirality():
    g = geo.minkowski()
    plus = boundary_pair("chiral+", None, g)[0].projector()
    minus = boundary_pair("chiral-", None, g)[0].projector()
    assert same_space(plus, minus) > 0.1


def test_interpolated_mit_reduces_to_target_mit_in_one_dimension():
    g0, g1 = geo.conformal(0.3), geo.ultrastatic(0.2)
    path = geo.MetricPath(g0, g1)
    chi = geo.ChiProfile(0.2, 0.7)
    interp = boundary_pair("interpolated-mit", None, g1, path=path, chi=chi)
    target = boundary_pair("mit", None, g1)
    for t in (0.0, 0.45, 1.0):
        for a, b in zip(interp, target):
            assert same_space(a.projector(t), b.projector(t)) < 1e-12


def test_unknown_condition_rejected():
    with pytest.raises(KeyError):
        boundary_pair("aps", None, geo.minkowski())


def test_boundary_is_not_characteristic():
    assert characteristic_margin(build_dirac(geo.bump(0.3, 0.4)), 0.5) > 0.1


def test_non_null_subspace_fails_certificate():
    d = build_dirac(geo.minkowski())
    bad = BoundarySpace.spanned_by([1.0, 0.0], "left")
    assert certify(bad, d)["null_form"] > 0.1


def test_subspace_interpolation_stays_nonnegative():
    q = np.diag([1.0, -1.0])
    w0 = np.array([1.0, 0.2]) / np.hypot(1, 0.2)
    w1 = np.array([1.0, -0.5]) / np.hypot(1, 0.5)
    path = interpolate_subspace(w0, w1, q)
    line = lambda v: np.outer(v, v.conj()) / np.vdot(v, v)
    assert same_space(line(path.vector(0.0)), line(w0)) < 1e-12
    assert same_space(line(path.vector(1.0)), line(w1)) < 1e-12
    for t in np.linspace(0, 1, 11):
        v = path.vector(t)
        assert np.real(v.conj() @ q @ v) >= -1e-12


def test_compatibility_of_data_vanishing_near_walls():
    g = geo.bump(0.3, 0.4)
    d = build_dirac(g)
    spaces = boundary_pair("mit", None, g)
    data = BumpData(0.5, 0.3, (1.0, 1j), 2.0)
    assert max(check_compatibility(data, None, d, spaces, 2)) < 1e-10
    wall = lambda x: np.broadcast_to(np.array([1.0, 0.0], complex), np.shape(x) + (2,))
    assert check_compatibility(wall, None, d, spaces, 0)[0] > 0.1
