import numpy as np
import pytest
import sympy as sp

import oracles
from moller_dirac import geometry as geo
from moller_dirac.clifford import make_canonical_rep
from moller_dirac.dirac import (
    ContractError,
    build_dirac,
    check_skew_adjoint,
    hyperbolicity_margin,
    interpolate_operator,
    intertwine,
    mass_potential,
    principal_symbol_residual,
    symmetry_residual,
)
from moller_dirac.sections import BumpSource
from moller_dirac.transport import kappa_field

T, X = oracles.T, oracles.X
BETA = 1 + sp.Rational(1, 5) * sp.sin(sp.pi * X) ** 2 * sp.cos(2 * T)
H = (1 + sp.Rational(3, 10) * X**2 * (1 + T)) ** 2


def _grid():
    return np.meshgrid(np.linspace(0.05, 0.95, 7), np.linspace(0.05, 0.95, 7), indexing="ij")


def test_zero_order_term_matches_symbolic_divergences():
    rep = make_canonical_rep()
    g = oracles.symbolic_metric(BETA, H)
    d = build_dirac(g, rep)
    t, x = _grid()
    expected = oracles.dirac_zero_order(BETA, H, rep.gamma0, rep.gamma1)(t, x)
    assert np.abs(d.B(t, x) - expected).max() < 1e-9


def test_principal_symbol_is_clifford_multiplication():
    d = build_dirac(geo.bump(0.3, 0.4))
    rng = np.random.default_rng(0)
    t, x = rng.uniform(0, 1, 30), rng.uniform(0, 1, 30)
    xi = rng.normal(size=(30, 2))
    assert principal_symbol_residual(d, t, x, xi) < 1e-13
    assert symmetry_residual(d, t, x, xi) < 1e-13


def test_conformal_covariance():
    """D~(omega^-1/2 psi) = omega^-3/2 D psi for g~ = omega^2 g in two dimensions."""
    g = geo.bump(0.2, 0.3)
    omega = lambda t, x: 1 + 0.3 * np.sin(np.pi * x) * np.cos(t)
    d = build_dirac(g)
    dt = build_dirac(g.rescaled(omega))
    psi = BumpSource(0.5, 0.5, 0.4, 0.4, (1.0, 0.5j), 2.0, power=4)
    scaled = lambda t, x: omega(t, x)[..., None] ** -0.5 * psi(t, x)
    t, x = _grid()
    lhs = dt.apply(scaled, t, x)
    rhs = omega(t, x)[..., None] ** -1.5 * d.apply(psi, t, x)
    assert np.abs(lhs - rhs).max() < 1e-8 * np.abs(rhs).max()


def test_symmetric_hyperbolic_margin_positive():
    d = build_dirac(geo.conformal(0.3))
    t, x = _grid()
    assert hyperbolicity_margin(d, t, x) >= -1e-14
    assert hyperbolicity_margin(d, t, x, cone=0.99) > 0


def test_potential_must_be_skew():
    g = geo.minkowski()
    build_dirac(g, potential=mass_potential(0.7))
    with pytest.raises(ContractError):
        build_dirac(g, potential=np.eye(2))


def test_skew_adjoint_on_compact_sections_converges():
    d = build_dirac(geo.bump(0.3, 0.4))
    psi = BumpSource(0.5, 0.5, 0.3, 0.3, (1.0, 1j), 3.0, power=4)
    phi = BumpSource(0.45, 0.55, 0.3, 0.3, (0.5, -1.0), -2.0, power=4)
    errs = [check_skew_adjoint(d, psi, phi, n) for n in (40, 80)]
    assert errs[1] < errs[0] / 3
    assert errs[1] < 1e-3


def _pair():
    g0, g1 = geo.bump(0.3, 0.4), geo.ultrastatic(0.2)
    kappa = kappa_field(geo.MetricPath(g0, g1))
    f = geo.conformal_factor_f(g0, g1)
    return build_dirac(g0), build_dirac(g1), kappa, f


def test_intertwined_operator_conjugates_d0():
    d0, d1, kappa, f = _pair()
    d01 = intertwine(d0, d1.metric, kappa, f)
    u = BumpSource(0.5, 0.5, 0.35, 0.35, (1.0, 0.3j), 1.0, power=4)
    moved = lambda t, x: f(t, x)[..., None] * np.einsum("...ij,...j->...i", kappa(t, x), u(t, x))
    t, x = _grid()
    lhs = d01.apply(moved, t, x)
    rhs = f(t, x)[..., None] * np.einsum("...ij,...j->...i", kappa(t, x), d0.apply(u, t, x))
    assert np.abs(lhs - rhs).max() < 1e-7 * np.abs(rhs).max()


def test_interpolated_operator_endpoints():
    d0, d1, kappa, f = _pair()
    d01 = intertwine(d0, d1.metric, kappa, f)
    dchi = interpolate_operator(d01, d1, geo.ChiProfile(0.3, 0.7))
    x = np.linspace(0, 1, 9)
    for t, ref in ((0.1, d01), (0.9, d1)):
        for got, exp in zip(dchi.coeffs(t, x), ref.coeffs(t, x)):
            assert np.allclose(got, exp)


def test_interpolated_operator_stays_formally_skew():
    d0, d1, kappa, f = _pair()
    d01 = intertwine(d0, d1.metric, kappa, f)
    psi = BumpSource(0.5, 0.5, 0.3, 0.3, (1.0, 1j), 3.0, power=4)
    phi = BumpSource(0.5, 0.45, 0.3, 0.3, (0.5, -1.0), -2.0, power=4)
    good = interpolate_operator(d01, d1, geo.ChiProfile(0.3, 0.7))
    bad = interpolate_operator(d01, d1, geo.ChiProfile(0.3, 0.7), correction=0.0)
    assert check_skew_adjoint(good, psi, phi, 80) < 0.05 * check_skew_adjoint(bad, psi, phi, 80)
