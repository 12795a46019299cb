import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from moller_dirac import geometry as geo
from moller_dirac.boundary import boundary_pair
from moller_dirac.convergence import estimate_order
from moller_dirac.dirac import build_dirac
from moller_dirac.sections import BumpData, BumpSource, random_bump_source
from moller_dirac.solver import (
    CausalPropagator,
    ConfigError,
    DivergenceError,
    Discretization,
    Grid,
    cone_mask,
    check_energy_identity,
    evolve,
    global_nodes,
    green,
    green_residual,
    mass_outside,
    sbp_diff,
)

MINK = geo.minkowski()
MINK_D = build_dirac(MINK)
MINK_MIT = boundary_pair("mit", None, MINK)


def _mode_error(n, integrator="rk4"):
    _, mode = oracles.minkowski_mit_mode(1)
    xs = geo.spatial_grid(1.0, n)
    hist = evolve(MINK_D, MINK_MIT, mode(0.0, xs), Grid(n), 0.0, 1.0, store="ends", integrator=integrator)
    diff = hist.final - mode(1.0, xs)
    return float(np.sqrt(np.sum(np.abs(diff) ** 2, -1) @ geo.sbp_norm(1.0, n))), hist


@pytest.mark.parametrize("integrator", ["rk4", "gauss4"])
def test_standing_wave_converges_at_second_order(integrator):
    ns = (40, 80, 160)
    est = estimate_order(ns, [_mode_error(n, integrator)[0] for n in ns])
    assert est.order >= 1.9


def test_time_symmetric_integrator_conserves_discrete_energy():
    _, hist = _mode_error(80, "gauss4")
    assert check_energy_identity(hist) < 1e-12


def test_energy_drift_small_and_weak_boundary_condition_converges():
    g = geo.bump(0.3, 0.4)
    d = build_dirac(g)
    residual = []
    for n in (100, 200):
        data = BumpData(0.5, 0.25, (1.0, 0.4j), 5.0)(geo.spatial_grid(1.0, n))
        hist = evolve(d, boundary_pair("mit", None, g), data, Grid(n), 0.0, 1.0, store="ends")
        assert check_energy_identity(hist) < 1e-4
        residual.append(hist.report.boundary_residual.max())
    assert residual[1] < 0.4 * residual[0]


def test_wrong_penalty_sign_is_unstable():
    xs = geo.spatial_grid(1.0, 100)
    _, mode = oracles.minkowski_mit_mode(0)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            hist = evolve(MINK_D, MINK_MIT, mode(0.0, xs), Grid(100), 0.0, 1.0, store="ends", penalty_sign=-1.0)
        drift = check_energy_identity(hist)
    except DivergenceError:
        drift = np.inf
    assert drift > 1e-3


def test_backward_evolution_undoes_forward():
    g = geo.bump(0.3, 0.4)
    d = build_dirac(g)
    sp = boundary_pair("mit", None, g)
    data = BumpData(0.5, 0.2, (1.0, -1j), 3.0)(geo.spatial_grid(1.0, 60))
    fwd = evolve(d, sp, data, Grid(60), 0.1, 0.9, store="ends", integrator="gauss4")
    back = evolve(d, sp, fwd.final, Grid(60), 0.9, 0.1, store="ends", integrator="gauss4")
    assert np.abs(back.final - data).max() < 1e-10


def test_grid_and_cfl_validation():
    with pytest.raises(ConfigError):
        Grid(3)
    with pytest.raises(ConfigError):
        Grid(50, cfl=0.9)
    with pytest.raises(ConfigError):
        evolve(MINK_D, MINK_MIT, np.zeros((51, 2)), Grid(50, dt=0.5), 0.0, 1.0)
    with pytest.raises(ConfigError):
        evolve(MINK_D, MINK_MIT, np.zeros((51, 2)), Grid(50), 0.0, 1.0, integrator="euler")
    with pytest.raises(ValueError):
        evolve(MINK_D, MINK_MIT, np.zeros((50, 2)), Grid(50), 0.0, 1.0)


@given(arrays(float, 21, elements=st.floats(-3, 3)), arrays(float, 21, elements=st.floats(-3, 3)))
def test_difference_operator_sums_by_parts(u, v):
    w = geo.sbp_norm(1.0, 20)
    du = sbp_diff(u[:, None], 0.05)[:, 0]
    dv = sbp_diff(v[:, None], 0.05)[:, 0]
    lhs = v @ (w * du) + dv @ (w * u)
    assert lhs == pytest.approx(v[-1] * u[-1] - v[0] * u[0], abs=1e-9)


def test_sparse_operator_matches_rhs():
    g = geo.bump(0.3, 0.4)
    disc = Discretization(build_dirac(g), boundary_pair("mit", None, g), 30)
    rng = np.random.default_rng(1)
    psi = rng.normal(size=(31, 2)) + 1j * rng.normal(size=(31, 2))
    for direction in (1, -1):
        s_e = disc.energy_sign(0.4, direction)
        dense = disc.rhs(0.4, psi, direction, s_e)
        assert np.allclose(disc.operator(0.4, direction, s_e) @ psi.ravel(), dense.ravel())


def test_green_operator_solves_the_equation_and_respects_causality():
    g = geo.bump(0.3, 0.4)
    d = build_dirac(g)
    sp = boundary_pair("mit", None, g)
    f = BumpSource(0.5, 0.5, 0.15, 0.15, (1.0, 0.5j), 2.0)
    grid = Grid(100)
    nodes = global_nodes(d, grid, 0.0, 1.0)
    speed = float(geo.characteristic_speed(g, *np.meshgrid(nodes, geo.spatial_grid(1, 100), indexing="ij")).max())
    for direction in (1, -1):
        hist = green(d, sp, f, direction, grid, nodes, track=False)
        assert green_residual(d, hist, f) < 5e-3
        mask = cone_mask(hist.times, hist.xs, f.t_support, f.x_support, speed, 0.01, direction)
        assert mass_outside(hist, mask) < 1e-10


def test_batched_propagation_matches_single_sources():
    g = geo.ultrastatic(0.2)
    prop = CausalPropagator(build_dirac(g), boundary_pair("mit", None, g), Grid(50), 0.5)
    rng = np.random.default_rng(4)
    srcs = [random_bump_source(rng, (0.1, 0.9)) for _ in range(3)]
    batch = prop.many(srcs)
    for k, f in enumerate(srcs):
        assert np.allclose(batch[k], prop(f), atol=1e-13)


def test_source_touching_time_ends_rejected():
    g = geo.minkowski()
    prop = CausalPropagator(build_dirac(g), boundary_pair("mit", None, g), Grid(20), 0.5)
    with pytest.raises(ValueError):
        prop(BumpSource(0.05, 0.5, 0.1, 0.1))
