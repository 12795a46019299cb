import numpy as np
import pytest

from moller_dirac import geometry as geo
from moller_dirac.dirac import build_dirac
from moller_dirac.boundary import boundary_pair
from moller_dirac.moller import (
    CompatibilityError,
    check_unitarity,
    gram_deviation,
    make_plan,
    moller_forward,
    moller_forward_split,
    moller_inverse,
    round_trip_error,
)
from moller_dirac.sections import random_bump_data
from moller_dirac.solver import Grid, evolve

G0 = geo.bump(0.3, 0.4, 0.5, 0.5, 0.35, 0.4)
G1 = geo.ultrastatic(0.2)


def _family(plan, k=3, seed=0):
    rng = np.random.default_rng(seed)
    return np.stack([random_bump_data(rng, 1.0, 0.1)(plan.xs) for _ in range(k)])


def test_equal_metrics_reduce_to_plain_evolution():
    plan = make_plan(G1, G1, 0.2, 0.6, 60)
    fam = _family(plan)
    direct = evolve(build_dirac(G1), boundary_pair("mit", None, G1), fam, Grid(60), plan.nodes[0], plan.nodes[-1],
                    times=plan.nodes, store="ends", integrator="gauss4").final
    assert np.abs(moller_forward(plan, fam) - direct).max() < 1e-12
    assert gram_deviation(plan, fam) < 1e-10


def test_deformed_pair_is_nearly_unitary():
    plan = make_plan(G0, G1, 0.2, 0.6, 80)
    fam = _family(plan, 4)
    assert gram_deviation(plan, fam) < 1e-4
    assert check_unitarity(plan, fam[0], fam[1]) < 1e-4


def test_forward_map_is_linear():
    plan = make_plan(G0, G1, 0.2, 0.6, 50)
    a, b = _family(plan, 2, seed=3)
    c1, c2 = 1.5 - 0.5j, -0.25 + 2j
    combo = moller_forward(plan, c1 * a + c2 * b)
    assert np.linalg.norm(combo - c1 * moller_forward(plan, a) - c2 * moller_forward(plan, b)) <= 1e-12 * np.linalg.norm(combo)


def test_split_evolution_agrees():
    plan = make_plan(G0, G1, 0.2, 0.6, 50)
    fam = _family(plan, 2)
    assert np.abs(moller_forward_split(plan, fam, 0.4) - moller_forward(plan, fam)).max() < 1e-12


def test_inverse_undoes_forward():
    plan = make_plan(G0, G1, 0.2, 0.6, 50)
    fam = _family(plan, 2)
    assert round_trip_error(plan, fam) < 1e-12
    back = moller_inverse(plan, moller_forward(plan, fam), check=False)
    assert np.abs(back - fam).max() < 1e-11


def test_round_trip_converges_with_rk4():
    errs = []
    for n in (50, 100):
        plan = make_plan(G0, G1, 0.2, 0.6, n, integrator="rk4")
        errs.append(round_trip_error(plan, _family(plan, 2)))
    assert errs[1] < errs[0] / 3.7


def test_wrong_conformal_weight_breaks_unitarity():
    base = geo.conformal_factor_f(G0, G1)
    plan = make_plan(G0, G1, 0.2, 0.6, 50, f=lambda t, x: 1.1 * base(t, x))
    assert gram_deviation(plan, _family(plan)) > 0.1


def test_boundary_violating_input_rejected():
    plan = make_plan(G0, G1, 0.2, 0.6, 40)
    bad = np.zeros((41, 2), complex)
    bad[0] = [1.0, 0.0]
    with pytest.raises(CompatibilityError):
        moller_forward(plan, bad)


def test_window_must_be_ordered():
    with pytest.raises(ValueError):
        make_plan(G0, G1, 0.6, 0.2, 40)
