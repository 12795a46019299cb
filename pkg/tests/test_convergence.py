import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from moller_dirac.convergence import estimate_order


@given(
    order=st.floats(0.5, 6.0),
    scale=st.floats(1e-6, 1e3),
    base=st.integers(8, 200),
    ratio=st.sampled_from([1.5, 2.0, 3.0]),
)
def test_exact_power_law_recovers_its_exponent(order, scale, base, ratio):
    ns = [int(round(base * ratio**k)) for k in range(4)]
    errs = [scale * n**-order for n in ns]
    est = estimate_order(ns, errs)
    assert est.order == pytest.approx(order, rel=1e-9)
    assert est.fitted == pytest.approx(order, rel=1e-9)
    assert not est.roundoff_limited
    assert est.passes(order - 1e-6) and not est.passes(order + 0.01)


def test_floor_flags_roundoff_limited_ladders():
    est = estimate_order([100, 200, 400], [3e-15, 4e-15, 2e-15], floor=1e-12)
    assert est.roundoff_limited and est.passes(1.9)
    # one resolved error is enough to require an order
    est = estimate_order([100, 200, 400], [1e-10, 4e-15, 2e-15], floor=1e-12)
    assert not est.roundoff_limited


def test_zero_error_does_not_crash():
    est = estimate_order([10, 20], [1e-3, 0.0])
    assert math.isinf(est.order) and math.isnan(est.fitted)


@pytest.mark.parametrize("ns, errs", [([100, 100, 200], [1, 0.5, 0.1]), ([200, 100], [1, 2]), ([100], [1.0]), ([100, 200], [1.0])])
def test_bad_ladders_rejected(ns, errs):
    with pytest.raises(ValueError):
        estimate_order(ns, errs)


def test_as_dict_reports_min_pairwise_order():
    est = estimate_order([10, 20, 40], [1.0, 0.25, 0.1])
    d = est.as_dict()
    assert d["order"] == pytest.approx(min(d["pairwise"]))
    assert d["pairwise"][0] == pytest.approx(2.0) and np.isclose(d["pairwise"][1], np.log2(2.5))
