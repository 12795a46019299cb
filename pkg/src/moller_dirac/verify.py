"""Verification checks with pass/fail thresholds, shared by the CLI suites and the test-suite.

Every check returns a :class:`CheckResult` holding named measurements, each
compared against a fixed threshold, plus optional convergence ladders and CSV
traces.  Ladder members are independent and run on a thread pool whose size
is capped by ``MOLLER_DIRAC_THREADS``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from . import geometry as geo
from .boundary import boundary_pair, certify
from .clifford import clifford_of, make_canonical_rep, slice_weights
from .convergence import OrderEstimate, estimate_order
from .dirac import build_dirac
from .moller import gram_deviation, make_plan, moller_forward, moller_inverse, round_trip_error
from .quantize import (
    OperatorImage,
    QuasiFreeState,
    build_doubled_space,
    car_representation,
    car_residuals,
    four_point_residual,
    ground_state_Q,
    positivity_check,
    pullback_state,
    two_point,
)
from .sections import BumpData, BumpSource, StackedSource, random_bump_data, random_bump_source
from .solver import (
    CausalPropagator,
    DivergenceError,
    Grid,
    check_energy_identity,
    cone_mask,
    evolve,
    global_nodes,
    green,
    green_residual,
    mass_outside,
)
from .transport import frame_transport, normal_pairing, transport

ORDER_MIN = 1.9


# ---------------------------------------------------------------- results


@dataclass
class Measurement:
    name: str
    value: float
    threshold: float
    relation: str  # "<=" or ">="

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        return self.value <= self.threshold if self.relation == "<=" else self.value >= self.threshold

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "value": float(self.value),
            "threshold": float(self.threshold),
            "relation": self.relation,
            "passed": self.passed,
        }


@dataclass
class CheckResult:
    name: str
    measurements: list[Measurement] = field(default_factory=list)
    ladders: dict[str, OrderEstimate] = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    traces: dict[str, list[list]] = field(default_factory=dict)

    def add(self, name: str, value: float, threshold: float, relation: str = "<=") -> Measurement:
        m = Measurement(name, float(value), float(threshold), relation)
        self.measurements.append(m)
        return m

    def require(self, name: str, flag: bool) -> Measurement:
        """Boolean requirement recorded as a 1/0 measurement."""
        return self.add(name, 1.0 if flag else 0.0, 1.0, ">=")

    def order(self, name: str, est: OrderEstimate, minimum: float = ORDER_MIN) -> None:
        self.ladders[name] = est
        self.require(f"{name}_order_ok", est.passes(minimum))

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.measurements)

    @property
    def failures(self) -> list[str]:
        return [m.name for m in self.measurements if not m.passed]

    def summary(self) -> str:
        if self.passed:
            return "all measurements within thresholds"
        worst = [m for m in self.measurements if not m.passed]
        return "; ".join(f"{m.name}={m.value:.3e} (need {m.relation} {m.threshold:.1e})" for m in worst)

    def as_dict(self) -> dict:
        return {
            "check": self.name,
            "passed": self.passed,
            "measurements": [m.as_dict() for m in self.measurements],
            "ladders": {k: v.as_dict() for k, v in self.ladders.items()},
            **self.data,
        }


# ---------------------------------------------------------------- context


def thread_limit() -> int:
    raw = os.environ.get("MOLLER_DIRAC_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, min(4, os.cpu_count() or 1))


@dataclass
class Setup:
    """Metric pair, switching window and grid ladder shared by all checks."""

    g0: geo.SplitMetric
    g1: geo.SplitMetric
    t_minus: float
    t_plus: float
    grid_sizes: tuple[int, ...] = (100, 200, 400)
    boundary: tuple[str, ...] = ("mit", "chiral+", "chiral-")
    seed: int = 0
    threads: int = field(default_factory=thread_limit)
    samples: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict, repr=False)

    def count(self, key: str, default: int) -> int:
        return int(self.samples.get(key, default))

    def rng(self, stream: int) -> np.random.Generator:
        """Independent generator per check, so that results do not depend on execution order."""
        return np.random.default_rng([self.seed, stream])

    def map(self, fn: Callable, items) -> list:
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(it) for it in items]
        with ThreadPoolExecutor(max_workers=min(self.threads, len(items))) as pool:
            return list(pool.map(fn, items))

    def memo(self, key: str, fn: Callable):
        if key not in self.cache:
            self.cache[key] = fn()
        return self.cache[key]

    @property
    def length(self) -> float:
        return self.g1.length

    @property
    def t_end(self) -> float:
        return self.g1.t_end

    @property
    def finest(self) -> int:
        return self.grid_sizes[-1]

    @property
    def middle(self) -> int:
        return self.grid_sizes[len(self.grid_sizes) // 2]


def _window(setup: Setup) -> geo.ChiProfile:
    return geo.ChiProfile(setup.t_minus, setup.t_plus)


def setup_from_config(cfg, grid=None, seed=None, threads=None) -> Setup:
    """Setup for a validated :class:`~moller_dirac.config.RunConfig`, with CLI overrides."""
    return Setup(
        cfg.g0,
        cfg.g1,
        cfg.t_minus,
        cfg.t_plus,
        tuple(grid or cfg.grid),
        tuple(cfg.boundary),
        cfg.seed if seed is None else int(seed),
        threads or thread_limit(),
        dict(cfg.samples),
    )


def default_setup(**kw) -> Setup:
    """Deformed pair used when no configuration is given."""
    g0 = geo.bump(0.3, 0.4, 0.5, 0.5, 0.35, 0.4)
    g1 = geo.ultrastatic(0.2)
    return Setup(g0, g1, kw.pop("t_minus", 0.2), kw.pop("t_plus", 0.6), **kw)


def _ladder_table(name: str, est: OrderEstimate) -> list[list]:
    return [[name, n, e] for n, e in zip(est.grid_sizes, est.errors)]


# ---------------------------------------------------------------- random metrics


def random_metric(rng: np.random.Generator, length: float = 1.0, t_end: float = 1.0) -> geo.SplitMetric:
    kind = rng.integers(4)
    if kind == 0:
        return geo.conformal(float(rng.uniform(-0.5, 0.5)), length, t_end)
    if kind == 1:
        return geo.bump(
            float(rng.uniform(-0.4, 0.6)), float(rng.uniform(-0.4, 0.6)),
            float(rng.uniform(0.2, 0.8)) * t_end, float(rng.uniform(0.2, 0.8)) * length,
            float(rng.uniform(0.2, 0.5)) * t_end, float(rng.uniform(0.2, 0.6)) * length,
            length, t_end,
        )
    if kind == 2:
        return geo.ultrastatic(float(rng.uniform(-0.4, 0.6)), float(rng.uniform(-0.4, 0.6)), length, t_end)
    return geo.constant(float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0)), length, t_end)


# ---------------------------------------------------------------- algebra


def clifford_identities(setup: Setup) -> CheckResult:
    """Clifford relations, spin-form symmetry and chirality of the representation, plus
    gamma(v)^2 = -g(v, v) on random points of random metrics."""
    res = CheckResult("clifford_identities")
    rep = make_canonical_rep()
    for key, val in rep.residuals().items():
        res.add(key, val, 1e-12)
    rng = setup.rng(1)
    worst = 0.0
    for _ in range(setup.count("boundary_samples", 1000) // 10):
        g = random_metric(rng, setup.length, setup.t_end)
        t = rng.uniform(0, g.t_end, 10)
        x = rng.uniform(0, g.length, 10)
        v = rng.normal(size=(10, 2))
        gv = clifford_of(g, t, x, v, rep)
        lhs = gv @ gv
        rhs = -g.norm2(t, x, v)[:, None, None] * np.eye(2)
        worst = max(worst, float(np.abs(lhs - rhs).max() / max(1.0, np.abs(rhs).max())))
    res.add("metric_clifford_relation", worst, 1e-12)
    return res


def boundary_identities(setup: Setup) -> CheckResult:
    """Projector algebra and admissibility certificates at random boundary samples."""
    res = CheckResult("boundary_identities")
    rep = make_canonical_rep()
    rng = setup.rng(2)
    eye = np.eye(2)
    worst: dict[str, float] = {}
    count = setup.count("boundary_samples", 1000)
    names = list(setup.boundary)
    for k in range(count):
        g = random_metric(rng, setup.length, setup.t_end)
        d = build_dirac(g, rep)
        name = names[k % len(names)]
        t = float(rng.uniform(0, g.t_end))
        extra = {}
        if name == "interpolated-mit":
            extra = {"path": geo.MetricPath(random_metric(rng, setup.length, setup.t_end), g), "chi": _window(setup)}
        for sp in boundary_pair(name, rep, g, **extra):
            p = sp.projector(t)
            c = sp.complement(t)
            cert = certify(sp, d, t)
            vals = {
                "idempotent": np.abs(p @ p - p).max(),
                "complementary_product": max(np.abs(p @ c).max(), np.abs(c @ p).max()),
                "complementary_sum": np.abs(p + c - eye).max(),
                "null_boundary_form": cert["null_form"],
                "rank_defect": cert["rank_defect"],
                "admissible_rank_gap": cert["admissible_rank_gap"],
                "self_adjoint": cert["self_adjoint"],
            }
            for key, val in vals.items():
                tag = f"{name}.{key}"
                worst[tag] = max(worst.get(tag, 0.0), float(val))
    for key in sorted(worst):
        res.add(key, worst[key], 1e-12)
    res.data["samples"] = count
    return res


# ---------------------------------------------------------------- transport


def transport_closed_form(setup: Setup) -> CheckResult:
    """ODE transport of spatial vectors against sqrt(h0/h1) and positivity of h1(wp n0, n1)."""
    res = CheckResult("transport_closed_form")
    rng = setup.rng(3)
    worst = 0.0
    pairing = np.inf
    pairs = setup.count("metric_pairs", 100)
    for _ in range(pairs):
        path = geo.MetricPath(random_metric(rng, setup.length, setup.t_end), random_metric(rng, setup.length, setup.t_end))
        t = rng.uniform(0, path.t_end, 8)
        x = np.concatenate([[0.0, path.length], rng.uniform(0, path.length, 6)])
        y = rng.normal(size=8)
        wp = frame_transport(path, t, x, 1e-3)
        moved = wp[..., 1, 1] * y
        # H1^{-1/2} in an h0-orthonormal frame, written back in coordinates
        expected = np.sqrt(path.g0.spatial(t, x) / path.g1.spatial(t, x)) * y
        worst = max(worst, float(np.abs(moved - expected).max() / np.abs(expected).max()))
        worst = max(worst, float(np.abs(wp[..., 0, 1]).max()), float(np.abs(wp[..., 1, 0]).max()))
        for side in ("left", "right"):
            pairing = min(pairing, normal_pairing(path, float(t[0]), side))
    res.add("closed_form_error", worst, 1e-8)
    res.add("normal_pairing_min", pairing, 0.0, ">=")
    res.require("normal_pairing_positive", pairing > 0)
    res.data["metric_pairs"] = pairs
    return res


def kappa_contract(setup: Setup) -> CheckResult:
    """kappa preserves the spin product and intertwines Clifford multiplication; kappa = Id on g0 = g1."""
    res = CheckResult("kappa_contract")
    rep = make_canonical_rep()
    rng = setup.rng(4)
    iso = inter = 0.0
    for _ in range(setup.count("metric_pairs", 100)):
        path = geo.MetricPath(random_metric(rng, setup.length, setup.t_end), random_metric(rng, setup.length, setup.t_end))
        t = rng.uniform(0, path.t_end, 8)
        x = rng.uniform(0, path.length, 8)
        tr = transport(path, t, x, 1e-3, rep)
        k = tr.kappa
        kinv = np.linalg.inv(k)
        iso = max(iso, float(np.abs(np.conj(np.swapaxes(k, -1, -2)) @ rep.spin_form @ k - rep.spin_form).max()))
        v = rng.normal(size=(8, 2))
        lhs = k @ clifford_of(path.g0, t, x, v, rep) @ kinv
        rhs = clifford_of(path.g1, t, x, np.einsum("pij,pj->pi", tr.wp, v), rep)
        inter = max(inter, float(np.abs(lhs - rhs).max()))
    same = geo.MetricPath(setup.g0, setup.g0)
    t = rng.uniform(0, same.t_end, 64)
    x = rng.uniform(0, same.length, 64)
    ident = float(np.abs(transport(same, t, x, 1e-3, rep).kappa - np.eye(2)).max())
    res.add("isometry_residual", iso, 1e-8)
    res.add("intertwining_residual", inter, 1e-8)
    res.add("identity_when_equal", ident, 1e-12)
    return res


# ---------------------------------------------------------------- solver


def reflected_solution(t, x):
    """Exact MIT solution on the Minkowski strip [0, 1]: left/right movers reflected at the walls."""
    right = BumpData(0.4, 0.3, (1.0, 0.0), 0.0, 8)
    left = BumpData(0.6, 0.3, (0.0, 1.0), 0.0, 8)

    def mover_r(u):
        u = np.asarray(u, float)
        return np.where(u >= 0, right(np.abs(u))[..., 0], 1j * left(np.abs(u))[..., 1])

    def mover_l(s):
        s = np.asarray(s, float)
        return np.where(s <= 1, left(np.minimum(s, 1))[..., 1], 1j * right(np.clip(2 - s, 0, 1))[..., 0])

    t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    return np.stack([mover_r(x - t), mover_l(x + t)], axis=-1)


def _flat_run(n: int, penalty_sign: float = 1.0):
    g = geo.minkowski()
    d = build_dirac(g)
    spaces = boundary_pair("mit", None, g)
    xs = geo.spatial_grid(1.0, n)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            hist = evolve(d, spaces, reflected_solution(0.0, xs), Grid(n), 0.0, 1.0, store="ends", penalty_sign=penalty_sign)
    except DivergenceError:
        return float("inf"), float("inf"), None
    diff = hist.final - reflected_solution(1.0, xs)
    with np.errstate(over="ignore", invalid="ignore"):
        err = float(np.sqrt(np.sum(np.abs(diff) ** 2, axis=-1) @ geo.sbp_norm(1.0, n)))
    return err, check_energy_identity(hist), hist.report


def solver_convergence(setup: Setup) -> CheckResult:
    """Minkowski + MIT against the exact reflected solution; wrong penalty sign as negative control."""
    res = CheckResult("solver_convergence")
    ns = setup.grid_sizes
    runs = setup.memo("flat_runs", lambda: setup.map(_flat_run, ns))
    est = estimate_order(ns, [r[0] for r in runs])
    res.order("solution_error", est)
    res.add("energy_drift_finest", runs[-1][1], 1e-5)
    bad = setup.memo("flat_runs_wrong_sign", lambda: setup.map(lambda n: _flat_run(n, -1.0), ns))
    bad_est = estimate_order(ns, [min(r[0], 1e300) for r in bad])
    detected = not (bad_est.passes(ORDER_MIN) and bad[-1][1] <= 1e-5)
    res.require("wrong_penalty_sign_detected", detected)
    res.data["wrong_sign_errors"] = [float(min(r[0], 1e300)) for r in bad]
    report = runs[-1][2]
    res.traces["evolve_energy"] = [["t", "energy", "boundary_residual", "support_left", "support_right"]] + [
        [float(a), float(b), float(c), float(d), float(e)]
        for a, b, c, d, e in zip(report.times, report.energy, report.boundary_residual, report.support_left, report.support_right)
    ]
    res.traces["evolve_ladder"] = [["quantity", "N", "error"]] + _ladder_table("solution_error", est)
    return res


# ---------------------------------------------------------------- causality and Green operators


def _cone_speed(setup: Setup, samples: int = 257) -> float:
    """Largest coordinate speed of g_C = -beta1^2 dt^2 + C(t)^2 h1 dx^2."""
    ts = np.linspace(0, setup.t_end, samples)
    c = geo.cone_bound(setup.g0, setup.g1)(ts)[:, None]
    tt, xx = np.meshgrid(ts, np.linspace(0, setup.length, samples), indexing="ij")
    return float((setup.g1.lapse(tt, xx) / (c * np.sqrt(setup.g1.spatial(tt, xx)))).max())


def _plan(setup: Setup, n: int, **kw):
    return make_plan(setup.g0, setup.g1, setup.t_minus, setup.t_plus, n, **kw)


def finite_propagation(setup: Setup) -> CheckResult:
    """Mass of G+- f outside the inflated g_C cone of the source, for random sources."""
    res = CheckResult("finite_propagation")
    n = setup.middle
    plan = _plan(setup, n)
    rng = setup.rng(5)
    count = setup.count("sources", 10)
    srcs = [random_bump_source(rng, (0.1 * setup.t_end, 0.9 * setup.t_end), setup.length, 0.3 * setup.length) for _ in range(count)]
    speed = _cone_speed(setup)
    nodes = global_nodes(plan.dchi, plan.grid, 0.0, setup.t_end)
    stacked = StackedSource(tuple(srcs))

    def run(direction):
        hist = green(plan.dchi, plan.spaces, stacked, direction, plan.grid, nodes, track=False)
        worst = 0.0
        for i, f in enumerate(srcs):
            mask = cone_mask(hist.times, hist.xs, f.t_support, f.x_support, speed, setup.length / n, direction)
            worst = max(worst, mass_outside(hist.member(i), mask))
        return worst

    leak = setup.map(run, (1, -1))
    res.add("retarded_mass_outside", leak[0], 1e-10)
    res.add("advanced_mass_outside", leak[1], 1e-10)
    res.data.update({"grid": n, "cone_speed": speed, "sources": count})
    return res


def green_operators(setup: Setup) -> CheckResult:
    """Interior residual ||D(G+- f) - f|| over the ladder; support follows from finite_propagation."""
    res = CheckResult("green_operators")
    src = StackedSource((
        _scaled_source(setup, 0.5, 0.5, 0.2, 0.2, (1.0, 0.5j), 3.0),
        _scaled_source(setup, 0.45, 0.45, 0.2, 0.2, (0.3, -1.0), -2.0),
    ))

    def run(args):
        n, direction = args
        plan = _plan(setup, n)
        nodes = global_nodes(plan.dchi, plan.grid, 0.0, setup.t_end)
        hist = green(plan.dchi, plan.spaces, src, direction, plan.grid, nodes, track=False)
        return max(green_residual(plan.dchi, hist.member(i), src.sources[i]) for i in range(len(src)))

    jobs = [(n, d) for d in (1, -1) for n in setup.grid_sizes]
    out = setup.map(run, jobs)
    k = len(setup.grid_sizes)
    for label, errs in (("retarded", out[:k]), ("advanced", out[k:])):
        est = estimate_order(setup.grid_sizes, errs)
        res.order(f"{label}_residual", est)
        res.traces.setdefault("green_ladder", [["quantity", "N", "error"]]).extend(_ladder_table(f"{label}_residual", est))
    return res


def _scaled_source(setup: Setup, tc, xc, tw, xw, amp, k) -> BumpSource:
    """Bump source given in units of the domain size."""
    return BumpSource(tc * setup.t_end, xc * setup.length, tw * setup.t_end, xw * setup.length, amp, k)


# ---------------------------------------------------------------- Moller operator


def _family(setup: Setup, xs: np.ndarray, count: int, stream: int) -> np.ndarray:
    rng = setup.rng(stream)
    datas = [random_bump_data(rng, setup.length, 0.1 * setup.length) for _ in range(count)]
    return np.stack([d(xs) for d in datas])


def moller_unitarity(setup: Setup) -> CheckResult:
    """Gram-matrix deviation of a solution family under R; exact and wrong-f controls."""
    res = CheckResult("moller_unitarity")
    count = setup.count("family", 5)

    def deviation(args):
        n, kind = args
        if kind == "deformed":
            plan = _plan(setup, n)
        elif kind == "exact":
            plan = make_plan(setup.g1, setup.g1, setup.t_minus, setup.t_plus, n)
        else:
            base = geo.conformal_factor_f(setup.g0, setup.g1)
            plan = _plan(setup, n, f=lambda t, x: 1.1 * base(t, x))
        return gram_deviation(plan, _family(setup, plan.xs, count, 6))

    ns = setup.grid_sizes
    jobs = [(n, kind) for kind in ("deformed", "wrong_f") for n in ns] + [(setup.finest, "exact")]
    out = setup.memo("moller_deviation", lambda: setup.map(deviation, jobs))
    k = len(ns)
    est = estimate_order(ns, out[:k], floor=1e-12)
    res.order("gram_deviation", est)
    res.add("gram_deviation_finest", out[k - 1], 1e-4)
    res.add("exact_case_deviation", out[-1], 1e-10)
    wrong = estimate_order(ns, out[k : 2 * k])
    res.require("wrong_f_detected", not (wrong.passes(ORDER_MIN) and out[2 * k - 1] <= 1e-4))
    res.data.update({"deviation": out[k - 1], "order_estimate": est.order, "wrong_f_deviation": out[k : 2 * k]})
    res.traces["moller_ladder"] = [["quantity", "N", "error"]] + _ladder_table("gram_deviation", est) + _ladder_table(
        "wrong_f_gram_deviation", wrong
    )
    return res


def moller_round_trip(setup: Setup) -> CheckResult:
    """||R^-1 R psi - psi|| for the production (time-symmetric) integrator and for RK4; linearity."""
    res = CheckResult("moller_round_trip")
    count = setup.count("family", 5)

    def trip(args):
        n, integrator = args
        plan = _plan(setup, n, integrator=integrator)
        return round_trip_error(plan, _family(setup, plan.xs, count, 7))

    ns = setup.grid_sizes
    jobs = [(n, i) for i in ("gauss4", "rk4") for n in ns]
    out = setup.memo("moller_round_trip", lambda: setup.map(trip, jobs))
    k = len(ns)
    prod = estimate_order(ns, out[:k], floor=1e-12)
    rk4 = estimate_order(ns, out[k:])
    res.order("round_trip", prod)
    res.order("round_trip_rk4", rk4)

    plan = _plan(setup, setup.grid_sizes[0])
    fam = _family(setup, plan.xs, 2, 8)
    a, b = 0.7 - 1.3j, -0.4 + 0.2j
    combo = moller_forward(plan, a * fam[0] + b * fam[1])
    parts = moller_forward(plan, fam)
    lin = float(np.linalg.norm(combo - (a * parts[0] + b * parts[1])) / np.linalg.norm(combo))
    res.add("linearity", lin, 1e-12)
    res.traces["round_trip_ladder"] = [["quantity", "N", "error"]] + _ladder_table("round_trip", prod) + _ladder_table(
        "round_trip_rk4", rk4
    )
    return res


# ---------------------------------------------------------------- CAR layer and states


def _random_gauge_state(space, rng: np.random.Generator, mixed: bool) -> QuasiFreeState:
    """Gauge-invariant state from a Gram-self-adjoint operator with spectrum in [0, 1]."""
    k = space.k
    chol = space.cholesky
    u, _ = np.linalg.qr(rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k)))
    occ = rng.uniform(0, 1, k) if mixed else (rng.uniform(size=k) > 0.5).astype(float)
    herm = u @ np.diag(occ) @ u.conj().T
    # operator on Sol-coordinates that is self-adjoint for the gram product
    p = np.linalg.solve(chol.conj().T, herm @ chol.conj().T)
    return QuasiFreeState.from_projector(space, p)


def car_layer(setup: Setup) -> CheckResult:
    """CAR identities for k <= 4 modes, quasi-free 4-point factorization at k = 2, positivity."""
    res = CheckResult("car_layer")
    rng = setup.rng(9)
    n = setup.grid_sizes[0]
    g = setup.g1
    xs = geo.spatial_grid(g.length, n)
    w = slice_weights(g, 0.0, n)
    worst: dict[str, float] = {}
    for k in range(1, setup.count("car_modes", 4) + 1):
        space = build_doubled_space(_family(setup, xs, k, 20 + k), w)
        car = car_representation(space)
        for _ in range(10):
            x, y = rng.normal(size=(2, space.dim)) + 1j * rng.normal(size=(2, space.dim))
            for key, val in car_residuals(car, x, y).items():
                worst[key] = max(worst.get(key, 0.0), val)
            c1, c2 = rng.normal(size=2) + 1j * rng.normal(size=2)
            lin = np.abs(car.field(c1 * x + c2 * y) - c1 * car.field(x) - c2 * car.field(y)).max()
            worst["linearity"] = max(worst.get("linearity", 0.0), float(lin))
    for key in sorted(worst):
        res.add(key, worst[key], 1e-13)
    space = build_doubled_space(_family(setup, xs, 2, 30), w)
    car = car_representation(space)
    fp = 0.0
    pos = np.inf
    for mixed in (False, True):
        state = _random_gauge_state(space, rng, mixed)
        for _ in range(10):
            vecs = rng.normal(size=(4, space.dim)) + 1j * rng.normal(size=(4, space.dim))
            fp = max(fp, four_point_residual(car, state, vecs))
        pos = min(pos, positivity_check(car, state, rng, 20))
    res.add("four_point_factorization", fp, 1e-12)
    res.add("positivity_min", pos, -1e-10, ">=")
    return res


def shooting_mit_eigenvalue(g: geo.SplitMetric, t: float = 0.0, rtol: float = 1e-12) -> float:
    """Lowest positive frequency of the massless MIT problem on a static metric, by shooting.

    A mode e^{-iEt} phi solves phi' = -iE (sqrt(h) / beta) diag(-1, 1) phi up to a
    scalar factor that does not affect the boundary condition.  Start from the
    left-wall space span(1, -i) and find the first E at which the right-wall
    condition phi_2 = i phi_1 holds.
    """

    def mismatch(energy: float) -> float:
        def rhs(x, y):
            speed = np.sqrt(g.spatial(t, x)) / g.lapse(t, x)
            phi = y[:2] + 1j * y[2:]
            d = -1j * energy * speed * np.array([-phi[0], phi[1]])
            return np.concatenate([d.real, d.imag])

        sol = integrate.solve_ivp(rhs, (0.0, g.length), [1.0, 0.0, 0.0, -1.0], rtol=rtol, atol=1e-14, method="DOP853")
        phi = sol.y[:2, -1] + 1j * sol.y[2:, -1]
        return float(np.real(1j * (phi[1] - 1j * phi[0])))

    grid = np.linspace(0.05, 20.0, 400)
    vals = [mismatch(e) for e in grid]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0:
            return float(a)
        if fa * fb < 0:
            return float(optimize.brentq(mismatch, a, b, xtol=1e-14, rtol=1e-14))
    raise RuntimeError("no MIT eigenvalue found below E = 20")


def _ground(setup: Setup, n: int):
    d1 = build_dirac(setup.g1)
    spaces = boundary_pair("mit", None, setup.g1)
    return setup.memo(f"ground:{n}", lambda: ground_state_Q(d1, spaces, n))


def ground_state(setup: Setup) -> CheckResult:
    """Discrete H = iL under MIT on the static target metric."""
    res = CheckResult("ground_state")
    if not setup.g1.static:
        res.require("target_metric_static", False)
        return res
    def run(n):
        gs = _ground(setup, n)
        return gs.lowest_positive, gs.imag_max, gs.state.certify()

    out = setup.memo("ground_states", lambda: setup.map(run, setup.grid_sizes))
    res.add("imag_part_max", max(o[1] for o in out), 1e-8)
    res.add("gamma_residual", max(o[2]["gamma_residual"] for o in out), 1e-12)
    res.add("Q_spectrum_min", min(o[2]["spectrum_min"] for o in out), -1e-12, ">=")
    res.add("Q_spectrum_max", max(o[2]["spectrum_max"] for o in out), 1 + 1e-12)
    res.add("Q_self_adjoint", max(o[2]["self_adjoint"] for o in out), 1e-12)
    levels = np.array([o[0] for o in out])
    extrapolated = (4 * levels[-1] - levels[-2]) / 3
    oracle = setup.memo("shooting", lambda: shooting_mit_eigenvalue(setup.g1))
    res.add("richardson_vs_shooting", abs(extrapolated - oracle), 1e-4)
    est = estimate_order(setup.grid_sizes, np.abs(levels - oracle))
    res.ladders["lowest_level_error"] = est
    res.data.update({"lowest_levels": levels.tolist(), "extrapolated": float(extrapolated), "shooting": oracle})
    res.traces["ground_state_ladder"] = [["quantity", "N", "error"]] + _ladder_table("lowest_level_error", est)
    return res


def state_pullback(setup: Setup) -> CheckResult:
    """Pulled-back Q0 invariants and coincidence of two-point functions near Sigma_plus."""
    res = CheckResult("state_pullback")
    if not setup.g1.static:
        res.require("target_metric_static", False)
        return res
    n = setup.finest
    plan = _plan(setup, n)
    gs = _ground(setup, n)
    window = (setup.t_plus, setup.t_end)
    rng = setup.rng(10)
    pairs = setup.count("test_pairs", 10)
    span = window[1] - window[0]
    srcs = [
        random_bump_source(rng, (window[0] + 0.05 * span, window[1] - 0.05 * span), setup.length, 0.2 * setup.length, (0.05, 0.1))
        for _ in range(2 * pairs)
    ]
    prop1 = CausalPropagator(plan.d1, plan.spaces1, plan.grid, setup.t_plus, t_span=window)
    propc = CausalPropagator(plan.dchi, plan.spaces, plan.grid, setup.t_plus, t_span=window)
    psi1, psic = setup.map(lambda p: p.many(srcs), (prop1, propc))
    phi = moller_inverse(plan, psic, check=False)
    state0 = pullback_state(gs.state, plan, phi)
    eps = state0.meta["unitarity_deviation"]
    cert = state0.certify()
    res.add("unitarity_deviation", eps, 1e-2)
    res.add("Q0_self_adjoint", cert["self_adjoint"], 1e-10)
    res.add("Q0_spectrum_min", cert["spectrum_min"], -eps - 1e-12, ">=")
    res.add("Q0_spectrum_max", cert["spectrum_max"], 1 + eps + 1e-12)
    # the Gamma defect of the pulled-back state is bounded by the unitarity defect itself
    res.add("Q0_gamma_residual", cert["gamma_residual"], eps * (1 + 1e-6) + 1e-12)
    rel = []
    samples = []
    for a in range(pairs):
        i, j = 2 * a, 2 * a + 1
        w1 = two_point(gs.state, psi1[i], psi1[j])
        wc = two_point(state0, phi[i], phi[j])
        rel.append(abs(wc - w1) / abs(w1))
        samples.append({"omega_1": [w1.real, w1.imag], "omega_chi": [wc.real, wc.imag]})
    res.add("near_sigma_plus_relative", max(rel), 1e-3)
    res.data.update({"grid": n, "two_point_samples": samples, "Q0_certificate": cert})
    return res


def field_equation(setup: Setup) -> CheckResult:
    """|omega^2(f, D f')| for the ground state over the ladder."""
    res = CheckResult("field_equation")
    if not setup.g1.static:
        res.require("target_metric_static", False)
        return res
    d1 = build_dirac(setup.g1)
    spaces = boundary_pair("mit", None, setup.g1)
    rng = setup.rng(11)
    tr = (0.05 * setup.t_end, 0.95 * setup.t_end)
    fs = [random_bump_source(rng, tr, setup.length, 0.1 * setup.length, (0.15, 0.25)) for _ in range(3)]
    fp = [random_bump_source(rng, tr, setup.length, 0.1 * setup.length, (0.15, 0.25)) for _ in range(3)]

    def run(n):
        gs = _ground(setup, n)
        prop = CausalPropagator(d1, spaces, Grid(n), 0.5 * setup.t_end)
        psi = prop.many(fs)
        chi = prop.many([OperatorImage(d1, f) for f in fp])
        resid = max(abs(two_point(gs.state, psi[i], chi[j])) for i in range(3) for j in range(3))
        scale = max(abs(two_point(gs.state, psi[i], psi[i])) for i in range(3))
        return resid, scale

    out = setup.memo("field_equation", lambda: setup.map(run, setup.grid_sizes))
    est = estimate_order(setup.grid_sizes, [o[0] for o in out])
    res.order("field_equation_residual", est)
    res.data["two_point_scale"] = [o[1] for o in out]
    res.traces["field_equation_ladder"] = [["quantity", "N", "error"]] + _ladder_table("field_equation_residual", est)
    return res


# ---------------------------------------------------------------- registry


CHECKS: dict[str, Callable[[Setup], CheckResult]] = {
    "clifford_identities": clifford_identities,
    "boundary_identities": boundary_identities,
    "transport_closed_form": transport_closed_form,
    "kappa_contract": kappa_contract,
    "solver_convergence": solver_convergence,
    "finite_propagation": finite_propagation,
    "green_operators": green_operators,
    "moller_unitarity": moller_unitarity,
    "moller_round_trip": moller_round_trip,
    "car_layer": car_layer,
    "ground_state": ground_state,
    "state_pullback": state_pullback,
    "field_equation": field_equation,
}

SUITES: dict[str, tuple[str, ...]] = {
    "check-clifford": ("clifford_identities", "transport_closed_form", "kappa_contract"),
    "check-boundary": ("boundary_identities",),
    "evolve": ("solver_convergence",),
    "green": ("finite_propagation", "green_operators"),
    "moller": ("moller_unitarity", "moller_round_trip"),
    "state": ("car_layer", "ground_state", "state_pullback", "field_equation"),
    "convergence": (
        "solver_convergence",
        "green_operators",
        "moller_unitarity",
        "moller_round_trip",
        "ground_state",
        "field_equation",
    ),
}


def run_check(name: str, setup: Setup) -> CheckResult:
    """Run one check, sharing results through ``setup.cache`` when suites overlap."""
    return setup.memo(f"check:{name}", lambda: CHECKS[name](setup))
