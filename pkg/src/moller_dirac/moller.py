"""Moller map between Dirac solution spaces of two metrics with MIT conditions.

A D0 solution, given by its slice on t = t_minus, is identified with a spinor
on the g1 side by the weighted transport f kappa, evolved with the
interpolating operator D_chi under the interpolating MIT space, and read off on
t = t_plus.  For t >= t_plus the interpolating operator coincides with D1, so
that slice already determines the D1 solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .boundary import BoundarySpace, boundary_pair, interpolated_mit
from .clifford import GammaRep, make_canonical_rep, slice_weights
from .dirac import FirstOrderSystem, build_dirac, interpolate_operator, intertwine
from .geometry import ChiProfile, MetricPath, conformal_factor_f, spatial_grid
from .solver import Discretization, Grid, evolve, time_nodes
from .transport import kappa_f, kappa_field


class CompatibilityError(ValueError):
    """Input slice does not satisfy the boundary condition it is claimed to satisfy."""


@dataclass(eq=False)
class MollerPlan:
    """Everything needed to apply the Moller map on one spatial grid."""

    path: MetricPath
    chi: ChiProfile
    grid: Grid
    f: Callable | None = None
    rep: GammaRep = field(default_factory=make_canonical_rep)
    alpha: float = 0.0
    correction: float = 0.5
    integrator: str = "gauss4"
    input_tolerance: float = 1e-8

    def __post_init__(self):
        if self.f is None:
            self.f = conformal_factor_f(self.path.g0, self.path.g1)
        if not 0.0 <= self.t_minus < self.t_plus <= self.path.t_end:
            raise ValueError("need 0 <= t_minus < t_plus <= T")

    @property
    def t_minus(self) -> float:
        return self.chi.t_minus

    @property
    def t_plus(self) -> float:
        return self.chi.t_plus

    @cached_property
    def xs(self) -> np.ndarray:
        return spatial_grid(self.path.length, self.grid.n)

    @cached_property
    def d0(self) -> FirstOrderSystem:
        return build_dirac(self.path.g0, self.rep)

    @cached_property
    def d1(self) -> FirstOrderSystem:
        return build_dirac(self.path.g1, self.rep)

    @cached_property
    def kappa(self):
        return kappa_field(self.path, self.rep)

    @cached_property
    def d01(self) -> FirstOrderSystem:
        return intertwine(self.d0, self.path.g1, self.kappa, self.f)

    @cached_property
    def dchi(self) -> FirstOrderSystem:
        return interpolate_operator(self.d01, self.d1, self.chi, self.correction)

    @cached_property
    def spaces(self) -> tuple[BoundarySpace, BoundarySpace]:
        return tuple(interpolated_mit(self.rep, self.path, self.chi, side) for side in ("left", "right"))

    @cached_property
    def spaces0(self):
        return boundary_pair("mit", self.rep, self.path.g0)

    @cached_property
    def spaces1(self):
        return boundary_pair("mit", self.rep, self.path.g1)

    @cached_property
    def disc(self) -> Discretization:
        return Discretization(self.dchi, self.spaces, self.grid.n, self.alpha)

    @cached_property
    def nodes(self) -> np.ndarray:
        speed = self.disc.max_speed(self.t_minus, self.t_plus)
        return time_nodes(self.t_minus, self.t_plus, self.grid.cfl * self.disc.dx / speed)

    def weights0(self) -> np.ndarray:
        return slice_weights(self.path.g0, self.t_minus, self.grid.n, self.rep)

    def weights1(self) -> np.ndarray:
        return slice_weights(self.path.g1, self.t_plus, self.grid.n, self.rep)

    def identification(self, t: float):
        """(f kappa, (f kappa)^-1) sampled on the grid at time ``t``."""
        return kappa_f(self.f(t, self.xs), self.kappa(t, self.xs))


def make_plan(g0, g1, t_minus: float, t_plus: float, n: int, **kw) -> MollerPlan:
    cfl = kw.pop("cfl", 0.5)
    return MollerPlan(MetricPath(g0, g1), ChiProfile(t_minus, t_plus), Grid(n, cfl), **kw)


def _check_input(plan: MollerPlan, psi: np.ndarray, spaces, t: float) -> None:
    scale = max(float(np.abs(psi).max()), 1e-300)
    for node, sp in ((0, spaces[0]), (-1, spaces[1])):
        bad = np.abs(psi[..., node, :] @ sp.complement(t).T).max()
        if bad > plan.input_tolerance * scale:
            raise CompatibilityError(
                f"input violates the {sp.label} condition on the {sp.side} side by {bad:.3e}"
            )


def _run(plan: MollerPlan, psi: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    hist = evolve(
        plan.dchi, plan.spaces, psi, plan.grid, nodes[0], nodes[-1],
        times=nodes, store="ends", disc=plan.disc, track=False, integrator=plan.integrator,
    )
    return hist.final


def moller_forward(plan: MollerPlan, psi0, check: bool = True) -> np.ndarray:
    """Map slices of D0 solutions on t_minus to slices of D1 solutions on t_plus."""
    psi0 = np.asarray(psi0, complex)
    if check:
        _check_input(plan, psi0, plan.spaces0, plan.t_minus)
    kf, _ = plan.identification(plan.t_minus)
    start = np.einsum("jik,...jk->...ji", kf, psi0)
    return _run(plan, start, plan.nodes)


def moller_inverse(plan: MollerPlan, psi1, check: bool = True) -> np.ndarray:
    """Inverse map: slices on t_plus back to D0 slices on t_minus."""
    psi1 = np.asarray(psi1, complex)
    if check:
        _check_input(plan, psi1, plan.spaces1, plan.t_plus)
    back = _run(plan, psi1, plan.nodes[::-1])
    _, kinv = plan.identification(plan.t_minus)
    return np.einsum("jik,...jk->...ji", kinv, back)


def moller_forward_split(plan: MollerPlan, psi0, t_mid: float) -> np.ndarray:
    """Same map computed in two passes with the intermediate slice stored at the node nearest ``t_mid``."""
    kf, _ = plan.identification(plan.t_minus)
    start = np.einsum("jik,...jk->...ji", kf, np.asarray(psi0, complex))
    k = int(np.argmin(np.abs(plan.nodes - t_mid)))
    k = min(max(k, 1), len(plan.nodes) - 2)
    middle = _run(plan, start, plan.nodes[: k + 1])
    return _run(plan, middle, plan.nodes[k:])


def gram(weights: np.ndarray, family: np.ndarray) -> np.ndarray:
    """Gram matrix sum_j psi_a,j^H W_j psi_b,j of a family of slices (shape (k, n+1, 2))."""
    return np.einsum("aji,jik,bjk->ab", np.conj(family), weights, family)


def gram_deviation(plan: MollerPlan, family) -> float:
    """||G(R family) - G(family)||_F / ||G(family)||_F with products on t_plus (g1) and t_minus (g0)."""
    family = np.asarray(family, complex)
    before = gram(plan.weights0(), family)
    after = gram(plan.weights1(), moller_forward(plan, family))
    return float(np.linalg.norm(after - before) / np.linalg.norm(before))


def check_unitarity(plan: MollerPlan, psi0, phi0) -> float:
    """| <<R psi, R phi>>_1 - <<psi, phi>>_0 |."""
    pair = np.stack([np.asarray(psi0, complex), np.asarray(phi0, complex)])
    before = gram(plan.weights0(), pair)[0, 1]
    after = gram(plan.weights1(), moller_forward(plan, pair))[0, 1]
    return float(abs(after - before))


def round_trip_error(plan: MollerPlan, family) -> float:
    """max over the family of ||R^-1 R psi - psi|| / ||psi|| in the g0 slice norm."""
    family = np.asarray(family, complex)
    back = moller_inverse(plan, moller_forward(plan, family), check=False)
    w = plan.weights0()
    diff = np.real(np.einsum("aji,jik,ajk->a", np.conj(back - family), w, back - family))
    size = np.real(np.einsum("aji,jik,ajk->a", np.conj(family), w, family))
    return float(np.sqrt(diff / size).max())
