"""First-order systems sigma_t d_t + A d_x + B, the Dirac operator, and its deformations.

Coefficients are stored in the frame trivialization of the spinor bundle (the
frame e0 = d_t / beta, e1 = d_x / sqrt(h)), so the spin form is the constant
matrix M of the representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .clifford import GammaRep, clifford_of_covector, make_canonical_rep
from .geometry import ChiProfile, SplitMetric, fd4

Coefficients = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]

_STEP = 1e-4


class ContractError(ValueError):
    """An input violates a structural requirement (e.g. a potential that is not skew)."""


@dataclass(frozen=True, eq=False)
class FirstOrderSystem:
    """Operator psi -> sigma_t d_t psi + A d_x psi + B psi with 2x2 matrix coefficients."""

    coefficients: Coefficients
    metric: SplitMetric
    rep: GammaRep = field(default_factory=make_canonical_rep)
    label: str = "system"
    static: bool = False
    principal: Callable | None = None
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def coeffs(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        if not self.static:
            return self.coefficients(t, x)
        # time-independent coefficients: reuse samples taken at the same abscissae
        key = (x.shape, x.tobytes())
        hit = self._memo.get(key)
        if hit is None:
            if len(self._memo) > 32:
                self._memo.clear()
            hit = self._memo[key] = self.coefficients(t, x)
        return hit

    def principal_part(self, t, x):
        """(sigma_t, A) without assembling the zero-order term."""
        if self.principal is None:
            return self.coeffs(t, x)[:2]
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        return self.principal(t, x)

    def sigma_dt(self, t, x):
        return self.coeffs(t, x)[0]

    def A(self, t, x):
        return self.coeffs(t, x)[1]

    def B(self, t, x):
        return self.coeffs(t, x)[2]

    def symbol(self, t, x, xi) -> np.ndarray:
        """Principal symbol xi_t sigma_t + xi_x A at the real covector ``xi``."""
        s, a = self.principal_part(t, x)
        xi = np.asarray(xi, float)
        return xi[..., 0, None, None] * s + xi[..., 1, None, None] * a

    def apply(self, section: Callable, t, x, step: float = 1e-3) -> np.ndarray:
        """Apply the operator to a closed-form section ``(t, x) -> (..., 2)``."""
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        s, a, b = self.coeffs(t, x)
        d_t = fd4(lambda u: section(u, x), t, step)
        d_x = fd4(lambda u: section(t, u), x, step)
        val = section(t, x)
        mv = lambda m, v: np.einsum("...ij,...j->...i", m, v)
        return mv(s, d_t) + mv(a, d_x) + mv(b, val)

    def apply_grid(self, values: np.ndarray, ts: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Second-order central-difference application on a tensor grid.

        ``values`` has shape ``(len(ts), len(xs), 2)``; the result is defined on
        the interior nodes ``[1:-1, 1:-1]``.
        """
        dt = ts[2:] - ts[:-2]
        dx = xs[2:] - xs[:-2]
        d_t = (values[2:, 1:-1] - values[:-2, 1:-1]) / dt[:, None, None]
        d_x = (values[1:-1, 2:] - values[1:-1, :-2]) / dx[None, :, None]
        tt, xx = np.meshgrid(ts[1:-1], xs[1:-1], indexing="ij")
        s, a, b = self.coeffs(tt, xx)
        mv = lambda m, v: np.einsum("...ij,...j->...i", m, v)
        return mv(s, d_t) + mv(a, d_x) + mv(b, values[1:-1, 1:-1])

    def volume_density(self, t, x) -> np.ndarray:
        return self.metric.lapse(t, x) * np.sqrt(self.metric.spatial(t, x))


def _dirac_principal(g: SplitMetric, rep: GammaRep):
    def principal(t, x):
        beta = g.lapse(t, x)
        sq = np.sqrt(g.spatial(t, x))
        sigma = -(1.0 / beta)[..., None, None] * rep.gamma0
        return sigma.astype(complex), ((1.0 / sq)[..., None, None] * rep.gamma1).astype(complex)

    return principal


def _dirac_coefficients(g: SplitMetric, rep: GammaRep, potential):
    g0, g1 = rep.gamma0, rep.gamma1

    def coeffs(t, x):
        beta = g.lapse(t, x)
        h = g.spatial(t, x)
        sq = np.sqrt(h)
        sigma = -(1.0 / beta)[..., None, None] * g0
        a = (1.0 / sq)[..., None, None] * g1
        div0 = 0.5 * g.dt("h", t, x) / (h * beta)  # d_t(sqrt h) / (beta sqrt h)
        div1 = g.dx("beta", t, x) / (beta * sq)
        b = -0.5 * div0[..., None, None] * g0 + 0.5 * div1[..., None, None] * g1
        if potential is not None:
            b = b + potential(t, x)
        return np.broadcast_to(sigma, beta.shape + (2, 2)).astype(complex), a.astype(complex), b.astype(complex)

    return coeffs


def _as_field(potential):
    if potential is None or callable(potential):
        return potential
    mat = np.asarray(potential, complex)
    return lambda t, x: np.broadcast_to(mat, np.broadcast(t, x).shape + (2, 2))


def build_dirac(
    g: SplitMetric, rep: GammaRep | None = None, potential=None, tol: float = 1e-12
) -> FirstOrderSystem:
    """Dirac operator of ``g`` plus an optional potential that is skew for the spin form.

    With D = -gamma0 (e0 + div(e0)/2) + gamma1 (e1 + div(e1)/2) the symbol is
    sigma(xi) = gamma(xi^sharp), so sigma(dt) = -gamma0 / beta and A = gamma1 / sqrt(h).
    """
    rep = rep or make_canonical_rep()
    pot = _as_field(potential)
    if pot is not None:
        ts = np.linspace(0, g.t_end, 7)[:, None]
        xs = np.linspace(0, g.length, 7)[None, :]
        v = pot(ts, xs)
        m = rep.spin_form
        skew = m @ v + np.conj(np.swapaxes(v, -1, -2)) @ m
        if np.abs(skew).max() > tol * max(1.0, np.abs(v).max()):
            raise ContractError("potential must satisfy M V + V^H M = 0")
    return FirstOrderSystem(
        _dirac_coefficients(g, rep, pot),
        g,
        rep,
        f"dirac[{g.name}]",
        static=g.static,
        principal=_dirac_principal(g, rep),
    )


def mass_potential(mass: float, rep: GammaRep | None = None):
    """i m Id: the skew zero-order term that turns D into D + i m."""
    return 1j * mass * np.eye(2)


def intertwine(
    d0: FirstOrderSystem,
    g1: SplitMetric,
    kappa: Callable[[np.ndarray, np.ndarray], np.ndarray],
    f: Callable[[np.ndarray, np.ndarray], np.ndarray],
    step: float = _STEP,
) -> FirstOrderSystem:
    """(f kappa) D0 (f kappa)^-1, viewed as an operator on ``g1``."""

    def weighted(t, x):
        return np.linalg.inv(kappa(t, x)) / f(t, x)[..., None, None]

    def principal(t, x):
        s0, a0 = d0.principal_part(t, x)
        kf = f(t, x)[..., None, None] * kappa(t, x)
        kinv = weighted(t, x)
        return kf @ s0 @ kinv, kf @ a0 @ kinv

    def coeffs(t, x):
        s0, a0, b0 = d0.coeffs(t, x)
        kf = f(t, x)[..., None, None] * kappa(t, x)
        kinv = weighted(t, x)
        dt_kinv = fd4(lambda u: weighted(u, x), t, step)
        dx_kinv = fd4(lambda u: weighted(t, u), x, step)
        sigma = kf @ s0 @ kinv
        a = kf @ a0 @ kinv
        b = kf @ (s0 @ dt_kinv + a0 @ dx_kinv + b0 @ kinv)
        return sigma, a, b

    return FirstOrderSystem(coeffs, g1, d0.rep, f"intertwined[{d0.label}]", principal=principal)


def interpolate_operator(
    d01: FirstOrderSystem, d1: FirstOrderSystem, chi: ChiProfile | Callable, correction: float = 0.5
) -> FirstOrderSystem:
    """(1 - chi) D01 + chi D1 + correction * (sigma_D1 - sigma_D01)(d chi).

    ``correction = 0.5`` keeps the result formally skew-adjoint; other values
    exist only for negative controls.
    """
    if d01.metric.length != d1.metric.length or d01.metric.t_end != d1.metric.t_end:
        raise ValueError("operators must live on the same domain")

    def dchi(t):
        if hasattr(chi, "derivative"):
            return chi.derivative(t)
        return fd4(chi, t, _STEP)

    def weight(t):
        c = np.asarray(chi(t), float)
        if np.any(c < 0) or np.any(c > 1):
            raise ValueError("chi must take values in [0, 1]")
        return c

    def principal(t, x):
        ce = weight(t)[..., None, None]
        s0, a0 = d01.principal_part(t, x)
        s1, a1 = d1.principal_part(t, x)
        return (1 - ce) * s0 + ce * s1, (1 - ce) * a0 + ce * a1

    def coeffs(t, x):
        c = weight(t)
        rate = correction * dchi(t)
        # outside the switching window the blend is one of the endpoints exactly
        if not np.any(rate):
            if np.all(c == 1.0):
                return d1.coeffs(t, x)
            if np.all(c == 0.0):
                return d01.coeffs(t, x)
        s0, a0, b0 = d01.coeffs(t, x)
        s1, a1, b1 = d1.coeffs(t, x)
        ce = c[..., None, None]
        w = rate[..., None, None]
        sigma = (1 - ce) * s0 + ce * s1
        a = (1 - ce) * a0 + ce * a1
        b = (1 - ce) * b0 + ce * b1 + w * (s1 - s0)
        return sigma, a, b

    return FirstOrderSystem(
        coeffs, d1.metric, d1.rep, f"interpolated[{d01.label},{d1.label}]", principal=principal
    )


# ---------------------------------------------------------------- certificates


def symmetry_residual(d: FirstOrderSystem, t, x, xi) -> float:
    """max || sigma(xi)^H M - M sigma(xi) || over the sampled covectors."""
    s = d.symbol(t, x, xi)
    m = d.rep.spin_form
    return float(np.abs(np.conj(np.swapaxes(s, -1, -2)) @ m - m @ s).max())


def principal_symbol_residual(d: FirstOrderSystem, t, x, xi) -> float:
    """max || sigma_D(xi) - gamma(xi^sharp) || for the Dirac operator of ``d.metric``."""
    return float(np.abs(d.symbol(t, x, xi) - clifford_of_covector(d.metric, t, x, xi, d.rep)).max())


def hyperbolicity_margin(d: FirstOrderSystem, t, x, cone: Callable | float = 1.0, samples: int = 33) -> float:
    """Smallest eigenvalue of M sigma(-(dt + C xi dx)) over covectors with dt + xi dx causal.

    Future-directed covectors have negative dt component in the convention
    sigma(xi) = gamma(xi^sharp); the sign flip accounts for that.
    """
    t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    c = cone(t) if callable(cone) else np.full(t.shape, float(cone))
    edge = np.sqrt(d.metric.spatial(t, x)) / d.metric.lapse(t, x)
    worst = np.inf
    m = d.rep.spin_form
    for s in np.linspace(-1, 1, samples):
        xi = np.stack([-np.ones(t.shape), -c * s * edge], axis=-1)
        form = m @ d.symbol(t, x, xi)
        form = 0.5 * (form + np.conj(np.swapaxes(form, -1, -2)))
        worst = min(worst, float(np.linalg.eigvalsh(form).min()))
    return worst


def boundary_symbol(d: FirstOrderSystem, t, side: str) -> np.ndarray:
    """sigma(n_flat) for the outward unit conormal on the boundary line ``side``."""
    x = 0.0 if side == "left" else d.metric.length
    nu = -1.0 if side == "left" else 1.0
    sq = np.sqrt(d.metric.spatial(t, x))
    return d.symbol(t, x, np.array([0.0, nu * sq]))


def characteristic_margin(d: FirstOrderSystem, t) -> float:
    """min |det sigma(n_flat)| over both boundary lines (zero means characteristic)."""
    return float(min(abs(np.linalg.det(boundary_symbol(d, t, s))) for s in ("left", "right")))


def check_skew_adjoint(d: FirstOrderSystem, psi: Callable, phi: Callable, n: int, t_range=None) -> float:
    """|int <D psi, phi> + <psi, D phi> dvol| on an (n+1)^2 tensor grid.

    Derivatives are second-order central differences of the sampled sections;
    the integral uses the trapezoid rule over interior nodes.
    """
    t0, t1 = t_range if t_range is not None else (0.0, d.metric.t_end)
    ts = np.linspace(t0, t1, n + 1)
    xs = np.linspace(0.0, d.metric.length, n + 1)
    tt, xx = np.meshgrid(ts, xs, indexing="ij")
    pv = psi(tt, xx)
    fv = phi(tt, xx)
    dpsi = d.apply_grid(pv, ts, xs)
    dphi = d.apply_grid(fv, ts, xs)
    ti, xi = tt[1:-1, 1:-1], xx[1:-1, 1:-1]
    dens = d.volume_density(ti, xi)
    inner = d.rep.spin(dpsi, fv[1:-1, 1:-1]) + d.rep.spin(pv[1:-1, 1:-1], dphi)
    cell = (ts[1] - ts[0]) * (xs[1] - xs[0])
    return float(abs(np.sum(inner * dens) * cell))
