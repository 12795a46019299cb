"""Reference values computed independently of the package internals."""

from __future__ import annotations

import numpy as np
import sympy as sp
from scipy import integrate

from moller_dirac.geometry import SplitMetric

T, X = sp.symbols("t x", real=True)


def symbolic_metric(beta_expr, h_expr, length: float = 1.0, t_end: float = 1.0, name: str = "symbolic") -> SplitMetric:
    """SplitMetric whose coefficients are lambdified sympy expressions in (t, x)."""
    beta = sp.lambdify((T, X), beta_expr, "numpy")
    h = sp.lambdify((T, X), h_expr, "numpy")

    def wrap(fn):
        return lambda t, x: np.broadcast_to(np.asarray(fn(t, x), float), np.broadcast(t, x).shape) * 1.0

    return SplitMetric(wrap(beta), wrap(h), length, t_end, name)


def divergence_terms(beta_expr, h_expr):
    """div(e0) and div(e1) for e0 = beta^-1 d_t, e1 = h^-1/2 d_x via (1/sqrt|g|) d_mu(sqrt|g| V^mu)."""
    vol = beta_expr * sp.sqrt(h_expr)
    div0 = sp.diff(vol / beta_expr, T) / vol
    div1 = sp.diff(vol / sp.sqrt(h_expr), X) / vol
    return sp.simplify(div0), sp.simplify(div1)


def dirac_zero_order(beta_expr, h_expr, gamma0: np.ndarray, gamma1: np.ndarray):
    """Zero-order coefficient of D = -gamma0 (e0 + div e0 / 2) + gamma1 (e1 + div e1 / 2)."""
    div0, div1 = divergence_terms(beta_expr, h_expr)
    f0 = sp.lambdify((T, X), div0, "numpy")
    f1 = sp.lambdify((T, X), div1, "numpy")

    def zero_order(t, x):
        d0 = np.asarray(f0(t, x), float) * np.ones(np.broadcast(t, x).shape)
        d1 = np.asarray(f1(t, x), float) * np.ones(np.broadcast(t, x).shape)
        return -0.5 * d0[..., None, None] * gamma0 + 0.5 * d1[..., None, None] * gamma1

    return zero_order


def mit_levels(g: SplitMetric, count: int = 3, t: float = 0.0) -> np.ndarray:
    """Positive MIT frequencies of the massless static problem: (2m + 1) pi / (2 tau).

    ``tau`` is the optical length of the slice, the integral of sqrt(h) / beta.
    """
    tau, _ = integrate.quad(lambda x: float(np.sqrt(g.spatial(t, x)) / g.lapse(t, x)), 0.0, g.length, epsabs=1e-13, epsrel=1e-13, limit=200)
    return (2 * np.arange(count) + 1) * np.pi / (2 * tau)


def minkowski_mit_mode(level: int = 0, length: float = 1.0):
    """Exact MIT standing wave on the Minkowski strip: e^{-iEt} (e^{iEx}, -i e^{-iEx})."""
    energy = (2 * level + 1) * np.pi / (2 * length)

    def psi(t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        phase = np.exp(-1j * energy * t)
        return np.stack([phase * np.exp(1j * energy * x), -1j * phase * np.exp(-1j * energy * x)], axis=-1)

    return energy, psi


def transport_factor():
    """Symbolic V(1) / V(0) for dV/dlam = -1/2 (h1 - h0) / ((1 - lam) h0 + lam h1) V, as a function of (h0, h1)."""
    lam = sp.symbols("lam", real=True)
    h0, h1 = sp.symbols("h0 h1", positive=True)
    v = sp.Function("v")
    ode = sp.Eq(v(lam).diff(lam), -sp.Rational(1, 2) * (h1 - h0) / ((1 - lam) * h0 + lam * h1) * v(lam))
    sol = sp.dsolve(ode, v(lam), ics={v(0): 1})
    return sp.lambdify((h0, h1), sp.simplify(sol.rhs.subs(lam, 1)), "numpy")
