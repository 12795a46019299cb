"""Parallel transport along lambda -> (lambda, p) through the family g_lambda.

For the straight-line path between two split metrics the transport equation is
diagonal in coordinates:

    dV^t/dlambda = -1/2 (d_lambda b / b) V^t,    b = (1 - lambda) beta0^2 + lambda beta1^2
    dV^x/dlambda = -1/2 (d_lambda h / h) V^x

Integrating it with classical RK4 gives the frame map ``wp``.  The change of
orthonormal frames is a boost, lifted to spinors as ``exp(-theta/2 * G)`` with
``G = gamma0 gamma1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clifford import GammaRep, make_canonical_rep
from .geometry import MetricPath

DEFAULT_STEP = 1e-3


def _rhs(path: MetricPath, t, x):
    b0 = path.g0.lapse(t, x) ** 2
    b1 = path.g1.lapse(t, x) ** 2
    h0 = path.g0.spatial(t, x)
    h1 = path.g1.spatial(t, x)

    def f(lam, v):
        rate_t = -0.5 * (b1 - b0) / ((1 - lam) * b0 + lam * b1)
        rate_x = -0.5 * (h1 - h0) / ((1 - lam) * h0 + lam * h1)
        return np.stack([rate_t[..., None] * v[..., 0, :], rate_x[..., None] * v[..., 1, :]], axis=-2)

    return f


def _rk4(f, v, lam0: float, lam1: float, step: float):
    n = max(1, int(np.ceil(abs(lam1 - lam0) / step - 1e-9)))
    h = (lam1 - lam0) / n
    for k in range(n):
        lam = lam0 + k * h
        k1 = f(lam, v)
        k2 = f(lam + h / 2, v + h / 2 * k1)
        k3 = f(lam + h / 2, v + h / 2 * k2)
        k4 = f(lam + h, v + h * k3)
        v = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return v


def frame_transport(
    path: MetricPath, t, x, step: float = DEFAULT_STEP, lam0: float = 0.0, lam1: float = 1.0
) -> np.ndarray:
    """Matrix of the vector transport T_p M_lam0 -> T_p M_lam1 in coordinates, shape (..., 2, 2)."""
    t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    eye = np.broadcast_to(np.eye(2), t.shape + (2, 2)).copy()
    return _rk4(_rhs(path, t, x), eye, lam0, lam1, step)


def frame_transport_exact(path: MetricPath, t, x) -> np.ndarray:
    """Closed-form solution of the transport equation from lambda = 0 to 1."""
    t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    out = np.zeros(t.shape + (2, 2))
    out[..., 0, 0] = path.g0.lapse(t, x) / path.g1.lapse(t, x)
    out[..., 1, 1] = np.sqrt(path.g0.spatial(t, x) / path.g1.spatial(t, x))
    return out


def transport_vector(path: MetricPath, p, y0, step: float = DEFAULT_STEP) -> np.ndarray:
    """Transport the coordinate vector ``y0`` at ``p = (t, x)`` from g0 to g1."""
    t, x = p
    path.g0.check_point(t, x)
    return frame_transport(path, t, x, step) @ np.asarray(y0, float)


def transport_covector(path: MetricPath, p, xi, step: float = DEFAULT_STEP) -> np.ndarray:
    """Covector transport by duality: (wp (xi^sharp_0))^flat_1."""
    t, x = p
    xi = np.asarray(xi, float)
    g0, g1 = path.g0, path.g1
    raised = np.array([-xi[0] / g0.lapse(t, x) ** 2, xi[1] / g0.spatial(t, x)])
    v = transport_vector(path, p, raised, step)
    return np.array([-g1.lapse(t, x) ** 2 * v[0], g1.spatial(t, x) * v[1]]).astype(float)


def frame_change(path: MetricPath, wp: np.ndarray, t, x) -> np.ndarray:
    """Express ``wp`` as a map from g0-orthonormal to g1-orthonormal frame components."""
    to1 = np.zeros(wp.shape)
    to1[..., 0, 0] = path.g1.lapse(t, x)
    to1[..., 1, 1] = np.sqrt(path.g1.spatial(t, x))
    from0 = np.zeros(wp.shape)
    from0[..., 0, 0] = 1.0 / path.g0.lapse(t, x)
    from0[..., 1, 1] = 1.0 / np.sqrt(path.g0.spatial(t, x))
    return to1 @ wp @ from0


def rapidity(frame_map: np.ndarray) -> np.ndarray:
    """theta with frame_map e0 = cosh(theta) e0 + sinh(theta) e1."""
    return np.arcsinh(frame_map[..., 1, 0])


def spin_lift(theta, rep: GammaRep | None = None) -> np.ndarray:
    """exp(-theta/2 * G): the spinor map covering the boost of rapidity ``theta``."""
    rep = rep or make_canonical_rep()
    theta = np.asarray(theta, float)[..., None, None]
    return np.cosh(theta / 2) * np.eye(2) - np.sinh(theta / 2) * rep.chirality


def boost(theta) -> np.ndarray:
    theta = np.asarray(theta, float)
    out = np.empty(theta.shape + (2, 2))
    out[..., 0, 0] = out[..., 1, 1] = np.cosh(theta)
    out[..., 0, 1] = out[..., 1, 0] = np.sinh(theta)
    return out


@dataclass(frozen=True)
class TransportResult:
    wp: np.ndarray
    kappa: np.ndarray
    theta: np.ndarray
    lambda_step: float | None


def transport(
    path: MetricPath, t, x, step: float | None = DEFAULT_STEP, rep: GammaRep | None = None
) -> TransportResult:
    """Frame and spinor transport at the points (t, x).  ``step=None`` uses the closed form."""
    t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    wp = frame_transport_exact(path, t, x) if step is None else frame_transport(path, t, x, step)
    theta = rapidity(frame_change(path, wp, t, x))
    return TransportResult(wp=wp, kappa=spin_lift(theta, rep), theta=theta, lambda_step=step)


def transport_spinor(path: MetricPath, p, step: float | None = DEFAULT_STEP, rep: GammaRep | None = None):
    """kappa at ``p``: the spin lift of the frame change produced by transport."""
    t, x = p
    path.g0.check_point(t, x)
    return transport(path, t, x, step, rep).kappa


def kappa_field(path: MetricPath, rep: GammaRep | None = None):
    """Callable (t, x) -> kappa built from the closed-form frame transport."""

    def kappa(t, x):
        return transport(path, t, x, None, rep).kappa

    return kappa


def kappa_f(f, kappa):
    """Return (f kappa, kappa^-1 / f).  ``f`` must be positive."""
    f = np.asarray(f, float)
    if np.any(f <= 0) or not np.all(np.isfinite(f)):
        raise ValueError("the weight f must be positive and finite")
    kappa = np.asarray(kappa)
    fe = f[..., None, None]
    return fe * kappa, np.linalg.inv(kappa) / fe


def normal_pairing(path: MetricPath, t, side: str, step: float = DEFAULT_STEP) -> float:
    """h1(wp n0, n1) for the outward unit normals at the boundary line ``side``."""
    x = 0.0 if side == "left" else path.length
    nu = -1.0 if side == "left" else 1.0
    n0 = np.array([0.0, nu / np.sqrt(path.g0.spatial(t, x))])
    n1 = np.array([0.0, nu / np.sqrt(path.g1.spatial(t, x))])
    moved = transport_vector(path, (t, x), n0, step)
    return float(path.g1.spatial(t, x) * moved[1] * n1[1])
