"""Split Lorentzian metrics g = -beta^2 dt^2 + h dx^2 on a rectangle [0, T] x [0, L].

Coefficients are closed-form callables ``(t, x) -> array`` that broadcast over
numpy arrays.  Everything downstream samples them on whatever grid it needs,
so refinement studies always re-sample the analytic fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RectBivariateSpline

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

CONE_SAFETY = 1e-6
_FD_STEP = 1e-4
_DOMAIN_SLACK = 1e-12


class DomainError(ValueError):
    """A point lies outside the rectangle a metric is defined on."""


def _bcast(fn: Field, t, x) -> np.ndarray:
    t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    return np.broadcast_to(np.asarray(fn(t, x), float), t.shape).copy()


def fd4(fn: Callable[[np.ndarray], np.ndarray], s, step: float = _FD_STEP):
    """Fourth-order central difference of ``fn`` at ``s``."""
    return (-fn(s + 2 * step) + 8 * fn(s + step) - 8 * fn(s - step) + fn(s - 2 * step)) / (12 * step)


def spatial_grid(length: float, n: int) -> np.ndarray:
    """Uniform grid with ``n`` intervals, i.e. ``n + 1`` nodes including both ends."""
    if n < 4:
        raise ValueError(f"need at least 4 intervals, got {n}")
    return np.linspace(0.0, length, n + 1)


def sbp_norm(length: float, n: int) -> np.ndarray:
    """Diagonal norm of the second-order summation-by-parts operator (trapezoid weights)."""
    dx = length / n
    w = np.full(n + 1, dx)
    w[0] = w[-1] = 0.5 * dx
    return w


@dataclass(frozen=True)
class SplitMetric:
    """Lapse ``beta`` and spatial coefficient ``h`` on ``[0, t_end] x [0, length]``."""

    beta: Field
    h: Field
    length: float = 1.0
    t_end: float = 1.0
    name: str = "custom"
    static: bool = False

    def lapse(self, t, x) -> np.ndarray:
        return _bcast(self.beta, t, x)

    def spatial(self, t, x) -> np.ndarray:
        return _bcast(self.h, t, x)

    def check_point(self, t, x) -> None:
        t = np.asarray(t, float)
        x = np.asarray(x, float)
        bad = (
            (t < -_DOMAIN_SLACK)
            | (t > self.t_end + _DOMAIN_SLACK)
            | (x < -_DOMAIN_SLACK)
            | (x > self.length + _DOMAIN_SLACK)
        )
        if np.any(bad):
            raise DomainError(
                f"point outside [0, {self.t_end}] x [0, {self.length}] for metric {self.name!r}"
            )

    def dt(self, which: str, t, x) -> np.ndarray:
        """Time derivative of ``'beta'`` or ``'h'``."""
        fn = self._coef(which)
        x = np.asarray(x, float)
        return fd4(lambda s: _bcast(fn, s, x), np.asarray(t, float))

    def dx(self, which: str, t, x) -> np.ndarray:
        """Space derivative of ``'beta'`` or ``'h'``."""
        fn = self._coef(which)
        t = np.asarray(t, float)
        return fd4(lambda s: _bcast(fn, t, s), np.asarray(x, float))

    def _coef(self, which: str) -> Field:
        if which == "beta":
            return self.beta
        if which == "h":
            return self.h
        raise KeyError(which)

    def tensor(self, t, x) -> np.ndarray:
        """Metric components as a ``(..., 2, 2)`` array in coordinates (t, x)."""
        b = self.lapse(t, x)
        h = self.spatial(t, x)
        g = np.zeros(b.shape + (2, 2))
        g[..., 0, 0] = -(b**2)
        g[..., 1, 1] = h
        return g

    def norm2(self, t, x, v) -> np.ndarray:
        """g(v, v) for coordinate components ``v = (v_t, v_x)`` (trailing axis)."""
        v = np.asarray(v, float)
        return -self.lapse(t, x) ** 2 * v[..., 0] ** 2 + self.spatial(t, x) * v[..., 1] ** 2

    def is_positive(self, n: int = 64) -> bool:
        ts = np.linspace(0, self.t_end, n + 1)[:, None]
        xs = np.linspace(0, self.length, n + 1)[None, :]
        return bool(np.all(self.lapse(ts, xs) > 0) and np.all(self.spatial(ts, xs) > 0))

    def rescaled(self, omega: Field) -> "SplitMetric":
        """The conformally related metric omega^2 g."""
        return SplitMetric(
            beta=lambda t, x: _bcast(omega, t, x) * _bcast(self.beta, t, x),
            h=lambda t, x: _bcast(omega, t, x) ** 2 * _bcast(self.h, t, x),
            length=self.length,
            t_end=self.t_end,
            name=f"{self.name}*omega^2",
        )


# ---------------------------------------------------------------- presets


def _smooth_bump(r):
    """C-infinity bump exp(1 - 1/(1 - r^2)) on |r| < 1, peak value 1."""
    r = np.asarray(r, float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def minkowski(length: float = 1.0, t_end: float = 1.0) -> SplitMetric:
    one = lambda t, x: np.ones(np.broadcast(t, x).shape)
    return SplitMetric(one, one, length, t_end, "minkowski", static=True)


def constant(beta: float, h: float, length: float = 1.0, t_end: float = 1.0) -> SplitMetric:
    if beta <= 0 or h <= 0:
        raise ValueError("beta and h must be positive")
    return SplitMetric(
        lambda t, x: np.full(np.broadcast(t, x).shape, float(beta)),
        lambda t, x: np.full(np.broadcast(t, x).shape, float(h)),
        length,
        t_end,
        f"constant(beta={beta},h={h})",
        static=True,
    )


def conformal(amplitude: float = 0.2, length: float = 1.0, t_end: float = 1.0) -> SplitMetric:
    """Omega^2 times Minkowski with a smooth, time-dependent Omega."""
    if abs(amplitude) >= 1:
        raise ValueError("|amplitude| must be < 1")

    def omega(t, x):
        return 1.0 + amplitude * np.sin(np.pi * x / length) ** 2 * np.cos(np.pi * t / t_end)

    return SplitMetric(
        omega, lambda t, x: omega(t, x) ** 2, length, t_end, f"conformal({amplitude})"
    )


def bump(
    beta_amplitude: float = 0.2,
    h_amplitude: float = 0.3,
    t_center: float = 0.5,
    x_center: float = 0.5,
    t_width: float = 0.3,
    x_width: float = 0.4,
    length: float = 1.0,
    t_end: float = 1.0,
) -> SplitMetric:
    """Minkowski plus a compactly supported smooth bump in both coefficients."""
    if beta_amplitude <= -1 or h_amplitude <= -1:
        raise ValueError("amplitudes must exceed -1 to keep the metric positive")

    def shape(t, x):
        return _smooth_bump((t - t_center) / t_width) * _smooth_bump((x - x_center) / x_width)

    return SplitMetric(
        lambda t, x: 1.0 + beta_amplitude * shape(t, x),
        lambda t, x: (1.0 + h_amplitude * shape(t, x)) ** 2,
        length,
        t_end,
        "bump",
    )


def ultrastatic(
    h_amplitude: float = 0.0, beta_amplitude: float = 0.0, length: float = 1.0, t_end: float = 1.0
) -> SplitMetric:
    """Time-independent coefficients; ``beta_amplitude = 0`` gives a genuinely ultrastatic metric."""
    if h_amplitude <= -1 or beta_amplitude <= -1:
        raise ValueError("amplitudes must exceed -1")

    def prof(x):
        return np.sin(np.pi * x / length) ** 2

    return SplitMetric(
        lambda t, x: np.broadcast_to(1.0 + beta_amplitude * prof(x), np.broadcast(t, x).shape),
        lambda t, x: np.broadcast_to((1.0 + h_amplitude * prof(x)) ** 2, np.broadcast(t, x).shape),
        length,
        t_end,
        "ultrastatic",
        static=True,
    )


def from_table(t_nodes, x_nodes, beta_table, h_table, name: str = "table") -> SplitMetric:
    """Bicubic spline through tabulated coefficients (rows indexed by time)."""
    t_nodes = np.asarray(t_nodes, float)
    x_nodes = np.asarray(x_nodes, float)
    bt = np.asarray(beta_table, float)
    ht = np.asarray(h_table, float)
    if bt.shape != (t_nodes.size, x_nodes.size) or ht.shape != bt.shape:
        raise ValueError("coefficient tables must have shape (len(t), len(x))")
    if np.any(bt <= 0) or np.any(ht <= 0):
        raise ValueError("tabulated beta and h must be positive")
    kt = min(3, t_nodes.size - 1)
    kx = min(3, x_nodes.size - 1)
    sb = RectBivariateSpline(t_nodes, x_nodes, bt, kx=kt, ky=kx)
    sh = RectBivariateSpline(t_nodes, x_nodes, ht, kx=kt, ky=kx)

    def ev(spl):
        return lambda t, x: spl.ev(*np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float)))

    return SplitMetric(
        ev(sb), ev(sh), float(x_nodes[-1] - x_nodes[0]), float(t_nodes[-1] - t_nodes[0]), name
    )


PRESETS: dict[str, Callable[..., SplitMetric]] = {
    "minkowski": minkowski,
    "constant": constant,
    "conformal": conformal,
    "bump": bump,
    "ultrastatic": ultrastatic,
}


def metric_from_entry(entry: dict, length: float = 1.0, t_end: float = 1.0) -> SplitMetric:
    """Build a metric from a config entry ``{"preset": name, "params": {...}}`` or ``{"table": {...}}``."""
    if "table" in entry:
        tab = entry["table"]
        return from_table(tab["t"], tab["x"], tab["beta"], tab["h"])
    name = entry.get("preset")
    if name not in PRESETS:
        raise KeyError(f"unknown metric preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](**entry.get("params", {}), length=length, t_end=t_end)


# ---------------------------------------------------------------- paths and profiles


@dataclass(frozen=True)
class MetricPath:
    """Straight-line path g_lambda = (1 - lambda) g0 + lambda g1 between two split metrics."""

    g0: SplitMetric
    g1: SplitMetric
    lambda_samples: int = 1000

    def __post_init__(self):
        if self.g0.length != self.g1.length or self.g0.t_end != self.g1.t_end:
            raise ValueError("metrics on a path must share the domain")

    @property
    def length(self) -> float:
        return self.g0.length

    @property
    def t_end(self) -> float:
        return self.g0.t_end

    def beta_sq(self, lam, t, x):
        return (1 - lam) * self.g0.lapse(t, x) ** 2 + lam * self.g1.lapse(t, x) ** 2

    def h(self, lam, t, x):
        return (1 - lam) * self.g0.spatial(t, x) + lam * self.g1.spatial(t, x)

    def at(self, lam: float) -> SplitMetric:
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        g0, g1 = self.g0, self.g1
        return SplitMetric(
            lambda t, x: np.sqrt((1 - lam) * _bcast(g0.beta, t, x) ** 2 + lam * _bcast(g1.beta, t, x) ** 2),
            lambda t, x: (1 - lam) * _bcast(g0.h, t, x) + lam * _bcast(g1.h, t, x),
            g0.length,
            g0.t_end,
            f"path({lam:g})",
        )


def _exp_neg_inv(u):
    u = np.asarray(u, float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


@dataclass(frozen=True)
class ChiProfile:
    """Smooth non-decreasing switch: 0 for t <= t_minus, 1 for t >= t_plus."""

    t_minus: float
    t_plus: float

    def __post_init__(self):
        if not self.t_minus < self.t_plus:
            raise ValueError("need t_minus < t_plus")

    def _u(self, t):
        return (np.asarray(t, float) - self.t_minus) / (self.t_plus - self.t_minus)

    def __call__(self, t) -> np.ndarray:
        u = self._u(t)
        a = _exp_neg_inv(u)
        b = _exp_neg_inv(1.0 - u)
        return np.where(u <= 0, 0.0, np.where(u >= 1, 1.0, a / np.where(a + b > 0, a + b, 1.0)))

    def derivative(self, t) -> np.ndarray:
        u = self._u(t)
        inside = (u > 0) & (u < 1)
        us = np.where(inside, u, 0.5)
        a = np.exp(-1.0 / us)
        b = np.exp(-1.0 / (1.0 - us))
        da = a / us**2
        db = -b / (1.0 - us) ** 2
        ds = (da * (a + b) - a * (da + db)) / (a + b) ** 2
        return np.where(inside, ds / (self.t_plus - self.t_minus), 0.0)


# ---------------------------------------------------------------- derived fields


def characteristic_speed(g: SplitMetric, t, x) -> np.ndarray:
    """Coordinate speed beta / sqrt(h) of the light cone of ``g``."""
    g.check_point(t, x)
    return g.lapse(t, x) / np.sqrt(g.spatial(t, x))


def cone_bound(g0: SplitMetric, g1: SplitMetric, samples: int = 2049) -> Callable[[np.ndarray], np.ndarray]:
    """Largest time-dependent C(t) with C^2 h1 / beta1^2 <= h0 / beta0^2 on every slice.

    The infimum over x is taken on a dense sample and shrunk by ``1 - CONE_SAFETY``.
    """
    xs = np.linspace(0.0, g0.length, samples)

    def c_of_t(t):
        t = np.asarray(t, float)
        tt = t[..., None]
        ratio = (g1.lapse(tt, xs) ** 2 * g0.spatial(tt, xs)) / (g0.lapse(tt, xs) ** 2 * g1.spatial(tt, xs))
        return (1.0 - CONE_SAFETY) * np.sqrt(ratio.min(axis=-1))

    return c_of_t


def conformal_factor_f(g0: SplitMetric, g1: SplitMetric) -> Field:
    """f with vol_0 = f^2 vol_1, i.e. f = sqrt(beta0 sqrt(h0) / (beta1 sqrt(h1)))."""
    if g0 is g1:
        return lambda t, x: np.ones(np.broadcast(t, x).shape)

    def f(t, x):
        return np.sqrt(
            g0.lapse(t, x) * np.sqrt(g0.spatial(t, x)) / (g1.lapse(t, x) * np.sqrt(g1.spatial(t, x)))
        )

    return f


def volume_slice(g: SplitMetric, t: float, n: int) -> np.ndarray:
    """Quadrature weights for sqrt(h) dx on the slice at time ``t`` (``n`` intervals)."""
    g.check_point(t, 0.0)
    xs = spatial_grid(g.length, n)
    return sbp_norm(g.length, n) * np.sqrt(g.spatial(t, xs))


def _smooth_max(a, b, eps):
    return 0.5 * (a + b + np.sqrt((a - b) ** 2 + eps**2))


def _smooth_min(a, b, eps):
    return 0.5 * (a + b - np.sqrt((a - b) ** 2 + eps**2))


def intermediate_metric(g0: SplitMetric, g1: SplitMetric, eps: float = 1e-3) -> SplitMetric:
    """A metric whose light cones sit inside those of both ``g0`` and ``g1``.

    Uses a smoothed minimum of the lapses (shrunk by ``1 - eps``) and a smoothed
    maximum of the spatial coefficients.
    """

    def beta(t, x):
        return (1 - eps) * _smooth_min(g0.lapse(t, x), g1.lapse(t, x), eps)

    def h(t, x):
        return _smooth_max(g0.spatial(t, x), g1.spatial(t, x), eps)

    return SplitMetric(beta, h, g0.length, g0.t_end, "intermediate")
