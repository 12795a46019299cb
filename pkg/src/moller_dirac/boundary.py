"""Boundary subspaces on the two timelike lines x = 0 and x = L.

A ``BoundarySpace`` stores the projector ONTO the admissible subspace B.  The
complementary projector ``Id - projector`` has kernel B; that is the form in
which MIT and chiral conditions are usually written.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Callable

import numpy as np

from .clifford import GammaRep, clifford_of, make_canonical_rep
from .dirac import FirstOrderSystem, boundary_symbol
from .geometry import ChiProfile, DomainError, MetricPath, SplitMetric, fd4
from .transport import frame_transport, frame_transport_exact

SIDES = ("left", "right")


def _side_of(g: SplitMetric, x: float) -> str:
    if abs(x) <= 1e-12:
        return "left"
    if abs(x - g.length) <= 1e-12 * max(1.0, g.length):
        return "right"
    raise DomainError(f"x = {x} is not on the boundary of [0, {g.length}]")


def _edge(g: SplitMetric, side: str) -> tuple[float, float]:
    """Boundary abscissa and sign of the outward normal."""
    return (0.0, -1.0) if side == "left" else (g.length, 1.0)


@dataclass(frozen=True, eq=False)
class BoundarySpace:
    """Time-dependent projector onto a rank-one boundary subspace on one side."""

    projector_fn: Callable[[float], np.ndarray]
    side: str
    label: str = "CUSTOM"

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}")

    def projector(self, t: float = 0.0) -> np.ndarray:
        return np.asarray(self.projector_fn(t), complex)

    def complement(self, t: float = 0.0) -> np.ndarray:
        return np.eye(2) - self.projector(t)

    def basis(self, t: float = 0.0) -> np.ndarray:
        """Unit vector spanning B."""
        p = self.projector(t)
        col = p[:, np.argmax(np.linalg.norm(p, axis=0))]
        return col / np.linalg.norm(col)

    @classmethod
    def constant(cls, matrix, side: str, label: str = "CUSTOM") -> "BoundarySpace":
        mat = np.array(matrix, complex)
        return cls(lambda t: mat, side, label)

    @classmethod
    def spanned_by(cls, vector, side: str, label: str = "CUSTOM") -> "BoundarySpace":
        v = np.asarray(vector, complex)
        v = v / np.linalg.norm(v)
        return cls.constant(np.outer(v, v.conj()), side, label)


def range_projector(p: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto ran p; lets spaces be compared regardless of the stored complement."""
    u, s, _ = np.linalg.svd(p)
    r = int(np.sum(s > 1e-10 * max(1.0, s[0])))
    q = u[:, :r]
    return q @ q.conj().T


def same_space(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.abs(range_projector(a) - range_projector(b)).max())


# ---------------------------------------------------------------- standard conditions


def _unit_normal_gamma(rep: GammaRep, g: SplitMetric, t: float, side: str) -> np.ndarray:
    x, nu = _edge(g, side)
    n = np.array([0.0, nu / np.sqrt(g.spatial(t, x))])
    return clifford_of(g, t, x, n, rep)


def mit_projector(rep: GammaRep | None, g: SplitMetric, point) -> BoundarySpace:
    """MIT condition: B = ker (Id + i gamma(n)) / 2, stored as the projector (Id - i gamma(n)) / 2."""
    rep = rep or make_canonical_rep()
    t0, x = point
    g.check_point(t0, x)
    side = _side_of(g, x)

    def proj(t):
        return 0.5 * (np.eye(2) - 1j * _unit_normal_gamma(rep, g, t, side))

    return BoundarySpace(proj, side, "MIT")


def chiral_projector(rep: GammaRep | None, g: SplitMetric, point, sign: int = 1) -> BoundarySpace:
    """Chiral condition: B = ker (Id + sign gamma(n) G) / 2."""
    rep = rep or make_canonical_rep()
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    t0, x = point
    g.check_point(t0, x)
    side = _side_of(g, x)

    def proj(t):
        return 0.5 * (np.eye(2) - sign * _unit_normal_gamma(rep, g, t, side) @ rep.chirality)

    return BoundarySpace(proj, side, "CHIRAL+" if sign > 0 else "CHIRAL-")


def interpolated_mit(
    rep: GammaRep | None,
    path: MetricPath,
    chi: ChiProfile | Callable,
    side: str,
    step: float | None = None,
) -> BoundarySpace:
    """B_chi = ker(gamma_1(v) - i |v|_1) with v = chi n1 + (1 - chi) wp(n0).

    ``wp`` is the transport of the g0 outward unit normal; ``step=None`` uses the
    closed-form transport, otherwise RK4 with that lambda step.
    """
    rep = rep or make_canonical_rep()
    g0, g1 = path.g0, path.g1
    x, nu = _edge(g1, side)

    def proj(t):
        n0 = np.array([0.0, nu / np.sqrt(g0.spatial(t, x))])
        n1 = np.array([0.0, nu / np.sqrt(g1.spatial(t, x))])
        wp = frame_transport_exact(path, t, x) if step is None else frame_transport(path, t, x, step)
        c = float(chi(t))
        v = c * n1 + (1 - c) * (wp @ n0)
        size = np.sqrt(g1.norm2(t, x, v))
        if not size > 0:
            raise ArithmeticError("interpolating normal vanished; transported normal flipped sign")
        return 0.5 * (np.eye(2) - 1j * clifford_of(g1, t, x, v, rep) / size)

    return BoundarySpace(proj, side, "INTERPOLATED")


def boundary_pair(name: str, rep: GammaRep | None, g: SplitMetric, **kwargs) -> tuple[BoundarySpace, BoundarySpace]:
    """Both sides of a named condition: ``mit``, ``chiral+``, ``chiral-`` or ``interpolated-mit``."""
    if name == "mit":
        return tuple(mit_projector(rep, g, (0.0, x)) for x in (0.0, g.length))
    if name in ("chiral+", "chiral-"):
        s = 1 if name.endswith("+") else -1
        return tuple(chiral_projector(rep, g, (0.0, x), s) for x in (0.0, g.length))
    if name == "interpolated-mit":
        return tuple(interpolated_mit(rep, kwargs["path"], kwargs["chi"], side) for side in SIDES)
    raise KeyError(f"unknown boundary condition {name!r}")


# ---------------------------------------------------------------- certificates


def adjoint_space(b: BoundarySpace, sigma_n: np.ndarray, spin_form: np.ndarray, t: float = 0.0) -> BoundarySpace:
    """Spin-orthogonal complement of sigma_n(B), returned as an orthogonal projector."""
    sigma_n = np.asarray(sigma_n, complex)
    if abs(np.linalg.det(sigma_n)) < 1e-12:
        raise np.linalg.LinAlgError("boundary symbol is singular (characteristic boundary)")
    image = sigma_n @ b.projector(t)
    # w is in the complement iff (sigma_n b)^H M w = 0 for b in B
    constraint = image.conj().T @ spin_form
    _, s, vh = np.linalg.svd(constraint)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
    null = vh[rank:].conj().T
    return BoundarySpace.constant(null @ null.conj().T, b.side, f"ADJOINT[{b.label}]")


def certify(b: BoundarySpace, d: FirstOrderSystem, t: float = 0.0) -> dict[str, float]:
    """Projector algebra, null property, admissibility and self-adjointness residuals."""
    p = b.projector(t)
    sig = boundary_symbol(d, t, b.side)
    m = d.rep.spin_form
    form = m @ sig
    form = 0.5 * (form + form.conj().T)
    v = b.basis(t)
    value = float(np.real(v.conj() @ form @ v))
    eig = np.linalg.eigvalsh(form)
    scale = float(np.abs(eig).max())
    nonneg = int(np.sum(eig >= -1e-12 * scale))
    rank = int(np.linalg.matrix_rank(p, tol=1e-10))
    adj = adjoint_space(b, sig, m, t)
    return {
        "idempotent": float(np.abs(p @ p - p).max()),
        "rank_defect": float(abs(rank - 1)),
        "null_form": abs(value),
        "admissible_rank_gap": float(abs(rank - nonneg)) if value >= -1e-12 * scale else 1.0,
        "self_adjoint": same_space(adj.projector(t), p),
    }


# ---------------------------------------------------------------- interpolation of subspaces


@dataclass(frozen=True)
class SubspaceInterpolation:
    """phi_t(v) = v + t F(v) carrying span(w0) to span(w1)."""

    w0: np.ndarray
    w0_prime: np.ndarray
    image: np.ndarray  # F(w0)

    def vector(self, t: float) -> np.ndarray:
        return self.w0 + t * self.image

    def matrix(self, t: float) -> np.ndarray:
        """phi_t on the basis (w0, w0'), extended by the identity on the complement."""
        return np.column_stack([self.vector(t), self.w0_prime])


def interpolate_subspace(w0, w1, q) -> SubspaceInterpolation:
    """Deform span(w0) into span(w1) through subspaces on which ``q`` stays nonnegative.

    The complement W0' is the negative eigenline of ``q``; F maps w0 to the W0'
    component of the unique vector of W1 whose W0-component is w0.
    """
    w0 = np.asarray(w0, complex)
    w1 = np.asarray(w1, complex)
    q = np.asarray(q, complex)
    eig, vec = np.linalg.eigh(0.5 * (q + q.conj().T))
    if not (eig[0] < 0 < eig[1]):
        raise ValueError("q must have inertia (1, 1, 0)")
    for w in (w0, w1):
        if np.real(w.conj() @ q @ w) < -1e-12 * np.linalg.norm(w) ** 2:
            raise ValueError("q must be nonnegative on both subspaces")
    w0p = vec[:, 0]
    basis = np.column_stack([w0, w0p])
    a, c = np.linalg.solve(basis, w1)
    if abs(a) < 1e-12:
        raise ValueError("W1 meets the negative complement of W0; construction impossible")
    # w1 / a = w0 + (c / a) w0'
    return SubspaceInterpolation(w0=w0, w0_prime=w0p, image=(c / a) * w0p)


# ---------------------------------------------------------------- compatibility conditions


def _derivs(data, x: float, step: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if callable(data):
        v = lambda s: np.asarray(data(s), complex)
        first = fd4(v, x, step)
        second = (-v(x + 2 * step) + 16 * v(x + step) - 30 * v(x) + 16 * v(x - step) - v(x - 2 * step)) / (
            12 * step**2
        )
        return v(x), first, second
    raise TypeError("data must be callable")


def _grid_derivs(values: np.ndarray, dx: float, side: str):
    """Value, first and second derivative at an endpoint by one-sided 6-point stencils."""
    if values.shape[0] < 6:
        raise ValueError("need at least 6 grid points for one-sided boundary derivatives")
    v = values if side == "left" else values[::-1]
    sign = 1.0 if side == "left" else -1.0
    c1 = np.array([-137, 300, -300, 200, -75, 12]) / 60.0
    c2 = np.array([45, -154, 214, -156, 61, -10]) / 12.0
    first = sign * np.tensordot(c1, v[:6], axes=1) / dx
    second = np.tensordot(c2, v[:6], axes=1) / dx**2
    return v[0], first, second


def time_derivative(fn, t0: float, step: float, t_end: float, second: bool = False):
    """First (fourth order) or second (second order) derivative in t, one-sided at the ends of [0, t_end]."""
    if 2 * step <= t0 <= t_end - 2 * step:
        if second:
            return (fn(t0 + step) - 2 * fn(t0) + fn(t0 - step)) / step**2
        return (-fn(t0 + 2 * step) + 8 * fn(t0 + step) - 8 * fn(t0 - step) + fn(t0 - 2 * step)) / (12 * step)
    h = step if t0 < 2 * step else -step
    vals = [fn(t0 + k * h) for k in range(5)]
    if second:
        return (2 * vals[0] - 5 * vals[1] + 4 * vals[2] - vals[3]) / h**2
    return (-25 * vals[0] + 48 * vals[1] - 36 * vals[2] + 16 * vals[3] - 3 * vals[4]) / (12 * h)


def check_compatibility(
    data,
    source,
    d: FirstOrderSystem,
    spaces: tuple[BoundarySpace, BoundarySpace],
    order: int,
    t0: float = 0.0,
    step: float = 1e-3,
) -> list[float]:
    """Residuals sum_j C(k, j) (d_t^j Pi) h_{k-j} at both ends for k = 0..order.

    ``Pi = Id - projector`` has kernel B.  ``data`` is a callable x -> spinor
    (or an ``(n+1, 2)`` grid slice); ``source`` a callable (t, x) -> spinor or
    None.  The h_k are the formal time derivatives of the solution at t0.
    """
    if order not in (0, 1, 2):
        raise ValueError("compatibility is implemented for orders 0, 1 and 2")
    length = d.metric.length
    t_end = d.metric.t_end
    f = source if source is not None else (lambda t, x: np.zeros(np.broadcast(t, x).shape + (2,), complex))
    mv = lambda m, v: m @ v
    out = [0.0] * (order + 1)
    for sp in spaces:
        x, _ = _edge(d.metric, sp.side)
        if callable(data):
            h0, d1, d2 = _derivs(data, x, step)
        else:
            arr = np.asarray(data, complex)
            h0, d1, d2 = _grid_derivs(arr, length / (arr.shape[0] - 1), sp.side)

        def h0_op(t, xx):
            s, a, b = d.coeffs(t, xx)
            si = np.linalg.inv(s)
            return -si @ a, -si @ b, si

        ma, mb, si = h0_op(t0, x)
        fv = np.asarray(f(t0, x), complex)
        h1 = mv(ma, d1) + mv(mb, h0) + mv(si, fv)
        pi = lambda t: sp.complement(t)
        res = [pi(t0) @ h0]
        if order >= 1:
            dpi = time_derivative(pi, t0, step, t_end)
            res.append(pi(t0) @ h1 + dpi @ h0)
        if order >= 2:
            ma_x = fd4(lambda u: h0_op(t0, u)[0], x, step)
            mb_x = fd4(lambda u: h0_op(t0, u)[1], x, step)
            src = lambda t, u: np.einsum("...ij,...j->...i", h0_op(t, u)[2], np.asarray(f(t, u), complex))
            dx_h1 = mv(ma_x, d1) + mv(ma, d2) + mv(mb_x, h0) + mv(mb, d1) + fd4(lambda u: src(t0, u), x, step)
            ma_t = time_derivative(lambda s: h0_op(s, x)[0], t0, step, t_end)
            mb_t = time_derivative(lambda s: h0_op(s, x)[1], t0, step, t_end)
            h2 = mv(ma, dx_h1) + mv(mb, h1) + mv(ma_t, d1) + mv(mb_t, h0) + time_derivative(lambda s: src(s, x), t0, step, t_end)
            d2pi = time_derivative(pi, t0, step, t_end, second=True)
            res.append(comb(2, 0) * pi(t0) @ h2 + comb(2, 1) * dpi @ h1 + comb(2, 2) * d2pi @ h0)
        for k, r in enumerate(res):
            out[k] = max(out[k], float(np.linalg.norm(r)))
    return out
