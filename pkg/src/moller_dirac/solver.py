"""Energy-stable method of lines for first-order systems on [0, L].

The system sigma_t d_t psi + A d_x psi + B psi = f is multiplied by J M
(J the volume density, M the spin form).  With P = J M sigma_t and R = J M A
both Hermitian this reads

    P d_t psi = -1/2 (R d_x psi + d_x(R psi)) - Z psi + J M f,   Z = J M B - 1/2 d_x R

The spatial derivative is the second-order summation-by-parts operator with
trapezoid norm; boundary conditions enter through a simultaneous approximation
term that removes exactly the part of the boundary flux outside B.  Time
stepping is classical RK4 or the two-stage Gauss-Legendre method; the latter is
implicit, time-symmetric and conserves every quadratic invariant of the
semi-discrete system.  Backward runs reverse time (P -> -P) and reuse the same
code path.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .boundary import BoundarySpace
from .dirac import FirstOrderSystem
from .geometry import fd4, sbp_norm, spatial_grid
from .sections import StackedSource


class ConfigError(ValueError):
    """Invalid discretization parameters (for instance a CFL violation)."""


class DivergenceError(RuntimeError):
    """The numerical solution stopped being finite."""


@dataclass(frozen=True)
class Grid:
    """``n`` spatial intervals; the time step follows from ``cfl`` unless ``dt`` is given."""

    n: int
    cfl: float = 0.5
    dt: float | None = None

    def __post_init__(self):
        if self.n < 4:
            raise ConfigError("need at least 4 spatial intervals")
        if not 0 < self.cfl <= 0.5 + 1e-12:
            raise ConfigError("cfl must lie in (0, 0.5]")


def sbp_diff(v: np.ndarray, dx: float, axis: int = -2) -> np.ndarray:
    """Second-order SBP first derivative along ``axis`` (central inside, one-sided at the ends)."""
    v = np.moveaxis(v, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * dx)
    out[0] = (v[1] - v[0]) / dx
    out[-1] = (v[-1] - v[-2]) / dx
    return np.moveaxis(out, 0, axis)


def _mv(m, v):
    return np.einsum("jik,...jk->...ji", m, v)


class Discretization:
    """Semi-discrete operator of one system with one pair of boundary spaces.

    ``alpha`` adds a dissipative multiple of the boundary defect to the
    penalty.  With the default 0 the penalty is energy-neutral and does not
    depend on the time direction, so backward evolution undoes forward
    evolution up to the time-stepping error.
    """

    def __init__(
        self,
        system: FirstOrderSystem,
        spaces: tuple[BoundarySpace, BoundarySpace] | None,
        n: int,
        alpha: float = 0.0,
        penalty_sign: float = 1.0,
        step: float = 1e-4,
    ):
        self.system = system
        self.spaces = spaces
        self.n = n
        self.length = system.metric.length
        self.xs = spatial_grid(self.length, n)
        self.dx = self.length / n
        self.norm = sbp_norm(self.length, n)
        self.alpha = alpha
        self.penalty_sign = penalty_sign
        self._step = step
        self._coeffs = lru_cache(maxsize=8)(self._compute)
        if spaces is not None:
            sides = tuple(s.side for s in spaces)
            if sides != ("left", "right"):
                raise ValueError("boundary spaces must be given as (left, right)")

    # -- coefficients -------------------------------------------------------

    def _flux(self, t: float, x) -> np.ndarray:
        sys = self.system
        j = sys.volume_density(t, x)
        return j[..., None, None] * (sys.rep.spin_form @ sys.principal_part(t, x)[1])

    def _compute(self, t: float):
        sys = self.system
        xs = self.xs
        s, a, b = sys.coeffs(t, xs)
        j = sys.volume_density(t, xs)[:, None, None]
        m = sys.rep.spin_form
        p = j * (m @ s)
        r = j * (m @ a)
        r_x = fd4(lambda u: self._flux(t, u), xs, self._step)
        z = j * (m @ b) - 0.5 * r_x
        return p, r, z, np.linalg.inv(p), j[:, 0, 0]

    def coefficients(self, t: float):
        key = 0.0 if self.system.static else float(t)
        return self._coeffs(key)

    def energy_sign(self, t: float, direction: int) -> float:
        p = self.coefficients(t)[0] * direction
        herm = 0.5 * (p + np.conj(np.swapaxes(p, -1, -2)))
        eig = np.linalg.eigvalsh(herm)
        if np.all(eig > 0):
            return 1.0
        if np.all(eig < 0):
            return -1.0
        raise ConfigError("sigma(dt) is not definite: the slices are not spacelike for this system")

    def max_speed(self, t0: float, t1: float, samples: int = 9) -> float:
        best = 0.0
        for t in np.linspace(t0, t1, samples):
            s, a = self.system.principal_part(t, self.xs)
            lam = np.linalg.eigvals(np.linalg.solve(s, a))
            best = max(best, float(np.abs(lam).max()))
        return best

    # -- right-hand side ----------------------------------------------------

    def rhs(self, t: float, psi: np.ndarray, direction: int, s_e: float, source=None) -> np.ndarray:
        p, r, z, p_inv, j = self.coefficients(t)
        flux = _mv(r, sbp_diff(psi, self.dx)) + sbp_diff(_mv(r, psi), self.dx)
        rest = -0.5 * flux - _mv(z, psi)
        if source is not None:
            f = np.asarray(source(t, self.xs), complex)
            rest = rest + _mv(j[:, None, None] * self.system.rep.spin_form[None], f)
        if self.spaces is not None and self.penalty_sign != 0.0:
            eye = np.eye(2)
            for node, sp, nu in ((0, self.spaces[0], -1.0), (-1, self.spaces[1], 1.0)):
                comp = eye - sp.projector(t)
                rb = s_e * nu * r[node]
                tmat = -rb + comp.conj().T @ (0.5 * rb + self.alpha * eye)
                sat = s_e * (tmat @ comp)
                rest[..., node, :] -= self.penalty_sign * (psi[..., node, :] @ sat.T) / self.norm[node]
        return direction * _mv(p_inv, rest)

    def _blocks(self, mats: np.ndarray) -> sparse.csr_matrix:
        m = self.n + 1
        return sparse.bsr_matrix((mats, np.arange(m), np.arange(m + 1)), shape=(2 * m, 2 * m)).tocsr()

    @property
    def _diff_matrix(self) -> sparse.csr_matrix:
        m = self.n + 1
        d = sparse.diags([-0.5 * np.ones(m - 1), 0.5 * np.ones(m - 1)], [-1, 1], format="lil")
        d[0, 0], d[0, 1] = -1.0, 1.0
        d[m - 1, m - 2], d[m - 1, m - 1] = -1.0, 1.0
        return sparse.kron(d.tocsr() / self.dx, sparse.eye(2), format="csr")

    def operator(self, t: float, direction: int, s_e: float) -> sparse.csr_matrix:
        """Sparse matrix of ``psi -> rhs(t, psi)`` without source, acting on flattened slices."""
        p, r, z, p_inv, j = self.coefficients(t)
        dm = self._diff_matrix
        rb = self._blocks(r)
        body = -0.5 * (rb @ dm + dm @ rb) - self._blocks(z)
        if self.spaces is not None and self.penalty_sign != 0.0:
            pen = np.zeros_like(r)
            eye = np.eye(2)
            for node, sp, nu in ((0, self.spaces[0], -1.0), (-1, self.spaces[1], 1.0)):
                comp = eye - sp.projector(t)
                rbn = s_e * nu * r[node]
                tmat = -rbn + comp.conj().T @ (0.5 * rbn + self.alpha * eye)
                pen[node] = self.penalty_sign * s_e * (tmat @ comp) / self.norm[node]
            body = body - self._blocks(pen)
        return (direction * self._blocks(p_inv) @ body).tocsr()

    def forcing(self, t: float, direction: int, source) -> np.ndarray:
        """Source contribution to the right-hand side, same shape as the source values."""
        _, _, _, p_inv, j = self.coefficients(t)
        f = np.asarray(source(t, self.xs), complex)
        return direction * _mv(p_inv, _mv(j[:, None, None] * self.system.rep.spin_form[None], f))

    # -- diagnostics --------------------------------------------------------

    def energy(self, t: float, psi: np.ndarray, direction: int = 1) -> np.ndarray:
        p = self.coefficients(t)[0]
        s_e = self.energy_sign(t, direction) * direction
        dens = np.real(np.einsum("...ji,jik,...jk->...j", np.conj(psi), p, psi))
        return s_e * dens @ self.norm

    def boundary_residual(self, t: float, psi: np.ndarray) -> float:
        if self.spaces is None:
            return 0.0
        res = 0.0
        for node, sp in ((0, self.spaces[0]), (-1, self.spaces[1])):
            res = max(res, float(np.abs(psi[..., node, :] @ sp.complement(t).T).max()))
        return res

    def support(self, psi: np.ndarray, threshold: float = 1e-10) -> tuple[float, float]:
        mag = np.abs(psi).max(axis=-1)
        mag = mag.reshape(-1, mag.shape[-1]).max(axis=0)
        peak = mag.max()
        if not np.isfinite(peak) or peak == 0:
            return float("nan"), float("nan")
        dens = (mag / peak) ** 2
        idx = np.nonzero(dens > threshold)[0]
        return float(self.xs[idx[0]]), float(self.xs[idx[-1]])


@dataclass
class EvolutionReport:
    times: np.ndarray
    energy: np.ndarray
    boundary_residual: np.ndarray
    support_left: np.ndarray
    support_right: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "energy", "boundary_residual", "support_left", "support_right"])
            for row in zip(self.times, self.energy, self.boundary_residual, self.support_left, self.support_right):
                w.writerow([repr(float(v)) for v in row])


@dataclass
class SpinorHistory:
    """Stored slices ``(len(times),) + data shape`` with their time stamps."""

    times: np.ndarray
    slices: np.ndarray
    xs: np.ndarray
    report: EvolutionReport | None = None
    meta: dict = field(default_factory=dict)

    def dump(self, stem: str | Path) -> None:
        """Raw complex128 array plus a JSON header describing its shape."""
        stem = Path(stem)
        data = np.ascontiguousarray(self.slices, dtype=np.complex128)
        data.tofile(stem.with_suffix(".bin"))
        header = {"dtype": "complex128", "shape": list(data.shape), "order": "C", "times": self.times.tolist()}
        stem.with_suffix(".json").write_text(json.dumps(header, indent=2))

    def member(self, index: int) -> "SpinorHistory":
        """History of one member of a batched run (slices shaped (levels, k, n+1, 2))."""
        return SpinorHistory(self.times, self.slices[:, index], self.xs, None, dict(self.meta))

    @property
    def final(self) -> np.ndarray:
        return self.slices[-1]


def time_nodes(t0: float, t1: float, max_step: float) -> np.ndarray:
    """Uniform nodes t0 + k dt reaching t1 with dt <= max_step."""
    span = t1 - t0
    steps = max(1, int(np.ceil(abs(span) / max_step - 1e-9)))
    return t0 + (span / steps) * np.arange(steps + 1)


def evolve(
    system: FirstOrderSystem,
    spaces: tuple[BoundarySpace, BoundarySpace] | None,
    data: np.ndarray,
    grid: Grid,
    t0: float,
    t1: float,
    source: Callable | None = None,
    times: Sequence[float] | None = None,
    store: str | int = "all",
    alpha: float = 0.0,
    penalty_sign: float = 1.0,
    disc: Discretization | None = None,
    track: bool = True,
    integrator: str = "rk4",
) -> SpinorHistory:
    """Integrate from ``t0`` to ``t1`` (either direction) starting from the slice ``data``.

    ``times`` fixes the node sequence explicitly (it must start at ``t0`` and
    end at ``t1``); otherwise nodes follow from the CFL number.  ``store`` is
    ``"all"``, ``"ends"`` or a stride.  ``integrator`` is ``"rk4"`` or
    ``"gauss4"``; both use the same nodes.
    """
    disc = disc or Discretization(system, spaces, grid.n, alpha, penalty_sign)
    psi = np.array(data, dtype=complex)
    if psi.shape[-2:] != (grid.n + 1, 2):
        raise ValueError(f"data must have trailing shape ({grid.n + 1}, 2), got {psi.shape}")
    direction = 1 if t1 >= t0 else -1
    speed = disc.max_speed(min(t0, t1), max(t0, t1))
    limit = grid.cfl * disc.dx / speed
    if times is None:
        if grid.dt is not None:
            if grid.dt > limit * (1 + 1e-9):
                raise ConfigError(f"dt = {grid.dt} exceeds the CFL limit {limit}")
            limit = grid.dt
        nodes = time_nodes(t0, t1, limit)
    else:
        nodes = np.asarray(times, float)
        if nodes[0] != t0 or nodes[-1] != t1:
            raise ValueError("explicit time nodes must start at t0 and end at t1")
        if np.abs(np.diff(nodes)).max(initial=0.0) > limit * (1 + 1e-9):
            raise ConfigError("explicit time nodes violate the CFL limit")
    s_e = disc.energy_sign(t0, direction)

    if integrator == "rk4":
        step = _rk4_stepper(disc, direction, s_e, source)
    elif integrator == "gauss4":
        step = _GaussStepper(disc, direction, s_e, source)
    else:
        raise ConfigError(f"unknown integrator {integrator!r}")

    stride = 1 if store == "all" else (len(nodes) if store == "ends" else int(store))
    kept_t, kept = [nodes[0]], [psi.copy()]
    energies, bres, left, right = [], [], [], []

    def record(t, v):
        if track:
            energies.append(float(np.sum(disc.energy(t, v, direction))))
            bres.append(disc.boundary_residual(t, v))
            lo, hi = disc.support(v)
            left.append(lo)
            right.append(hi)

    record(nodes[0], psi)
    for k in range(len(nodes) - 1):
        ta, tb = nodes[k], nodes[k + 1]
        psi = step(ta, tb, psi)
        if not np.isfinite(psi).all():
            raise DivergenceError(f"non-finite solution at t = {tb}")
        record(tb, psi)
        last = k + 1 == len(nodes) - 1
        if last or (k + 1) % stride == 0:
            kept_t.append(tb)
            kept.append(psi.copy())
    report = None
    if track:
        report = EvolutionReport(nodes, np.array(energies), np.array(bres), np.array(left), np.array(right))
    return SpinorHistory(np.array(kept_t), np.stack(kept), disc.xs, report, {"direction": direction})


def _rk4_stepper(disc: Discretization, direction: int, s_e: float, source):
    def f(t, v):
        return disc.rhs(t, v, direction, s_e, source)

    def step(ta, tb, psi):
        h = abs(tb - ta)
        tm = 0.5 * (ta + tb)
        k1 = f(ta, psi)
        k2 = f(tm, psi + 0.5 * h * k1)
        k3 = f(tm, psi + 0.5 * h * k2)
        k4 = f(tb, psi + h * k3)
        return psi + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)

    return step


_GL_C = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)
_GL_A = ((0.25, 0.25 - np.sqrt(3) / 6), (0.25 + np.sqrt(3) / 6, 0.25))


class _GaussStepper:
    """Two-stage Gauss-Legendre step for the linear system psi' = L(t) psi + s(t)."""

    def __init__(self, disc: Discretization, direction: int, s_e: float, source):
        self.disc = disc
        self.direction = direction
        self.s_e = s_e
        self.source = source
        self._static_lu = {}

    def _factor(self, ops, h):
        m = ops[0].shape[0]
        eye = sparse.eye(m, format="csr")
        big = sparse.bmat(
            [
                [eye - h * _GL_A[0][0] * ops[0], -h * _GL_A[0][1] * ops[0]],
                [-h * _GL_A[1][0] * ops[1], eye - h * _GL_A[1][1] * ops[1]],
            ],
            format="csc",
        )
        return splu(big)

    def __call__(self, ta, tb, psi):
        disc = self.disc
        h = abs(tb - ta)
        stages = [ta + c * (tb - ta) for c in _GL_C]
        if disc.system.static:
            key = round(h, 15)
            if key not in self._static_lu:
                op = disc.operator(stages[0], self.direction, self.s_e)
                self._static_lu = {key: (self._factor((op, op), h), (op, op))}
            lu, ops = self._static_lu[key]
        else:
            ops = tuple(disc.operator(t, self.direction, self.s_e) for t in stages)
            lu = self._factor(ops, h)
        shape = psi.shape
        y = psi.reshape(-1, shape[-2] * 2).T
        rhs = [ops[i] @ y for i in range(2)]
        if self.source is not None:
            for i in range(2):
                rhs[i] = rhs[i] + disc.forcing(stages[i], self.direction, self.source).reshape(-1, y.shape[0]).T
        sol = lu.solve(np.vstack(rhs))
        m = y.shape[0]
        out = y + 0.5 * h * (sol[:m] + sol[m:])
        return out.T.reshape(shape)


def restrict(hist: SpinorHistory, t: float) -> np.ndarray:
    """Slice at the stored level nearest to ``t``."""
    lo, hi = min(hist.times[0], hist.times[-1]), max(hist.times[0], hist.times[-1])
    tol = 1e-12 * max(1.0, abs(hi))
    if t < lo - tol or t > hi + tol:
        raise ValueError(f"t = {t} outside the stored range [{lo}, {hi}]")
    return hist.slices[int(np.argmin(np.abs(hist.times - t)))]


def check_energy_identity(hist: SpinorHistory) -> float:
    """Largest relative change of the energy trace over the run."""
    e = hist.report.energy
    if e[0] == 0:
        return float(np.abs(e).max())
    return float(np.abs(e - e[0]).max() / abs(e[0]))


# ---------------------------------------------------------------- Green operators


def global_nodes(system: FirstOrderSystem, grid: Grid, t0: float, t1: float) -> np.ndarray:
    disc = Discretization(system, None, grid.n)
    return time_nodes(t0, t1, grid.cfl * disc.dx / disc.max_speed(t0, t1))


def _source_window(source, nodes: np.ndarray, support=None) -> tuple[int, int]:
    ta, tb = support if support is not None else source.t_support
    if ta <= nodes[0] or tb >= nodes[-1]:
        raise ValueError("source support must stay away from the ends of the time interval")
    ka = int(np.searchsorted(nodes, ta, side="right")) - 1
    kb = int(np.searchsorted(nodes, tb, side="left"))
    return ka, kb


def green(
    system: FirstOrderSystem,
    spaces,
    source,
    direction: int,
    grid: Grid,
    nodes: np.ndarray,
    support=None,
    **kw,
) -> SpinorHistory:
    """Retarded (``direction=+1``) or advanced (``-1``) solution with source ``source``.

    The history covers all of ``nodes``; levels outside the causal reach of the
    source are exactly zero.
    """
    ka, kb = _source_window(source, nodes, support)
    # a stacked source yields a batch of histories evolved together
    probe = np.shape(source(nodes[0], spatial_grid(system.metric.length, grid.n)))
    zero = np.zeros(probe, complex)
    if direction > 0:
        part = evolve(system, spaces, zero, grid, nodes[ka], nodes[-1], source, times=nodes[ka:], **kw)
        pad = np.zeros((ka,) + part.slices.shape[1:], complex)
        slices = np.concatenate([pad, part.slices])
    else:
        seg = nodes[kb::-1]
        part = evolve(system, spaces, zero, grid, nodes[kb], nodes[0], source, times=seg, **kw)
        pad = np.zeros((len(nodes) - kb - 1,) + part.slices.shape[1:], complex)
        slices = np.concatenate([part.slices[::-1], pad])
    return SpinorHistory(nodes.copy(), slices, part.xs, part.report, {"direction": direction})


def causal_history(system, spaces, source, grid, nodes, support=None, **kw) -> SpinorHistory:
    """G f = G+ f - G- f on the full node set."""
    ret = green(system, spaces, source, +1, grid, nodes, support, **kw)
    adv = green(system, spaces, source, -1, grid, nodes, support, **kw)
    return SpinorHistory(nodes.copy(), ret.slices - adv.slices, ret.xs)


def green_residual(system: FirstOrderSystem, hist: SpinorHistory, source, margin: int = 2) -> float:
    """Discrete L2 norm of D(G f) - f over interior nodes (central differences)."""
    vals = hist.slices
    ts, xs = hist.times, hist.xs
    lhs = system.apply_grid(vals, ts, xs)
    tt, xx = np.meshgrid(ts[1:-1], xs[1:-1], indexing="ij")
    diff = lhs - source(tt, xx)
    diff = diff[margin:-margin or None, margin:-margin or None]
    cell = abs(ts[1] - ts[0]) * (xs[1] - xs[0])
    return float(np.sqrt(np.sum(np.abs(diff) ** 2) * cell))


def cone_mask(times, xs, t_support, x_support, speed: float, dx: float, direction: int) -> np.ndarray:
    """Boolean mask of the (inflated) causal future or past of a source box."""
    ta, tb = t_support
    xa, xb = x_support
    t = np.asarray(times)[:, None]
    elapsed = np.clip(t - ta, 0, None) if direction > 0 else np.clip(tb - t, 0, None)
    lo = xa - speed * elapsed - 3 * dx
    hi = xb + speed * elapsed + 3 * dx
    inside = (xs[None, :] >= lo) & (xs[None, :] <= hi)
    active = (t >= ta) if direction > 0 else (t <= tb)
    return inside & active


def mass_outside(hist: SpinorHistory, mask: np.ndarray, weights: np.ndarray | None = None) -> float:
    """max over levels of mass outside ``mask`` divided by the largest slice mass."""
    dens = np.sum(np.abs(hist.slices) ** 2, axis=-1)
    if dens.ndim > 2:
        dens = dens.reshape(dens.shape[0], -1, dens.shape[-1]).sum(axis=1)
    w = weights if weights is not None else np.ones(dens.shape[-1])
    total = (dens * w).sum(axis=-1)
    peak = total.max()
    if peak == 0:
        return 0.0
    out = (dens * w * ~mask).sum(axis=-1)
    return float(out.max() / peak)


class CausalPropagator:
    """f -> (G f) restricted to the slice at ``t_ref``."""

    def __init__(self, system, spaces, grid: Grid, t_ref: float, t_span=None, **kw):
        self.system = system
        self.spaces = spaces
        self.grid = grid
        self.t_ref = t_ref
        t0, t1 = t_span if t_span is not None else (0.0, system.metric.t_end)
        self.nodes = global_nodes(system, grid, t0, t1)
        self.k_ref = int(np.argmin(np.abs(self.nodes - t_ref)))
        self.t_ref = float(self.nodes[self.k_ref])
        self.kw = kw
        self.disc = Discretization(system, spaces, grid.n, kw.get("alpha", 0.0), kw.get("penalty_sign", 1.0))

    def __call__(self, source, support=None) -> np.ndarray:
        ka, kb = _source_window(source, self.nodes, support)
        out = np.zeros((self.grid.n + 1, 2), complex)
        return self._propagate(source, ka, kb, out)

    def many(self, sources) -> np.ndarray:
        """Stack of (G f_a) slices, all sources evolved together in one batch."""
        stacked = StackedSource(tuple(sources))
        ka, kb = _source_window(stacked, self.nodes)
        out = np.zeros((len(stacked), self.grid.n + 1, 2), complex)
        return self._propagate(stacked, ka, kb, out)

    def _propagate(self, source, ka: int, kb: int, out: np.ndarray) -> np.ndarray:
        zero = np.zeros_like(out)
        k = self.k_ref
        if k > ka:
            seg = self.nodes[ka : k + 1]
            out += evolve(self.system, self.spaces, zero, self.grid, seg[0], seg[-1], source,
                          times=seg, store="ends", disc=self.disc, track=False).final
        if k < kb:
            seg = self.nodes[k : kb + 1][::-1]
            out -= evolve(self.system, self.spaces, zero, self.grid, seg[0], seg[-1], source,
                          times=seg, store="ends", disc=self.disc, track=False).final
        return out
