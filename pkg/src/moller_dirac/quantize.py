"""Finite CAR algebra, quasi-free states and their transport along the Moller map.

Coordinates on the doubled space.  A family of slices b_1..b_k spans a
subspace of Sol; an element of Sol (+) Upsilon Sol is stored as the vector
(c, d) in C^2k standing for sum_i c_i b_i (+) sum_i d_i Upsilon b_i.  With
this choice the doubled Gram matrix is blockdiag(G, conj(G)) and the
conjugation acts as Gamma(c, d) = (conj d, conj c).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, reduce

import numpy as np
from scipy import linalg as sla

from .solver import Discretization


class ResourceError(RuntimeError):
    """Requested representation is too large to build as dense matrices."""


class SplittingError(RuntimeError):
    """A Hamiltonian eigenvalue sits at zero, so the positive-energy split is ambiguous."""


class UnitarityBudgetError(RuntimeError):
    """The Moller map deviates from unitarity by more than the allowed budget."""


MAX_MODES = 6
CONDITION_LIMIT = 1e8


def _herm(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def _swap(k: int) -> np.ndarray:
    z = np.zeros((k, k))
    e = np.eye(k)
    return np.block([[z, e], [e, z]])


# ---------------------------------------------------------------- doubled space


@dataclass(eq=False)
class DoubledSpace:
    """Span of a family of solution slices, doubled by the adjoint map.

    ``basis`` has shape (k, n+1, 2) and ``weights`` holds the per-node 2x2
    matrices of the positive slice product.
    """

    basis: np.ndarray
    weights: np.ndarray
    gram: np.ndarray = field(init=False)

    def __post_init__(self):
        self.basis = np.asarray(self.basis, complex)
        self.weights = np.asarray(self.weights, complex)
        if self.basis.ndim != 3 or self.basis.shape[-1] != 2:
            raise ValueError(f"basis must have shape (k, n+1, 2), got {self.basis.shape}")
        self.gram = np.einsum("aji,jik,bjk->ab", np.conj(self.basis), self.weights, self.basis)
        self.gram = 0.5 * (self.gram + _herm(self.gram))
        eig = np.linalg.eigvalsh(self.gram)
        if eig[0] <= 0 or eig[-1] / eig[0] > CONDITION_LIMIT:
            raise ValueError(
                f"solution family is numerically rank deficient (gram eigenvalues {eig[0]:.3e}..{eig[-1]:.3e})"
            )

    @classmethod
    def orthonormal(cls, basis, weights) -> "DoubledSpace":
        """Skip the Gram assembly when the family is known to be orthonormal."""
        obj = cls.__new__(cls)
        obj.basis = np.asarray(basis, complex)
        obj.weights = np.asarray(weights, complex)
        obj.gram = np.eye(obj.basis.shape[0], dtype=complex)
        return obj

    @property
    def k(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return 2 * self.k

    @cached_property
    def doubled_gram(self) -> np.ndarray:
        return sla.block_diag(self.gram, np.conj(self.gram))

    @cached_property
    def cholesky(self) -> np.ndarray:
        """Lower-triangular factor with gram = L L^H."""
        return np.linalg.cholesky(self.gram)

    def inner(self, x, y) -> complex:
        return complex(np.conj(x) @ self.doubled_gram @ y)

    def gamma(self, x) -> np.ndarray:
        """Antilinear conjugation (c, d) -> (conj d, conj c)."""
        x = np.asarray(x, complex)
        k = self.k
        return np.concatenate([np.conj(x[..., k:]), np.conj(x[..., :k])], axis=-1)

    def gamma_matrix(self) -> np.ndarray:
        """Matrix S with Gamma x = S conj(x)."""
        return _swap(self.k)

    def conjugate_operator(self, op: np.ndarray) -> np.ndarray:
        """Gamma op Gamma as a matrix."""
        s = self.gamma_matrix()
        return s @ np.conj(op) @ s

    def coordinates(self, slices) -> np.ndarray:
        """Sol-coordinates of the orthogonal projection of slices onto span(basis)."""
        slices = np.asarray(slices, complex)
        rhs = np.einsum("aji,jik,...jk->...a", np.conj(self.basis), self.weights, slices)
        return np.linalg.solve(self.gram, rhs[..., None])[..., 0] if rhs.ndim == 1 else np.linalg.solve(
            self.gram, rhs.T
        ).T

    def embed(self, slices, upsilon: bool = False) -> np.ndarray:
        """Doubled coordinates of psi (+) 0, or of 0 (+) Upsilon psi when ``upsilon``."""
        c = self.coordinates(slices)
        z = np.zeros_like(c)
        return np.concatenate([z, np.conj(c)] if upsilon else [c, z], axis=-1)

    def certify(self) -> dict[str, float]:
        rng = np.random.default_rng(0)
        x = rng.normal(size=self.dim) + 1j * rng.normal(size=self.dim)
        y = rng.normal(size=self.dim) + 1j * rng.normal(size=self.dim)
        c = 0.7 - 0.3j
        scale = abs(self.inner(x, x)) + abs(self.inner(y, y))
        return {
            "gram_min_eig": float(np.linalg.eigvalsh(self.gram)[0]),
            "gram_hermitian": float(np.abs(self.gram - _herm(self.gram)).max()),
            "gamma_involution": float(np.abs(self.gamma(self.gamma(x)) - x).max()),
            "gamma_antilinear": float(np.abs(self.gamma(c * x) - np.conj(c) * self.gamma(x)).max()),
            "gamma_antiunitary": abs(self.inner(self.gamma(x), self.gamma(y)) - np.conj(self.inner(x, y))) / scale,
        }


def build_doubled_space(solutions, weights) -> DoubledSpace:
    """Doubled space over a linearly independent family of slices."""
    return DoubledSpace(solutions, weights)


# ---------------------------------------------------------------- quasi-free states


@dataclass(eq=False)
class QuasiFreeState:
    """Quasi-free state given by its operator Q on a doubled space.

    omega(Xi(x)^* Xi(y)) = <<x, Q y>> with the doubled Gram product.
    """

    space: DoubledSpace
    Q: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_projector(cls, space: DoubledSpace, p: np.ndarray, **meta) -> "QuasiFreeState":
        """Q = P (+) (Id - Upsilon P Upsilon^-1) for an operator P on the Sol summand."""
        p = np.asarray(p, complex)
        return cls(space, sla.block_diag(p, np.eye(space.k) - np.conj(p)), dict(meta))

    @cached_property
    def form(self) -> np.ndarray:
        """Gram-weighted matrix G Q, Hermitian iff Q is self-adjoint."""
        return self.space.doubled_gram @ self.Q

    def spectrum(self) -> np.ndarray:
        f = self.form
        return sla.eigh(0.5 * (f + _herm(f)), self.space.doubled_gram, eigvals_only=True)

    def certify(self) -> dict[str, float]:
        f = self.form
        eig = self.spectrum()
        gd = self.space.doubled_gram
        # Gram-weighted, so that a pulled-back state reports its unitarity defect directly
        gamma = gd @ (self.Q + self.space.conjugate_operator(self.Q) - np.eye(self.space.dim))
        return {
            "self_adjoint": float(np.abs(f - _herm(f)).max() / max(np.abs(f).max(), 1e-300)),
            "spectrum_min": float(eig.min()),
            "spectrum_max": float(eig.max()),
            "gamma_residual": float(np.linalg.norm(gamma) / np.linalg.norm(gd)),
        }

    def two_point_coords(self, x, y) -> complex:
        """omega(Xi(x)^* Xi(y)) for doubled coordinate vectors."""
        return complex(np.conj(x) @ self.form @ y)

    def pair(self, x, y) -> complex:
        """omega(Xi(x) Xi(y)) = <<Gamma x, Q y>>."""
        return self.two_point_coords(self.space.gamma(x), y)

    @property
    def is_gauge_invariant(self) -> bool:
        k = self.space.k
        off = max(np.abs(self.Q[:k, k:]).max(initial=0.0), np.abs(self.Q[k:, :k]).max(initial=0.0))
        return off <= 1e-12 * max(1.0, np.abs(self.Q).max())


def two_point(state: QuasiFreeState, f1, f2, propagator=None) -> complex:
    """omega^2(f1, f2) = omega(Xi(G f1)^* Xi(G f2)).

    ``f1``/``f2`` are either sources (then ``propagator`` maps them to solution
    slices at the reference time of ``state``) or already such slices.
    """
    psi = []
    for f in (f1, f2):
        if callable(f):
            if propagator is None:
                raise ValueError("a propagator is required to smear test sections")
            f = propagator(f)
        psi.append(np.asarray(f, complex))
    x = state.space.embed(psi[0])
    y = state.space.embed(psi[1])
    return state.two_point_coords(x, y)


@dataclass(frozen=True, eq=False)
class OperatorImage:
    """The source D f' for a compactly supported test section f'.

    G (D f') vanishes in the continuum, so omega^2(f, D f') measures how well
    the discrete two-point function solves the field equation.
    """

    system: object
    section: object
    step: float = 1e-4

    def __call__(self, t, x) -> np.ndarray:
        return self.system.apply(self.section, t, x, self.step)

    @property
    def t_support(self):
        return self.section.t_support

    @property
    def x_support(self):
        return self.section.x_support


# ---------------------------------------------------------------- CAR representation


_ANNIHILATE = np.array([[0, 1], [0, 0]], dtype=complex)
_PARITY = np.diag([1.0, -1.0]).astype(complex)


def jordan_wigner(k: int) -> list[np.ndarray]:
    """Annihilators a_1..a_k on (C^2)^(tensor k), occupation basis |0>, |1> per mode."""
    if k > MAX_MODES:
        raise ResourceError(f"{k} modes need {2**k}x{2**k} matrices; limit is {MAX_MODES}")
    eye = np.eye(2, dtype=complex)
    out = []
    for j in range(k):
        factors = [_PARITY] * j + [_ANNIHILATE] + [eye] * (k - j - 1)
        out.append(reduce(np.kron, factors))
    return out


@dataclass(eq=False)
class CarRep:
    """Fermionic matrices for the field symbols Xi on a doubled space."""

    space: DoubledSpace
    modes: list = field(init=False)

    def __post_init__(self):
        self.modes = jordan_wigner(self.space.k)

    @property
    def size(self) -> int:
        return 2**self.space.k

    @cached_property
    def _mix(self) -> tuple[np.ndarray, np.ndarray]:
        chol = self.space.cholesky
        return _herm(chol), chol.T

    def field(self, x) -> np.ndarray:
        """Xi(c, d) = sum_j (L^H c)_j a_j^* + (L^T d)_j a_j."""
        x = np.asarray(x, complex)
        k = self.space.k
        up, down = self._mix
        cr = up @ x[:k]
        an = down @ x[k:]
        out = np.zeros((self.size, self.size), complex)
        for j, a in enumerate(self.modes):
            out += cr[j] * _herm(a) + an[j] * a
        return out

    def identity(self) -> np.ndarray:
        return np.eye(self.size, dtype=complex)

    def density(self, state: QuasiFreeState) -> np.ndarray:
        """Gaussian density matrix reproducing the two-point function of a gauge-invariant state."""
        if state.space is not self.space:
            raise ValueError("state and representation live on different doubled spaces")
        if not state.is_gauge_invariant:
            raise NotImplementedError("only gauge-invariant quasi-free states have a number-conserving density")
        k = self.space.k
        up, _ = self._mix
        p = up @ state.Q[:k, :k] @ np.linalg.inv(up)
        # occupation matrix C_ij = omega(a_i^* a_j)
        occ = np.eye(k) - np.conj(p)
        occ = 0.5 * (occ + _herm(occ))
        n, v = np.linalg.eigh(occ)
        if n.min() < -1e-10 or n.max() > 1 + 1e-10:
            raise ValueError("occupations leave [0, 1]: Q is not a state")
        n = np.clip(n, 0.0, 1.0)
        rho = self.identity()
        for m in range(k):
            b = sum(v[j, m] * a for j, a in enumerate(self.modes))
            num = _herm(b) @ b
            rho = rho @ (n[m] * num + (1 - n[m]) * (self.identity() - num))
        return rho

    def expectation(self, rho: np.ndarray, op: np.ndarray) -> complex:
        return complex(np.trace(rho @ op))


def car_representation(space: DoubledSpace) -> CarRep:
    return CarRep(space)


def car_residuals(rep: CarRep, x, y) -> dict[str, float]:
    """Matrix residuals of the CAR identities for two doubled vectors."""
    sp = rep.space
    a, b = rep.field(x), rep.field(y)
    eye = rep.identity()
    return {
        "anticommutator": float(np.abs(a @ b + b @ a - sp.inner(sp.gamma(x), y) * eye).max()),
        "adjoint_anticommutator": float(np.abs(_herm(a) @ b + b @ _herm(a) - sp.inner(x, y) * eye).max()),
        "hermiticity": float(np.abs(_herm(a) - rep.field(sp.gamma(x))).max()),
    }


def four_point_residual(rep: CarRep, state: QuasiFreeState, vectors) -> float:
    """|omega(X1 X2 X3 X4) - (w12 w34 - w13 w24 + w14 w23)| in the Gaussian density."""
    rho = rep.density(state)
    x1, x2, x3, x4 = vectors
    f = [rep.field(v) for v in vectors]
    direct = rep.expectation(rho, f[0] @ f[1] @ f[2] @ f[3])
    w = state.pair
    wick = w(x1, x2) * w(x3, x4) - w(x1, x3) * w(x2, x4) + w(x1, x4) * w(x2, x3)
    return abs(direct - wick)


# ---------------------------------------------------------------- ground state


@dataclass(eq=False)
class GroundState:
    state: QuasiFreeState
    eigenvalues: np.ndarray
    imag_max: float
    disc: Discretization
    vectors: np.ndarray

    @property
    def lowest_positive(self) -> float:
        return float(self.eigenvalues[self.eigenvalues > 0].min())


def slice_basis(disc: Discretization) -> np.ndarray:
    """Unit vectors of the grid-slice space, shape (2(n+1), n+1, 2)."""
    m = disc.n + 1
    return np.eye(2 * m, dtype=complex).reshape(2 * m, m, 2)


def energy_weights(disc: Discretization, t: float = 0.0) -> np.ndarray:
    """Per-node weights of the conserved discrete product: sign * H_j * P_j."""
    p = disc.coefficients(t)[0]
    s_e = disc.energy_sign(t, 1)
    w = s_e * disc.norm[:, None, None] * p
    return 0.5 * (w + _herm(w))


def hamiltonian_matrix(disc: Discretization, basis: np.ndarray, weights: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Matrix of H = i L on span(basis), where L is the semi-discrete generator of ``disc``."""
    gen = disc.rhs(t, basis, 1, disc.energy_sign(t, 1))
    return 1j * np.einsum("aji,jik,bjk->ab", np.conj(basis), weights, gen)


def ground_state_Q(
    system,
    spaces,
    n: int,
    t: float = 0.0,
    zero_tol: float = 1e-10,
) -> GroundState:
    """Quasi-free ground state Q = P+ (+) (Id - Upsilon P+ Upsilon^-1) of a static system."""
    if not system.static:
        raise ValueError("the ground-state construction needs a time-independent system")
    # same semi-discrete generator as the solver, so the state is exactly stationary under it
    disc = Discretization(system, spaces, n)
    weights = energy_weights(disc, t)
    raw = slice_basis(disc)
    gram = np.einsum("aji,jik,bjk->ab", np.conj(raw), weights, raw)
    chol = np.linalg.cholesky(0.5 * (gram + _herm(gram)))
    coef = sla.solve_triangular(chol, np.eye(len(raw)), lower=True).conj().T
    basis = np.einsum("ab,ajk->bjk", coef, raw)
    ham = hamiltonian_matrix(disc, basis, weights, t)
    imag_max = float(np.abs(np.linalg.eigvals(ham).imag).max())
    lam, vec = np.linalg.eigh(0.5 * (ham + _herm(ham)))
    if np.abs(lam).min() < zero_tol:
        raise SplittingError(f"eigenvalue {lam[np.argmin(np.abs(lam))]:.3e} within {zero_tol} of zero")
    pos = vec[:, lam > 0]
    space = DoubledSpace.orthonormal(basis, weights)
    state = QuasiFreeState.from_projector(space, pos @ _herm(pos), kind="ground", n=n)
    return GroundState(state, lam, imag_max, disc, vec)


def positivity_check(rep: CarRep, state: QuasiFreeState, rng: np.random.Generator, trials: int = 50) -> float:
    """Smallest omega(A^* A) over random polynomial elements of degree <= 2."""
    rho = rep.density(state)
    dim = rep.space.dim
    worst = np.inf
    for _ in range(trials):
        vecs = rng.normal(size=(3, dim)) + 1j * rng.normal(size=(3, dim))
        c = rng.normal(size=4) + 1j * rng.normal(size=4)
        f = [rep.field(v) for v in vecs]
        a = c[0] * rep.identity() + c[1] * f[0] + c[2] * f[1] @ f[2] + c[3] * f[2]
        worst = min(worst, rep.expectation(rho, _herm(a) @ a).real)
    return float(worst)


# ---------------------------------------------------------------- pullback along the Moller map


def doubled_map(images_coords: np.ndarray) -> np.ndarray:
    """R (+) Upsilon R Upsilon^-1 from the Sol-coordinates (columns) of the images."""
    c = np.asarray(images_coords, complex)
    return sla.block_diag(c, np.conj(c))


def pullback_state(
    state1: QuasiFreeState,
    plan,
    family,
    budget: float = 1e-2,
) -> QuasiFreeState:
    """State on the g0 side: omega_0(Xi(x)^* Xi(y)) = omega_1(Xi(R x)^* Xi(R y)).

    ``family`` is a set of g0 slices on t_minus spanning the doubled space of
    the result.  Q0 = R^dagger Q1 R, where the adjoint is taken with the two
    Gram products; it equals R^-1 Q1 R up to the measured unitarity deviation,
    which is stored in ``meta['unitarity_deviation']``.
    """
    from .moller import moller_forward

    space0 = DoubledSpace(np.asarray(family, complex), plan.weights0())
    images = moller_forward(plan, space0.basis, check=False)
    coords = state1.space.coordinates(images).T
    big = doubled_map(coords)
    g1 = state1.space.doubled_gram
    g0 = space0.doubled_gram
    deviation = float(np.linalg.norm(_herm(big) @ g1 @ big - g0) / np.linalg.norm(g0))
    if deviation > budget:
        raise UnitarityBudgetError(f"unitarity deviation {deviation:.3e} exceeds budget {budget:.1e}")
    form = _herm(big) @ g1 @ state1.Q @ big
    q0 = np.linalg.solve(g0, form)
    return QuasiFreeState(space0, q0, {"kind": "pullback", "unitarity_deviation": deviation})


__all__ = [
    "CarRep",
    "DoubledSpace",
    "GroundState",
    "QuasiFreeState",
    "ResourceError",
    "SplittingError",
    "UnitarityBudgetError",
    "build_doubled_space",
    "car_representation",
    "car_residuals",
        "doubled_map",
    "energy_weights",
    "four_point_residual",
    "ground_state_Q",
    "hamiltonian_matrix",
    "jordan_wigner",
    "OperatorImage",
    "positivity_check",
    "pullback_state",
    "slice_basis",
    "two_point",
]
