"""2x2 Clifford representation for signature (-, +) and the spinor products built on it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SplitMetric, volume_slice


@dataclass(frozen=True, eq=False)
class GammaRep:
    """Clifford generators for the orthonormal frame (e0, e1) plus spin form and chirality.

    Conventions: ``gamma(u) gamma(v) + gamma(v) gamma(u) = -2 g(u, v)``, so
    ``gamma0^2 = Id`` and ``gamma1^2 = -Id``.  The spin product is
    ``<psi, phi> = psi^H M phi``.
    """

    gamma0: np.ndarray
    gamma1: np.ndarray
    spin_form: np.ndarray
    chirality: np.ndarray

    def gamma(self, v0, v1) -> np.ndarray:
        """Clifford multiplication by the frame vector v0 e0 + v1 e1 (broadcasts)."""
        v0 = np.asarray(v0, float)[..., None, None]
        v1 = np.asarray(v1, float)[..., None, None]
        return v0 * self.gamma0 + v1 * self.gamma1

    def spin(self, psi, phi) -> np.ndarray:
        """Pointwise spin product over the trailing axis."""
        return np.einsum("...i,ij,...j->...", np.conj(psi), self.spin_form, phi)

    def residuals(self) -> dict[str, float]:
        g0, g1, m, k = self.gamma0, self.gamma1, self.spin_form, self.chirality
        eye = np.eye(2)
        herm = lambda a: a.conj().T
        signs = np.linalg.eigvalsh(m)
        return {
            "gamma0_sq": float(np.abs(g0 @ g0 - eye).max()),
            "gamma1_sq": float(np.abs(g1 @ g1 + eye).max()),
            "anticommutator": float(np.abs(g0 @ g1 + g1 @ g0).max()),
            "gamma0_symmetric": float(np.abs(herm(g0) @ m - m @ g0).max()),
            "gamma1_symmetric": float(np.abs(herm(g1) @ m - m @ g1).max()),
            "spin_form_hermitian": float(np.abs(herm(m) - m).max()),
            "spin_form_signature": 0.0 if (signs.min() < 0 < signs.max()) else 1.0,
            "chirality_sq": float(np.abs(k @ k - eye).max()),
            "chirality_anticommutes": float(
                max(np.abs(k @ g0 + g0 @ k).max(), np.abs(k @ g1 + g1 @ k).max())
            ),
        }


def make_canonical_rep() -> GammaRep:
    g0 = np.array([[0, 1], [1, 0]], dtype=complex)
    g1 = np.array([[0, 1], [-1, 0]], dtype=complex)
    return GammaRep(gamma0=g0, gamma1=g1, spin_form=g0.copy(), chirality=g0 @ g1)


def frame_components(g: SplitMetric, t, x, v) -> tuple[np.ndarray, np.ndarray]:
    """Components of a coordinate vector ``(v_t, v_x)`` in the frame e0 = d_t/beta, e1 = d_x/sqrt(h)."""
    v = np.asarray(v, float)
    return g.lapse(t, x) * v[..., 0], np.sqrt(g.spatial(t, x)) * v[..., 1]


def clifford_of(g: SplitMetric, t, x, v, rep: GammaRep | None = None) -> np.ndarray:
    """Clifford multiplication by the tangent vector with coordinate components ``v``."""
    g.check_point(t, x)
    rep = rep or make_canonical_rep()
    v0, v1 = frame_components(g, t, x, v)
    return rep.gamma(v0, v1)


def sharp(g: SplitMetric, t, x, xi) -> np.ndarray:
    """Raise a covector ``(xi_t, xi_x)`` with ``g``."""
    xi = np.asarray(xi, float)
    out = np.empty(np.broadcast(t, x, xi[..., 0]).shape + (2,))
    out[..., 0] = -xi[..., 0] / g.lapse(t, x) ** 2
    out[..., 1] = xi[..., 1] / g.spatial(t, x)
    return out


def clifford_of_covector(g: SplitMetric, t, x, xi, rep: GammaRep | None = None) -> np.ndarray:
    """gamma(xi^sharp): the Dirac principal symbol at the covector ``xi``."""
    return clifford_of(g, t, x, sharp(g, t, x, xi), rep)


def slice_weights(g: SplitMetric, t: float, n: int, rep: GammaRep | None = None) -> np.ndarray:
    """Per-node 2x2 weight matrices W_j with slice product sum_j psi_j^H W_j phi_j."""
    rep = rep or make_canonical_rep()
    dens = rep.spin_form @ rep.gamma0
    return volume_slice(g, t, n)[:, None, None] * dens


def slice_product(rep: GammaRep, g: SplitMetric, t: float, psi, phi) -> complex:
    """Positive Hermitian product of two spinor slices sampled on the ``len - 1`` interval grid."""
    psi = np.asarray(psi)
    phi = np.asarray(phi)
    if psi.shape != phi.shape or psi.ndim != 2 or psi.shape[1] != 2:
        raise ValueError(f"slices must share shape (n+1, 2); got {psi.shape} and {phi.shape}")
    w = slice_weights(g, t, psi.shape[0] - 1, rep)
    return complex(np.einsum("ji,jik,jk->", np.conj(psi), w, phi))


@dataclass(frozen=True, eq=False)
class AdjunctionMap:
    """psi -> <psi, .>, represented by the row vector psi^H M."""

    rep: GammaRep

    def __call__(self, psi) -> np.ndarray:
        return np.conj(np.asarray(psi)) @ self.rep.spin_form

    def inverse(self, row) -> np.ndarray:
        # row = psi^H M  =>  psi = conj(row M^-1)
        return np.conj(np.asarray(row) @ np.linalg.inv(self.rep.spin_form))


__all__ = [
    "GammaRep",
    "AdjunctionMap",
    "make_canonical_rep",
    "clifford_of",
    "clifford_of_covector",
    "frame_components",
    "sharp",
    "slice_product",
    "slice_weights",
]
