"""Smooth compactly supported spinor data and sources used by checks and suites."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def cos_bump(r, power: int = 16) -> np.ndarray:
    """cos(pi r / 2)^power on |r| < 1, zero outside; C^(power - 1) and very flat at the edge."""
    r = np.asarray(r, float)
    return np.where(np.abs(r) < 1, np.cos(0.5 * np.pi * np.clip(r, -1, 1)) ** power, 0.0)


@dataclass(frozen=True)
class BumpData:
    """psi(x) = amplitude * bump((x - center) / width) * exp(i k x)."""

    center: float
    width: float
    amplitude: tuple[complex, complex] = (1.0, 0.0)
    wavenumber: float = 0.0
    power: int = 16

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        prof = cos_bump((x - self.center) / self.width, self.power) * np.exp(1j * self.wavenumber * x)
        return prof[..., None] * np.asarray(self.amplitude, complex)

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.width, self.center + self.width


@dataclass(frozen=True)
class BumpSource:
    """f(t, x) = amplitude * bump_t * bump_x * exp(i k x), supported in a box."""

    t_center: float
    x_center: float
    t_width: float
    x_width: float
    amplitude: tuple[complex, complex] = (1.0, 0.0)
    wavenumber: float = 0.0
    power: int = 16

    def __call__(self, t, x) -> np.ndarray:
        t = np.asarray(t, float)
        x = np.asarray(x, float)
        prof = (
            cos_bump((t - self.t_center) / self.t_width, self.power)
            * cos_bump((x - self.x_center) / self.x_width, self.power)
            * np.exp(1j * self.wavenumber * x)
        )
        return prof[..., None] * np.asarray(self.amplitude, complex)

    @property
    def t_support(self) -> tuple[float, float]:
        return self.t_center - self.t_width, self.t_center + self.t_width

    @property
    def x_support(self) -> tuple[float, float]:
        return self.x_center - self.x_width, self.x_center + self.x_width


def _random_amplitude(rng: np.random.Generator) -> tuple[complex, complex]:
    a = rng.normal(size=2) + 1j * rng.normal(size=2)
    a /= np.linalg.norm(a)
    return complex(a[0]), complex(a[1])


def random_bump_data(
    rng: np.random.Generator, length: float = 1.0, margin: float = 0.15, width=(0.1, 0.2), power: int = 16
) -> BumpData:
    """Random bump whose support stays ``margin`` away from both ends."""
    w = rng.uniform(*width)
    c = rng.uniform(margin + w, length - margin - w)
    return BumpData(c, w, _random_amplitude(rng), float(rng.uniform(-8, 8)), power)


def random_bump_source(
    rng: np.random.Generator,
    t_range: tuple[float, float],
    length: float = 1.0,
    margin: float = 0.2,
    width=(0.05, 0.1),
    power: int = 16,
) -> BumpSource:
    wt = rng.uniform(*width)
    wx = rng.uniform(*width)
    tc = rng.uniform(t_range[0] + wt, t_range[1] - wt)
    xc = rng.uniform(margin + wx, length - margin - wx)
    return BumpSource(tc, xc, wt, wx, _random_amplitude(rng), float(rng.uniform(-6, 6)), power)


@dataclass(frozen=True, eq=False)
class StackedSource:
    """Several sources evaluated together, shape (k, ..., 2); support is the union box."""

    sources: tuple

    def __call__(self, t, x) -> np.ndarray:
        return np.stack([f(t, x) for f in self.sources])

    def __len__(self) -> int:
        return len(self.sources)

    @property
    def t_support(self) -> tuple[float, float]:
        return min(f.t_support[0] for f in self.sources), max(f.t_support[1] for f in self.sources)

    @property
    def x_support(self) -> tuple[float, float]:
        return min(f.x_support[0] for f in self.sources), max(f.x_support[1] for f in self.sources)
