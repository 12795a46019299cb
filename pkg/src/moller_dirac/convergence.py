"""Observed orders of convergence over a grid ladder."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np


@dataclass(frozen=True)
class OrderEstimate:
    grid_sizes: tuple[int, ...]
    errors: tuple[float, ...]
    pairwise: tuple[float, ...]
    fitted: float
    floor: float
    roundoff_limited: bool

    @property
    def order(self) -> float:
        return min(self.pairwise) if self.pairwise else float("nan")

    def passes(self, minimum: float) -> bool:
        return self.roundoff_limited or self.order >= minimum

    def as_dict(self) -> dict:
        out = asdict(self)
        out["order"] = self.order
        return out


def estimate_order(grid_sizes, errors, floor: float = 0.0) -> OrderEstimate:
    """Pairwise orders log(e_i / e_i+1) / log(N_i+1 / N_i) plus a least-squares slope.

    ``floor`` is an absolute noise level: when every error sits below it the
    ladder cannot resolve an order and the estimate is flagged roundoff-limited.
    """
    ns = np.asarray(grid_sizes, float)
    es = np.asarray(errors, float)
    if ns.size != es.size or ns.size < 2:
        raise ValueError("need at least two (N, error) pairs")
    if np.any(np.diff(ns) <= 0):
        raise ValueError("grid ladder must be strictly increasing")
    with np.errstate(divide="ignore", invalid="ignore"):
        pair = np.log(es[:-1] / es[1:]) / np.log(ns[1:] / ns[:-1])
        fit = np.polyfit(np.log(1 / ns), np.log(es), 1)[0] if np.all(es > 0) else float("nan")
    return OrderEstimate(
        tuple(int(n) for n in ns),
        tuple(float(e) for e in es),
        tuple(float(p) for p in pair),
        float(fit) if np.isfinite(fit) else float("nan"),
        float(floor),
        bool(floor > 0 and np.all(es <= floor)),
    )
