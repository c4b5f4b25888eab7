"""Closed forms for degree-regular networks.

On a d-regular network the endemic infection probability is
``max(0, 1 - delta/d)``, which makes both optimal curing rates explicit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .weighting import WeightingSpec, solve_wprime_level, w_eval


@dataclass(frozen=True)
class RegularInstance:
    d: int
    c: float
    weighting: WeightingSpec

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("degree must be a positive integer")
        if not self.c > 0.0:
            raise ValueError("unit cost must be positive")

    def neutral(self) -> float:
        return optimal_neutral(self.d, self.c)

    def weighted(self) -> float:
        return optimal_weighted(self.d, self.c, self.weighting)


def regular_infection(d: int, delta):
    """Infection probability ``1 - delta/d`` below eradication, else 0."""
    was_scalar = np.ndim(delta) == 0
    delta = np.asarray(delta, dtype=float)
    x = np.where(delta <= d, 1.0 - delta / d, 0.0)
    return float(x) if was_scalar else x


def optimal_neutral(d: int, c: float) -> float:
    """Cost-minimising rate for a true expectation minimizer.

    Above ``c = 1/d`` the cost ``1 - delta/d + c delta`` only grows, so the
    answer is 0 (also at the tie ``c = 1/d``).  Below it, curing up to
    eradication at ``delta = d`` pays off; this branch lies outside the
    regime the closed form was derived for and is kept for sweeps.
    """
    if not c > 0.0:
        raise ValueError("unit cost must be positive")
    return 0.0 if c * d >= 1.0 else float(d)


def optimal_weighted(d: int, c: float, w: WeightingSpec) -> float:
    """Cost-minimising rate under probability weighting, for ``c >= 1/d``.

    The first-order condition ``w'(x) = d c`` has roots ``V < x_min < X``;
    the optimum is ``min(1/c, d (1 - X))``, or ``1/c`` if the level ``d c``
    sits below the minimum slope of ``w``.  The boundary ``c = 1/d`` uses
    the same formula (right limit).
    """
    if not c * d >= 1.0:
        raise ValueError(f"need c >= 1/d = {1.0 / d:.6g}, got c={c!r}")
    if w.is_identity:
        raise ValueError("optimal_weighted needs a Prelec weighting; use optimal_neutral")
    _, x_root = solve_wprime_level(w, d * c)
    if x_root is None:
        return 1.0 / c
    return min(1.0 / c, d * (1.0 - x_root))


def perceived_cost(d: int, c: float, w: WeightingSpec, delta):
    return w_eval(w, regular_infection(d, delta)) + c * np.asarray(delta, dtype=float)


@dataclass(frozen=True)
class SweepRow:
    c: float
    delta_n: float
    delta_w: float
    x_n: float
    x_w: float


def sweep_cost(d: int, c_grid, w: WeightingSpec) -> list:
    """Closed-form optimal rates over a grid of unit costs, sorted by cost."""
    rows = []
    for c in sorted(float(c) for c in c_grid):
        if not c * d >= 1.0:
            raise ValueError(f"sweep costs must be at least 1/d = {1.0 / d:.6g}, got {c!r}")
        dn = optimal_neutral(d, c)
        dw = optimal_weighted(d, c, w)
        rows.append(SweepRow(c, dn, dw, regular_infection(d, dn), regular_infection(d, dw)))
    return rows
