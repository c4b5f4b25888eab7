"""Probability weighting functions.

Only two families are supported: the identity (true expectation minimizer)
and the one-parameter Prelec function ``w(x) = exp(-(-ln x)**alpha)``.
Every function here accepts scalars or numpy arrays; scalars in give
floats out.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

INV_E = math.exp(-1.0)

# Bisection brackets for the two monotone branches of w'.
_LOWER = 1e-300
_UPPER = float(np.nextafter(1.0, 0.0))
_ROOT_TOL = 0.0
_TANGENCY_TOL = 1e-10


class WeightingKind(enum.Enum):
    IDENTITY = "identity"
    PRELEC = "prelec"


class UnsupportedWeightingError(ValueError):
    """Operation is undefined for the given weighting kind."""


@dataclass(frozen=True)
class WeightingSpec:
    """A probability weighting function.

    Build instances with :meth:`identity` or :meth:`prelec`.  A Prelec
    parameter of exactly 1 is the identity and must be requested as such.
    """

    kind: WeightingKind
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind is WeightingKind.PRELEC:
            if not 0.0 < self.alpha < 1.0:
                raise ValueError(f"Prelec alpha must lie in (0, 1), got {self.alpha!r}")
        elif self.kind is WeightingKind.IDENTITY:
            object.__setattr__(self, "alpha", 1.0)
        else:
            raise TypeError(f"unknown weighting kind {self.kind!r}")

    @classmethod
    def identity(cls) -> "WeightingSpec":
        return cls(WeightingKind.IDENTITY)

    @classmethod
    def prelec(cls, alpha: float) -> "WeightingSpec":
        return cls(WeightingKind.PRELEC, float(alpha))

    @property
    def is_identity(self) -> bool:
        return self.kind is WeightingKind.IDENTITY

    def __call__(self, x):
        return w_eval(self, x)

    def __str__(self):
        if self.is_identity:
            return "identity"
        return f"prelec(alpha={self.alpha:g})"


def _scalar_or_array(values, was_scalar):
    return float(values) if was_scalar else values


def w_eval(spec: WeightingSpec, x):
    """Perceived probability ``w(x)`` for ``x`` in [0, 1].

    The endpoints map exactly to 0 and 1 (continuous extension of the
    Prelec formula past the log singularity).
    """
    was_scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)) or np.any(np.isnan(x)):
        raise ValueError("probabilities must lie in [0, 1]")
    if spec.is_identity:
        return _scalar_or_array(x.copy(), was_scalar)

    out = np.empty_like(x)
    interior = (x > 0.0) & (x < 1.0)
    out[x == 0.0] = 0.0
    out[x == 1.0] = 1.0
    xi = x[interior]
    out[interior] = np.exp(-((-np.log(xi)) ** spec.alpha))
    return _scalar_or_array(out, was_scalar)


def w_deriv(spec: WeightingSpec, x):
    """Closed-form derivative ``w'(x)`` on the open interval (0, 1)."""
    was_scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0.0) | (x >= 1.0)) or np.any(np.isnan(x)):
        raise ValueError("w' is only defined on the open interval (0, 1)")
    if spec.is_identity:
        return _scalar_or_array(np.ones_like(x), was_scalar)

    a = spec.alpha
    neglog = -np.log(x)
    w = np.exp(-(neglog**a))
    return _scalar_or_array(w * a * neglog ** (a - 1.0) / x, was_scalar)


def _require_prelec(spec: WeightingSpec, what: str):
    if spec.is_identity:
        raise UnsupportedWeightingError(f"{what} is undefined for the identity weighting")


def x_min(spec: WeightingSpec) -> float:
    """Location of the unique minimum of ``w'``.

    For every Prelec parameter this is 1/e, which is also the fixed point
    where ``w(x) = x``.
    """
    _require_prelec(spec, "x_min")
    return INV_E


def x_zero(spec: WeightingSpec) -> float:
    """Interior fixed point separating over- from underweighting."""
    _require_prelec(spec, "x_zero")
    return INV_E


def _bisect_monotone(f, lo, hi, increasing, tol=_ROOT_TOL, max_iter=2200):
    # f(lo) and f(hi) bracket zero; shrink until the interval is below tol
    # or no double is left between the endpoints.
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol or mid <= lo or mid >= hi:
            break
        if (f(mid) < 0.0) == increasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_wprime_level(spec: WeightingSpec, level: float):
    """Roots ``(V, X)`` of ``w'(x) = level`` with ``V < x_min < X``.

    Returns ``(None, None)`` when ``level`` is below the minimum slope and
    ``(x_min, x_min)`` at tangency.  Roots too close to 0 or 1 for a double
    saturate at the nearest representable point.
    """
    _require_prelec(spec, "solve_wprime_level")
    if not level > 0.0:
        raise ValueError(f"level must be positive, got {level!r}")

    xm = x_min(spec)
    floor = float(w_deriv(spec, xm))
    if abs(level - floor) < _TANGENCY_TOL:
        return xm, xm
    if level < floor:
        return None, None

    def excess(x):
        return float(w_deriv(spec, x)) - level

    # w' decreases on (0, x_min) and increases on (x_min, 1).
    if excess(_LOWER) <= 0.0:
        v_root = _LOWER
    else:
        v_root = _bisect_monotone(excess, _LOWER, xm, increasing=False)
    if excess(_UPPER) <= 0.0:
        x_root = _UPPER
    else:
        x_root = _bisect_monotone(excess, xm, _UPPER, increasing=True)
    return v_root, x_root


@dataclass
class AssumptionReport:
    """Outcome of the numerical shape checks on a weighting function."""

    spec: WeightingSpec
    grid_size: int
    passed: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def rows(self):
        for name in self.passed:
            yield name, self.passed[name], self.margins[name]


def check_assumption1(spec: WeightingSpec, grid_size: int = 1000) -> AssumptionReport:
    """Numerically check the inverse-S shape conditions on a uniform grid.

    Properties checked:

    ``increasing``
        endpoints map to 0 and 1 and ``w`` is strictly increasing; the
        margin is the smallest grid increment.
    ``concave_convex``
        the second finite difference changes sign exactly once, from
        negative to positive; the margin is the weaker of the peak
        concavity and peak convexity (larger means more curved).
    ``unique_minimum``
        ``w'`` on the interior grid has a single local minimum and its value
        there is below 1; the margin is ``1 - min w'``.
    """
    if grid_size < 100:
        raise ValueError("grid_size must be at least 100")
    report = AssumptionReport(spec, grid_size)
    xs = np.linspace(0.0, 1.0, grid_size)
    w = w_eval(spec, xs)

    steps = np.diff(w)
    report.margins["increasing"] = float(steps.min())
    report.passed["increasing"] = bool(w[0] == 0.0 and w[-1] == 1.0 and steps.min() > 0.0)

    second = np.diff(w, 2)
    # drop rounding-level values before counting sign changes
    noise = 64 * np.finfo(float).eps
    signs = np.sign(np.where(np.abs(second) > noise, second, 0.0))
    nonzero = signs[signs != 0]
    changes = np.count_nonzero(np.diff(nonzero))
    shape_ok = changes == 1 and nonzero.size > 0 and nonzero[0] < 0 < nonzero[-1]
    if shape_ok:
        margin = min(float(-second.min()), float(second.max()))
    else:
        margin = 0.0
    report.passed["concave_convex"] = bool(shape_ok)
    report.margins["concave_convex"] = margin

    slopes = w_deriv(spec, xs[1:-1])
    i = int(np.argmin(slopes))
    left_dec = np.all(np.diff(slopes[: i + 1]) < 0.0)
    right_inc = np.all(np.diff(slopes[i:]) > 0.0)
    strict_min = 0 < i < slopes.size - 1 and left_dec and right_inc
    report.passed["unique_minimum"] = bool(strict_min and slopes[i] < 1.0)
    report.margins["unique_minimum"] = float(1.0 - slopes[i])
    return report
