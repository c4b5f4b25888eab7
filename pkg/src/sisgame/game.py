"""Curing-rate game between degree classes and its degree-based equilibria.

Each degree class ``k`` picks one curing rate in ``[0, 1/c_k]`` and pays
its (perceived) endemic infection probability plus ``c_k`` per unit of
curing.  With identity weighting this is the true expectation minimizer
game; Prelec weighting gives the behavioural variant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dbmf import (
    ConvergenceError,
    DegreeDistribution,
    _solve_v,
    as_profile,
    endemic_v,
    endemic_v_batch,
    infection_probs,
)
from .weighting import WeightingSpec, w_deriv, w_eval

# v is solved far below the default tolerance so that cost differences near
# an optimum are not swamped by solver noise.
COST_V_TOL = 1e-15
COARSE_GRID = 129
ZERO_TIE_TOL = 1e-9
DEFAULT_BR_TOL = 1e-10
DEFAULT_FP_TOL = 1e-8
DEFAULT_VERIFY_EPS = 1e-7
DEFAULT_VERIFY_GRID = 1025
ZERO_THRESHOLD = 1e-9
_GOLDEN_HANDOFF = 1e-7
_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class GameSpec:
    """Degree distribution, per-class unit costs and per-class weightings."""

    dd: DegreeDistribution
    costs: np.ndarray
    weightings: tuple = ()

    def __post_init__(self):
        costs = np.array(self.costs, dtype=float, ndmin=1)
        if costs.size == 1 and self.dd.size > 1:
            costs = np.full(self.dd.size, costs[0])
        if costs.shape != (self.dd.size,):
            raise ValueError("costs must align with the degree support")
        if not np.all(costs > 0.0) or not np.all(np.isfinite(costs)):
            raise ValueError("unit curing costs must be positive and finite")
        costs.setflags(write=False)
        object.__setattr__(self, "costs", costs)

        ws = self.weightings
        if isinstance(ws, WeightingSpec):
            ws = (ws,) * self.dd.size
        elif len(ws) == 0:
            ws = (WeightingSpec.identity(),) * self.dd.size
        elif len(ws) == 1:
            ws = tuple(ws) * self.dd.size
        ws = tuple(ws)
        if len(ws) != self.dd.size or not all(isinstance(w, WeightingSpec) for w in ws):
            raise ValueError("need one WeightingSpec per degree class")
        object.__setattr__(self, "weightings", ws)

    @property
    def upper(self) -> np.ndarray:
        """Right ends of the strategy intervals, ``1 / c_k``."""
        return 1.0 / self.costs

    @property
    def homogeneous_cost(self) -> bool:
        return bool(np.all(self.costs == self.costs[0]))

    @property
    def all_identity(self) -> bool:
        return all(w.is_identity for w in self.weightings)

    def default_init(self) -> np.ndarray:
        return 0.5 * self.upper

    def check_feasible(self, delta) -> np.ndarray:
        delta = as_profile(self.dd, delta)
        if np.any(delta > self.upper * (1 + 1e-12)):
            raise ValueError("curing rate above 1/c_k is outside the strategy set")
        return delta


def _cost_function(spec: GameSpec, i: int, profile: np.ndarray):
    """Scalar cost of class index ``i`` as a function of its own rate."""
    ks = spec.dd.degrees.tolist()
    kqs = (spec.dd.degrees * spec.dd.q).tolist()
    deltas = [float(d) for d in profile]
    k = ks[i]
    c = float(spec.costs[i])
    w = spec.weightings[i]

    def cost(d):
        deltas[i] = d
        v, _ = _solve_v(ks, kqs, deltas, COST_V_TOL)
        x = k * v / (d + k * v) if v > 0.0 else 0.0
        return (x if w.is_identity else w_eval(w, x)) + c * d

    return cost


def _slope_function(spec: GameSpec, i: int, profile: np.ndarray):
    """Derivative of class ``i``'s cost in its own rate (implicit in v)."""
    ks = spec.dd.degrees.tolist()
    q = spec.dd.q.tolist()
    kqs = [k * qi for k, qi in zip(ks, q)]
    deltas = [float(d) for d in profile]
    k = ks[i]
    c = float(spec.costs[i])
    w = spec.weightings[i]

    def slope(d):
        deltas[i] = d
        v, _ = _solve_v(ks, kqs, deltas, COST_V_TOL)
        if v == 0.0:
            return c
        s = sum(j * j * qj / (dj + j * v) ** 2 for j, qj, dj in zip(ks, q, deltas))
        denom = d + k * v
        dv = -k * q[i] / denom**2 / s
        dx = k * (d * dv - v) / denom**2
        x = k * v / denom
        if w.is_identity:
            wp = 1.0
        elif x >= 1.0:
            return -math.inf
        else:
            wp = float(w_deriv(w, x))
        return wp * dx + c

    return slope


def _polish(slope, a, b, tol=1e-14, max_iter=200):
    # bisection on the sign of the slope; None if [a, b] does not bracket
    sa, sb = slope(a), slope(b)
    if not (sa < 0.0 < sb):
        return None
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if b - a <= tol or mid <= a or mid >= b:
            break
        if slope(mid) < 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def _class_costs_batch(spec: GameSpec, i: int, profile: np.ndarray, own) -> np.ndarray:
    own = np.asarray(own, dtype=float)
    rows = np.tile(profile, (own.size, 1))
    rows[:, i] = own
    v = endemic_v_batch(spec.dd, rows, COST_V_TOL)
    k = float(spec.dd.degrees[i])
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(v > 0.0, k * v / (own + k * v), 0.0)
    return w_eval(spec.weightings[i], x) + spec.costs[i] * own


def class_cost(spec: GameSpec, k: int, delta_k: float, profile) -> float:
    """Perceived cost of degree class ``k`` choosing ``delta_k``.

    ``profile`` is the full curing profile; its entry for ``k`` is replaced
    by ``delta_k``.
    """
    i = spec.dd.index(k)
    profile = as_profile(spec.dd, profile)
    if not 0.0 <= delta_k <= spec.upper[i] * (1 + 1e-12):
        raise ValueError(f"delta_k={delta_k!r} outside [0, {spec.upper[i]!r}]")
    return float(_cost_function(spec, i, profile)(float(delta_k)))


def golden_section(f, a, b, tol=DEFAULT_BR_TOL, max_iter=200):
    """Minimise a unimodal ``f`` on ``[a, b]``.

    Returns ``(x, f(x), a, b)`` with ``[a, b]`` the final bracket.
    """
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = f(x2)
    x, fx = (x1, f1) if f1 <= f2 else (x2, f2)
    return x, fx, a, b


@dataclass(frozen=True)
class BestResponse:
    delta: float
    cost: float


def _best_response_index(spec, i, profile, tol):
    upper = float(spec.upper[i])
    cost = _cost_function(spec, i, profile)
    grid = np.linspace(0.0, upper, COARSE_GRID)
    values = _class_costs_batch(spec, i, profile, grid)

    slope = _slope_function(spec, i, profile)
    f0 = cost(0.0)
    candidates = [(0.0, f0), (upper, cost(upper))]
    n = grid.size
    for j in range(n):
        left = values[j - 1] if j > 0 else math.inf
        right = values[j + 1] if j < n - 1 else math.inf
        strict = values[j] < left or values[j] < right
        if values[j] <= left and values[j] <= right and strict:
            lo = grid[max(j - 1, 0)]
            hi = grid[min(j + 1, n - 1)]
            x, fx, a, b = golden_section(cost, lo, hi, max(tol, _GOLDEN_HANDOFF))
            # golden section alone stalls near sqrt(machine eps) on flat
            # basins; finish on the slope sign when it brackets a root
            pad = 4 * (b - a)
            root = _polish(slope, max(lo, a - pad), min(hi, b + pad), tol * 1e-4)
            if root is not None:
                x, fx = root, cost(root)
            candidates.append((x, fx))

    best_delta, best_cost = min(candidates, key=lambda c: c[1])
    if best_cost >= f0 - ZERO_TIE_TOL:
        return BestResponse(0.0, f0)
    return BestResponse(float(best_delta), float(best_cost))


def best_response(spec: GameSpec, k: int, profile, tol: float = DEFAULT_BR_TOL) -> BestResponse:
    """Global minimiser of class ``k``'s cost over ``[0, 1/c_k]``.

    A 129-point scan locates candidate basins, each is refined by
    golden-section search, and the endpoints are always compared.  When the
    best cost is within 1e-9 of the cost at zero, zero is returned.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    profile = as_profile(spec.dd, profile)
    return _best_response_index(spec, spec.dd.index(k), profile, tol)


@dataclass
class EquilibriumResult:
    delta_ne: np.ndarray
    v_ne: float
    x_ne: np.ndarray
    costs_at_ne: np.ndarray
    iterations: int
    max_update: float
    verified: bool = False
    verification_margin: float = math.nan


class NoEquilibriumFound(ConvergenceError):
    """Best-response iteration hit ``max_rounds``; ``last_profile`` is kept."""

    def __init__(self, message, last_profile, max_update):
        super().__init__(message)
        self.last_profile = last_profile
        self.max_update = max_update


def profile_costs(spec: GameSpec, profile) -> tuple:
    """``(v, x, J)`` at a full profile."""
    profile = as_profile(spec.dd, profile)
    v = endemic_v(spec.dd, profile, COST_V_TOL)
    x = infection_probs(v, profile, spec.dd.degrees)
    perceived = np.array([float(w_eval(w, xi)) for w, xi in zip(spec.weightings, x)])
    return v, x, perceived + spec.costs * profile


def best_response_round(spec: GameSpec, profile, tol: float = DEFAULT_BR_TOL) -> np.ndarray:
    """One Gauss-Seidel sweep over classes in ascending degree order."""
    profile = as_profile(spec.dd, profile).copy()
    for i in range(spec.dd.size):
        profile[i] = _best_response_index(spec, i, profile, tol).delta
    return profile


def solve_dbe(
    spec: GameSpec,
    init=None,
    tol_fp: float = DEFAULT_FP_TOL,
    max_rounds: int = 500,
    br_tol: float = DEFAULT_BR_TOL,
    verify: bool = True,
    eps: float = DEFAULT_VERIFY_EPS,
    grid: int = DEFAULT_VERIFY_GRID,
) -> EquilibriumResult:
    """Degree-based equilibrium by Gauss-Seidel best-response iteration.

    Iterates until a full round moves no rate by more than ``tol_fp``.
    Existence of an equilibrium does not imply that this iteration
    converges; :class:`NoEquilibriumFound` is raised after ``max_rounds``.
    """
    profile = spec.check_feasible(spec.default_init() if init is None else init).copy()
    max_update = math.inf
    for rounds in range(1, max_rounds + 1):
        new = best_response_round(spec, profile, br_tol)
        max_update = float(np.max(np.abs(new - profile)))
        profile = new
        if max_update <= tol_fp:
            break
    else:
        raise NoEquilibriumFound(
            f"best-response iteration did not settle within {max_rounds} rounds "
            f"(last update {max_update:.3g})",
            profile,
            max_update,
        )

    v, x, costs = profile_costs(spec, profile)
    result = EquilibriumResult(profile, v, x, costs, rounds, max_update)
    if verify:
        result.verified, result.verification_margin = verify_dbe(spec, profile, eps, grid)
    return result


def verify_dbe(spec: GameSpec, profile, eps: float = DEFAULT_VERIFY_EPS, grid: int = DEFAULT_VERIFY_GRID):
    """Check unilateral deviations on a uniform grid of each strategy set.

    Returns ``(margin <= eps, margin)`` where ``margin`` is the largest cost
    reduction any class achieves by deviating to a grid point.
    """
    profile = spec.check_feasible(profile)
    margin = -math.inf
    for i in range(spec.dd.size):
        own = profile[i]
        points = np.append(np.linspace(0.0, spec.upper[i], grid), own)
        values = _class_costs_batch(spec, i, profile, points)
        margin = max(margin, float(values[-1] - values.min()))
    return margin <= eps, margin


@dataclass(frozen=True)
class Finding:
    applicable: bool
    passed: bool
    detail: str = ""


@dataclass
class StructureReport:
    findings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(f.passed for f in self.findings.values() if f.applicable)


def check_equilibrium_structure(spec: GameSpec, eq: EquilibriumResult) -> StructureReport:
    """Equilibrium structure for true expectation minimizers with ``v > 0``.

    ``all_zero``
        every ``c_k >= 1/k`` implies nobody cures.
    ``cheap_classes_cure``
        each class with ``c_k < 1/k`` cures at a positive rate.
    ``zero_set_upward_closed``
        with a common cost, the non-curing classes are the highest degrees.
    """
    report = StructureReport()
    degrees = spec.dd.degrees
    zero = eq.delta_ne <= ZERO_THRESHOLD
    cheap = spec.costs < 1.0 / degrees
    base = spec.all_identity and eq.v_ne > 0.0
    why = "" if base else "needs identity weighting and an endemic equilibrium"

    applicable = base and not cheap.any()
    report.findings["all_zero"] = Finding(applicable, bool(zero.all()) if applicable else True, why)

    applicable = base and bool(cheap.any())
    passed = bool(np.all(~zero[cheap])) if applicable else True
    report.findings["cheap_classes_cure"] = Finding(applicable, passed, why)

    applicable = base and spec.homogeneous_cost
    if applicable:
        # once a class is at zero, every higher degree must be too
        first = int(np.argmax(zero)) if zero.any() else zero.size
        passed = bool(zero[first:].all())
        detail = f"zero classes: {degrees[zero].tolist()}"
    else:
        passed = True
        detail = why or "costs are heterogeneous"
    report.findings["zero_set_upward_closed"] = Finding(applicable, passed, detail)
    return report


@dataclass(frozen=True)
class LowerBoundReport:
    z: float
    min_x: float
    corner_min_x: float
    samples: int
    passed: bool


def check_lower_bound(spec: GameSpec, z: float, samples: int = 1000, seed: int = 0) -> LowerBoundReport:
    """Sample feasible profiles and check every class stays infected above ``z``.

    Requires a common unit cost ``c_0 > 1/(1 - z)``.  The all-``1/c_0``
    corner, where infection is lowest, is always included.
    """
    if not 0.0 < z < 1.0:
        raise ValueError("z must lie in (0, 1)")
    if not spec.homogeneous_cost:
        raise ValueError("the lower bound needs a common unit cost")
    c0 = float(spec.costs[0])
    if not c0 > 1.0 / (1.0 - z):
        raise ValueError(f"need c_0 > 1/(1 - z) = {1.0 / (1.0 - z):.6g}, got {c0!r}")

    rng = np.random.default_rng(seed)
    corner = np.full(spec.dd.size, 1.0 / c0)
    profiles = np.vstack([corner, rng.uniform(0.0, 1.0 / c0, size=(samples, spec.dd.size))])
    v = endemic_v_batch(spec.dd, profiles)
    k = spec.dd.degrees.astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(v[:, None] > 0.0, k * v[:, None] / (profiles + k * v[:, None]), 0.0)
    lowest = x.min(axis=1)
    return LowerBoundReport(
        z=z,
        min_x=float(lowest.min()),
        corner_min_x=float(lowest[0]),
        samples=samples + 1,
        passed=bool(np.all(lowest > z)),
    )


def weightings_from_alphas(alphas: Sequence[float] | None, size: int) -> tuple:
    """Per-class weightings from Prelec parameters; ``None``/1 means identity."""
    if alphas is None:
        return (WeightingSpec.identity(),) * size
    out = []
    for a in alphas:
        out.append(WeightingSpec.identity() if a is None or a == 1.0 else WeightingSpec.prelec(a))
    if len(out) == 1:
        out = out * size
    return tuple(out)


def cost_second_difference(spec: GameSpec, k: int, profile, points: int = 201) -> float:
    """Smallest second difference of class ``k``'s cost over ``[0, 1/c_k]``."""
    profile = as_profile(spec.dd, profile)
    i = spec.dd.index(k)
    grid = np.linspace(0.0, spec.upper[i], points)
    values = _class_costs_batch(spec, i, profile, grid)
    return float(np.diff(values, 2).min())
