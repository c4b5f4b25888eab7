"""Degree-based mean-field (DBMF) SIS model on uncorrelated networks.

Curing profiles are plain float arrays aligned with
``DegreeDistribution.degrees``; infection rate is normalised to one.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba
import numpy as np

DEFAULT_TOL = 1e-12
MAX_BISECTION = 200
# halving from v = 1 cannot go past the smallest normal double
_MAX_HALVINGS = 1100


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its iteration budget."""


class Regime(enum.Enum):
    DISEASE_FREE = "DiseaseFree"
    ENDEMIC = "Endemic"


@dataclass(frozen=True)
class DegreeDistribution:
    """Degree support and probabilities of an uncorrelated network.

    Zero-probability classes are stripped and the support sorted on
    construction.
    """

    degrees: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        degrees = np.asarray(self.degrees)
        probs = np.asarray(self.probs, dtype=float)
        if degrees.ndim != 1 or degrees.shape != probs.shape or degrees.size == 0:
            raise ValueError("degrees and probs must be non-empty 1-D arrays of equal length")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        if not np.all(np.equal(np.mod(degrees, 1), 0)):
            raise ValueError("degrees must be integers")
        degrees = degrees.astype(np.int64)
        if np.any(degrees < 1):
            raise ValueError("every degree must be at least 1")
        if np.unique(degrees).size != degrees.size:
            raise ValueError("degrees must be distinct")

        keep = probs > 0.0
        order = np.argsort(degrees[keep])
        degrees = degrees[keep][order]
        probs = probs[keep][order]
        if float(np.dot(degrees, probs)) <= 1.0:
            raise ValueError("average degree must exceed 1")
        degrees.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def regular(cls, d: int) -> "DegreeDistribution":
        return cls(np.array([d]), np.array([1.0]))

    @property
    def size(self) -> int:
        return int(self.degrees.size)

    @property
    def mean_degree(self) -> float:
        return float(np.dot(self.degrees, self.probs))

    @property
    def max_degree(self) -> int:
        return int(self.degrees[-1])

    @property
    def q(self) -> np.ndarray:
        return neighbor_dist(self)

    def index(self, k: int) -> int:
        """Position of degree ``k`` in the support."""
        pos = int(np.searchsorted(self.degrees, k))
        if pos >= self.size or self.degrees[pos] != k:
            raise KeyError(f"degree {k} is not in the support {self.degrees.tolist()}")
        return pos


def neighbor_dist(dd: DegreeDistribution) -> np.ndarray:
    """Probability that a random neighbour has each degree: ``k P(k) / <k>``."""
    weights = dd.degrees * dd.probs
    return weights / weights.sum()


def as_profile(dd: DegreeDistribution, delta) -> np.ndarray:
    """Validate a curing profile against ``dd`` and return it as floats."""
    delta = np.array(delta, dtype=float, ndmin=1)
    if delta.size == 1 and dd.size > 1:
        delta = np.full(dd.size, delta[0])
    if delta.shape != (dd.size,):
        raise ValueError(f"curing profile has shape {delta.shape}, expected ({dd.size},)")
    if np.any(np.isnan(delta)) or np.any(delta < 0.0):
        raise ValueError("curing rates must be nonnegative")
    return delta


def _r_terms(kq, delta):
    # k q_k / delta_k with the 1/0 = inf convention; kq > 0 always here
    with np.errstate(divide="ignore"):
        return np.where(delta > 0.0, kq / np.where(delta > 0.0, delta, 1.0), np.inf)


def reproduction_number(dd: DegreeDistribution, delta) -> float:
    """Threshold quantity ``R = sum_k k q_k / delta_k`` (inf if some delta_k = 0)."""
    delta = as_profile(dd, delta)
    return float(_r_terms(dd.degrees * dd.q, delta).sum())


def consistency_residual(dd: DegreeDistribution, delta, v: float) -> float:
    """``g(v) = 1 - sum_k k q_k / (delta_k + k v)``, increasing in ``v``."""
    delta = as_profile(dd, delta)
    return _g(dd.degrees.tolist(), (dd.degrees * dd.q).tolist(), delta.tolist(), float(v))


def _g(ks, kqs, deltas, v):
    total = 0.0
    for k, kq, d in zip(ks, kqs, deltas):
        total += kq / (d + k * v)
    return 1.0 - total


def _solve_v(ks, kqs, deltas, tol):
    # Bisection on g; inputs are python lists for speed on small supports.
    r = 0.0
    for kq, d in zip(kqs, deltas):
        if d == 0.0:
            r = math.inf
            break
        r += kq / d
    if r <= 1.0:
        return 0.0, 0.0
    if all(d == 0.0 for d in deltas):
        return 1.0, 0.0

    hi, g_hi = 1.0, _g(ks, kqs, deltas, 1.0)
    if abs(g_hi) <= tol:
        return hi, g_hi
    lo = 1.0
    for _ in range(_MAX_HALVINGS):
        lo *= 0.5
        g_lo = _g(ks, kqs, deltas, lo)
        if abs(g_lo) <= tol:
            return lo, g_lo
        if g_lo < 0.0:
            break
        hi, g_hi = lo, g_lo
    else:
        raise ConvergenceError("could not bracket the endemic root")

    for _ in range(MAX_BISECTION):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            # interval is down to adjacent doubles
            best, g_best = (lo, g_lo) if abs(g_lo) < abs(g_hi) else (hi, g_hi)
            if abs(g_best) <= max(tol, 1e-13):
                return best, g_best
            break
        g_mid = _g(ks, kqs, deltas, mid)
        if abs(g_mid) <= tol:
            return mid, g_mid
        if g_mid < 0.0:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    raise ConvergenceError(f"bisection on v did not reach |g| <= {tol:g}")


def endemic_v(dd: DegreeDistribution, delta, tol: float = DEFAULT_TOL) -> float:
    """Steady-state probability that a random neighbour is infected.

    Zero when ``R <= 1``; otherwise the unique root in (0, 1] of the
    consistency equation, located by bisection until ``|g(v)| <= tol``.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    delta = as_profile(dd, delta)
    v, _ = _solve_v(dd.degrees.tolist(), (dd.degrees * dd.q).tolist(), delta.tolist(), tol)
    return v


def endemic_v_batch(dd: DegreeDistribution, deltas, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Vectorised :func:`endemic_v` over the rows of an ``(m, |D|)`` array."""
    deltas = np.atleast_2d(np.asarray(deltas, dtype=float))
    if deltas.shape[1] != dd.size:
        raise ValueError("profile rows must align with the degree support")
    if np.any(deltas < 0.0):
        raise ValueError("curing rates must be nonnegative")
    k = dd.degrees.astype(float)
    kq = k * dd.q

    def g(v):
        return 1.0 - (kq / (deltas + k * v[:, None])).sum(axis=1)

    m = deltas.shape[0]
    v = np.zeros(m)
    r = _r_terms(kq, deltas).sum(axis=1)
    all_zero = np.all(deltas == 0.0, axis=1)
    v[all_zero] = 1.0
    active = (r > 1.0) & ~all_zero
    if not active.any():
        return v

    hi = np.ones(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        g_hi = g(hi)
        done = active & (np.abs(g_hi) <= tol)
        v[done] = 1.0
        active &= ~done
        lo = np.ones(m)
        need = active.copy()
        for _ in range(_MAX_HALVINGS):
            if not need.any():
                break
            lo[need] *= 0.5
            g_lo = g(lo)
            hit = need & (np.abs(g_lo) <= tol)
            v[hit] = lo[hit]
            active &= ~hit
            bracketed = need & (g_lo < 0.0)
            up = need & ~hit & ~bracketed
            hi[up] = lo[up]
            need &= ~hit & ~bracketed
        if need.any():
            raise ConvergenceError("could not bracket the endemic root")

        for _ in range(MAX_BISECTION):
            if not active.any():
                return v
            mid = 0.5 * (lo + hi)
            g_mid = g(mid)
            hit = active & (np.abs(g_mid) <= tol)
            collapsed = active & ((mid <= lo) | (mid >= hi))
            v[hit | collapsed] = mid[hit | collapsed]
            active &= ~(hit | collapsed)
            left = g_mid < 0.0
            lo = np.where(active & left, mid, lo)
            hi = np.where(active & ~left, mid, hi)
    if active.any():
        raise ConvergenceError(f"bisection on v did not reach |g| <= {tol:g}")
    return v


def infection_probs(v: float, delta, degrees) -> np.ndarray:
    """Per-class endemic infection probabilities ``k v / (delta_k + k v)``."""
    if not 0.0 <= v <= 1.0:
        raise ValueError("v must lie in [0, 1]")
    delta = np.asarray(delta, dtype=float)
    k = np.asarray(degrees, dtype=float)
    if v == 0.0:
        return np.zeros(k.shape)
    return k * v / (delta + k * v)


@dataclass(frozen=True)
class EndemicState:
    v: float
    x: np.ndarray
    regime: Regime
    residual: float
    reproduction_number: float


def endemic_state(dd: DegreeDistribution, delta, tol: float = DEFAULT_TOL) -> EndemicState:
    """Solve the stationary state and bundle it with diagnostics."""
    delta = as_profile(dd, delta)
    v = endemic_v(dd, delta, tol)
    x = infection_probs(v, delta, dd.degrees)
    if v > 0.0:
        regime = Regime.ENDEMIC
        residual = abs(consistency_residual(dd, delta, v))
    else:
        regime = Regime.DISEASE_FREE
        residual = 0.0
    return EndemicState(v, x, regime, residual, reproduction_number(dd, delta))


def delta_hat(dd: DegreeDistribution, delta, k: int) -> float:
    """Largest curing rate of class ``k`` that still leaves an endemic state.

    ``delta[k]`` itself is ignored.  Returns ``inf`` when the other classes
    alone sustain the epidemic.
    """
    delta = as_profile(dd, delta)
    i = dd.index(k)
    kq = dd.degrees * dd.q
    others = np.delete(_r_terms(kq, delta), i).sum()
    if others >= 1.0:
        return math.inf
    return float(kq[i] / (1.0 - others))


@numba.njit(cache=True)
def _rhs(k, q, delta, y, out):
    s = 0.0
    for i in range(y.size):
        s += q[i] * y[i]
    for i in range(y.size):
        out[i] = -delta[i] * y[i] + (1.0 - y[i]) * k[i] * s


@numba.njit(cache=True)
def _rk4_kernel(k, q, delta, x0, dt, n_steps, record_every):
    m = x0.size
    n_rec = n_steps // record_every + 1
    traj = np.empty((n_rec, m))
    x = x0.copy()
    traj[0] = x
    clamped = 0.0
    k1, k2, k3, k4, y = np.empty(m), np.empty(m), np.empty(m), np.empty(m), np.empty(m)
    half, sixth = 0.5 * dt, dt / 6.0

    rec = 1
    for step in range(1, n_steps + 1):
        _rhs(k, q, delta, x, k1)
        for i in range(m):
            y[i] = x[i] + half * k1[i]
        _rhs(k, q, delta, y, k2)
        for i in range(m):
            y[i] = x[i] + half * k2[i]
        _rhs(k, q, delta, y, k3)
        for i in range(m):
            y[i] = x[i] + dt * k3[i]
        _rhs(k, q, delta, y, k4)
        for i in range(m):
            xi = x[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if xi < 0.0:
                clamped -= xi
                xi = 0.0
            elif xi > 1.0:
                clamped += xi - 1.0
                xi = 1.0
            x[i] = xi
        if step % record_every == 0:
            traj[rec] = x
            rec += 1
    return traj, x, clamped


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    final: np.ndarray
    clamped: float
    stationary: np.ndarray
    distance_to_stationary: float


def max_step(dd: DegreeDistribution, delta) -> float:
    """Largest step size accepted by :func:`integrate_dbmf`."""
    delta = as_profile(dd, delta)
    return 0.01 * min(1.0, 1.0 / float(np.max(delta + dd.degrees)))


def integrate_dbmf(dd, delta, x0, t_end, dt=None, record_every=1000) -> Trajectory:
    """Fixed-step RK4 integration of the DBMF dynamics.

    States are clamped to [0, 1] after each step; the total clamped mass is
    reported.  ``dt`` defaults to the largest admissible step, shortened so
    that ``t_end`` is hit exactly.
    """
    delta = as_profile(dd, delta)
    x0 = np.array(x0, dtype=float, ndmin=1)
    if x0.size == 1 and dd.size > 1:
        x0 = np.full(dd.size, x0[0])
    if x0.shape != (dd.size,) or np.any((x0 < 0.0) | (x0 > 1.0)):
        raise ValueError("x0 must be a probability vector aligned with the degrees")
    if not t_end > 0.0:
        raise ValueError("t_end must be positive")
    limit = max_step(dd, delta)
    if dt is None:
        dt = t_end / math.ceil(t_end / limit)
    elif not 0.0 < dt <= limit * (1 + 1e-12):
        raise ValueError(f"dt={dt!r} exceeds the admissible step {limit!r}")
    n_steps = int(round(t_end / dt))
    record_every = max(1, min(int(record_every), n_steps))

    k = dd.degrees.astype(float)
    states, final, clamped = _rk4_kernel(k, dd.q, delta, x0, float(dt), n_steps, record_every)
    times = np.arange(states.shape[0]) * record_every * dt

    if np.all(x0 == 0.0):
        stationary = np.zeros(dd.size)
    else:
        stationary = infection_probs(endemic_v(dd, delta), delta, dd.degrees)
    return Trajectory(
        times=times,
        states=states,
        final=final,
        clamped=float(clamped),
        stationary=stationary,
        distance_to_stationary=float(np.max(np.abs(final - stationary))),
    )


@dataclass(frozen=True)
class ConvexityScan:
    """Finite-difference shape of ``v`` and ``x_k`` along one class's rate."""

    degree: int
    upper: float
    v_first_max: float
    v_second_min: float
    x_first_max: float
    x_second_min: float


def convexity_scan(dd, delta, k, points=41, upper=None, through_kink=False, tol=1e-15):
    """Scan ``v`` and ``x_k`` on a uniform grid of ``delta_k``.

    By default the grid covers ``[0, delta_hat_k)``, where the endemic state
    exists; ``through_kink`` extends it to ``1.5 * delta_hat_k`` so the
    transition to the disease-free state is included.  An infinite
    threshold is replaced by ``max(10, 2 max(delta))``.
    """
    delta = as_profile(dd, delta)
    i = dd.index(k)
    if upper is None:
        limit = delta_hat(dd, delta, k)
        if math.isinf(limit):
            upper = max(10.0, 2.0 * float(delta.max()))
        else:
            upper = 1.5 * limit if through_kink else limit
    grid = np.linspace(0.0, upper, points, endpoint=through_kink)
    rows = np.tile(delta, (points, 1))
    rows[:, i] = grid
    v = endemic_v_batch(dd, rows, tol)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(v > 0.0, k * v / (grid + k * v), 0.0)
    dv, dx = np.diff(v), np.diff(x)
    return ConvexityScan(
        degree=int(k),
        upper=float(upper),
        v_first_max=float(dv.max()),
        v_second_min=float(np.diff(dv).min()),
        x_first_max=float(dx.max()),
        x_second_min=float(np.diff(dx).min()),
    )
