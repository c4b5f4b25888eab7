"""Stochastic SIS on configuration-model graphs, for checking DBMF output.

Randomness comes from numpy's PCG64 bit generator seeded through
``SeedSequence``; replica ``r`` of a run with seed ``s`` uses the entropy
``(s, r)``, so replicas are independent of execution order.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dbmf import DegreeDistribution, as_profile, endemic_v, infection_probs

RNG_ALGORITHM = f"numpy.random.PCG64 (numpy {np.__version__})"
_BLOCK = 1 << 16


class GraphGenerationError(RuntimeError):
    pass


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(*entropy) -> int:
    """Deterministic 64-bit child seed from integer entropy."""
    ss = np.random.SeedSequence([int(e) for e in entropy])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class DegreeSample:
    degrees: np.ndarray
    adjusted_node: Optional[int] = None
    adjusted_from: Optional[int] = None


def sample_degree_sequence(dd: DegreeDistribution, n: int, seed) -> DegreeSample:
    """Draw ``n`` i.i.d. degrees from ``dd`` with an even total.

    An odd total is fixed by raising one random node to the next degree in
    the support; only nodes whose step there is odd qualify.  If no node
    qualifies (all support degrees share a parity) one node gets ``+1``,
    which leaves the support.
    """
    if n < 10:
        raise ValueError("need at least 10 nodes")
    rng = _rng(seed)
    degrees = rng.choice(dd.degrees, size=n, p=dd.probs)
    if degrees.sum() % 2 == 0:
        return DegreeSample(degrees)

    support = dd.degrees
    nxt = {int(a): int(b) for a, b in zip(support[:-1], support[1:])}
    step = np.array([nxt.get(int(k), k + 1) - k for k in degrees])
    eligible = np.flatnonzero((step % 2 == 1) & np.isin(degrees, support[:-1]))
    if eligible.size == 0:
        eligible = np.arange(n)
        step = np.ones(n, dtype=int)
    node = int(rng.choice(eligible))
    old = int(degrees[node])
    degrees = degrees.copy()
    degrees[node] = old + int(step[node])
    return DegreeSample(degrees, node, old)


@dataclass
class Graph:
    n: int
    adjacency: list
    degree_of: np.ndarray
    retries: int = 0
    rewired: int = 0
    erased: int = 0

    @property
    def n_edges(self) -> int:
        return int(self.degree_of.sum()) // 2

    def is_simple(self) -> bool:
        for u, nbrs in enumerate(self.adjacency):
            if u in nbrs or len(set(nbrs)) != len(nbrs):
                return False
            if any(u not in self.adjacency[w] for w in nbrs):
                return False
        return True


def _bad_edges(pairs: np.ndarray) -> np.ndarray:
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    bad = lo == hi
    keys = lo.astype(np.int64) * (int(hi.max()) + 1) + hi
    _, first = np.unique(keys, return_index=True)
    dup = np.ones(len(pairs), dtype=bool)
    dup[first] = False
    return bad | dup


def _rewire(pairs, rng, budget):
    # double-edge swaps that keep every degree and remove loops/multi-edges
    edges = [tuple(sorted(map(int, p))) for p in pairs]
    present = {}
    for e in edges:
        present[e] = present.get(e, 0) + 1
    swaps = 0
    for _ in range(budget):
        bad = [i for i, (a, b) in enumerate(edges) if a == b or present[(a, b)] > 1]
        if not bad:
            break
        i = bad[int(rng.integers(len(bad)))]
        j = int(rng.integers(len(edges)))
        if i == j:
            continue
        (a, b), (c, d) = edges[i], edges[j]
        if rng.random() < 0.5:
            c, d = d, c
        e1, e2 = tuple(sorted((a, c))), tuple(sorted((b, d)))
        if a == c or b == d or e1 in present or e2 in present or e1 == e2:
            continue
        for e in (edges[i], edges[j]):
            present[e] -= 1
            if present[e] == 0:
                del present[e]
        edges[i], edges[j] = e1, e2
        present[e1] = present.get(e1, 0) + 1
        present[e2] = present.get(e2, 0) + 1
        swaps += 1
    return np.array(edges, dtype=np.int64).reshape(-1, 2), swaps


def config_model(degree_sequence, seed, max_retries: int = 100) -> Graph:
    """Uniform stub matching into a simple graph.

    Loops and multi-edges trigger a full reshuffle, up to ``max_retries``
    times.  After that the last matching is repaired by degree-preserving
    edge swaps, and whatever still offends is erased.  Erasing more than
    1% of the edges is an error.
    """
    degrees = np.asarray(degree_sequence, dtype=np.int64)
    if np.any(degrees < 0):
        raise ValueError("degrees must be nonnegative")
    if degrees.sum() % 2:
        raise ValueError("degree sum must be even")
    rng = _rng(seed)
    n = degrees.size
    stubs = np.repeat(np.arange(n), degrees)
    n_edges = stubs.size // 2

    retries = rewired = erased = 0
    pairs = np.empty((0, 2), dtype=np.int64)
    if n_edges:
        for attempt in range(max_retries + 1):
            rng.shuffle(stubs)
            pairs = stubs.reshape(-1, 2)
            bad = _bad_edges(pairs)
            if not bad.any():
                break
            retries = attempt + 1
        else:
            pairs, rewired = _rewire(pairs, rng, budget=100 * int(bad.sum()) + 100)
            bad = _bad_edges(pairs)
            erased = int(bad.sum())
            if erased > 0.01 * n_edges:
                raise GraphGenerationError(f"{erased} of {n_edges} edges would be erased")
            pairs = pairs[~bad]
            retries = max_retries

    adjacency = [[] for _ in range(n)]
    for a, b in pairs.tolist():
        adjacency[a].append(b)
        adjacency[b].append(a)
    degree_of = np.array([len(a) for a in adjacency], dtype=np.int64)
    return Graph(n, adjacency, degree_of, retries, rewired, erased)


@dataclass(frozen=True)
class SimConfig:
    delta_by_degree: dict
    t_max: float
    burn_in: float
    nu: float = 1.0
    initial_infected_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.nu > 0.0:
            raise ValueError("infection rate must be positive")
        if not 0.0 <= self.burn_in < self.t_max:
            raise ValueError("need 0 <= burn_in < t_max")
        if not 0.0 < self.initial_infected_fraction <= 1.0:
            raise ValueError("initial infected fraction must lie in (0, 1]")
        if any(d < 0.0 for d in self.delta_by_degree.values()):
            raise ValueError("curing rates must be nonnegative")


@dataclass
class SimResult:
    per_degree_mean_infection: dict
    mean_infection: float
    extinction_time: Optional[float]
    event_count: int
    initial_infected: int
    attempts: int = 1
    rate_checks: int = 0


class _IndexedSet:
    """Set with O(1) add, remove and uniform choice by index."""

    __slots__ = ("items", "pos")

    def __init__(self):
        self.items = []
        self.pos = {}

    def __len__(self):
        return len(self.items)

    def add(self, item):
        self.pos[item] = len(self.items)
        self.items.append(item)

    def remove(self, item):
        i = self.pos.pop(item)
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i


class RateMismatch(AssertionError):
    pass


def gillespie_sis(g: Graph, cfg: SimConfig, check_every: int = 0, labels=None) -> SimResult:
    """Exact continuous-time SIS simulation on ``g``.

    Infected nodes recover at the rate of their degree class; each
    susceptible-infected edge transmits at rate ``nu``.  Infected fractions
    per degree are time-averaged over ``[burn_in, t_max]``.  ``labels``
    assigns each node its class (default: its degree in ``g``); pass the
    sampled degrees so nodes touched by parity fixes or erased edges keep
    their intended class.  With ``check_every > 0`` the cached total rate
    is compared with a full recount every that many events.
    """
    labels = g.degree_of if labels is None else np.asarray(labels)
    if labels.shape != (g.n,):
        raise ValueError("labels must give one class per node")
    label = [int(k) for k in labels]
    classes = sorted(set(label))
    missing = [k for k in classes if k not in cfg.delta_by_degree]
    if missing:
        raise ValueError(f"no curing rate for degrees {missing}")
    rng = _rng(cfg.seed)
    n, adj, nu = g.n, g.adjacency, float(cfg.nu)
    index = {k: c for c, k in enumerate(classes)}
    cls_of = [index[k] for k in label]
    cls_delta = [float(cfg.delta_by_degree[k]) for k in classes]
    cls_size = [label.count(k) for k in classes]

    infected = bytearray(n)
    by_class = [_IndexedSet() for _ in classes]
    si = _IndexedSet()  # directed edges (infected, susceptible) encoded u*n+s

    n0 = int(round(cfg.initial_infected_fraction * n))
    for u in rng.choice(n, size=n0, replace=False).tolist():
        infected[u] = 1
        by_class[cls_of[u]].add(u)
    for u in range(n):
        if infected[u]:
            for w in adj[u]:
                if not infected[w]:
                    si.add(u * n + w)

    t0, t1, window = cfg.burn_in, cfg.t_max, cfg.t_max - cfg.burn_in
    acc = [0.0] * len(classes)
    last = [0.0] * len(classes)

    def settle(c, t):
        lo, hi = max(last[c], t0), min(t, t1)
        if hi > lo:
            acc[c] += len(by_class[c]) * (hi - lo)
        last[c] = t

    t = 0.0
    events = checks = 0
    extinction = None
    buf, bi = [], 0
    while True:
        rec_total = 0.0
        for c, d in enumerate(cls_delta):
            rec_total += d * len(by_class[c])
        total = rec_total + nu * len(si)
        if total <= 0.0:
            if not any(len(s) for s in by_class):
                extinction = t
            break
        if bi + 3 > len(buf):
            buf, bi = rng.random(_BLOCK).tolist(), 0
        u1, u2, u3 = buf[bi], buf[bi + 1], buf[bi + 2]
        bi += 3
        t += -math.log(1.0 - u1) / total
        if t >= t1:
            break

        r = u2 * total
        if r < rec_total:
            for c, d in enumerate(cls_delta):
                r -= d * len(by_class[c])
                if r < 0.0:
                    break
            members = by_class[c]
            if len(members) == 0:  # rounding fell through to an empty class
                c = max(range(len(classes)), key=lambda j: cls_delta[j] * len(by_class[j]))
                members = by_class[c]
            u = members.items[min(int(u3 * len(members)), len(members) - 1)]
            settle(c, t)
            members.remove(u)
            infected[u] = 0
            base = u * n
            for w in adj[u]:
                if infected[w]:
                    si.add(w * n + u)
                else:
                    si.remove(base + w)
        else:
            e = si.items[min(int(u3 * len(si)), len(si) - 1)]
            s = e % n
            c = cls_of[s]
            settle(c, t)
            by_class[c].add(s)
            infected[s] = 1
            base = s * n
            for w in adj[s]:
                if infected[w]:
                    si.remove(w * n + s)
                else:
                    si.add(base + w)
        events += 1

        if check_every and events % check_every == 0:
            checks += 1
            _check_rates(g, infected, cls_of, cls_delta, nu, _cached_total(by_class, cls_delta, si, nu))

    # after extinction every class count is zero, so flushing to t_max is exact
    for c in range(len(classes)):
        settle(c, t1)

    per_degree = {k: acc[c] / (cls_size[c] * window) for c, k in enumerate(classes)}
    mean = sum(acc) / (n * window)
    return SimResult(per_degree, mean, extinction, events, n0, 1, checks)


def _cached_total(by_class, cls_delta, si, nu):
    return sum(d * len(s) for d, s in zip(cls_delta, by_class)) + nu * len(si)


def _check_rates(g, infected, cls_of, cls_delta, nu, cached):
    total = 0.0
    for u in range(g.n):
        if infected[u]:
            total += cls_delta[cls_of[u]]
        else:
            total += nu * sum(infected[w] for w in g.adjacency[u])
    if abs(total - cached) > 1e-9 * max(1.0, total):
        raise RateMismatch(f"cached total rate {cached!r} != recomputed {total!r}")


def simulate_quasi_stationary(g: Graph, cfg: SimConfig, attempts: int = 3, labels=None) -> SimResult:
    """Run :func:`gillespie_sis`, retrying runs that die before burn-in.

    Each retry doubles the initial infected fraction (capped at 1) and uses
    a seed derived from ``(cfg.seed, attempt)``.  The last run is returned
    if every attempt dies early.
    """
    result = None
    for attempt in range(attempts):
        frac = min(1.0, cfg.initial_infected_fraction * 2**attempt)
        seed = cfg.seed if attempt == 0 else derive_seed(cfg.seed, attempt)
        result = gillespie_sis(g, replace(cfg, initial_infected_fraction=frac, seed=seed), labels=labels)
        result.attempts = attempt + 1
        if result.extinction_time is None or result.extinction_time >= cfg.burn_in:
            break
    return result


@dataclass(frozen=True)
class ComparisonRow:
    degree: int
    simulated: float
    dbmf: float
    abs_error: float


@dataclass
class Comparison:
    rows: list = field(default_factory=list)

    @property
    def worst_error(self) -> float:
        return max(r.abs_error for r in self.rows)

    @property
    def mean_error(self) -> float:
        return sum(r.abs_error for r in self.rows) / len(self.rows)


def compare_to_dbmf(sim: SimResult, dd: DegreeDistribution, delta) -> Comparison:
    """Per-degree simulated infection next to the DBMF stationary value."""
    delta = as_profile(dd, delta)
    extra = set(sim.per_degree_mean_infection) - set(dd.degrees.tolist())
    if extra:
        raise ValueError(f"simulated degrees {sorted(extra)} are outside the distribution")
    x = infection_probs(endemic_v(dd, delta), delta, dd.degrees)
    out = Comparison()
    for k, xk in zip(dd.degrees.tolist(), x.tolist()):
        if k in sim.per_degree_mean_infection:
            s = sim.per_degree_mean_infection[k]
            out.rows.append(ComparisonRow(k, s, xk, abs(s - xk)))
    return out


@dataclass
class Replica:
    index: int
    graph_seed: int
    sim_seed: int
    result: SimResult
    adjusted_node: Optional[int]
    rewired: int
    erased: int


def _run_replica(args):
    dd, delta_by_degree, n, t_max, burn_in, nu, frac, seed, r = args
    graph_seed, degree_seed, sim_seed = (derive_seed(seed, r, j) for j in range(3))
    sample = sample_degree_sequence(dd, n, degree_seed)
    g = config_model(sample.degrees, graph_seed)
    labels = sample.degrees.copy()
    if sample.adjusted_node is not None:
        labels[sample.adjusted_node] = sample.adjusted_from
    cfg = SimConfig(delta_by_degree, t_max, burn_in, nu, frac, sim_seed)
    res = simulate_quasi_stationary(g, cfg, labels=labels)
    return Replica(r, graph_seed, sim_seed, res, sample.adjusted_node, g.rewired, g.erased)


def simulate_replicas(
    dd: DegreeDistribution,
    delta,
    n: int,
    t_max: float,
    burn_in: float,
    replicas: int,
    seed: int,
    nu: float = 1.0,
    initial_infected_fraction: float = 0.5,
    workers: int = 1,
) -> list:
    """Independent graph + simulation replicas; ``workers > 1`` uses processes."""
    delta = as_profile(dd, delta)
    delta_by_degree = dict(zip(dd.degrees.tolist(), delta.tolist()))
    jobs = [
        (dd, delta_by_degree, n, t_max, burn_in, nu, initial_infected_fraction, seed, r)
        for r in range(replicas)
    ]
    if workers > 1 and replicas > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_replica, jobs))
    return [_run_replica(j) for j in jobs]
