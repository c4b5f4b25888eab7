"""Run configuration files.

The format is INI: ``[section]`` headers followed by ``key = value`` lines,
``#`` comments, comma-separated lists.  Unknown sections or keys are
errors.  Example::

    [network]
    degrees = 1, 3
    probs = 0.5, 0.5      # or: regular = 4

    [costs]
    c = 0.2               # one value, or one per degree

    [weighting]
    kind = prelec         # identity | prelec
    alpha = 0.5           # one value, or one per degree

    [curing]
    delta = 1.0           # profile used by `endemic` and `simulate`

    [solver]
    tol_fp = 1e-8

    [sweep]
    c_grid = 0.3, 0.4, 0.5

    [sim]
    n = 2000
    t_max = 200
    burn_in = 50
    seed = 1
    replicas = 8

    [check]
    seed = 1
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dbmf import DegreeDistribution
from .game import (
    DEFAULT_BR_TOL,
    DEFAULT_FP_TOL,
    DEFAULT_VERIFY_EPS,
    DEFAULT_VERIFY_GRID,
    GameSpec,
)
from .weighting import INV_E, WeightingSpec


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "network": {"degrees", "probs", "regular"},
    "costs": {"c"},
    "weighting": {"kind", "alpha"},
    "curing": {"delta"},
    "solver": {"tol", "tol_fp", "max_rounds", "br_tol", "verify_grid", "verify_eps", "init"},
    "sweep": {"c_grid"},
    "sim": {"n", "t_max", "burn_in", "seed", "replicas", "nu", "initial_infected_fraction", "workers"},
    "check": {"seed", "instances", "points", "z", "samples", "assumption_grid"},
}


@dataclass
class SolverSettings:
    tol: float = 1e-12
    tol_fp: float = DEFAULT_FP_TOL
    max_rounds: int = 500
    br_tol: float = DEFAULT_BR_TOL
    verify_grid: int = DEFAULT_VERIFY_GRID
    verify_eps: float = DEFAULT_VERIFY_EPS
    init: Optional[list] = None


@dataclass
class SimSettings:
    n: int
    t_max: float
    burn_in: float
    seed: int
    replicas: int = 1
    nu: float = 1.0
    initial_infected_fraction: float = 0.5
    workers: int = 1


@dataclass
class CheckSettings:
    seed: int
    instances: int = 20
    points: int = 41
    z: float = INV_E
    samples: int = 1000
    assumption_grid: int = 1000


@dataclass
class RunConfig:
    dd: DegreeDistribution
    costs: Optional[list] = None
    weighting: tuple = ()
    delta: Optional[list] = None
    solver: SolverSettings = field(default_factory=SolverSettings)
    c_grid: Optional[list] = None
    sim: Optional[SimSettings] = None
    check: Optional[CheckSettings] = None
    digest: str = ""
    regular_degree: Optional[int] = None

    def game(self) -> GameSpec:
        if self.costs is None:
            raise ConfigError("[costs] c is required")
        try:
            return GameSpec(self.dd, self.costs, self.weighting)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def profile(self) -> np.ndarray:
        if self.delta is None:
            raise ConfigError("[curing] delta is required")
        values = list(self.delta)
        if len(values) == 1:
            values = values * self.dd.size
        if len(values) != self.dd.size:
            raise ConfigError(f"[curing] delta needs 1 or {self.dd.size} values")
        if any(v < 0.0 for v in values):
            raise ConfigError("[curing] delta must be nonnegative")
        return np.array(values)


def _floats(text, where):
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    if not values or not all(math.isfinite(v) for v in values):
        raise ConfigError(f"{where}: expected finite numbers, got {text!r}")
    return values


def _number(section, key, kind, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"[{section.name}] {key} is required")
        return default
    text = section[key].strip()
    try:
        value = kind(text)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: cannot parse {text!r}") from None
    return value


def _per_degree(values, size, where):
    if len(values) not in (1, size):
        raise ConfigError(f"{where} needs 1 or {size} values, got {len(values)}")
    return values


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#",), comment_prefixes=("#",), interpolation=None, strict=True
    )
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None

    for name in parser.sections():
        if name not in _SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        unknown = set(parser[name]) - _SCHEMA[name]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")

    if "network" not in parser:
        raise ConfigError("[network] section is required")
    net = parser["network"]
    regular = None
    try:
        if "regular" in net:
            if "degrees" in net or "probs" in net:
                raise ConfigError("[network] use either regular or degrees/probs")
            regular = _number(net, "regular", int)
            dd = DegreeDistribution.regular(regular)
        else:
            if "degrees" not in net or "probs" not in net:
                raise ConfigError("[network] needs degrees and probs, or regular")
            degrees = _floats(net["degrees"], "[network] degrees")
            probs = _floats(net["probs"], "[network] probs")
            dd = DegreeDistribution(np.array(degrees), np.array(probs))
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"[network] {exc}") from None

    cfg = RunConfig(dd=dd, regular_degree=regular)
    cfg.digest = hashlib.sha256(text.encode()).hexdigest()

    if "costs" in parser and "c" in parser["costs"]:
        cfg.costs = _per_degree(_floats(parser["costs"]["c"], "[costs] c"), dd.size, "[costs] c")

    if "weighting" in parser:
        sec = parser["weighting"]
        kind = sec.get("kind", "identity").strip().lower()
        if kind == "identity":
            if "alpha" in sec:
                raise ConfigError("[weighting] alpha is only valid with kind = prelec")
            cfg.weighting = (WeightingSpec.identity(),) * dd.size
        elif kind == "prelec":
            if "alpha" not in sec:
                raise ConfigError("[weighting] prelec needs alpha")
            alphas = _per_degree(_floats(sec["alpha"], "[weighting] alpha"), dd.size, "[weighting] alpha")
            try:
                ws = tuple(WeightingSpec.prelec(a) for a in alphas)
            except ValueError as exc:
                raise ConfigError(f"[weighting] {exc}") from None
            cfg.weighting = ws * dd.size if len(ws) == 1 else ws
        else:
            raise ConfigError(f"[weighting] unknown kind {kind!r}")

    if "curing" in parser and "delta" in parser["curing"]:
        cfg.delta = _floats(parser["curing"]["delta"], "[curing] delta")

    if "solver" in parser:
        sec = parser["solver"]
        s = SolverSettings()
        s.tol = _number(sec, "tol", float, s.tol)
        s.tol_fp = _number(sec, "tol_fp", float, s.tol_fp)
        s.max_rounds = _number(sec, "max_rounds", int, s.max_rounds)
        s.br_tol = _number(sec, "br_tol", float, s.br_tol)
        s.verify_grid = _number(sec, "verify_grid", int, s.verify_grid)
        s.verify_eps = _number(sec, "verify_eps", float, s.verify_eps)
        if "init" in sec:
            s.init = _per_degree(_floats(sec["init"], "[solver] init"), dd.size, "[solver] init")
        if min(s.tol, s.tol_fp, s.br_tol, s.verify_eps) <= 0 or s.max_rounds < 1 or s.verify_grid < 2:
            raise ConfigError("[solver] tolerances must be positive and counts at least 1")
        cfg.solver = s

    if "sweep" in parser and "c_grid" in parser["sweep"]:
        cfg.c_grid = _floats(parser["sweep"]["c_grid"], "[sweep] c_grid")

    if "sim" in parser:
        sec = parser["sim"]
        cfg.sim = SimSettings(
            n=_number(sec, "n", int, required=True),
            t_max=_number(sec, "t_max", float, required=True),
            burn_in=_number(sec, "burn_in", float, required=True),
            seed=_number(sec, "seed", int, required=True),
            replicas=_number(sec, "replicas", int, 1),
            nu=_number(sec, "nu", float, 1.0),
            initial_infected_fraction=_number(sec, "initial_infected_fraction", float, 0.5),
            workers=_number(sec, "workers", int, 1),
        )
        sim = cfg.sim
        if sim.n < 10 or sim.replicas < 1 or sim.workers < 1:
            raise ConfigError("[sim] needs n >= 10, replicas >= 1, workers >= 1")
        if not 0 <= sim.burn_in < sim.t_max:
            raise ConfigError("[sim] needs 0 <= burn_in < t_max")
        if not 0 < sim.initial_infected_fraction <= 1 or sim.nu <= 0:
            raise ConfigError("[sim] initial_infected_fraction must be in (0, 1] and nu positive")

    if "check" in parser:
        sec = parser["check"]
        cfg.check = CheckSettings(
            seed=_number(sec, "seed", int, required=True),
            instances=_number(sec, "instances", int, 20),
            points=_number(sec, "points", int, 41),
            z=_number(sec, "z", float, INV_E),
            samples=_number(sec, "samples", int, 1000),
            assumption_grid=_number(sec, "assumption_grid", int, 1000),
        )
        chk = cfg.check
        if chk.instances < 1 or chk.points < 5 or chk.samples < 1 or chk.assumption_grid < 100:
            raise ConfigError("[check] needs instances >= 1, points >= 5, samples >= 1, assumption_grid >= 100")
        if not 0 < chk.z < 1:
            raise ConfigError("[check] z must lie in (0, 1)")
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)
