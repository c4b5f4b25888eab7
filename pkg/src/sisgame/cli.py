"""Command line front-end.

Exit codes: 0 success, 1 a checked property failed, 2 configuration
error, 3 solver or simulation failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import math
import sys

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .dbmf import ConvergenceError, convexity_scan, endemic_state
from .game import (
    NoEquilibriumFound,
    check_equilibrium_structure,
    check_lower_bound,
    cost_second_difference,
    profile_costs,
    solve_dbe,
)
from .netsim import RNG_ALGORITHM, GraphGenerationError, compare_to_dbmf, simulate_replicas
from .regular import sweep_cost
from .weighting import WeightingSpec, check_assumption1

log = logging.getLogger("sisgame")

EXIT_OK, EXIT_PROPERTY, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

# tolerances of the property scans run by `check`
FIRST_DIFF_TOL = 0.0
SECOND_DIFF_TOL = -1e-8


def fmt(value) -> str:
    """Locale-free decimal rendering with 12 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value == 0.0:
        return "0"
    return np.format_float_positional(value, precision=12, unique=False, fractional=False, trim="-")


class Output:
    """CSV writer with ``#`` metadata lines above the header."""

    def __init__(self, stream, cfg: RunConfig, command: str):
        self.stream = stream
        self.writer = csv.writer(stream, lineterminator="\n")
        self._header = [f"sisgame {__version__} {command}", f"config_sha256 = {cfg.digest}"]

    def _flush_header(self):
        header, self._header = self._header, []
        for line in header:
            self.stream.write(f"# {line}\n")

    def comment(self, text):
        self._flush_header()
        self.stream.write(f"# {text}\n")

    def meta(self, key, value):
        self.comment(f"{key} = {fmt(value) if not isinstance(value, str) else value}")

    def row(self, *values):
        self._flush_header()
        self.writer.writerow([v if isinstance(v, str) else fmt(v) for v in values])


def cmd_endemic(cfg: RunConfig, out: Output) -> int:
    delta = cfg.profile()
    state = endemic_state(cfg.dd, delta, cfg.solver.tol)
    out.meta("v", state.v)
    out.meta("R", state.reproduction_number)
    out.meta("regime", state.regime.value)
    out.meta("residual", state.residual)
    out.row("degree", "delta", "x")
    for k, d, x in zip(cfg.dd.degrees, delta, state.x):
        out.row(k, d, x)
    return EXIT_OK


def _equilibrium_rows(out, spec, profile, x, costs):
    out.row("degree", "c", "delta_ne", "x_ne", "J_ne")
    for row in zip(spec.dd.degrees, spec.costs, profile, x, costs):
        out.row(*row)


def cmd_equilibrium(cfg: RunConfig, out: Output) -> int:
    spec = cfg.game()
    s = cfg.solver
    out.meta("weighting", ";".join(str(w) for w in spec.weightings))
    try:
        eq = solve_dbe(spec, s.init, s.tol_fp, s.max_rounds, s.br_tol, True, s.verify_eps, s.verify_grid)
    except NoEquilibriumFound as exc:
        out.meta("converged", False)
        out.meta("max_update", exc.max_update)
        out.comment(str(exc))
        v, x, costs = profile_costs(spec, exc.last_profile)
        out.meta("v", v)
        _equilibrium_rows(out, spec, exc.last_profile, x, costs)
        return EXIT_SOLVER

    out.meta("converged", True)
    out.meta("iterations", eq.iterations)
    out.meta("max_update", eq.max_update)
    out.meta("v_ne", eq.v_ne)
    out.meta("verified", eq.verified)
    out.meta("verification_margin", eq.verification_margin)
    structure = check_equilibrium_structure(spec, eq)
    for name, f in structure.findings.items():
        status = ("pass" if f.passed else "FAIL") if f.applicable else "n/a"
        out.comment(f"structure {name} = {status}")
    _equilibrium_rows(out, spec, eq.delta_ne, eq.x_ne, eq.costs_at_ne)
    if not eq.verified or not structure.ok:
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_regular(cfg: RunConfig, out: Output) -> int:
    d = cfg.regular_degree
    if d is None:
        raise ConfigError("regular needs [network] regular = d")
    if not cfg.c_grid:
        raise ConfigError("regular needs [sweep] c_grid")
    bad = [c for c in cfg.c_grid if not c * d >= 1.0]
    if bad:
        raise ConfigError(f"[sweep] c_grid values must be at least 1/d = {fmt(1.0 / d)}: {bad}")
    ws = set(cfg.weighting)
    if len(ws) != 1 or next(iter(ws)).is_identity:
        raise ConfigError("regular needs [weighting] kind = prelec with one alpha")
    w = next(iter(ws))
    out.meta("d", d)
    out.meta("weighting", str(w))
    out.row("c", "delta_n", "delta_w", "x_n", "x_w")
    for r in sweep_cost(d, cfg.c_grid, w):
        out.row(r.c, r.delta_n, r.delta_w, r.x_n, r.x_w)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Output) -> int:
    if cfg.sim is None:
        raise ConfigError("simulate needs a [sim] section")
    sim = cfg.sim
    delta = cfg.profile()
    try:
        replicas = simulate_replicas(
            cfg.dd, delta, sim.n, sim.t_max, sim.burn_in, sim.replicas, sim.seed,
            sim.nu, sim.initial_infected_fraction, sim.workers,
        )
    except ValueError as exc:
        raise GraphGenerationError(f"simulation failed: {exc}") from exc
    out.meta("rng", RNG_ALGORITHM)
    out.meta("seed", sim.seed)
    for rep in replicas:
        ext = rep.result.extinction_time
        out.comment(
            f"replica {rep.index}: graph_seed = {rep.graph_seed}, sim_seed = {rep.sim_seed}, "
            f"events = {rep.result.event_count}, attempts = {rep.result.attempts}, "
            f"extinction_time = {'none' if ext is None else fmt(ext)}, "
            f"rewired = {rep.rewired}, erased = {rep.erased}"
        )
    means = np.array([r.result.mean_infection for r in replicas])
    out.meta("extinct_replicas", sum(r.result.extinction_time is not None for r in replicas))
    out.meta("mean_infection", float(means.mean()))
    out.meta("mean_infection_stderr", _stderr(means))

    comparisons = [compare_to_dbmf(r.result, cfg.dd, delta) for r in replicas]
    out.row("degree", "sim_mean", "sim_stderr", "dbmf", "abs_error", "replicas")
    for k in cfg.dd.degrees.tolist():
        hits = [row for c in comparisons for row in c.rows if row.degree == k]
        if not hits:
            continue
        values = np.array([h.simulated for h in hits])
        m = float(values.mean())
        out.row(k, m, _stderr(values), hits[0].dbmf, abs(m - hits[0].dbmf), len(hits))
    return EXIT_OK


def _stderr(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return math.nan
    return float(values.std(ddof=1) / math.sqrt(values.size))


def cmd_check(cfg: RunConfig, out: Output) -> int:
    chk = cfg.check
    if chk is None:
        raise ConfigError("check needs a [check] section with an explicit seed")
    rows = []

    seen = []
    for w in cfg.weighting or (WeightingSpec.identity(),):
        if w in seen:
            continue
        seen.append(w)
        if w.is_identity:
            rows.append((f"assumption1[{w}]", False, True, math.nan))
            continue
        report = check_assumption1(w, chk.assumption_grid)
        for name, passed, margin in report.rows():
            rows.append((f"assumption1.{name}[{w}]", True, passed, margin))

    rng = np.random.default_rng(chk.seed)
    dd = cfg.dd
    worst = {"v_decreasing": -math.inf, "v_convex": math.inf, "x_decreasing": -math.inf, "x_convex": math.inf}
    x_kink = math.inf
    scanned = 0
    while scanned < chk.instances:
        delta = rng.uniform(0.05, 2.0 * dd.max_degree, dd.size)
        if endemic_state(dd, delta).v == 0.0:
            continue
        scanned += 1
        for k in dd.degrees.tolist():
            s = convexity_scan(dd, delta, k, chk.points)
            worst["v_decreasing"] = max(worst["v_decreasing"], s.v_first_max)
            worst["v_convex"] = min(worst["v_convex"], s.v_second_min)
            worst["x_decreasing"] = max(worst["x_decreasing"], s.x_first_max)
            worst["x_convex"] = min(worst["x_convex"], s.x_second_min)
            kink = convexity_scan(dd, delta, k, chk.points, through_kink=True)
            x_kink = min(x_kink, kink.x_second_min)
    for name, margin in worst.items():
        tol = FIRST_DIFF_TOL if name.endswith("decreasing") else SECOND_DIFF_TOL
        passed = margin <= tol if name.endswith("decreasing") else margin >= tol
        rows.append((name, True, passed, margin))
    rows.append(("x_convex_through_threshold", True, x_kink >= SECOND_DIFF_TOL, x_kink))

    spec = cfg.game() if cfg.costs is not None else None
    if spec is not None and spec.all_identity:
        margin = math.inf
        for _ in range(chk.instances):
            profile = rng.uniform(0.0, spec.upper)
            for k in dd.degrees.tolist():
                margin = min(margin, cost_second_difference(spec, k, profile, 4 * chk.points + 1))
        rows.append(("identity_cost_convex", True, margin >= SECOND_DIFF_TOL, margin))
    else:
        rows.append(("identity_cost_convex", False, True, math.nan))

    if spec is not None and spec.homogeneous_cost and spec.costs[0] > 1.0 / (1.0 - chk.z):
        lb = check_lower_bound(spec, chk.z, chk.samples, chk.seed)
        rows.append((f"lower_bound[z={fmt(chk.z)}]", True, lb.passed, lb.min_x - chk.z))
    else:
        rows.append((f"lower_bound[z={fmt(chk.z)}]", False, True, math.nan))

    out.meta("seed", chk.seed)
    out.row("property", "applicable", "passed", "margin")
    for row in rows:
        out.row(*row)
    failed = [r[0] for r in rows if r[1] and not r[2]]
    for name in failed:
        log.warning("property failed: %s", name)
    return EXIT_PROPERTY if failed else EXIT_OK


COMMANDS = {
    "endemic": cmd_endemic,
    "equilibrium": cmd_equilibrium,
    "regular": cmd_regular,
    "simulate": cmd_simulate,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sisgame", description="Curing-rate games against SIS epidemics (DBMF)."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__name__.replace("cmd_", "") + " analysis")
        p.add_argument("--config", required=True, help="path to the run configuration")
        p.add_argument("--out", help="write CSV here instead of stdout")
        p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    with contextlib.ExitStack() as stack:
        stream = sys.stdout
        if args.out:
            stream = stack.enter_context(open(args.out, "w", encoding="utf-8", newline=""))
        try:
            log.debug("running %s on %s", args.command, args.config)
            return COMMANDS[args.command](cfg, Output(stream, cfg, args.command))
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except (ConvergenceError, GraphGenerationError) as exc:
            print(f"solver failure: {exc}", file=sys.stderr)
            return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
