"""Command-line front end: solve, simulate, augment, benchmark, serve.

Every subcommand reads the same JSON run configuration (``--config``,
``$GRIDARB_CONFIG``, or the bundled 34-node default) and writes
machine-readable output — JSON documents or CSV tables, never images —
to ``--output`` or standard output.  Floats are rendered with 17
significant digits so that reruns with the same seed produce
byte-identical files.

Exit codes: 0 success, 1 runtime failure (bad data, solver trouble,
unreadable files), 2 usage errors.
"""

from __future__ import annotations

import argparse
import csv
import re
import sys
from contextlib import contextmanager

import numpy as np

from .benchmark import DpGrid, evaluate_schedule, performance_bound, solve_optimal_dp
from .config import load_config, resolve_config_path
from .environment import Action, DaySelector, _slot_injections, reset, step
from .errors import GridArbError, IndexOutOfRange, ZeroOptimalCost
from .jsonio import dumps, format_float
from .network import build_admittance
from .powerflow import batch_solve, solve_fixed_point
from .server import serve_stdio, serve_tcp
from .timeseries import select_day

__all__ = ["main"]


class _Usage(Exception):
    """Subcommand-level usage error; reported like argparse's own."""


@contextmanager
def _open_out(path: str | None):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _day_range(text: str) -> range:
    m = re.fullmatch(r"(\d+)(?:\.\.(\d+))?", text)
    if not m:
        raise argparse.ArgumentTypeError(
            f"expected 'a..b' or a single day index, got {text!r}")
    first = int(m.group(1))
    last = int(m.group(2)) if m.group(2) is not None else first
    if last < first:
        raise argparse.ArgumentTypeError(
            f"empty day range {first}..{last}")
    return range(first, last + 1)


# --- powerflow -------------------------------------------------------------

def _cmd_powerflow(args) -> int:
    rc = load_config(resolve_config_path(args.config))
    episode = select_day(rc.data, args.day)
    if not 0 <= args.slot < len(episode.rows):
        raise IndexOutOfRange(
            f"slot {args.slot} outside [0, {len(episode.rows)})")
    slot = episode.rows[args.slot]
    adm = build_admittance(rc.env.network)
    solution = solve_fixed_point(adm, _slot_injections(rc.env, slot, {}),
                                 rc.env.solve_options)
    v_mag = np.abs(solution.v)
    doc = {
        "timestamp": str(slot.timestamp),
        "converged": solution.converged,
        "iterations": solution.iterations,
        "residual": solution.residual,
        "slack_p_kw": solution.slack_p * rc.env.s_base_kw,
        "slack_q_kvar": solution.slack_q * rc.env.s_base_kw,
        "v_mag": v_mag,
        "v_angle_deg": np.angle(solution.v, deg=True),
        "min_v": float(v_mag.min()),
        "max_v": float(v_mag.max()),
        "line_p_kw": solution.line_p * rc.env.s_base_kw,
        "line_q_kvar": solution.line_q * rc.env.s_base_kw,
    }
    with _open_out(args.output) as fh:
        fh.write(dumps(doc) + "\n")
    return 0


# --- simulate --------------------------------------------------------------

def _policy_zero(rng, fleet):
    return tuple(0.0 for _ in fleet)


def _policy_random(rng, fleet):
    return tuple(float(rng.uniform(p.p_min, p.p_max)) for p in fleet)


_POLICIES = {"zero": _policy_zero, "random": _policy_random}

_TRACE_HEADER = "t,action,reward,arbitrage,penalty,min_v,max_v"


def _cmd_simulate(args) -> int:
    rc = load_config(resolve_config_path(args.config))
    if args.days < 1:
        raise _Usage("--days must be at least 1")
    policy = _POLICIES[args.policy]
    rng = np.random.default_rng(args.seed)
    with _open_out(args.output) as fh:
        fh.write(_TRACE_HEADER + "\n")
        for day in range(args.days):
            env = reset(rc.env, rc.data, DaySelector(day))
            for t in range(rc.env.horizon):
                action = policy(rng, rc.env.fleet)
                tr = step(env, rc.env, Action(action))
                v_mag = tr.info["v_mag"]
                fields = [
                    str(t),
                    ";".join(format_float(a) for a in action),
                    format_float(tr.reward),
                    format_float(tr.info["arbitrage_term"]),
                    format_float(tr.info["penalty_term"]),
                    format_float(float(v_mag.min())),
                    format_float(float(v_mag.max())),
                ]
                fh.write(",".join(fields) + "\n")
    return 0


# --- augment ---------------------------------------------------------------

def _cmd_augment(args) -> int:
    from .augmentation import augment_dataset

    rc = load_config(resolve_config_path(args.config))
    if args.days < 1:
        raise _Usage("--days must be at least 1")
    synthetic = augment_dataset(rc.data, family=args.family,
                                n_days=args.days, seed=args.seed)
    names = list(synthetic.columns)
    with _open_out(args.output) as fh:
        fh.write("timestamp," + ",".join(names) + "\n")
        for i, ts in enumerate(synthetic.timestamps):
            cells = [format_float(float(synthetic.columns[n][i]))
                     for n in names]
            fh.write(ts.isoformat() + "," + ",".join(cells) + "\n")
    return 0


# --- benchmark -------------------------------------------------------------

def _read_trace_chunks(path: str) -> list[list[float]]:
    """Per-episode reward lists from a simulate trace (new day at t=0)."""
    chunks: list[list[float]] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "t" not in reader.fieldnames \
                or "reward" not in reader.fieldnames:
            raise ValueError(f"{path}: expected a simulate trace with "
                             f"'t' and 'reward' columns")
        for row in reader:
            if int(row["t"]) == 0:
                chunks.append([])
            if not chunks:
                raise ValueError(f"{path}: trace does not start at t=0")
            chunks[-1].append(float(row["reward"]))
    return chunks


def _cmd_benchmark(args) -> int:
    rc = load_config(resolve_config_path(args.config))
    grid = DpGrid(soc_levels=args.grid_soc, power_levels=args.grid_act)
    trace_costs = None
    if args.trace is not None:
        chunks = _read_trace_chunks(args.trace)
        if len(chunks) != len(args.days):
            raise ValueError(
                f"trace has {len(chunks)} episodes but --days names "
                f"{len(args.days)} days; they must line up one-to-one")
        trace_costs = [-sum(rewards) for rewards in chunks]

    day_reports = []
    for i, day_index in enumerate(args.days):
        episode = select_day(rc.data, day_index)
        schedule, objective = solve_optimal_dp(rc.env, episode, grid)
        audit = evaluate_schedule(rc.env, episode, schedule)
        entry = {
            "day": day_index,
            "objective_eur": objective,
            "schedule_kw": schedule.powers,
            "storage_cost_eur": audit.storage_cost,
            "voltage_penalty_eur": audit.voltage_penalty,
            "demand_cost_eur": audit.demand_cost,
            "feasible": audit.feasible,
            "max_snap_error": max(grid.max_snap_error(p)
                                  for p in rc.env.fleet),
        }
        if trace_costs is not None:
            cost = trace_costs[i]
            entry["policy_cost_eur"] = cost
            try:
                entry["performance_bound"] = performance_bound(cost,
                                                               objective)
            except ZeroOptimalCost:
                entry["performance_bound"] = None
                entry["note"] = ("optimal cost is zero; relative bound "
                                 "undefined")
        day_reports.append(entry)

    report = {
        "config": str(rc.source),
        "grid": {"soc_levels": grid.soc_levels,
                 "power_levels": grid.power_levels},
        "days": day_reports,
    }
    with _open_out(args.output) as fh:
        fh.write(dumps(report) + "\n")
    return 0


# --- serve -----------------------------------------------------------------

def _cmd_serve(args) -> int:
    rc = load_config(resolve_config_path(args.config))
    if args.port is None:
        serve_stdio(rc, seed=args.seed)
        return 0
    server = serve_tcp(rc, args.port, seed=args.seed)
    host, port = server.server_address
    print(f"listening on {host}:{port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# --- plot-data -------------------------------------------------------------

def _voltage_profile(args) -> int:
    rc = load_config(resolve_config_path(args.config))
    episode = select_day(rc.data, args.day)
    adm = build_admittance(rc.env.network)
    injections = [_slot_injections(rc.env, slot, {}) for slot in episode.rows]
    solutions = batch_solve(adm, injections, rc.env.solve_options)
    node_ids = rc.env.network.canonical_node_ids
    with _open_out(args.output) as fh:
        fh.write("t," + ",".join(f"v_node_{nid}" for nid in node_ids) + "\n")
        for t, sol in enumerate(solutions):
            cells = [format_float(float(v)) for v in np.abs(sol.v)]
            fh.write(f"{t}," + ",".join(cells) + "\n")
    return 0


def _training_trace(args) -> int:
    if args.input is None:
        raise _Usage("--kind training-trace needs --input")
    if args.window < 1:
        raise _Usage("--window must be at least 1")
    episodes: list[int] = []
    rewards: list[float] = []
    with open(args.input, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "episode" not in reader.fieldnames \
                or "reward" not in reader.fieldnames:
            raise ValueError(f"{args.input}: expected 'episode' and "
                             f"'reward' columns")
        for row in reader:
            episodes.append(int(row["episode"]))
            rewards.append(float(row["reward"]))
    with _open_out(args.output) as fh:
        fh.write("episode,reward,rolling_mean\n")
        for i, (ep, r) in enumerate(zip(episodes, rewards)):
            window = rewards[max(0, i + 1 - args.window):i + 1]
            mean = sum(window) / len(window)
            fh.write(f"{ep},{format_float(r)},{format_float(mean)}\n")
    return 0


def _cmd_plot_data(args) -> int:
    if args.kind == "voltage-profile":
        return _voltage_profile(args)
    return _training_trace(args)


# --- parser ----------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridarb",
        description="Energy-storage dispatch environments on radial feeders")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", default=None,
                       help="run configuration JSON (default: "
                            "$GRIDARB_CONFIG or the bundled 34-node config)")

    p = sub.add_parser("powerflow", help="solve one slot, print the solution")
    add_config(p)
    p.add_argument("--slot", type=int, default=0)
    p.add_argument("--day", type=int, default=0)
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_powerflow)

    p = sub.add_parser("simulate", help="roll a policy, write a step trace")
    add_config(p)
    p.add_argument("--policy", choices=sorted(_POLICIES), default="zero")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--days", type=int, default=1,
                   help="number of leading days to roll")
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("augment", help="write synthetic days as CSV")
    add_config(p)
    p.add_argument("--family", default="gaussian_copula",
                   choices=("gmm_independent", "gaussian_copula", "t_copula"))
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("benchmark",
                       help="optimal dispatch per day, JSON report")
    add_config(p)
    p.add_argument("--days", type=_day_range, default=range(0, 1),
                   help="inclusive day range a..b (default 0..0)")
    p.add_argument("--grid-soc", type=int, default=41)
    p.add_argument("--grid-act", type=int, default=11)
    p.add_argument("--trace", default=None,
                   help="simulate trace to score against the optimum")
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("serve", help="speak the line protocol")
    add_config(p)
    p.add_argument("--port", type=int, default=None,
                   help="TCP port (default: stdio)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("plot-data",
                       help="numeric series behind the standard figures")
    add_config(p)
    p.add_argument("--kind", required=True,
                   choices=("voltage-profile", "training-trace"))
    p.add_argument("--day", type=int, default=0)
    p.add_argument("--input", default=None,
                   help="metrics CSV (training-trace only)")
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--output", default=None)
    p.set_defaults(func=_cmd_plot_data)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Usage as exc:
        print(f"gridarb {args.command}: {exc}", file=sys.stderr)
        return 2
    except (GridArbError, ValueError, OSError) as exc:
        print(f"gridarb {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
