"""Command-line harness: closed-loop runs, single solves, and solve-time
statistics over recorded telemetry.

Exit codes: 0 success, 1 configuration error, 2 plant divergence,
3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gait, problem as problem_mod
from .reference import generate_reference
from .runtime import MpcController, initial_state, run_closed_loop
from .scenario import HORIZON, ScenarioError, bundled_scenarios, load_scenario
from .solver import solve

_LEG_TAGS = ("fr", "fl", "hr", "hl")

STATE_COLUMNS = (
    ["roll", "pitch", "yaw", "px", "py", "pz", "wx", "wy", "wz", "vx", "vy", "vz"]
    + [f"y_{leg}_{ax}" for leg in _LEG_TAGS for ax in "xyz"]
)
CONTROL_COLUMNS = (
    [f"grf_{leg}_{ax}" for leg in _LEG_TAGS for ax in "xyz"]
    + [f"ujoint_{leg}_{ax}" for leg in _LEG_TAGS for ax in "xyz"]
)
TORQUE_COLUMNS = [f"tau_{leg}_{j}" for leg in _LEG_TAGS for j in ("abd", "hip", "knee")]
CONTACT_COLUMNS = [f"contact_{leg}" for leg in _LEG_TAGS]


@dataclass
class SolveStats:
    """Four-column solve-time summary (ms) for one task."""

    task: str
    mean: float
    std: float
    max: float
    min: float
    count: int

    def __post_init__(self):
        if self.count > 0 and not (self.min <= self.mean <= self.max):
            raise ValueError("inconsistent statistics: need min <= mean <= max")
        if self.std < 0:
            raise ValueError("negative standard deviation")

    @classmethod
    def from_samples(cls, task: str, samples) -> "SolveStats":
        samples = np.asarray(list(samples), dtype=float)
        if samples.size == 0:
            raise ValueError("no solve-time samples")
        return cls(
            task=task,
            mean=float(np.mean(samples)),
            std=float(np.std(samples)),
            max=float(np.max(samples)),
            min=float(np.min(samples)),
            count=int(samples.size),
        )


def render_stats_table(rows: list) -> str:
    """Task | mean (ms) | std (ms) | max (ms) | min (ms) table."""
    header = f"| {'Task':<16} | {'mean (ms)':>9} | {'std (ms)':>8} | {'max (ms)':>8} | {'min (ms)':>8} |"
    sep = "|" + "-" * (len(header) - 2) + "|"
    lines = [header, sep]
    for r in rows:
        lines.append(
            f"| {r.task:<16} | {r.mean:>9.2f} | {r.std:>8.2f} | {r.max:>8.2f} | {r.min:>8.2f} |"
        )
    return "\n".join(lines)


def parse_stats_table(text: str) -> list:
    """Inverse of render_stats_table (count is not stored in the table)."""
    rows = []
    for line in text.strip().splitlines()[2:]:
        cells = [c.strip() for c in line.strip().strip("|").split("|")]
        if len(cells) != 5:
            continue
        rows.append(
            SolveStats(task=cells[0], mean=float(cells[1]), std=float(cells[2]),
                       max=float(cells[3]), min=float(cells[4]), count=0)
        )
    return rows


def write_runlog_csv(path: Path, log) -> None:
    header = ["t"] + STATE_COLUMNS + CONTROL_COLUMNS + TORQUE_COLUMNS + CONTACT_COLUMNS + ["plan_t0"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for i in range(len(log.times)):
            row = (
                [repr(float(log.times[i]))]
                + [repr(float(v)) for v in log.states[i]]
                + [repr(float(v)) for v in log.controls[i]]
                + [repr(float(v)) for v in log.torques[i]]
                + [int(v) for v in log.contacts[i]]
                + [repr(float(log.plan_t0[i]))]
            )
            w.writerow(row)


def write_telemetry_csv(path: Path, telemetry) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "wall_ms", "iterations", "cost", "violation", "status", "kind"])
        for r in telemetry:
            w.writerow([f"{r.t:.6f}", f"{r.wall_ms:.4f}", r.iterations,
                        repr(float(r.cost)), repr(float(r.violation)), r.status, r.kind])


def read_telemetry_csv(path: Path) -> list:
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(rec)
    if not rows:
        raise ValueError(f"empty telemetry file {path}")
    return rows


def write_events_csv(path: Path, events) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "kind", "leg", "info"])
        for t, kind, leg, info in events:
            w.writerow([f"{t:.6f}", kind, leg, info])


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario, seed=args.seed)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out or f"out_{scenario.name}")
    out.mkdir(parents=True, exist_ok=True)

    log = run_closed_loop(
        scenario,
        replan_iters=args.replan_iters,
        feedback_warmstart=not args.no_feedback_warmstart,
    )

    write_runlog_csv(out / "runlog.csv", log)
    write_telemetry_csv(out / "telemetry.csv", log.telemetry)
    write_events_csv(out / "events.csv", log.events)
    replans = [r.wall_ms for r in log.telemetry if r.kind == "replan"]
    stats_rows = []
    if replans:
        stats_rows.append(SolveStats.from_samples(scenario.name, replans))
        (out / "stats.txt").write_text(render_stats_table(stats_rows) + "\n")
    with open(out / "summary.json", "w") as f:
        json.dump(log.summary, f, indent=2)

    print(f"wrote {out}/runlog.csv ({len(log.times)} ticks), telemetry, events, summary")
    if stats_rows:
        print(render_stats_table(stats_rows))
    if log.diverged:
        print("simulation diverged; partial artifacts written", file=sys.stderr)
        return 2
    return 0


def cmd_solve_once(args) -> int:
    try:
        scenario = load_scenario(args.scenario, seed=args.seed)
    except (ScenarioError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out or f"out_{scenario.name}_solve")
    out.mkdir(parents=True, exist_ok=True)

    t0 = args.t0
    win = gait.window(scenario.schedule, t0, HORIZON)
    x0 = initial_state(scenario)
    ref = generate_reference(scenario.script, win, x0, scenario.params)
    prob = problem_mod.build_problem(
        scenario.params, scenario.weights, win, ref, x0, scenario.solver
    )
    sol = solve(prob, scenario.solver)

    with open(out / "trajectory.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["k", "t"] + STATE_COLUMNS + CONTROL_COLUMNS)
        for k in range(sol.xs.shape[0]):
            u_row = sol.us[k] if k < sol.us.shape[0] else np.zeros(24)
            w.writerow([k, f"{t0 + k * win.dt:.4f}"]
                       + [repr(float(v)) for v in sol.xs[k]]
                       + [repr(float(v)) for v in u_row])
    with open(out / "trace.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["outer", "iteration", "al_cost", "cost", "alpha", "reg", "accepted", "sigma"])
        for row in sol.trace:
            w.writerow([row["outer"], row["iteration"], repr(row["al_cost"]), repr(row["cost"]),
                        row["alpha"], row["reg"], int(row["accepted"]), row["sigma"]])

    lines = [
        f"scenario: {scenario.name}",
        f"window start: {t0}",
        f"status: {sol.status}",
        f"iterations: {sol.iterations}",
        f"cost: {sol.cost:.6f}",
        f"max equality violation: {sol.max_violation:.3e}",
    ]
    viols = sol.violations(prob)
    for key, val in sorted(viols.items()):
        lines.append(f"constraint {key}: residual {np.max(np.abs(val)):.3e}")
    (out / "constraints.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"wrote {out}/trajectory.csv, trace.csv, constraints.txt")
    return 0 if sol.converged else 3


def cmd_stats(args) -> int:
    try:
        rows = read_telemetry_csv(Path(args.telemetry))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    by_kind = [float(r["wall_ms"]) for r in rows if r.get("kind", "replan") == "replan" or args.all]
    if not by_kind:
        print("error: no replan records in telemetry", file=sys.stderr)
        return 1
    table = render_stats_table([SolveStats.from_samples(args.task, by_kind)])
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hkdmpc",
        description="Quadruped MPC over a hybrid kinodynamic model: closed-loop "
                    "simulation, single solves, and solve-time statistics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="closed-loop simulation of a scenario")
    p_run.add_argument("scenario", help=f"scenario name ({', '.join(bundled_scenarios())}) or YAML path")
    p_run.add_argument("--seed", type=int, default=None, help="noise/disturbance seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--replan-iters", type=int, default=None, help="DDP iteration cap per replan")
    p_run.add_argument("--no-feedback-warmstart", action="store_true",
                       help="disable the feedback-gain warm start (ablation)")
    p_run.set_defaults(func=cmd_run)

    p_solve = sub.add_parser("solve-once", help="single cold solve over one window")
    p_solve.add_argument("scenario")
    p_solve.add_argument("--t0", type=float, default=0.0, help="window start time (s)")
    p_solve.add_argument("--seed", type=int, default=None)
    p_solve.add_argument("--out", default=None)
    p_solve.set_defaults(func=cmd_solve_once)

    p_stats = sub.add_parser("stats", help="solve-time table from a telemetry CSV")
    p_stats.add_argument("telemetry")
    p_stats.add_argument("--task", default="task", help="row label")
    p_stats.add_argument("--all", action="store_true", help="include the first solve")
    p_stats.add_argument("--out", default=None)
    p_stats.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
