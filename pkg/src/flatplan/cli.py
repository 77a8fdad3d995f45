"""Command-line surface: plan, check, bench, grad-check, plot.

Every failure exits nonzero after printing a one-line JSON error record
to stderr. Figures are rendered next to the delimited outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import audit as audit_mod
from . import gradcheck
from .errors import PlannerError
from .optimizer import plan as run_plan
from .plotting import render_bench, render_scenario
from .scenario import load_scenario

log = logging.getLogger("flatplan")

AUDIT_TOLERANCE = 1e-2


def _setup_logging():
    level = os.environ.get("FLATPLAN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(name)s %(levelname)s %(message)s")


def _error_record(exc: Exception, stage: str | None = None) -> str:
    record = {
        "error": type(exc).__name__,
        "message": str(exc),
        "stage": stage or getattr(exc, "stage", None),
    }
    return json.dumps(record)


def _write_solve_log(path, trace):
    lines = ["iteration,objective,grad_max_norm,step"]
    for k, (f, g, a) in enumerate(trace):
        lines.append(f"{k},{f:.9g},{g:.9g},{a:.9g}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_plan(args) -> int:
    scenario = load_scenario(args.scenario)
    os.makedirs(args.out, exist_ok=True)
    result = run_plan(scenario)
    traj = result.trajectory

    audit_mod.write_state_csv(traj, os.path.join(args.out, "trajectory.csv"), wheelbase=scenario.geom.wheelbase)
    audit_mod.save_trajectory(traj, os.path.join(args.out, "trajectory.yaml"))
    _write_solve_log(os.path.join(args.out, "solve_log.csv"), result.trace)

    report = audit_mod.check_trajectory(traj, scenario, corridor=result.corridor, oversample=args.oversample)
    metrics = audit_mod.compute_metrics(traj, solve_time=result.timings.get("solve", result.wall_time))
    metrics.max_violations = report.violations
    payload = metrics.to_dict()
    payload.update(
        {
            "scenario": scenario.name,
            "objective": result.objective,
            "iterations": result.iterations,
            "grad_norm": result.grad_norm,
            "status": result.status,
            "timings": result.timings,
            "min_dynamic_distance": report.min_dynamic_distance,
            "seed": args.seed,
        }
    )
    with open(os.path.join(args.out, "metrics.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    render_scenario(
        scenario,
        trajectory=traj,
        corridor=result.corridor,
        frontend_poses=result.frontend_poses,
        out_path=os.path.join(args.out, "plan.svg"),
    )
    print(
        f"{scenario.name}: objective {result.objective:.4f}, {result.iterations} iterations, "
        f"solve {result.timings.get('solve', 0.0):.3f}s, worst violation {report.max_violation():.2e}"
    )
    return 0


def cmd_check(args) -> int:
    scenario = load_scenario(args.scenario)
    traj = audit_mod.load_trajectory(args.traj)
    report = audit_mod.check_trajectory(traj, scenario, corridor=None, oversample=args.oversample)
    payload = {
        "scenario": scenario.name,
        "violations": report.violations,
        "worst_times": report.worst_times,
        "min_dynamic_distance": report.min_dynamic_distance,
        "samples": report.samples,
        "tolerance": args.tolerance,
        "ok": report.ok(args.tolerance),
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0 if report.ok(args.tolerance) else 1


def _bench_one(job):
    path, repeats = job
    scenario = load_scenario(path)
    times = []
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = run_plan(scenario)
        times.append(result.timings.get("solve", time.perf_counter() - t0))
    metrics = audit_mod.compute_metrics(result.trajectory, solve_time=float(np.median(times)))
    report = audit_mod.check_trajectory(result.trajectory, scenario, corridor=result.corridor, oversample=4)
    ts = np.array(times)
    return {
        "scenario": scenario.name,
        "solve_p50": float(np.percentile(ts, 50)),
        "solve_p90": float(np.percentile(ts, 90)),
        "solve_max": float(ts.max()),
        "iterations": result.iterations,
        "objective": result.objective,
        "duration": metrics.duration,
        "path_length": metrics.path_length,
        "mean_accel": metrics.mean_accel,
        "mean_jerk": metrics.mean_jerk,
        "worst_violation": report.max_violation(),
    }


def cmd_bench(args) -> int:
    paths = sorted(
        os.path.join(args.scenarios, f)
        for f in os.listdir(args.scenarios)
        if f.endswith((".yaml", ".yml"))
    )
    if not paths:
        raise PlannerError(f"no scenario files in {args.scenarios}")
    jobs = [(p, args.repeats) for p in paths]
    if args.threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(_bench_one, jobs))
    else:
        rows = [_bench_one(j) for j in jobs]

    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(f"{r[c]:.9g}" if isinstance(r[c], float) else str(r[c]) for c in cols))
    csv_path = args.out if args.out.endswith(".csv") else args.out + ".csv"
    with open(csv_path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    render_bench(rows, csv_path[:-4] + ".svg")
    for line in lines:
        print(line)
    return 0


def cmd_grad_check(args) -> int:
    results = gradcheck.run_all(instances=args.instances, seed=args.seed)
    worst = max(results.values())
    for name, err in results.items():
        print(f"{name:12s} max relative error {err:.3e}")
    print(f"overall      max relative error {worst:.3e} ({'ok' if worst < 1e-5 else 'FAIL'})")
    return 0 if worst < 1e-5 else 1


def cmd_plot(args) -> int:
    scenario = load_scenario(args.scenario)
    traj = audit_mod.load_trajectory(args.traj) if args.traj else None
    out = args.out
    render_scenario(scenario, trajectory=traj, out_path=out)
    if traj is not None:
        root, _ = os.path.splitext(out)
        audit_mod.write_state_csv(traj, root + ".csv", wheelbase=scenario.geom.wheelbase)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flatplan", description="Trajectory planning for car-like robots")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan a scenario and write trajectory artifacts")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--oversample", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("check", help="audit a stored trajectory against a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--traj", required=True)
    p.add_argument("--oversample", type=int, default=10)
    p.add_argument("--tolerance", type=float, default=AUDIT_TOLERANCE)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("bench", help="run a scenario directory and tabulate timings")
    p.add_argument("--scenarios", required=True)
    p.add_argument("--out", required=True, help="output csv path (figure written alongside)")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("grad-check", help="finite-difference audit of all gradients")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("plot", help="render a scenario (and optional trajectory) to a figure")
    p.add_argument("--scenario", required=True)
    p.add_argument("--traj")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PlannerError as exc:
        print(_error_record(exc), file=sys.stderr)
        return 1
    except Exception as exc:  # unexpected: still emit a machine-readable record
        print(_error_record(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
