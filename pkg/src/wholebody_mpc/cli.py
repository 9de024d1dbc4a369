"""Command-line entry point: ``wholebody-mpc plan --scenario FILE ...``.

Exit codes: 0 verified, 1 invalid scenario or arguments, 2 infeasible plan,
3 verification failure. With several scenarios the largest code wins.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CycleError, ScenarioError
from .loop import CycleConfig, run_scenario, verify_trace
from .scenario import corpus_names, corpus_path, parse_scenario
from .traces import write_trace

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_UNVERIFIED = 0, 1, 2, 3


@dataclass(frozen=True)
class PlanJob:
    scenario: str
    out: Path | None
    report: Path | None
    figure: Path | None
    horizon: int | None
    dt: float | None
    seed: int
    centering: bool


def resolve_scenario(arg: str) -> Path:
    """A path as given, or else the shipped scenario of that name."""
    path = Path(arg)
    if path.exists():
        return path
    try:
        return corpus_path(arg)
    except FileNotFoundError:
        return path  # let the parser report the missing file


def _events(trace) -> list[dict]:
    out = []
    for e in trace.events:
        detail = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in (e.detail or {}).items()}
        out.append({"time": e.time, "kind": e.kind, "contact_id": e.contact_id, "detail": detail})
    return out


def _write_outputs(job: PlanJob, scenario, trace, report: dict) -> None:
    out = job.out or Path(f"{scenario.name}.csv")
    write_trace(trace, out)
    report["trace"] = str(out)
    figure = job.figure
    if figure is None and job.report is not None:
        figure = out.with_suffix(".png")
    if figure is not None and len(trace):
        from .plotting import plot_trace  # matplotlib import is slow; only pay for it when asked
        plot_trace(trace, scenario, figure)
        report["figure"] = str(figure)
    if job.report is not None:
        job.report.write_text(json.dumps(report, indent=2, default=float) + "\n")


def run_job(job: PlanJob) -> tuple[int, str]:
    """Run one scenario end to end; returns (exit code, one-line summary)."""
    try:
        scenario = parse_scenario(resolve_scenario(job.scenario))
        if job.horizon is not None or job.dt is not None:
            scenario = scenario.with_horizon(job.horizon, job.dt)
        config = CycleConfig.from_scenario(scenario, centering=job.centering)
    except ScenarioError as err:
        return EXIT_INVALID, f"{job.scenario}: invalid scenario: {err}"
    except (OSError, ValueError) as err:
        return EXIT_INVALID, f"{job.scenario}: {err}"

    report = {
        "scenario": scenario.name,
        "mode": scenario.mode,
        "horizon": {"steps": scenario.horizon.preview.steps, "dt": scenario.horizon.preview.dt},
        "seed": job.seed,
        "centering": job.centering,
    }
    start = time.perf_counter()
    try:
        trace = run_scenario(scenario, config, seed=job.seed)
    except CycleError as err:
        trace = err.diagnostics.get("trace")
        report.update(status="infeasible", exit_code=EXIT_INFEASIBLE, error=str(err),
                      failed_stage=err.stage, failed_cycle=err.cycle,
                      failed_time=err.diagnostics.get("time"))
        if trace is not None:
            report["events"] = _events(trace)
            _write_outputs(job, scenario, trace, report)
        return EXIT_INFEASIBLE, f"{scenario.name}: infeasible plan {err}"
    elapsed = time.perf_counter() - start

    verification = verify_trace(trace, scenario)
    code = EXIT_OK if verification.passed else EXIT_UNVERIFIED
    walls = trace.column("wall_time")
    report.update(
        status="passed" if verification.passed else "verification_failed",
        exit_code=code,
        verification=verification.as_dict(),
        timing={"total_s": elapsed,
                "max_cycle_ms": 1e3 * float(walls.max()) if len(walls) else 0.0,
                "mean_cycle_ms": 1e3 * float(walls.mean()) if len(walls) else 0.0},
        events=_events(trace),
    )
    _write_outputs(job, scenario, trace, report)
    if verification.passed:
        return code, (f"{scenario.name}: passed, {len(trace)} cycles, "
                      f"{verification.engagements} contact engagement(s)")
    worst = ", ".join(f"{k}={v:.3g}" for k, v in verification.violations.items())
    return code, f"{scenario.name}: verification failed ({worst})"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wholebody-mpc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log planner events")
    sub = parser.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="run scenarios in closed loop and verify the traces")
    plan.add_argument("--scenario", action="append", required=True, metavar="PATH",
                      help="scenario file or shipped scenario name; repeatable")
    plan.add_argument("--out", type=Path, metavar="PATH",
                      help="trace CSV (a directory when several scenarios are given)")
    plan.add_argument("--report", type=Path, metavar="PATH",
                      help="JSON report; also renders a PNG next to the trace")
    plan.add_argument("--figure", type=Path, metavar="PATH", help="explicit PNG path")
    plan.add_argument("--horizon", type=int, metavar="N", help="preview steps (overrides the file)")
    plan.add_argument("--dt", type=float, metavar="T", help="sampling period in s (overrides the file)")
    plan.add_argument("--seed", type=int, default=0, metavar="INT", help="disturbance randomization seed")
    plan.add_argument("--jobs", type=int, default=1, metavar="INT", help="scenarios run concurrently")
    plan.add_argument("--centering", action="store_true",
                      help="pull the planned CoM height toward the middle of its band")

    sub.add_parser("list", help="print the shipped scenario names")
    return parser


def _jobs(args) -> list[PlanJob]:
    many = len(args.scenario) > 1
    if many and args.figure is not None:
        raise ValueError("--figure needs a single --scenario")
    jobs = []
    for name in args.scenario:
        stem = Path(name).stem
        out, report = args.out, args.report
        if many:
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
                out = out / f"{stem}.csv"
            if report is not None:
                report.mkdir(parents=True, exist_ok=True)
                report = report / f"{stem}.json"
        jobs.append(PlanJob(name, out, report, args.figure, args.horizon, args.dt,
                            args.seed, args.centering))
    return jobs


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "list":
        print("\n".join(corpus_names()))
        return EXIT_OK

    if args.horizon is not None and args.horizon < 1 or args.dt is not None and args.dt <= 0:
        print("error: --horizon must be >= 1 and --dt > 0", file=sys.stderr)
        return EXIT_INVALID
    try:
        jobs = _jobs(args)
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID

    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = [run_job(job) for job in jobs]

    for code, line in results:
        print(line, file=sys.stdout if code == EXIT_OK else sys.stderr)
    return max(code for code, _ in results)
