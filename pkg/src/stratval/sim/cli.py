"""Command-line interface.

Subcommands: ``run`` (execute seeds, write logs and metrics), ``verify``
(replay a log and check every invariant), ``report`` (metrics CSV from a
log), ``replay`` (reconstruct state up to an epoch). Exit codes: 0 success,
1 invariant violation, 2 config or input error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..events import EventLog, EventLogError
from .engine import run as run_simulation
from .metrics import report_metrics
from .scenario import ScenarioConfig, ScenarioError, load_scenario
from .verify import replay_log, verify_log

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2


def _read_log(path: str) -> EventLog:
    try:
        return EventLog.read(path)
    except (OSError, EventLogError, ValueError) as exc:
        print(f"error: cannot read log {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG) from exc


def _run_one_seed(task: tuple[ScenarioConfig, int, bool]) -> tuple:
    """Worker: run a seed and return serialisable artefacts (no shared state)."""
    config, seed, check = task
    result = run_simulation(config, seed=seed, check_invariants=check)
    violations = verify_log(result.log) if check else []
    rows = report_metrics(result.log).to_rows(seed)
    return seed, result.log.to_lines(), rows, result.snapshots, violations


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_scenario(args.scenario)
    except ScenarioError as exc:
        print("scenario rejected:", file=sys.stderr)
        for err in exc.errors:
            print(f"  {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base_seed = config.run.seed if args.seed is None else args.seed
    tasks = [(config, base_seed + i, args.check_invariants) for i in range(args.seeds)]
    if args.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_one_seed, tasks))
    else:
        results = [_run_one_seed(t) for t in tasks]

    all_rows = []
    worst = EXIT_OK
    for seed, log_lines, rows, snapshots, violations in sorted(results):
        log_path = out / f"events_{seed}.log"
        log_path.write_text("\n".join(log_lines) + "\n")
        for epoch, lines in snapshots:
            (out / f"ledger_{seed}_epoch{epoch}.txt").write_text("\n".join(lines) + "\n")
        if violations:
            print(f"seed {seed}: INVARIANT VIOLATIONS", file=sys.stderr)
            for v in violations:
                print(f"  {v}", file=sys.stderr)
            worst = EXIT_VIOLATION
        all_rows.extend(rows)
        with open(out / f"metrics_{seed}.csv", "w") as fh:
            fh.write("seed,metric,value\n")
            for r in rows:
                fh.write(f"{r[0]},{r[1]},{r[2]}\n")
        print(f"seed {seed}: {len(log_lines) - 1} events -> {log_path}")
    _write_summary(out / "summary.csv", all_rows)
    return worst


def _write_summary(path: Path, rows: list[tuple[int, str, str]]) -> None:
    by_metric: dict[str, list[float]] = {}
    for _seed, metric, value in rows:
        if metric.startswith("calibration_") or value == "":
            continue
        by_metric.setdefault(metric, []).append(float(value))
    with open(path, "w") as fh:
        fh.write("metric,n,mean,min,max\n")
        for metric in sorted(by_metric):
            vals = by_metric[metric]
            fh.write(
                f"{metric},{len(vals)},{sum(vals) / len(vals)!r},{min(vals)!r},{max(vals)!r}\n"
            )


def _cmd_verify(args: argparse.Namespace) -> int:
    log = _read_log(args.log)
    violations = verify_log(log)
    if violations:
        print(f"FAIL: {len(violations)} violation(s)")
        for v in violations:
            print(f"  {v}")
        return EXIT_VIOLATION
    print(f"PASS: {len(log)} events, all invariants hold")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    log = _read_log(args.log)
    metrics = report_metrics(log)
    seed = next((ev.seed for ev in log if ev.kind == "run_meta"), 0)
    print("seed,metric,value")
    for row in metrics.to_rows(int(seed)):
        print(f"{row[0]},{row[1]},{row[2]}")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    log = _read_log(args.log)
    state = replay_log(log, until=args.until)
    print(f"replayed through epoch {state.epoch}")
    print(f"supra total: {state.supra_sum()} (genesis {state.genesis_supra})")
    print(f"alpha total: {state.alpha_sum()} (minted {state.minted}, burned {state.burned})")
    for pool in sorted(state.pools):
        for token in sorted(state.pools[pool]):
            amount = state.pools[pool][token]
            if amount:
                print(f"pool {pool} {token}: {amount}")
    by_state: dict[str, int] = {}
    for st in state.instance_states.values():
        by_state[st] = by_state.get(st, 0) + 1
    for st in sorted(by_state):
        print(f"instances {st}: {by_state[st]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stratval",
        description="Deterministic strategy-validation protocol simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario for one or more seeds")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="base seed (default: from scenario)")
    p_run.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--check-invariants", action="store_true")
    p_run.add_argument("--workers", type=int, default=1, help="parallel seed workers")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", help="replay a log and check all invariants")
    p_verify.add_argument("--log", required=True)
    p_verify.set_defaults(func=_cmd_verify)

    p_report = sub.add_parser("report", help="compute metrics from a log")
    p_report.add_argument("--log", required=True)
    p_report.add_argument("--format", choices=["csv"], default="csv")
    p_report.set_defaults(func=_cmd_report)

    p_replay = sub.add_parser("replay", help="reconstruct state from a log")
    p_replay.add_argument("--log", required=True)
    p_replay.add_argument("--until", type=int, default=None)
    p_replay.set_defaults(func=_cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
