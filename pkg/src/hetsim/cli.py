"""Command-line front end: seeded runs, parameter sweeps, CSV emission and
cross-run summaries.

Exit codes: 0 success, 2 scenario problems, 3 scheduler infeasibility.
Outputs are byte-reproducible for identical flags and seeds; wall-clock
decision times go into the CSVs only when --timing is passed (otherwise the
column holds 0), keeping default outputs deterministic.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from .engine import RunLog, Scenario, SchedulerViolationError, run
from .scenario_io import (
    ScenarioError,
    apply_sweep,
    load_raw,
    scenario_from_dict,
    scenario_hash,
)
from .schedulers import ALGORITHMS
from .subchannel import AllocationInfeasibleError

_METRICS = ("overall_bps", "effective_bps", "satisfied", "decision_us")

# two-sided 95% Student-t critical values, df 1..30; 1.96 beyond
_T95 = (12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042)


def _fmt(value: float) -> str:
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return f"{value:.6g}"


def _write_run_csv(path: Path, log: RunLog, seed: int, algo: str, s_hash: str,
                   sweep_tag: str, timing: bool) -> None:
    rows = log.per_seed[seed]
    with open(path, "w", encoding="utf-8", newline="") as out:
        out.write(f"# scenario_hash={s_hash}\n")
        tag = f" sweep={sweep_tag}" if sweep_tag else ""
        out.write(f"# algo={algo} seed={seed} slots={log.slots}{tag}\n")
        out.write("slot,overall_bps,effective_bps,satisfied,decision_us\n")
        for m in rows:
            decision = m.decision_time_us if timing else 0.0
            out.write(f"{m.slot_index},{_fmt(m.overall_rate_bps)},"
                      f"{_fmt(m.effective_rate_bps)},{m.satisfied_count},"
                      f"{_fmt(decision)}\n")


def _aggregate_row(log: RunLog, timing: bool) -> dict[str, float]:
    agg = log.aggregates()
    return {
        "overall_bps": agg["overall_rate_bps"],
        "effective_bps": agg["effective_rate_bps"],
        "satisfied": agg["satisfied_count"],
        "decision_us": agg["decision_time_us"] if timing else 0.0,
    }


def _sanitize(tag: str) -> str:
    return tag.replace("=", "-").replace(",", "_").replace(".", "p")


def cmd_run(args: argparse.Namespace) -> int:
    try:
        raw, source = load_raw(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return 2

    sweep_points: list[tuple[str, dict]] = [("", raw)]
    if args.sweep:
        try:
            key, _, values = args.sweep.partition("=")
            if not values:
                raise ScenarioError("--sweep expects key=v1,v2,...")
            sweep_points = [(f"{key}={v}", apply_sweep(raw, key, v))
                            for v in values.split(",")]
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    env_seed = os.environ.get("HETNET_SEED")
    agg_rows: list[tuple[str, str, str, dict]] = []
    base_hash: Optional[str] = None
    for tag, raw_point in sweep_points:
        try:
            scenario = scenario_from_dict(raw_point, source, args.scenario)
            if env_seed is not None:
                scenario = scenario.with_overrides(rng_seed=int(env_seed))
        except (ScenarioError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        s_hash = scenario_hash(scenario)
        if base_hash is None:
            base_hash = s_hash
        seeds = tuple(args.seeds) if args.seeds else (scenario.rng_seed,)
        try:
            log = run(scenario, args.algo, args.slots, seeds)
        except (AllocationInfeasibleError, SchedulerViolationError) as exc:
            print(f"error: scheduler infeasibility: {exc}", file=sys.stderr)
            return 3
        for seed in seeds:
            suffix = f"_{_sanitize(tag)}" if tag else ""
            name = f"run_{args.algo}{suffix}_seed{seed}.csv"
            _write_run_csv(out_dir / name, log, seed, args.algo, s_hash, tag,
                           args.timing)
        agg_rows.append((args.algo, tag, ";".join(str(s) for s in seeds),
                         {"slots": args.slots, "hash": s_hash,
                          **_aggregate_row(log, args.timing)}))

    with open(out_dir / "aggregate.csv", "w", encoding="utf-8", newline="") as out:
        out.write(f"# scenario_hash={base_hash}\n")
        out.write("algo,sweep,seeds,slots,overall_bps_mean,effective_bps_mean,"
                  "satisfied_mean,decision_us_mean,scenario_hash\n")
        if args.slots > 0:
            for algo, tag, seeds_text, row in agg_rows:
                out.write(f"{algo},{tag},{seeds_text},{row['slots']},"
                          f"{_fmt(row['overall_bps'])},{_fmt(row['effective_bps'])},"
                          f"{_fmt(row['satisfied'])},{_fmt(row['decision_us'])},"
                          f"{row['hash']}\n")
    return 0


def _read_run_csv(path: Path) -> tuple[str, str, int, dict[str, float]]:
    """Returns (scenario_hash, algo, seed, per-seed slot means)."""
    s_hash = algo = ""
    seed = -1
    sums = {name: 0.0 for name in _METRICS}
    count = 0
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    key, _, value = token.partition("=")
                    if key == "scenario_hash":
                        s_hash = value
                    elif key == "algo":
                        algo = value
                    elif key == "seed":
                        seed = int(value)
                continue
            if line.startswith("slot,"):
                continue
            parts = line.split(",")
            sums["overall_bps"] += float(parts[1])
            sums["effective_bps"] += float(parts[2])
            sums["satisfied"] += float(parts[3])
            sums["decision_us"] += float(parts[4])
            count += 1
    means = {name: (sums[name] / count if count else float("nan"))
             for name in _METRICS}
    return s_hash, algo, seed, means


def _ci95(values: Sequence[float]) -> tuple[float, float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, mean, mean
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    t_crit = _T95[n - 2] if n - 1 <= len(_T95) else 1.96
    half = t_crit * math.sqrt(var / n)
    return mean, mean - half, mean + half


def cmd_summarize(args: argparse.Namespace) -> int:
    runs: list[tuple[str, str, int, dict]] = []
    for run_dir in args.run_dirs:
        found = sorted(Path(run_dir).glob("run_*.csv"))
        if not found:
            print(f"error: no run CSVs in {run_dir}", file=sys.stderr)
            return 2
        for path in found:
            runs.append(_read_run_csv(path))

    hashes = {r[0] for r in runs}
    if len(hashes) > 1:
        print(f"error: refusing to aggregate mixed scenarios (hashes {sorted(hashes)})",
              file=sys.stderr)
        return 2

    by_algo: dict[str, list[dict]] = {}
    for _, algo, _, means in runs:
        by_algo.setdefault(algo, []).append(means)

    stats: dict[tuple[str, str], tuple[float, float, float, int]] = {}
    for algo, entries in by_algo.items():
        for metric in _METRICS:
            values = [e[metric] for e in entries]
            mean, lo, hi = _ci95(values)
            stats[(algo, metric)] = (mean, lo, hi, len(values))

    ranks: dict[tuple[str, str], int] = {}
    for metric in _METRICS:
        reverse = metric != "decision_us"  # rates and satisfaction: higher is better
        ordered = sorted(by_algo, key=lambda a: stats[(a, metric)][0],
                         reverse=reverse)
        for position, algo in enumerate(ordered, start=1):
            ranks[(algo, metric)] = position

    lines = ["algo,metric,mean,ci95_lo,ci95_hi,n_seeds,rank\n"]
    for algo in sorted(by_algo):
        for metric in _METRICS:
            mean, lo, hi, n = stats[(algo, metric)]
            lines.append(f"{algo},{metric},{_fmt(mean)},{_fmt(lo)},{_fmt(hi)},"
                         f"{n},{ranks[(algo, metric)]}\n")

    text = f"# scenario_hash={hashes.pop() if hashes else ''}\n" + "".join(lines)
    if args.out_file:
        with open(args.out_file, "w", encoding="utf-8", newline="") as out:
            out.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetsim",
        description="Multi-band heterogeneous network scheduling simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario under one algorithm")
    p_run.add_argument("--scenario", required=True, help="scenario YAML file")
    p_run.add_argument("--algo", required=True, choices=ALGORITHMS)
    p_run.add_argument("--slots", type=int, default=500)
    p_run.add_argument("--seeds", type=_parse_seeds, default=None,
                       help="comma-separated repetition seeds (default: scenario seed)")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--sweep", default=None, metavar="KEY=V1,V2",
                       help="run once per value of a scenario key")
    p_run.add_argument("--timing", action="store_true",
                       help="write measured decision times (breaks byte-level "
                            "reproducibility of the CSVs)")
    p_run.set_defaults(func=cmd_run)

    p_sum = sub.add_parser("summarize", help="compare completed run directories")
    p_sum.add_argument("run_dirs", nargs="+")
    p_sum.add_argument("--out", dest="out_file", default=None,
                       help="write the comparison table here instead of stdout")
    p_sum.set_defaults(func=cmd_summarize)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
