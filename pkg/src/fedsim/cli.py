"""Command line interface.

Subcommands: ``run`` (execute an experiment over one or more seeds),
``partition`` (inspect the configured client partition), ``summarize``
(tabulate rounds-to-target across finished run directories), ``check``
(validate analysis hyperparameters and print the gap-bound constants).

Exit codes: 0 success, 2 configuration error, 3 numeric divergence,
4 I/O or file-format error. The default output root is $FEDSIM_RUNS,
falling back to ./runs.
"""

from __future__ import annotations

import argparse
import glob
import os
import statistics
import sys
from pathlib import Path

from .artifacts import ROUNDS_FILE, read_echo, read_rounds
from .config import Config, load_file
from .core import RHO_THRESHOLD_FACTOR, GapBoundConstants
from .data import partition_stats
from .engine import (
    build_world,
    ensemble_smoothness,
    min_participation,
    rounds_to_target,
    run_experiment,
)
from .errors import EXIT_IO, EXIT_OK, DataFormatError, FedsimError

ENV_OUT_ROOT = "FEDSIM_RUNS"


def _parse_sets(pairs: list[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise FedsimError(f"--set expects key=value, got '{pair}'")
        overrides[key.strip()] = value.strip()
    return overrides


def _load_config(args) -> Config:
    return load_file(args.config, _parse_sets(args.set))


def _out_root(args, cfg: Config) -> str:
    if getattr(args, "out", None):
        return args.out
    if cfg["output.root"]:
        return cfg["output.root"]
    return os.environ.get(ENV_OUT_ROOT, "./runs")


def cmd_run(args) -> int:
    cfg = _load_config(args)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg["seed"]]
    root = _out_root(args, cfg)
    for seed in seeds:
        result = run_experiment(cfg.with_overrides({"seed": seed}), out_root=root)
        last = result.records[-1]
        acc = "-" if last.test_acc is None else f"{last.test_acc:.4f}"
        line = (
            f"seed {seed}: {len(result.records)} rounds, "
            f"train_loss {last.train_loss:.6g}, test_acc {acc}"
        )
        if result.verify is not None:
            bad = sum(
                1
                for rec in result.records
                for value in (rec.flags or {}).values()
                if value is False
            )
            line += f", flag violations {bad}"
        line += f" -> {result.run_dir}"
        print(line)
    return EXIT_OK


def cmd_partition(args) -> int:
    cfg = _load_config(args)
    world = build_world(cfg)
    if world.test is None and world.datasets[0].n == 1:
        raise FedsimError("quadratic worlds have no data partition to inspect")
    stats = partition_stats(world.shards)
    labels = world.datasets[0].labels
    distinct = [len(set(labels[shard].tolist())) for shard in world.shards]
    print(f"scheme: {cfg['partition.scheme']}")
    print(f"clients: {stats['clients']}")
    print(f"samples per client: mean {stats['mean']:.2f}, std {stats['std']:.2f}, "
          f"min {stats['min']}, max {stats['max']}")
    print(f"distinct labels per client: mean {sum(distinct) / len(distinct):.2f}, "
          f"min {min(distinct)}, max {max(distinct)}")
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = _load_config(args)
    world = build_world(cfg)
    L = ensemble_smoothness(world)
    p_min = min_participation(cfg)
    rho = cfg["strategy.rho"]
    threshold = RHO_THRESHOLD_FACTOR * L
    heuristic = getattr(world.objectives[0], "heuristic_smoothness", False)
    print(f"L = {L:.6g}{' (heuristic)' if heuristic else ''}")
    print(f"p_min = {p_min:.6g}")
    print(f"rho = {rho:g}, threshold (1+sqrt(5))*L = {threshold:.6g}")
    consts = GapBoundConstants(rho, L, p_min)  # raises ConfigError if rho too small
    print(f"c1 = {consts.c1:.6g}")
    print(f"c2 = {consts.c2:.6g}")
    print(f"c3 = {consts.c3:.6g}")
    return EXIT_OK


def _expand_run_dirs(patterns: list[str]) -> list[Path]:
    dirs: list[Path] = []
    for pattern in patterns:
        matches = sorted(glob.glob(pattern)) or [pattern]
        for match in matches:
            path = Path(match)
            if (path / ROUNDS_FILE).is_file():
                dirs.append(path)
            elif path.is_dir():
                subs = sorted(p for p in path.iterdir() if (p / ROUNDS_FILE).is_file())
                if not subs:
                    raise DataFormatError(f"'{path}' contains no run directories")
                dirs.extend(subs)
            else:
                raise DataFormatError(f"'{match}' is not a run directory")
    return dirs


def summarize_runs(run_dirs: list[Path], target: float | None = None,
                   reference: str = "fedsgd") -> list[dict]:
    """Per-strategy median rounds-to-target rows, Table-style.

    Sentinel runs ("<T>+", target never reached) are excluded from medians;
    a group that never reaches the target reports the sentinel itself.
    """
    groups: dict[str, dict] = {}
    for run_dir in run_dirs:
        cfg = read_echo(run_dir)
        records = read_rounds(run_dir)
        run_target = target if target is not None else cfg["target_accuracy"]
        if run_target is None:
            raise FedsimError(
                f"'{run_dir}': no target accuracy in config.echo (use --target)"
            )
        outcome = rounds_to_target(records, run_target)
        group = groups.setdefault(
            cfg["strategy.kind"], {"reached": [], "sentinels": [], "seeds": 0}
        )
        group["seeds"] += 1
        if isinstance(outcome, str):
            group["sentinels"].append(outcome)
        else:
            group["reached"].append(outcome)

    rows = []
    for kind, group in groups.items():
        if group["reached"]:
            median = float(statistics.median(group["reached"]))
        else:
            median = None
        rows.append({
            "strategy": kind,
            "seeds": group["seeds"],
            "reached": len(group["reached"]),
            "median_rounds": median,
            "sentinel": group["sentinels"][0] if group["sentinels"] else "",
            "partial": bool(group["sentinels"]) and bool(group["reached"]),
        })
    rows.sort(key=lambda r: (r["median_rounds"] is None, r["median_rounds"] or 0.0))

    ref_median = next(
        (r["median_rounds"] for r in rows if r["strategy"] == reference), None
    )
    best_baseline = min(
        (r["median_rounds"] for r in rows
         if r["strategy"] != "fedadmm" and r["median_rounds"] is not None),
        default=None,
    )
    for row in rows:
        med = row["median_rounds"]
        row["speedup"] = (
            round(ref_median / med, 1)
            if med and ref_median and row["strategy"] != reference
            else None
        )
        row["reduction_pct"] = (
            round(100.0 * (1.0 - med / best_baseline), 1)
            if row["strategy"] == "fedadmm" and med is not None and best_baseline
            else None
        )
    return rows


def _fmt_median(row) -> str:
    if row["median_rounds"] is None:
        return row["sentinel"]
    med = row["median_rounds"]
    text = f"{med:g}"
    if row["partial"]:
        text += "*"
    return text


def cmd_summarize(args) -> int:
    run_dirs = _expand_run_dirs(args.runs)
    rows = summarize_runs(run_dirs, target=args.target, reference=args.reference)
    header = f"{'strategy':<10} {'seeds':>5} {'reached':>7} {'rounds':>8} {'speedup':>8} {'reduction':>9}"
    print(header)
    for row in rows:
        speedup = f"{row['speedup']:.1f}x" if row["speedup"] is not None else "-"
        reduction = f"{row['reduction_pct']:.1f}%" if row["reduction_pct"] is not None else "-"
        print(
            f"{row['strategy']:<10} {row['seeds']:>5} {row['reached']:>7} "
            f"{_fmt_median(row):>8} {speedup:>8} {reduction:>9}"
        )
    if any(row["partial"] for row in rows):
        print("* median over the seeds that reached the target; the rest never did")
    if args.csv:
        import csv as _csv

        try:
            with open(args.csv, "w", newline="", encoding="utf-8") as fh:
                writer = _csv.writer(fh)
                writer.writerow(
                    ["strategy", "seeds", "reached", "median_rounds", "speedup", "reduction_pct"]
                )
                for row in rows:
                    writer.writerow([
                        row["strategy"],
                        row["seeds"],
                        row["reached"],
                        _fmt_median(row).rstrip("*"),
                        "" if row["speedup"] is None else row["speedup"],
                        "" if row["reduction_pct"] is None else row["reduction_pct"],
                    ])
        except OSError as exc:
            raise DataFormatError(f"cannot write '{args.csv}': {exc}") from exc
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    p_run = sub.add_parser("run", help="run an experiment")
    add_config_args(p_run)
    p_run.add_argument("--seeds", help="comma-separated seeds (default: config seed)")
    p_run.add_argument("--out", help="output root (default: $FEDSIM_RUNS or ./runs)")
    p_run.set_defaults(func=cmd_run)

    p_part = sub.add_parser("partition", help="inspect the client partition")
    add_config_args(p_part)
    p_part.set_defaults(func=cmd_partition)

    p_check = sub.add_parser("check", help="validate analysis hyperparameters")
    add_config_args(p_check)
    p_check.set_defaults(func=cmd_check)

    p_sum = sub.add_parser("summarize", help="tabulate rounds-to-target over run dirs")
    p_sum.add_argument("runs", nargs="+", help="run directories (globs allowed)")
    p_sum.add_argument("--target", type=float, help="override the accuracy target")
    p_sum.add_argument("--reference", default="fedsgd",
                       help="strategy the speedup column is relative to")
    p_sum.add_argument("--csv", help="also write the table as CSV")
    p_sum.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FedsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
