"""Run directory layout and file formats.

Each run writes ``<root>/<confighash>-s<seed>/`` containing:

- ``config.echo``: the resolved configuration, round-trippable.
- ``rounds.jsonl``: one JSON object per round with a stable key order.
  Byte-identical for identical (config, seed) regardless of worker count.
- ``summary.csv``: round, train_loss, test_acc, V_t, bytes_up_cum,
  bytes_down_cum.
- ``timings.csv``: per-round wall time. Excluded from determinism
  guarantees, which is why it lives outside rounds.jsonl.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .config import Config, parse_text, resolve
from .errors import DataFormatError

ROUNDS_FILE = "rounds.jsonl"
ECHO_FILE = "config.echo"
SUMMARY_FILE = "summary.csv"
TIMINGS_FILE = "timings.csv"


def _round_json(record: dict) -> str:
    # insertion order of the dict is the on-disk key order
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


def rounds_jsonl_text(records: list[dict]) -> str:
    return "".join(_round_json(r) + "\n" for r in records)


def summary_csv_text(records: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["round", "train_loss", "test_acc", "V_t", "bytes_up_cum", "bytes_down_cum"])
    up = down = 0
    for rec in records:
        up += rec["bytes_up"]
        down += rec["bytes_down"]
        writer.writerow([
            rec["round"],
            repr(rec["train_loss"]),
            "" if rec.get("test_acc") is None else repr(rec["test_acc"]),
            "" if rec.get("V_t") is None else repr(rec["V_t"]),
            up,
            down,
        ])
    return buf.getvalue()


def write_run_dir(root, cfg: Config, records: list[dict], wall_times: list[float]) -> Path:
    run_dir = Path(root) / cfg.run_name()
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / ECHO_FILE).write_text(cfg.serialize(), encoding="utf-8")
    (run_dir / ROUNDS_FILE).write_text(rounds_jsonl_text(records), encoding="utf-8")
    (run_dir / SUMMARY_FILE).write_text(summary_csv_text(records), encoding="utf-8")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["round", "wall_time_s"])
    for i, t in enumerate(wall_times, start=1):
        writer.writerow([i, f"{t:.6f}"])
    (run_dir / TIMINGS_FILE).write_text(buf.getvalue(), encoding="utf-8")
    return run_dir


def read_echo(run_dir) -> Config:
    path = Path(run_dir) / ECHO_FILE
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read '{path}': {exc}") from exc
    return resolve(parse_text(text))


def read_rounds(run_dir) -> list[dict]:
    path = Path(run_dir) / ROUNDS_FILE
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read '{path}': {exc}") from exc
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"'{path}' line {lineno}: bad JSON ({exc})") from exc
    return records
