"""Reading simulator run directories.

Consumes the simulator's on-disk interface directly: ``config.echo`` is
flat ``key = value`` text (``#`` comments), ``rounds.jsonl`` holds one
JSON object per round with ``round``, ``test_acc``, and byte counters.
Everything here is read-only; regenerating figures never touches a run.
"""

from __future__ import annotations

import glob
import json
import statistics
from dataclasses import dataclass
from pathlib import Path

from .errors import PlotError, RunDataError

ROUNDS_FILE = "rounds.jsonl"
ECHO_FILE = "config.echo"


def parse_echo(text: str) -> dict[str, str]:
    """Raw key -> value strings from flat config text."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise RunDataError(f"config line {lineno}: expected 'key = value', got '{stripped}'")
        raw[key.strip()] = value.strip()
    return raw


@dataclass(frozen=True)
class RunHandle:
    """One finished run: its directory, identity, and parsed round records."""

    path: Path
    strategy: str
    seed: int
    clients: int
    records: tuple

    @property
    def rounds(self) -> int:
        return len(self.records)

    def accuracy_series(self) -> tuple[list[int], list[float]]:
        """Round numbers and test accuracies, skipping rounds without one."""
        rounds, accs = [], []
        for rec in self.records:
            if rec.get("test_acc") is not None:
                rounds.append(rec["round"])
                accs.append(rec["test_acc"])
        if not rounds:
            raise PlotError(f"'{self.path}' has no test accuracies to plot")
        return rounds, accs

    def rounds_to_target(self, target: float):
        """1-based first round reaching the target accuracy, or None."""
        for rec in self.records:
            acc = rec.get("test_acc")
            if acc is not None and acc >= target:
                return rec["round"]
        return None


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise RunDataError(f"cannot read '{path}': {exc}") from exc


def load_run(run_dir) -> RunHandle:
    run_dir = Path(run_dir)
    cfg = parse_echo(_read_text(run_dir / ECHO_FILE))
    records = []
    for lineno, line in enumerate(_read_text(run_dir / ROUNDS_FILE).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise RunDataError(f"'{run_dir / ROUNDS_FILE}' line {lineno}: bad JSON ({exc})") from exc
    if not records:
        raise RunDataError(f"'{run_dir / ROUNDS_FILE}' is empty")
    try:
        return RunHandle(
            path=run_dir,
            strategy=cfg["strategy.kind"],
            seed=int(cfg["seed"]),
            clients=int(cfg["clients.count"]),
            records=tuple(records),
        )
    except (KeyError, ValueError) as exc:
        raise RunDataError(f"'{run_dir / ECHO_FILE}': missing or bad field ({exc})") from exc


def discover(patterns: list[str]) -> list[RunHandle]:
    """Run handles for every run directory matched by the glob patterns.

    A match may be a run directory itself or a parent holding several.
    """
    dirs: list[Path] = []
    for pattern in patterns:
        matches = sorted(glob.glob(str(pattern))) or [str(pattern)]
        for match in matches:
            path = Path(match)
            if (path / ROUNDS_FILE).is_file():
                dirs.append(path)
            elif path.is_dir():
                subs = sorted(p for p in path.iterdir() if (p / ROUNDS_FILE).is_file())
                if not subs:
                    raise RunDataError(f"'{path}' contains no run directories")
                dirs.extend(subs)
            else:
                raise RunDataError(f"'{match}' is not a run directory")
    return [load_run(d) for d in dirs]


def group_by_strategy(handles: list[RunHandle]) -> dict[str, list[RunHandle]]:
    groups: dict[str, list[RunHandle]] = {}
    for handle in handles:
        groups.setdefault(handle.strategy, []).append(handle)
    return groups


def median_rounds(handles: list[RunHandle], target: float):
    """(median over reached seeds, number reached, cap of the rest).

    The median ignores seeds that never reach the target, mirroring the
    simulator's summary table; ``cap`` is the largest recorded horizon
    among the seeds that missed (None when all reached).
    """
    reached = []
    cap = None
    for handle in handles:
        outcome = handle.rounds_to_target(target)
        if outcome is None:
            last = handle.records[-1]["round"]
            cap = last if cap is None else max(cap, last)
        else:
            reached.append(outcome)
    median = float(statistics.median(reached)) if reached else None
    return median, len(reached), cap
