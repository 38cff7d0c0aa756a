"""Accuracy curves and rounds-to-target bar charts.

Figures mirror the simulator's summary table: per-strategy mean curves
with min/max bands over seeds, a dashed horizontal line at the target
accuracy, and grouped bars of median rounds-to-target annotated with
FedADMM's reduction against the best baseline.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # batch tool: render without a display

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Patch

from .artifacts import RunHandle, group_by_strategy, median_rounds
from .errors import PlotError

STRATEGY_COLORS = {
    "fedadmm": "C0",
    "fedsgd": "C1",
    "fedavg": "C2",
    "fedprox": "C3",
    "scaffold": "C4",
}


def _color(strategy: str) -> str:
    return STRATEGY_COLORS.get(strategy, "C7")


def _ordered(strategies) -> list[str]:
    known = [s for s in STRATEGY_COLORS if s in strategies]
    extra = sorted(s for s in strategies if s not in STRATEGY_COLORS)
    return known + extra


def build_curves_figure(handles: list[RunHandle], target_accuracy: float):
    """Mean accuracy per strategy with a min/max band over seeds."""
    if not handles:
        raise PlotError("need at least one run to plot")
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    groups = group_by_strategy(handles)
    for strategy in _ordered(groups):
        per_round: dict[int, list[float]] = {}
        for handle in groups[strategy]:
            rounds, accs = handle.accuracy_series()
            for r, a in zip(rounds, accs):
                per_round.setdefault(r, []).append(a)
        xs = sorted(per_round)
        mean = [float(np.mean(per_round[r])) for r in xs]
        # markers keep one-round runs visible
        (line,) = ax.plot(xs, mean, marker="o", markersize=2.5,
                          color=_color(strategy), label=strategy)
        ax.fill_between(
            xs,
            [min(per_round[r]) for r in xs],
            [max(per_round[r]) for r in xs],
            alpha=0.2,
            color=line.get_color(),
        )
    ax.axhline(target_accuracy, color="black", linestyle="--", linewidth=1.0,
               label=f"target {target_accuracy:g}")
    ax.set_xlabel("round")
    ax.set_ylabel("test accuracy")
    ax.legend()
    fig.tight_layout()
    return fig


def plot_accuracy_curves(handles: list[RunHandle], target_accuracy: float, out_path) -> Path:
    fig = build_curves_figure(handles, target_accuracy)
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def rounds_bar_data(handles_by_scale: dict, target: float) -> list[dict]:
    """Medians, misses, and the reduction annotation per client scale.

    The annotation is FedADMM's percent reduction in median rounds against
    the best (lowest-median) baseline in the same group, formatted exactly
    like the simulator's summary table.
    """
    if not handles_by_scale:
        raise PlotError("need at least one group of runs to plot")
    groups = []
    for scale in sorted(handles_by_scale):
        handles = handles_by_scale[scale]
        if not handles:
            raise PlotError(f"group '{scale}' has no runs")
        bars = {}
        for strategy, group in group_by_strategy(handles).items():
            median, reached, cap = median_rounds(group, target)
            bars[strategy] = {
                "median": median, "reached": reached, "seeds": len(group), "cap": cap,
            }
        admm = bars.get("fedadmm", {}).get("median")
        baselines = [
            b["median"] for kind, b in bars.items()
            if kind != "fedadmm" and b["median"] is not None
        ]
        annotation = None
        if admm is not None and baselines:
            pct = round(100.0 * (1.0 - admm / min(baselines)), 1)
            annotation = f"{pct:.1f}%"
        groups.append({"scale": scale, "bars": bars, "annotation": annotation})
    return groups


def build_bars_figure(handles_by_scale: dict, target: float):
    """Grouped bars of median rounds-to-target, one group per client scale.

    A strategy whose seeds all miss the target draws a hatched bar at its
    recorded round cap; a strategy absent from a group is omitted with a
    legend note.
    """
    data = rounds_bar_data(handles_by_scale, target)
    strategies = _ordered({s for group in data for s in group["bars"]})
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    width = 0.8 / len(strategies)
    hatched = False
    missing_notes = []
    for j, strategy in enumerate(strategies):
        for i, group in enumerate(data):
            entry = group["bars"].get(strategy)
            if entry is None:
                missing_notes.append(f"{strategy}: no runs for m={group['scale']}")
                continue
            x = i + (j - (len(strategies) - 1) / 2.0) * width
            if entry["median"] is None:
                hatched = True
                ax.bar(x, entry["cap"], width=width, facecolor="white",
                       edgecolor=_color(strategy), hatch="//")
                top = entry["cap"]
            else:
                ax.bar(x, entry["median"], width=width, color=_color(strategy))
                top = entry["median"]
            if strategy == "fedadmm" and group["annotation"] is not None:
                ax.annotate(group["annotation"], xy=(x, top),
                            ha="center", va="bottom", fontsize=9)
    ax.set_xticks(range(len(data)))
    ax.set_xticklabels([f"m={group['scale']}" for group in data])
    ax.set_ylabel("median rounds to target")
    legend = [Patch(facecolor=_color(s), label=s) for s in strategies]
    if hatched:
        legend.append(Patch(facecolor="white", edgecolor="gray", hatch="//",
                            label="target not reached (bar at cap)"))
    for note in missing_notes:
        legend.append(Patch(facecolor="none", edgecolor="none", label=note))
    ax.legend(handles=legend, fontsize=8)
    fig.tight_layout()
    return fig


def plot_rounds_bar(handles_by_scale: dict, target: float, out_path) -> Path:
    fig = build_bars_figure(handles_by_scale, target)
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
