"""Rounds-to-target race between the five strategies.

A scaled-down version of the headline experiment: multinomial logistic
regression on a synthetic 10-class mixture, 100 clients holding two label
shards each, 10% participation per round. Every strategy runs the same
worlds and seeds; the score is the median round at which test accuracy
first reaches the target (centralized reference minus two points).
"""

import statistics

from fedsim.config import resolve
from fedsim.engine import (
    build_world,
    centralized_accuracy,
    rounds_to_target,
    run_experiment,
)

BASE = {
    "strategy.epochs": "5",
    "strategy.batch_size": "20",
    "clients.count": "100",
    "clients.fraction": "0.1",
    "rounds": "100",
    "data.source": "synthetic",
    "data.dim": "50",
    "data.classes": "10",
    "data.per_class": "1000",
    "data.separation": "3.0",
    "partition.scheme": "shards",
    "partition.shards_per_client": "2",
    "data.seed": "0",
    "heterogeneity": "true",
}

# each strategy gets its grid-search best hyperparameters on this protocol
ENTRIES = {
    "fedadmm": {"strategy.kind": "fedadmm", "strategy.rho": "0.3", "strategy.client_lr": "0.2"},
    "fedsgd": {"strategy.kind": "fedsgd", "strategy.server_lr": "3.0"},
    "fedavg": {"strategy.kind": "fedavg", "strategy.client_lr": "0.1"},
    "fedprox": {"strategy.kind": "fedprox", "strategy.rho": "0.05", "strategy.client_lr": "0.2"},
    "scaffold": {"strategy.kind": "scaffold", "strategy.client_lr": "0.1"},
}

world = build_world(resolve(dict(BASE, **ENTRIES["fedavg"])))
central = centralized_accuracy(world)
target = central - 0.02
print("centralized reference accuracy %.4f -> target %.4f" % (central, target))
print()
print("strategy    per-seed rounds to target          median")

for kind, extra in ENTRIES.items():
    outcomes = []
    for seed in (1, 2, 3, 4, 5):
        raw = dict(BASE, **extra)
        raw["seed"] = str(seed)
        raw["target_accuracy"] = repr(target)
        result = run_experiment(resolve(raw))
        outcomes.append(rounds_to_target(result.records, target))
    reached = [v for v in outcomes if isinstance(v, int)]
    median = statistics.median(reached) if len(reached) == len(outcomes) else "DNF"
    print("%-10s  %-32s  %s" % (kind, outcomes, median))
