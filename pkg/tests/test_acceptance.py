"""End-to-end acceptance checks, one test per headline guarantee.

Each test pins a user-visible property of the package at its stated
tolerance: the server tracking identity, the per-round dual-step and
floor flags, the stationarity-gap bound at every horizon, KKT convergence
of the exact solver, reduction equivalences, run determinism, partition
statistics, byte accounting, the desk-scale strategy race, and gradient
correctness.
"""

import statistics
import time

import numpy as np
import pytest

from fedsim.artifacts import rounds_jsonl_text
from fedsim.config import resolve
from fedsim.core import GapBoundConstants, gap_bound
from fedsim.data import partition_imbalanced, partition_stats
from fedsim.engine import (
    build_world,
    centralized_accuracy,
    rounds_to_target,
    run_experiment,
)
from fedsim.objectives import (
    Logistic,
    Quadratic,
    SmallNet,
    eval_grad,
    placeholder_dataset,
    quadratic_consensus_optimum,
)
from helpers import fd_gradient, rel_grad_error, tiny_dataset

SEEDS = range(1, 21)


def quad_verify_cfg(seed: int, virtual: bool):
    # rho = 8 is four times the curvature cap, clearing the bound threshold
    return resolve({
        "strategy.kind": "fedadmm", "strategy.rho": "8.0", "strategy.eta": "tracking",
        "strategy.client_lr": "0.05", "strategy.epochs": "5",
        "clients.count": "20", "clients.fraction": "0.1", "rounds": "200",
        "data.source": "quadratic", "data.dim": "5", "data.seed": "0",
        "seed": str(seed), "verify.enabled": "true",
        "verify.virtual": "true" if virtual else "false",
    })


@pytest.fixture(scope="module")
def tracking_runs():
    """20 seeds x 200 rounds with cheap verification (active solves only)."""
    started = time.perf_counter()
    results = [run_experiment(quad_verify_cfg(seed, virtual=False)) for seed in SEEDS]
    return results, time.perf_counter() - started


@pytest.fixture(scope="module")
def virtual_runs():
    """Same ensemble with hypothetical solves of inactive clients measured."""
    started = time.perf_counter()
    results = [run_experiment(quad_verify_cfg(seed, virtual=True)) for seed in SEEDS]
    return results, time.perf_counter() - started


def test_tracking_identity_holds_every_round(tracking_runs):
    results, elapsed = tracking_runs
    assert elapsed < 5.0
    checked = 0
    for result in results:
        for rec in result.records:
            assert rec.flags["tracking"] is True
            checked += 1
    assert checked == 20 * 200


def test_dual_step_and_floor_flags_hold_every_round(tracking_runs):
    results, _ = tracking_runs
    for result in results:
        for rec in result.records:
            assert rec.flags["dual_step"] is True
            assert rec.flags["floor"] is True


def test_gap_bound_dominates_seed_average_at_every_horizon(virtual_runs):
    results, elapsed = virtual_runs
    assert elapsed < 30.0
    m = 20
    gaps = np.array([[rec.V_t for rec in r.records] for r in results])
    eps = np.array([r.verify.eps_history for r in results])
    running = np.cumsum(gaps, axis=1)
    first = results[0].verify
    for r in results:
        # one shared world: the bound inputs agree across seeds
        assert (r.verify.L, r.verify.L0, r.verify.f_star) == (first.L, first.L0, first.f_star)
    for horizon in range(1, 201):
        lhs = float(np.mean(running[:, horizon - 1])) / (m * horizon)
        consts = GapBoundConstants(8.0, first.L, first.p_min,
                                   float(eps[:, horizon - 1].max()))
        rhs = gap_bound(consts, m, horizon, first.L0, first.f_star)
        assert lhs <= rhs


def test_exact_solves_reach_consensus_kkt_point():
    started = time.perf_counter()
    cfg = resolve({
        "strategy.kind": "fedadmm", "strategy.rho": "1.0", "strategy.solver": "exact",
        "clients.count": "10", "clients.fraction": "1.0", "rounds": "500",
        "data.source": "quadratic", "data.dim": "5", "data.seed": "0", "seed": "1",
    })
    result = run_experiment(cfg)
    theta_star, _ = quadratic_consensus_optimum(result.world.objectives)
    dual_sum = np.sum([c.y for c in result.clients], axis=0)
    assert float(np.linalg.norm(result.server.theta - theta_star)) <= 1e-6
    assert float(np.linalg.norm(dual_sum)) <= 1e-6
    assert time.perf_counter() - started < 2.0


REDUCTION_BASE = {
    "strategy.client_lr": "0.1", "strategy.epochs": "4", "strategy.batch_size": "8",
    "clients.count": "10", "clients.fraction": "0.3", "rounds": "50", "seed": "11",
    "data.source": "synthetic", "data.dim": "8", "data.classes": "3",
    "data.per_class": "60", "data.separation": "2.0",
}


def _reduction_run(**extra):
    raw = dict(REDUCTION_BASE)
    raw.update({k: str(v) for k, v in extra.items()})
    result = run_experiment(resolve(raw))
    return result, rounds_jsonl_text([r.to_json(False) for r in result.records])


def test_reduction_equivalences_bit_for_bit():
    frozen, frozen_text = _reduction_run(**{
        "strategy.kind": "fedadmm", "strategy.rho": "0.5",
        "strategy.dual_frozen": "true", "heterogeneity": "true",
    })
    prox, prox_text = _reduction_run(**{
        "strategy.kind": "fedprox", "strategy.rho": "0.5", "heterogeneity": "true",
    })
    assert frozen_text == prox_text
    assert np.array_equal(frozen.server.theta, prox.server.theta)

    # without the proximal pull FedProx collapses to FedAvg; fixed epochs so
    # neither consumes the heterogeneity stream
    flat, flat_text = _reduction_run(**{
        "strategy.kind": "fedprox", "strategy.rho": "0.0", "heterogeneity": "false",
    })
    avg, avg_text = _reduction_run(**{
        "strategy.kind": "fedavg", "heterogeneity": "false",
    })
    assert flat_text == avg_text
    assert np.array_equal(flat.server.theta, avg.server.theta)


def test_worker_count_never_changes_rounds_file(tmp_path):
    def run_with(workers: int):
        cfg = quad_verify_cfg(3, virtual=False).with_overrides({
            "rounds": 30, "workers": workers,
        })
        result = run_experiment(cfg, out_root=tmp_path / f"w{workers}")
        return (result.run_dir / "rounds.jsonl").read_bytes()

    assert run_with(1) == run_with(4)


def test_imbalanced_partition_reproduces_reference_statistics():
    for n, reference in ((60_000, (300.0, 171.03)), (50_000, (250.0, 142.52))):
        labels = np.repeat(np.arange(10), n // 10)
        parts = partition_imbalanced(labels, 200, 10_000, np.random.default_rng(0))
        stats = partition_stats(parts)
        assert abs(stats["mean"] - reference[0]) <= 0.01
        assert abs(stats["std"] - reference[1]) <= 0.01


def test_scaffold_uploads_exactly_twice_fedadmm():
    for dim in (10, 7840):
        totals = {}
        for kind in ("scaffold", "fedadmm"):
            raw = {
                "strategy.kind": kind, "strategy.client_lr": "0.01",
                "strategy.epochs": "2", "clients.count": "4",
                "clients.fraction": "0.5", "rounds": "8", "seed": "2",
                "data.source": "quadratic", "data.dim": str(dim),
            }
            if kind == "fedadmm":
                raw["strategy.rho"] = "1.0"
            result = run_experiment(resolve(raw))
            totals[kind] = sum(r.bytes_up for r in result.records)
        assert totals["scaffold"] == 2 * totals["fedadmm"]


RACE_BASE = {
    "strategy.epochs": "5", "strategy.batch_size": "20",
    "clients.count": "100", "clients.fraction": "0.1", "rounds": "100",
    "data.source": "synthetic", "data.dim": "50", "data.classes": "10",
    "data.per_class": "1000", "data.separation": "3.0",
    "partition.scheme": "shards", "partition.shards_per_client": "2",
    "data.seed": "0", "heterogeneity": "true",
}
# tuned per strategy on this protocol; every entry is its grid-search best
RACE_ENTRIES = {
    "fedadmm": {"strategy.kind": "fedadmm", "strategy.rho": "0.3",
                "strategy.client_lr": "0.2"},
    "fedsgd": {"strategy.kind": "fedsgd", "strategy.server_lr": "3.0"},
    "fedavg": {"strategy.kind": "fedavg", "strategy.client_lr": "0.1"},
    "fedprox": {"strategy.kind": "fedprox", "strategy.rho": "0.05",
                "strategy.client_lr": "0.2"},
}


def test_fedadmm_reaches_target_in_fewest_median_rounds():
    started = time.perf_counter()
    world = build_world(resolve(dict(RACE_BASE, **RACE_ENTRIES["fedavg"])))
    target = centralized_accuracy(world) - 0.02

    medians = {}
    for kind, extra in RACE_ENTRIES.items():
        outcomes = []
        for seed in (1, 2, 3, 4, 5):
            raw = dict(RACE_BASE, **extra)
            raw["seed"] = str(seed)
            raw["target_accuracy"] = repr(target)
            result = run_experiment(resolve(raw))
            outcomes.append(rounds_to_target(result.records, target))
        assert all(isinstance(v, int) for v in outcomes), (kind, outcomes)
        medians[kind] = statistics.median(outcomes)

    for baseline in ("fedsgd", "fedavg", "fedprox"):
        assert medians["fedadmm"] <= medians[baseline], medians
    assert time.perf_counter() - started < 120.0


def test_finite_difference_gradients_all_objective_kinds():
    rng = np.random.default_rng(0)
    data = tiny_dataset(seed=1, n=12, p=3, classes=2)

    diag = Quadratic(rng.uniform(0.5, 2.0, size=4), rng.normal(size=4))
    root = rng.normal(size=(4, 4))
    matrix = Quadratic(root @ root.T / 4.0 + 0.1 * np.eye(4), rng.normal(size=4))
    cases = [
        (diag, placeholder_dataset()),
        (matrix, placeholder_dataset()),
        (Logistic(3, 2, lam=0.01), data),
        (SmallNet(3, 4, 2, lam=0.01), data),
    ]
    for obj, dataset in cases:
        for _ in range(100):
            w = rng.normal(scale=1.5, size=obj.dim)
            g = eval_grad(obj, w, dataset)
            g_fd = fd_gradient(obj, w, dataset)
            assert rel_grad_error(g, g_fd) <= 1e-5
