"""Shared fixtures-in-code for the test suite.

Keeps the independent oracles (finite differences, closed forms) in one
place so every test module checks against the same reference arithmetic.
"""

from __future__ import annotations

import numpy as np

from fedsim.config import resolve
from fedsim.objectives import Dataset, eval_loss


def fd_gradient(obj, w, data, batch=None) -> np.ndarray:
    """Central-difference gradient with per-coordinate step 1e-6*(1+|w_j|)."""
    w = np.asarray(w, dtype=np.float64)
    g = np.empty_like(w)
    for j in range(w.size):
        h = 1e-6 * (1.0 + abs(w[j]))
        wp = w.copy()
        wp[j] += h
        wm = w.copy()
        wm[j] -= h
        g[j] = (eval_loss(obj, wp, data, batch) - eval_loss(obj, wm, data, batch)) / (2.0 * h)
    return g


def rel_grad_error(g, g_fd) -> float:
    denom = max(float(np.linalg.norm(g_fd)), 1e-12)
    return float(np.linalg.norm(g - g_fd)) / denom


def tiny_dataset(seed: int = 0, n: int = 12, p: int = 3, classes: int = 2) -> Dataset:
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n, p))
    labels = rng.integers(0, classes, size=n)
    return Dataset(features, labels, classes, name=f"tiny-{seed}")


def quad_raw(**extra) -> dict[str, str]:
    """Raw config strings for a small quadratic-world experiment."""
    raw = {
        "strategy.kind": "fedadmm",
        "strategy.rho": "1.0",
        "strategy.client_lr": "0.1",
        "strategy.epochs": "2",
        "clients.count": "4",
        "clients.fraction": "0.5",
        "rounds": "3",
        "data.source": "quadratic",
        "data.dim": "3",
    }
    raw.update({k: str(v) for k, v in extra.items()})
    return raw


def synth_raw(**extra) -> dict[str, str]:
    """Raw config strings for a small synthetic classification experiment."""
    raw = {
        "strategy.kind": "fedavg",
        "strategy.client_lr": "0.1",
        "strategy.epochs": "2",
        "strategy.batch_size": "8",
        "clients.count": "5",
        "clients.fraction": "0.4",
        "rounds": "3",
        "heterogeneity": "false",
        "data.source": "synthetic",
        "data.dim": "4",
        "data.classes": "3",
        "data.per_class": "30",
        "partition.scheme": "iid",
    }
    raw.update({k: str(v) for k, v in extra.items()})
    return raw


def make_config(raw: dict[str, str]):
    return resolve(raw)
