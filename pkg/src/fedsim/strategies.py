"""Federated optimization strategies sharing one round interface.

A strategy turns (client state, server state, drawn epochs, rng) into a new
client state plus an update message, and folds collected messages into a new
server state. All five strategies share the same batch construction and SGD
loop, so documented reductions (FedProx with frozen duals == FedADMM's
dual-frozen mode, FedProx with rho=0 == FedAvg, SCAFFOLD with suppressed
controls == FedAvg) hold bit-for-bit, not just approximately.

Update messages per strategy:
  fedsgd    full-batch gradient at theta
  fedavg    w' - theta after E epochs of local SGD from theta
  fedprox   w' - theta, local SGD on f_i + (rho/2)||w - theta||^2 from theta
  scaffold  (w' - theta, c_i' - c_i) with variance-reduced steps
  fedadmm   change of the augmented model u_i = w_i + y_i / rho
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import (
    ClientState,
    ServerState,
    client_update_exact,
    client_update_sgd,
    make_batches,
    server_aggregate,
    sgd_solve,
    update_message,
)
from .errors import ConfigError
from .objectives import Dataset, Objective, eval_grad

FLOAT_BYTES = 8


def _scaled_mean(vectors: list[np.ndarray], scale: float) -> np.ndarray:
    """(scale / n) * sum(vectors), the one float expression every model
    aggregate shares so documented reductions stay bit-for-bit."""
    return (scale / len(vectors)) * np.sum(np.stack(vectors), axis=0)


def _prox_solve(obj, data, state, theta, rho, epochs, rng):
    """E epochs of minibatch SGD from theta on f_i (+ proximal term when rho>0)."""
    batches = make_batches(state.shard, state.batch_size, rng)
    slices = [(data.features[b], data.labels[b]) for b in batches]
    if rho:

        def grad(w, b):
            X, labels = slices[b]
            return obj.batch_grad(w, X, labels) + rho * (w - theta)

    else:

        def grad(w, b):
            X, labels = slices[b]
            return obj.batch_grad(w, X, labels)

    return sgd_solve(theta, state.lr, epochs, range(len(batches)), grad, state.id)


class Strategy:
    """Round interface shared by all strategies."""

    kind: str = ""
    uses_duals = False
    uses_controls = False
    supports_heterogeneity = False

    def local_step(self, obj: Objective, data: Dataset, state: ClientState,
                   server: ServerState, epochs: int, rng):
        raise NotImplementedError

    def aggregate(self, server: ServerState, messages: list, m_total: int) -> ServerState:
        raise NotImplementedError

    def message_bytes(self, d: int) -> tuple[int, int]:
        """(upload, download) bytes per active client per round."""
        return FLOAT_BYTES * d, FLOAT_BYTES * d


@dataclass(frozen=True)
class FedSgd(Strategy):
    """One full-batch gradient per active client; server gradient step."""

    server_lr: float = 0.1
    kind = "fedsgd"

    def local_step(self, obj, data, state, server, epochs, rng):
        g = eval_grad(obj, server.theta, data, state.shard)
        return state, g

    def aggregate(self, server, messages, m_total):
        theta = server.theta - _scaled_mean(messages, self.server_lr)
        return replace(server, theta=theta, round=server.round + 1)


@dataclass(frozen=True)
class FedAvg(Strategy):
    """Local SGD from theta; server averages the returned models."""

    kind = "fedavg"

    def local_step(self, obj, data, state, server, epochs, rng):
        w_new = _prox_solve(obj, data, state, server.theta, 0.0, epochs, rng)
        return replace(state, w=w_new), w_new - server.theta

    def aggregate(self, server, messages, m_total):
        theta = server.theta + _scaled_mean(messages, 1.0)
        return replace(server, theta=theta, round=server.round + 1)


@dataclass(frozen=True)
class FedProx(Strategy):
    """FedAvg plus a proximal pull toward theta (penalty = server.rho).

    Equivalently the dual-frozen consensus method: rho=0 is allowed only to
    express the FedAvg reduction.
    """

    kind = "fedprox"
    supports_heterogeneity = True

    def local_step(self, obj, data, state, server, epochs, rng):
        w_new = _prox_solve(obj, data, state, server.theta, server.rho, epochs, rng)
        return replace(state, w=w_new), w_new - server.theta

    def aggregate(self, server, messages, m_total):
        theta = server.theta + _scaled_mean(messages, 1.0)
        return replace(server, theta=theta, round=server.round + 1)


@dataclass(frozen=True)
class Scaffold(Strategy):
    """Variance-reduced local SGD with client and server control variates.

    Control variates refresh via the local-step rule
    c_i' = c_i - c + (theta - w') / (K eta_i) with K the number of local
    steps taken. ``freeze_controls`` suppresses corrections and refreshes,
    reducing the method to FedAvg (with server_lr = 1).
    """

    server_lr: float = 1.0
    freeze_controls: bool = False
    kind = "scaffold"
    uses_controls = True

    def local_step(self, obj, data, state, server, epochs, rng):
        theta = server.theta
        if self.freeze_controls:
            w_new = _prox_solve(obj, data, state, theta, 0.0, epochs, rng)
            dc = np.zeros_like(theta)
            return replace(state, w=w_new), (w_new - theta, dc)

        batches = make_batches(state.shard, state.batch_size, rng)
        slices = [(data.features[b], data.labels[b]) for b in batches]
        correction = server.control - state.control

        def grad(w, b):
            X, labels = slices[b]
            return obj.batch_grad(w, X, labels) + correction

        w_new = sgd_solve(theta, state.lr, epochs, range(len(batches)), grad, state.id)
        k_steps = epochs * len(batches)
        c_new = state.control - server.control + (theta - w_new) / (k_steps * state.lr)
        dc = c_new - state.control
        return replace(state, w=w_new, control=c_new), (w_new - theta, dc)

    def aggregate(self, server, messages, m_total):
        theta = server.theta + _scaled_mean([msg[0] for msg in messages], self.server_lr)
        dc = _scaled_mean([msg[1] for msg in messages], 1.0)
        control = server.control + (len(messages) / m_total) * dc
        return replace(server, theta=theta, control=control, round=server.round + 1)

    def message_bytes(self, d):
        # model and control variate travel together, both directions
        return 2 * FLOAT_BYTES * d, 2 * FLOAT_BYTES * d


@dataclass(frozen=True)
class FedAdmm(Strategy):
    """Inexact consensus method with per-client duals.

    ``solver`` picks the local minimizer of the augmented Lagrangian:
    "sgd" (warm-started minibatch SGD) or "exact" (closed form, quadratic
    objectives only). ``dual_frozen`` pins y_i = 0 and starts the solve at
    theta, which is exactly FedProx; it exists to express that reduction.
    """

    solver: str = "sgd"
    dual_frozen: bool = False
    kind = "fedadmm"
    uses_duals = True
    supports_heterogeneity = True

    def __post_init__(self):
        if self.solver not in ("sgd", "exact"):
            raise ConfigError(f"unknown local solver '{self.solver}' (want sgd or exact)")

    def local_step(self, obj, data, state, server, epochs, rng):
        rho = server.rho
        if self.dual_frozen:
            w_new = _prox_solve(obj, data, state, server.theta, rho, epochs, rng)
            return replace(state, w=w_new), w_new - server.theta
        if self.solver == "exact":
            new_state = client_update_exact(obj, state, server.theta, rho)
        else:
            new_state = client_update_sgd(obj, data, state, server.theta, rho, epochs, rng)
        return new_state, update_message(new_state, state, rho)

    def aggregate(self, server, messages, m_total):
        return server_aggregate(server, messages)


STRATEGIES = {cls.kind: cls for cls in (FedSgd, FedAvg, FedProx, Scaffold, FedAdmm)}


def make_strategy(kind: str, **kwargs) -> Strategy:
    if kind not in STRATEGIES:
        raise ConfigError(f"unknown strategy '{kind}' (choose from {sorted(STRATEGIES)})")
    return STRATEGIES[kind](**kwargs)
