"""Primal-dual consensus operations and their analysis certificates.

Each client i holds a local model w_i and a scaled dual y_i for the
consensus constraint w_i = theta. The per-client augmented Lagrangian is

    L_i(w, y, theta) = f_i(w) + y^T (w - theta) + (rho/2) ||w - theta||^2

A round updates active clients (inexact minimization of L_i followed by the
dual ascent step y <- y + rho (w - theta)) and moves the server model along
the mean change of the augmented models u_i = w_i + y_i / rho.

The module also carries the runtime-checkable pieces of the convergence
analysis: the solve-inexactness residual, the stationarity gap, the dual
step bound, the Lagrangian floor, and the averaged-gap bound constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DivergenceError
from .objectives import Dataset, Objective, Quadratic, eval_grad


@dataclass(frozen=True, eq=False)
class ClientState:
    """One client's local model, dual, and solve settings."""

    id: int
    w: np.ndarray
    y: np.ndarray
    shard: np.ndarray  # sorted sample indices into the client's dataset
    epochs_max: int
    lr: float
    batch_size: int | None = None  # None = full batch
    control: np.ndarray | None = None  # control variate (SCAFFOLD only)


@dataclass(frozen=True, eq=False)
class ServerState:
    """Server model plus the round's aggregation hyperparameters."""

    theta: np.ndarray
    eta: float
    rho: float
    round: int = 0
    control: np.ndarray | None = None  # server control variate (SCAFFOLD only)


def aug_lagrangian(
    obj: Objective, data: Dataset, w, y, theta, rho: float, batch=None
) -> float:
    """L_i(w, y, theta) evaluated on the batch (full dataset when None)."""
    from .objectives import eval_loss

    w = np.asarray(w, dtype=np.float64)
    diff = w - theta
    return eval_loss(obj, w, data, batch) + float(y @ diff) + 0.5 * rho * float(diff @ diff)


def aug_lagrangian_grad(
    obj: Objective, data: Dataset, w, y, theta, rho: float, batch=None
) -> np.ndarray:
    """Gradient of L_i with respect to w."""
    w = np.asarray(w, dtype=np.float64)
    return eval_grad(obj, w, data, batch) + y + rho * (w - theta)


def make_batches(shard: np.ndarray, batch_size: int | None, rng) -> list[np.ndarray]:
    """Shuffle the shard once and cut it into consecutive batches.

    Full-batch mode (batch_size None or >= shard size) consumes no
    randomness and returns the shard as a single batch.
    """
    n = shard.size
    if n == 0:
        raise ConfigError("client shard is empty")
    if batch_size is None or batch_size >= n:
        return [shard]
    if batch_size < 1:
        raise ConfigError("batch size must be >= 1")
    order = shard[rng.permutation(n)]
    return np.split(order, np.arange(batch_size, n, batch_size))


def sgd_solve(w0: np.ndarray, lr: float, epochs: int, batches, grad_fn, client_id: int) -> np.ndarray:
    """Run epochs x batches gradient steps; raise on a non-finite iterate."""
    w = np.array(w0, dtype=np.float64, copy=True)
    for epoch in range(epochs):
        for step, batch in enumerate(batches):
            w -= lr * grad_fn(w, batch)
            if not np.isfinite(w).all():
                raise DivergenceError(client_id, epoch, step)
    return w


def client_update_sgd(
    obj: Objective,
    data: Dataset,
    state: ClientState,
    theta: np.ndarray,
    rho: float,
    epochs: int,
    rng,
) -> ClientState:
    """Inexact local solve (warm-started at w_i) plus the dual ascent step."""
    if rho <= 0:
        raise ConfigError("the consensus penalty rho must be positive")
    if epochs < 1:
        raise ConfigError("local epochs must be >= 1")
    batches = make_batches(state.shard, state.batch_size, rng)
    slices = [(data.features[b], data.labels[b]) for b in batches]
    y = state.y

    def grad(w, batch_idx):
        X, labels = slices[batch_idx]
        return obj.batch_grad(w, X, labels) + y + rho * (w - theta)

    w_new = sgd_solve(state.w, state.lr, epochs, range(len(batches)), grad, state.id)
    y_new = y + rho * (w_new - theta)
    return replace(state, w=w_new, y=y_new)


def client_update_exact(
    obj: Objective, state: ClientState, theta: np.ndarray, rho: float
) -> ClientState:
    """Closed-form minimizer of L_i for quadratic objectives, plus dual step."""
    if not isinstance(obj, Quadratic):
        raise ConfigError("exact local solves are only available for quadratic objectives")
    if rho <= 0:
        raise ConfigError("the consensus penalty rho must be positive")
    d = obj.dim
    A = np.diag(obj.curvature) if obj.curvature.ndim == 1 else obj.curvature
    lhs = A + (obj.lam + rho) * np.eye(d)
    rhs = A @ obj.center - state.y + rho * theta
    w_new = np.linalg.solve(lhs, rhs)
    y_new = state.y + rho * (w_new - theta)
    return replace(state, w=w_new, y=y_new)


def inexactness_residual(obj: Objective, data: Dataset, w, y, batch=None) -> float:
    """Squared norm of the local stationarity error e = grad f_i(w) + y.

    For a state that just finished its dual step this equals the squared
    augmented-Lagrangian gradient at the pre-step dual, which is the
    quantity the solve-accuracy budget eps_i constrains.
    """
    e = eval_grad(obj, np.asarray(w, dtype=np.float64), data, batch) + y
    return float(e @ e)


def update_message(state_new: ClientState, state_old: ClientState, rho: float) -> np.ndarray:
    """Change of the augmented model u_i = w_i + y_i / rho across an update."""
    if rho <= 0:
        raise ConfigError("the consensus penalty rho must be positive")
    u_new = state_new.w + state_new.y / rho
    u_old = state_old.w + state_old.y / rho
    return u_new - u_old


def server_aggregate(server: ServerState, deltas: list[np.ndarray]) -> ServerState:
    """theta <- theta + (eta / |S|) * sum of update messages; round counter +1.

    Callers pass deltas in ascending client id so the reduction order (and
    therefore the float result) is independent of scheduling.
    """
    if not deltas:
        raise ConfigError("cannot aggregate an empty update set")
    total = np.sum(np.stack(deltas), axis=0)
    theta = server.theta + (server.eta / len(deltas)) * total
    return replace(server, theta=theta, round=server.round + 1)


def augmented_model_mean(states: list[ClientState], rho: float) -> np.ndarray:
    """(1/m) sum_i (w_i + y_i / rho)."""
    if rho <= 0:
        raise ConfigError("the consensus penalty rho must be positive")
    total = np.sum(np.stack([s.w + s.y / rho for s in states]), axis=0)
    return total / len(states)


def stationarity_gap(
    objectives: list[Objective],
    datasets: list[Dataset],
    states: list[ClientState],
    theta: np.ndarray,
    rho: float,
) -> float:
    """Joint first-order gap of (theta, w, y).

    Sum of the squared server gradient rho*(m*theta - sum_i u_i), the squared
    local augmented-Lagrangian gradients, and the squared consensus errors.
    Zero exactly at a KKT point of the consensus problem.
    """
    m = len(states)
    u_sum = np.sum(np.stack([s.w + s.y / rho for s in states]), axis=0)
    g_server = rho * (m * theta - u_sum)
    total = float(g_server @ g_server)
    for obj, data, s in zip(objectives, datasets, states):
        g_local = eval_grad(obj, s.w, data) + s.y + rho * (s.w - theta)
        diff = s.w - theta
        total += float(g_local @ g_local) + float(diff @ diff)
    return total


def dual_step_bound_holds(
    dy_sq: float, dw_sq: float, eps: float, L: float, slack: float = 1e-9
) -> bool:
    """Check ||y+ - y||^2 <= 8 eps + 2 L^2 ||w+ - w||^2 (+ float slack)."""
    return dy_sq <= 8.0 * eps + 2.0 * L * L * dw_sq + slack


def lagrangian_floor(f_star: float, eps_sum: float, L: float) -> float:
    """Lower bound f* - eps_sum / (2L) on the aggregate Lagrangian."""
    if L <= 0:
        raise ConfigError("smoothness constant must be positive")
    return f_star - eps_sum / (2.0 * L)


RHO_THRESHOLD_FACTOR = 1.0 + math.sqrt(5.0)


@dataclass(frozen=True)
class GapBoundConstants:
    """Constants of the averaged stationarity-gap bound.

    Requires rho > (1 + sqrt 5) L and a positive minimum participation
    probability; both are validated at construction.
    """

    rho: float
    L: float
    p_min: float
    eps_max: float = 0.0

    def __post_init__(self):
        if self.L <= 0:
            raise ConfigError("smoothness constant must be positive")
        threshold = RHO_THRESHOLD_FACTOR * self.L
        if self.rho <= threshold:
            raise ConfigError(
                f"rho={self.rho:g} must exceed (1+sqrt(5))*L = {threshold:.6g} "
                "for the gap bound to apply"
            )
        if not 0.0 < self.p_min <= 1.0:
            raise ConfigError("minimum participation probability must be in (0, 1]")
        if self.eps_max < 0:
            raise ConfigError("eps_max must be >= 0")

    @property
    def c1(self) -> float:
        return self.p_min * ((self.rho - 2.0 * self.L) / 2.0 - 2.0 * self.L**2 / self.rho)

    @property
    def c2(self) -> float:
        return 3.0 * (self.L**2 + self.rho**2) + 2.0 * (1.0 + 2.0 * self.L**2 / self.rho**2)

    @property
    def c3(self) -> float:
        return (
            3.0
            + 16.0 / self.rho**2
            + (self.c2 / self.c1) * (self.rho + 16.0 * self.L) / (2.0 * self.L * self.rho)
        )


def gap_bound(consts: GapBoundConstants, m: int, T: int, L0: float, f_star: float) -> float:
    """Upper bound on (1/mT) sum_{t<T} E[V^t] for T rounds from level L0.

    L0 is the aggregate Lagrangian at initialization (= sum_i f_i(theta^0)
    under consensus initialization) and f_star any lower bound on sum_i f_i.
    """
    if m < 1 or T < 1:
        raise ConfigError("m and T must be >= 1")
    head = L0 - f_star + (m / (2.0 * consts.L)) * consts.eps_max
    return (consts.c2 / consts.c1) * head / (m * T) + consts.c3 * consts.eps_max
