"""Deterministic single-process experiment engine.

A run is a pure function of (config, seed): client sampling, local epoch
draws, and batch shuffles each come from their own counter-based stream, so
results are byte-identical across worker counts and unchanged by adding
other strategies to a study.

With ``verify.enabled`` (fedadmm only) every round additionally measures
the analysis quantities: the stationarity gap of the state entering the
round, the aggregate augmented Lagrangian of the state leaving it, solve
residuals, and four checkable flags (server tracking identity, dual step
bound, Lagrangian floor, running averaged-gap bound).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import streams
from .artifacts import write_run_dir
from .config import ETA_TRACKING, Config, schedule_value
from .core import (
    ClientState,
    GapBoundConstants,
    ServerState,
    aug_lagrangian,
    augmented_model_mean,
    dual_step_bound_holds,
    gap_bound,
    inexactness_residual,
    lagrangian_floor,
    stationarity_gap,
)
from .data import (
    load_cifar_bin,
    load_idx,
    mixture_means,
    partition_iid,
    partition_imbalanced,
    partition_shards,
    synth_mixture,
)
from .errors import ConfigError
from .objectives import (
    Dataset,
    Logistic,
    Objective,
    Quadratic,
    SmallNet,
    eval_loss,
    lipschitz_bound,
    placeholder_dataset,
    quadratic_consensus_optimum,
)
from .strategies import Strategy, make_strategy


@dataclass
class World:
    """Per-client objectives and data plus the shared initial model."""

    objectives: list[Objective]
    datasets: list[Dataset]
    shards: list[np.ndarray]
    test: Dataset | None
    theta0: np.ndarray

    @property
    def m(self) -> int:
        return len(self.objectives)

    @property
    def d(self) -> int:
        return self.theta0.size


def quadratic_ensemble(m: int, dim: int, curvature_range: tuple[float, float],
                       center_scale: float, rng, lam: float = 0.0) -> list[Quadratic]:
    """Random diagonal PSD quadratics: the oracle family for analysis checks."""
    lo, hi = curvature_range
    objs = []
    for _ in range(m):
        curv = rng.uniform(lo, hi, size=dim)
        center = rng.normal(0.0, center_scale, size=dim)
        objs.append(Quadratic(curv, center, lam=lam))
    return objs


def _partition(cfg: Config, labels: np.ndarray, rng) -> list[np.ndarray]:
    m = cfg["clients.count"]
    scheme = cfg["partition.scheme"]
    if scheme == "iid":
        return partition_iid(labels.shape[0], m, rng)
    if scheme == "shards":
        return partition_shards(labels, m, cfg["partition.shards_per_client"], rng)
    return partition_imbalanced(labels, m, cfg["partition.total_shards"], rng)


def build_world(cfg: Config) -> World:
    """Datasets, per-client objectives, shards, and the initial model."""
    m = cfg["clients.count"]
    data_seed = cfg["data.seed"]
    source = cfg["data.source"]

    if source == "quadratic":
        rng = streams.stream(data_seed, streams.DATA, 0)
        objs = quadratic_ensemble(
            m,
            cfg["data.dim"],
            (cfg["data.curvature_min"], cfg["data.curvature_max"]),
            cfg["data.center_scale"],
            rng,
            lam=cfg["model.lambda"],
        )
        data = placeholder_dataset()
        shard = np.zeros(1, dtype=np.int64)
        theta0 = np.zeros(cfg["data.dim"])
        return World(objs, [data] * m, [shard] * m, None, theta0)

    if source == "synthetic":
        means = mixture_means(
            cfg["data.classes"], cfg["data.dim"], cfg["data.separation"],
            streams.stream(data_seed, streams.DATA, 0),
        )
        train = synth_mixture(
            cfg["data.classes"], cfg["data.per_class"], cfg["data.dim"],
            cfg["data.separation"], streams.stream(data_seed, streams.DATA, 1),
            name="synthetic-train", means=means,
        )
        test = synth_mixture(
            cfg["data.classes"], cfg["data.test_per_class"], cfg["data.dim"],
            cfg["data.separation"], streams.stream(data_seed, streams.DATA, 2),
            name="synthetic-test", means=means,
        )
    elif source == "idx":
        train = load_idx(cfg["data.train_images"], cfg["data.train_labels"], name="idx-train")
        test = load_idx(cfg["data.test_images"], cfg["data.test_labels"], name="idx-test")
    else:  # cifar
        train = load_cifar_bin(
            [p.strip() for p in cfg["data.train_bins"].split(",") if p.strip()], name="cifar-train"
        )
        test = load_cifar_bin(cfg["data.test_bin"], name="cifar-test") if cfg["data.test_bin"] else None

    classes = train.n_classes if test is None else max(train.n_classes, test.n_classes)
    if cfg["model.kind"] == "logistic":
        obj: Objective = Logistic(train.n_features, classes, lam=cfg["model.lambda"])
    else:
        obj = SmallNet(
            train.n_features, cfg["model.hidden"], classes,
            lam=cfg["model.lambda"], declared_lipschitz=cfg["model.declared_lipschitz"],
        )
    shards = _partition(cfg, train.labels, streams.stream(data_seed, streams.DATA, 3))
    init_rng = streams.stream(data_seed, streams.INIT, 0)
    theta0 = (init_rng.random(obj.dim) * 2.0 - 1.0) * cfg["init.scale"]
    return World([obj] * m, [train] * m, shards, test, theta0)


def init_states(world: World, cfg: Config, strategy: Strategy) -> tuple[ServerState, list[ClientState]]:
    """Consensus initialization: w_i = theta0, duals and controls at zero."""
    theta0 = world.theta0
    batch_size = cfg["strategy.batch_size"] or None
    eta = cfg["strategy.eta"]
    server = ServerState(
        theta=theta0.copy(),
        eta=1.0 if eta == ETA_TRACKING else eta,
        rho=cfg["strategy.rho"],
        round=0,
        control=np.zeros_like(theta0) if strategy.uses_controls else None,
    )
    clients = [
        ClientState(
            id=i,
            w=theta0.copy(),
            y=np.zeros_like(theta0),
            shard=world.shards[i],
            epochs_max=cfg["strategy.epochs"],
            lr=cfg["strategy.client_lr"],
            batch_size=batch_size,
            control=np.zeros_like(theta0) if strategy.uses_controls else None,
        )
        for i in range(world.m)
    ]
    return server, clients


def sample_clients(m: int, fraction: float, scheme: str, rng) -> np.ndarray:
    """Active set for one round; sorted ascending.

    uniform: exactly ceil(fraction * m) distinct clients.
    bernoulli: each client independently with probability ``fraction``
    (may be empty, in which case the round is skipped).
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError("participation fraction must be in (0, 1]")
    if scheme == "uniform":
        k = math.ceil(fraction * m)
        return np.sort(rng.choice(m, size=k, replace=False))
    if scheme == "bernoulli":
        return np.flatnonzero(rng.random(m) < fraction)
    raise ConfigError(f"unknown sampling scheme '{scheme}'")


def draw_local_epochs(strategy: Strategy, epochs_max: int, heterogeneous: bool, rng) -> int:
    """E_i ~ Uniform[1, E] for strategies that tolerate it, else exactly E."""
    if heterogeneous and strategy.supports_heterogeneity:
        return int(rng.integers(1, epochs_max + 1))
    return epochs_max


def min_participation(cfg: Config) -> float:
    """Exact per-round participation probability of each client."""
    m = cfg["clients.count"]
    if cfg["clients.sampling"] == "uniform":
        return math.ceil(cfg["clients.fraction"] * m) / m
    return cfg["clients.fraction"]


def ensemble_smoothness(world: World) -> float:
    """max_i of the per-client smoothness bounds."""
    worst = 0.0
    for obj, data, shard in zip(world.objectives, world.datasets, world.shards):
        if isinstance(obj, Logistic):
            sub = Dataset(data.features[shard], data.labels[shard], data.n_classes, name="shard")
            worst = max(worst, lipschitz_bound(obj, sub))
        else:
            worst = max(worst, lipschitz_bound(obj, data))
    return worst


def objective_floor(world: World) -> float:
    """Exact f* for quadratic ensembles; 0 for nonnegative losses."""
    if isinstance(world.objectives[0], Quadratic):
        return quadratic_consensus_optimum(world.objectives)[1]
    return 0.0


@dataclass
class RoundRecord:
    round: int
    active: list[int]
    train_loss: float
    test_acc: float | None
    bytes_up: int
    bytes_down: int
    V_t: float | None = None
    L_t: float | None = None
    flags: dict | None = None
    wall_time_s: float = 0.0

    def to_json(self, verify: bool) -> dict:
        rec = {
            "round": self.round,
            "active": self.active,
            "train_loss": self.train_loss,
            "test_acc": self.test_acc,
            "bytes_up": self.bytes_up,
            "bytes_down": self.bytes_down,
        }
        if verify:
            rec["V_t"] = self.V_t
            rec["L_t"] = self.L_t
            rec["flags"] = self.flags
        return rec


@dataclass
class VerifyState:
    """Running analysis bookkeeping for one verify-mode run."""

    L: float
    f_star: float
    p_min: float
    L0: float
    last_resid: np.ndarray  # ||grad f_i(w_i) + y_i||^2 at the current state
    eps_max: float  # running max over init residuals and all measured solves
    V_sum: float = 0.0
    heuristic_L: bool = False
    eps_history: list = field(default_factory=list)  # eps_max after each round


@dataclass
class RunResult:
    cfg: Config
    records: list[RoundRecord]
    server: ServerState
    clients: list[ClientState]
    world: World
    verify: VerifyState | None
    run_dir: object | None = None


def _metrics(world: World, theta: np.ndarray) -> tuple[float, float | None]:
    losses = [
        eval_loss(obj, theta, data, shard)
        for obj, data, shard in zip(world.objectives, world.datasets, world.shards)
    ]
    train_loss = float(np.mean(losses))
    test_acc = None
    obj = world.objectives[0]
    if world.test is not None and hasattr(obj, "predict"):
        pred = obj.predict(theta, world.test.features)
        test_acc = float(np.mean(pred == world.test.labels))
    return train_loss, test_acc


def _aggregate_lagrangian(world, clients, theta, rho) -> float:
    return float(
        sum(
            aug_lagrangian(obj, data, s.w, s.y, theta, rho, shard)
            for obj, data, shard, s in zip(world.objectives, world.datasets, world.shards, clients)
        )
    )


def _init_verify(world: World, cfg: Config) -> VerifyState:
    theta0 = world.theta0
    resid = np.array(
        [
            inexactness_residual(obj, data, theta0, np.zeros_like(theta0), shard)
            for obj, data, shard in zip(world.objectives, world.datasets, world.shards)
        ]
    )
    obj0 = world.objectives[0]
    return VerifyState(
        L=ensemble_smoothness(world),
        f_star=objective_floor(world),
        p_min=min_participation(cfg),
        L0=float(
            sum(
                eval_loss(obj, theta0, data, shard)
                for obj, data, shard in zip(world.objectives, world.datasets, world.shards)
            )
        ),
        last_resid=resid,
        eps_max=float(resid.max()),
        heuristic_L=getattr(obj0, "heuristic_smoothness", False),
    )


def run_experiment(cfg: Config, out_root=None) -> RunResult:
    """Run one seed of an experiment; optionally write the run directory.

    ``out_root`` overrides ``output.root``; with neither set nothing is
    written and the result lives only in memory.
    """
    world = build_world(cfg)
    strategy_kwargs = {}
    kind = cfg["strategy.kind"]
    if kind == "fedsgd":
        strategy_kwargs["server_lr"] = cfg["strategy.server_lr"]
    elif kind == "scaffold":
        strategy_kwargs["server_lr"] = cfg["strategy.server_lr"]
        strategy_kwargs["freeze_controls"] = cfg["strategy.freeze_controls"]
    elif kind == "fedadmm":
        strategy_kwargs["solver"] = cfg["strategy.solver"]
        strategy_kwargs["dual_frozen"] = cfg["strategy.dual_frozen"]
    strategy = make_strategy(kind, **strategy_kwargs)

    server, clients = init_states(world, cfg, strategy)
    m = world.m
    seed = cfg["seed"]
    rounds = cfg["rounds"]
    target = cfg["target_accuracy"]
    verify_on = cfg["verify.enabled"]
    virtual = verify_on and cfg["verify.virtual"]
    verify = _init_verify(world, cfg) if verify_on else None
    tracking_eta = cfg["strategy.eta"] == ETA_TRACKING
    base_eta = 1.0 if tracking_eta else cfg["strategy.eta"]
    base_rho = cfg["strategy.rho"]
    up_per_client, down_per_client = strategy.message_bytes(world.d)
    heterogeneous = cfg["heterogeneity"]

    records: list[RoundRecord] = []
    wall_times: list[float] = []
    pool = ThreadPoolExecutor(cfg["workers"]) if cfg["workers"] > 1 else None
    try:
        for t in range(1, rounds + 1):
            started = time.perf_counter()
            rho_t = schedule_value(cfg["schedule.rho"], t, base_rho)
            server = replace(server, rho=rho_t)

            V_t = None
            if verify_on:
                V_t = stationarity_gap(
                    world.objectives, world.datasets, clients, server.theta, rho_t
                )
                verify.V_sum += V_t

            active = sample_clients(m, cfg["clients.fraction"], cfg["clients.sampling"],
                                    streams.stream(seed, streams.SAMPLING, t))
            active_set = set(int(i) for i in active)
            todo = list(range(m)) if virtual else [int(i) for i in active]

            def solve(i: int):
                epochs = draw_local_epochs(
                    strategy, clients[i].epochs_max, heterogeneous,
                    streams.stream(seed, streams.EPOCHS, t, i),
                )
                rng = streams.stream(seed, streams.BATCHES, t, i)
                new_state, message = strategy.local_step(
                    world.objectives[i], world.datasets[i], clients[i], server, epochs, rng
                )
                resid = None
                if verify_on:
                    resid = inexactness_residual(
                        world.objectives[i], world.datasets[i], new_state.w, new_state.y,
                        world.shards[i],
                    )
                return i, new_state, message, resid

            results = list(pool.map(solve, todo)) if pool else [solve(i) for i in todo]

            old_clients = clients
            clients = list(clients)
            messages = []
            active_resids: dict[int, float] = {}
            for i, new_state, message, resid in results:
                if verify_on and resid is not None:
                    verify.eps_max = max(verify.eps_max, resid)
                if i in active_set:
                    clients[i] = new_state
                    messages.append(message)
                    if resid is not None:
                        active_resids[i] = resid
            if verify_on:
                verify.eps_history.append(verify.eps_max)

            eta_t = (
                len(active) / m if tracking_eta
                else schedule_value(cfg["schedule.eta"], t, base_eta)
            )
            server = replace(server, eta=eta_t)
            if messages:
                server = strategy.aggregate(server, messages, m)
            else:
                server = replace(server, round=server.round + 1)

            train_loss, test_acc = _metrics(world, server.theta)
            record = RoundRecord(
                round=t,
                active=[int(i) for i in active],
                train_loss=train_loss,
                test_acc=test_acc,
                bytes_up=len(active) * up_per_client,
                bytes_down=len(active) * down_per_client,
                V_t=V_t,
            )

            if verify_on:
                flags = {}
                if tracking_eta:
                    u_mean = augmented_model_mean(clients, rho_t)
                    flags["tracking"] = bool(
                        np.linalg.norm(server.theta - u_mean) <= 1e-9
                    )
                else:
                    flags["tracking"] = None

                dual_ok = True
                for i, resid in active_resids.items():
                    eps_i = max(verify.last_resid[i], resid)
                    dy = clients[i].y - old_clients[i].y
                    dw = clients[i].w - old_clients[i].w
                    if not dual_step_bound_holds(
                        float(dy @ dy), float(dw @ dw), eps_i, verify.L
                    ):
                        dual_ok = False
                flags["dual_step"] = dual_ok

                for i, resid in active_resids.items():
                    verify.last_resid[i] = resid

                L_post = _aggregate_lagrangian(world, clients, server.theta, rho_t)
                floor = lagrangian_floor(verify.f_star, float(verify.last_resid.sum()), verify.L)
                flags["floor"] = bool(L_post >= floor - 1e-9 * (1.0 + abs(floor)))

                if virtual:
                    try:
                        consts = GapBoundConstants(rho_t, verify.L, verify.p_min, verify.eps_max)
                        bound = gap_bound(consts, m, t, verify.L0, verify.f_star)
                        flags["gap_bound"] = bool(
                            verify.V_sum / (m * t) <= bound * (1.0 + 1e-12)
                        )
                    except ConfigError:
                        flags["gap_bound"] = None
                else:
                    flags["gap_bound"] = None

                record.L_t = L_post
                record.flags = flags

            record.wall_time_s = time.perf_counter() - started
            records.append(record)
            wall_times.append(record.wall_time_s)
            if target is not None and test_acc is not None and test_acc >= target:
                break
    finally:
        if pool:
            pool.shutdown()

    run_dir = None
    root = out_root if out_root is not None else (cfg["output.root"] or None)
    if root:
        run_dir = write_run_dir(root, cfg, [r.to_json(verify_on) for r in records], wall_times)
    return RunResult(cfg, records, server, clients, world, verify, run_dir)


def rounds_to_target(records, target: float | None):
    """1-based first round whose test accuracy reaches the target.

    Returns the string sentinel ``"<T>+"`` when the target is never reached
    within the recorded rounds.
    """
    total = 0
    for rec in records:
        if isinstance(rec, dict):
            rnd, acc = rec["round"], rec.get("test_acc")
        else:
            rnd, acc = rec.round, rec.test_acc
        total = rnd
        if target is not None and acc is not None and acc >= target:
            return rnd
    return f"{total}+"


def centralized_accuracy(world: World, lr: float = 0.5, epochs: int = 40,
                         batch_size: int = 100, seed: int = 0) -> float:
    """Test accuracy of plain centralized minibatch SGD on the pooled data.

    Reference point for picking federated accuracy targets.
    """
    if world.test is None or not hasattr(world.objectives[0], "predict"):
        raise ConfigError("centralized reference needs a classification world")
    obj = world.objectives[0]
    data = world.datasets[0]
    rng = streams.stream(seed, streams.INIT, 1)
    w = world.theta0.copy()
    n = data.n
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            w -= lr * obj.batch_grad(w, data.features[batch], data.labels[batch])
    pred = obj.predict(w, world.test.features)
    return float(np.mean(pred == world.test.labels))
