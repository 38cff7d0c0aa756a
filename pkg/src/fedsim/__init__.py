"""Deterministic simulator for federated consensus optimization.

Five strategies (FedSGD, FedAvg, FedProx, SCAFFOLD, and the primal-dual
consensus method FedADMM) share one round interface over three hand-coded
objective families, with runtime-checkable convergence diagnostics.
"""

from .config import Config, load_file, parse_text, resolve
from .core import (
    ClientState,
    GapBoundConstants,
    ServerState,
    aug_lagrangian,
    aug_lagrangian_grad,
    augmented_model_mean,
    client_update_exact,
    client_update_sgd,
    gap_bound,
    inexactness_residual,
    lagrangian_floor,
    server_aggregate,
    stationarity_gap,
    update_message,
)
from .data import (
    load_cifar_bin,
    load_idx,
    partition_iid,
    partition_imbalanced,
    partition_shards,
    partition_stats,
    synth_mixture,
)
from .engine import (
    RoundRecord,
    RunResult,
    World,
    build_world,
    centralized_accuracy,
    draw_local_epochs,
    ensemble_smoothness,
    init_states,
    min_participation,
    quadratic_ensemble,
    rounds_to_target,
    run_experiment,
    sample_clients,
)
from .errors import ConfigError, DataFormatError, DivergenceError, FedsimError, NumericError
from .objectives import (
    Dataset,
    Logistic,
    Quadratic,
    SmallNet,
    eval_grad,
    eval_loss,
    lipschitz_bound,
    make_batch,
    quadratic_consensus_optimum,
)
from .strategies import FedAdmm, FedAvg, FedProx, FedSgd, Scaffold, make_strategy

__version__ = "0.1.0"
