"""Federated training: strategies, aggregation, clients, engines."""

from .aggregate import aggregate_attention, aggregate_average, attention_weights
from .checkpoint import load_checkpoint, save_checkpoint
from .clients import (
    ClientData,
    ClientState,
    build_client_data,
    local_sgd_epoch,
    local_sgd_steps,
    meta_batches,
    meta_step,
    meta_update,
)
from .engine import (
    EngineContext,
    EvalContext,
    TrainedBundle,
    adapted_params,
    evaluate_adapted,
    run_centralized,
    run_fedirt,
    run_local,
    run_scenario1,
    run_scenario2,
    train_strategy,
)
from .irt import irt_confidence, irt_interpolate, mean_predictive_likelihood, rasch_fit
from .strategy import StrategyConfig, parse_strategy

__all__ = [
    "ClientData",
    "ClientState",
    "EngineContext",
    "EvalContext",
    "StrategyConfig",
    "TrainedBundle",
    "adapted_params",
    "aggregate_attention",
    "aggregate_average",
    "attention_weights",
    "build_client_data",
    "evaluate_adapted",
    "irt_confidence",
    "irt_interpolate",
    "load_checkpoint",
    "local_sgd_epoch",
    "local_sgd_steps",
    "mean_predictive_likelihood",
    "meta_batches",
    "meta_step",
    "meta_update",
    "parse_strategy",
    "rasch_fit",
    "run_centralized",
    "run_fedirt",
    "run_local",
    "run_scenario1",
    "run_scenario2",
    "save_checkpoint",
    "train_strategy",
]
