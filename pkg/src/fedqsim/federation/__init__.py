"""Coordinator-side simulation of federated training rounds."""

from .aggregation import AggregationState, accumulate
from .config import Algorithm, FederationConfig, RoundPlan, StepCounter
from .simulator import (
    RoundResult,
    TrainingHooks,
    Transport,
    PlainTransport,
    client_update,
    expected_round_steps,
    load_checkpoint,
    make_queues,
    run_fedavg_round,
    run_fedq_round,
    run_training,
    subsample_clients,
)

__all__ = [
    "AggregationState",
    "accumulate",
    "Algorithm",
    "FederationConfig",
    "RoundPlan",
    "StepCounter",
    "RoundResult",
    "TrainingHooks",
    "Transport",
    "PlainTransport",
    "client_update",
    "expected_round_steps",
    "load_checkpoint",
    "make_queues",
    "run_fedavg_round",
    "run_fedq_round",
    "run_training",
    "subsample_clients",
]
