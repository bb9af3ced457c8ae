"""Configuration-driven orchestration: data prep, training runs, reports."""

from .config import (
    CompressionSection,
    DataSection,
    ExperimentConfig,
    MetricsSection,
    ModelSection,
    apply_overrides,
    load_config,
)
from .central import train_central
from .experiments import (
    PreparedExperiment,
    prepare_experiment,
    run_compress_eval,
    run_prepare_data,
    run_train_central,
    run_train_federated,
)
from .report import emit_report

__all__ = [
    "CompressionSection",
    "DataSection",
    "ExperimentConfig",
    "MetricsSection",
    "ModelSection",
    "apply_overrides",
    "load_config",
    "train_central",
    "PreparedExperiment",
    "prepare_experiment",
    "run_compress_eval",
    "run_prepare_data",
    "run_train_central",
    "run_train_federated",
    "emit_report",
]
