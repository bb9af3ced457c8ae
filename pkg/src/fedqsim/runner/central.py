"""Central (non-federated) training baseline."""

from __future__ import annotations

import time
from typing import Callable

from ..metrics import MetricSeries, MetricsRecord
from ..nn import layers as L
from ..nn.losses import LossKind
from ..nn.network import (
    BatchNormState,
    init_parameters,
    loss_and_param_gradients,
    sgd_step_inplace,
    validate_model_spec,
)
from ..nn.params import ParameterSet
from ..errors import ConfigurationError
from ..seeds import substream


def _has_batchnorm(model_spec: list[L.LayerSpec]) -> bool:
    return any(isinstance(layer, L.BatchNorm) for layer in model_spec)


def train_central(
    model_spec: list[L.LayerSpec],
    loss_kind: LossKind,
    train_dataset,
    *,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    master_seed: int,
    eval_fn: Callable[[ParameterSet, BatchNormState | None], dict[str, float]] | None = None,
    initial_params: ParameterSet | None = None,
    eval_every: int = 1,
) -> tuple[ParameterSet, BatchNormState | None, MetricSeries]:
    """Plain mini-batch SGD over the whole corpus; the non-federated baseline.

    Running-statistics normalization is supported here (unlike federated
    runs): batch statistics drive training, the tracked running estimates
    drive evaluation.  Record ``round`` counts epochs, 0 being the initial
    model; ``local_steps`` counts gradient steps per epoch.
    """
    validate_model_spec(model_spec)
    if epochs < 0:
        raise ConfigurationError(f"epochs must be non-negative, got {epochs}")
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be positive, got {batch_size}")
    if not learning_rate > 0:
        raise ConfigurationError(f"learning_rate must be positive, got {learning_rate}")
    if eval_every < 1:
        raise ConfigurationError(f"eval_every must be >= 1, got {eval_every}")
    if len(train_dataset) == 0:
        raise ConfigurationError("training dataset is empty")

    if initial_params is None:
        params = init_parameters(model_spec, substream(master_seed, "init"))
    else:
        params = initial_params.copy()
    bn_state = BatchNormState.initialized(model_spec) if _has_batchnorm(model_spec) else None

    def evaluate() -> dict[str, float]:
        return eval_fn(params, bn_state) if eval_fn is not None else {}

    series = MetricSeries()
    t0 = time.monotonic()
    record = MetricsRecord(round=0, **evaluate())
    record.wall_seconds = time.monotonic() - t0
    series.append(record)

    for epoch in range(1, epochs + 1):
        t0 = time.monotonic()
        rng = substream(master_seed, "shuffle", epoch, 0)
        steps = 0
        for batch in train_dataset.iter_batches(batch_size, rng=rng):
            _, grads, _ = loss_and_param_gradients(
                model_spec, params, batch, batch.targets, loss_kind,
                train=True, bn_state=bn_state,
            )
            sgd_step_inplace(params, grads, learning_rate)
            steps += 1
        should_eval = epoch % eval_every == 0 or epoch == epochs
        record = MetricsRecord(
            round=epoch,
            local_steps=steps,
            critical_path_steps=steps,
            **(evaluate() if should_eval else {}),
        )
        record.wall_seconds = time.monotonic() - t0
        series.append(record)

    return params, bn_state, series
