"""Round execution: client selection, queue chaining, local SGD, aggregation.

A round either completes in full or raises; no partially aggregated state
ever replaces the global model (fail-stop).  Clients are simulated one at a
time, so coordinator-side memory holds at most the global model, one
in-flight client model, and the single aggregation accumulator.

FedAvg is the ``queue_length == 1`` case of the queue-chained protocol: both
algorithms share one code path, which also makes them bit-identical when the
queue length is 1 and every stream index lines up.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from ..errors import ConfigurationError, DataError
from ..metrics import MetricSeries, MetricsRecord
from ..nn import layers as L
from ..nn.losses import LossKind
from ..nn.network import (
    init_parameters,
    loss_and_param_gradients,
    param_shapes,
    sgd_step_inplace,
    validate_model_spec,
)
from ..nn.params import ParameterSet, load_parameter_set, save_parameter_set
from ..seeds import substream
from .aggregation import AggregationState
from .config import FederationConfig, RoundPlan, StepCounter

CHECKPOINT_STATE_NAME = "checkpoint.json"
_CHECKPOINT_VERSION = 1


class Transport(Protocol):
    """One model transfer through the coordinator.

    ``send`` returns the parameters as the receiving end sees them plus the
    payload size in bytes.  A lossy transport returns a reconstruction; the
    byte count is what travels on the wire.
    """

    def send(self, params: ParameterSet) -> tuple[ParameterSet, int]: ...


class PlainTransport:
    """Uncompressed transfers: float32 on the wire, values delivered intact."""

    bytes_per_value = 4

    def send(self, params: ParameterSet) -> tuple[ParameterSet, int]:
        return params, self.bytes_per_value * params.total_count()


@dataclass
class TrainingHooks:
    """Optional observation points; all callbacks may be ``None``.

    ``on_client_acquire``/``on_client_release`` bracket the window in which
    a client's shard and model are resident, letting tests assert that at
    most one client is ever materialized at a time.
    """

    on_client_acquire: Callable[[int, int], None] | None = None  # (round, client)
    on_client_release: Callable[[int, int], None] | None = None
    on_round_end: Callable[[MetricsRecord], None] | None = None

    def acquire(self, round_index: int, client_id: int) -> None:
        if self.on_client_acquire is not None:
            self.on_client_acquire(round_index, client_id)

    def release(self, round_index: int, client_id: int) -> None:
        if self.on_client_release is not None:
            self.on_client_release(round_index, client_id)


@dataclass
class RoundResult:
    """Outcome of one completed round."""

    params: ParameterSet
    bytes_up: int
    bytes_down: int
    round_steps: int
    critical_path_steps: int


def subsample_clients(
    client_ids: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform sample without replacement, returned in draw order."""
    ids = np.asarray(client_ids, dtype=np.int64)
    if count < 1 or count > ids.size:
        raise ConfigurationError(
            f"cannot sample {count} clients from a population of {ids.size}"
        )
    return ids[rng.permutation(ids.size)[:count]]


def make_queues(selected: np.ndarray, queue_length: int) -> tuple[np.ndarray, ...]:
    """Consecutive chunks of the selection; selection order is the chain order."""
    if selected.size % queue_length != 0:
        raise ConfigurationError(
            f"{selected.size} selected clients do not fill queues of length {queue_length}"
        )
    return tuple(
        selected[i : i + queue_length] for i in range(0, selected.size, queue_length)
    )


def plan_round(
    cfg: FederationConfig,
    eligible_clients: np.ndarray,
    round_index: int,
    master_seed: int,
) -> RoundPlan:
    """Selection and queue layout for one round, derived from the master seed."""
    rng = substream(master_seed, "selection", round_index)
    selected = subsample_clients(eligible_clients, cfg.clients_per_round, rng)
    plan = RoundPlan(
        round_index=round_index,
        selected_clients=selected,
        queues=make_queues(selected, cfg.queue_length),
    )
    plan.validate()
    return plan


def client_update(
    model_spec: list[L.LayerSpec],
    loss_kind: LossKind,
    params: ParameterSet,
    local_data,
    local_epochs: int,
    batch_size: int,
    learning_rate: float,
    rng: np.random.Generator,
) -> tuple[ParameterSet, int]:
    """Local mini-batch SGD from ``params``; returns (new params, step count).

    The input parameters are not mutated.  The client sees only its own
    shard and hyperparameters; it has no knowledge of its position in any
    queue.  Each epoch draws a fresh shuffle from ``rng``.
    """
    if len(local_data) == 0:
        raise DataError("client_update requires a non-empty shard")
    local = params.copy()
    steps = 0
    for _ in range(local_epochs):
        for batch in local_data.iter_batches(batch_size, rng=rng):
            _, grads, _ = loss_and_param_gradients(
                model_spec, local, batch, batch.targets, loss_kind
            )
            sgd_step_inplace(local, grads, learning_rate)
            steps += 1
    return local, steps


def expected_round_steps(cfg: FederationConfig, client_sizes: np.ndarray) -> float:
    """Expected sequential gradient steps per round (critical path).

    A parallel slot trains ``queue_length`` clients back to back; each
    client contributes ``local_epochs * ceil(size / batch_size)`` steps.
    The expectation is over a uniform draw from the eligible clients.
    """
    sizes = np.asarray(client_sizes, dtype=np.int64)
    sizes = sizes[sizes > 0]
    if sizes.size == 0:
        raise ConfigurationError("no clients with data")
    per_client = cfg.local_epochs * np.ceil(sizes / cfg.batch_size)
    return float(cfg.queue_length * per_client.mean())


def _run_round(
    model_spec: list[L.LayerSpec],
    loss_kind: LossKind,
    global_params: ParameterSet,
    plan: RoundPlan,
    cfg: FederationConfig,
    client_data: Callable[[int], object],
    client_sizes: np.ndarray,
    master_seed: int,
    transport: Transport,
    hooks: TrainingHooks,
) -> RoundResult:
    weights = client_sizes[plan.selected_clients]
    if np.any(weights <= 0):
        raise ConfigurationError("a selected client has no data")
    agg = AggregationState(global_params, float(weights.sum()))

    bytes_up = 0
    bytes_down = 0
    counter = StepCounter()
    counter.begin_round()

    # One broadcast encoding; each queue receives its own copy of the payload.
    broadcast, broadcast_bytes = transport.send(global_params)

    for queue_index, queue in enumerate(plan.queues):
        bytes_down += broadcast_bytes
        carried = broadcast
        queue_steps = 0
        queue_weight = 0.0
        for position, client_id in enumerate(queue):
            client_id = int(client_id)
            slot = queue_index * cfg.queue_length + position
            hooks.acquire(plan.round_index, client_id)
            shard = client_data(client_id)
            if len(shard) != client_sizes[client_id]:
                raise DataError(
                    f"client {client_id} shard has {len(shard)} samples, "
                    f"expected {client_sizes[client_id]}"
                )
            shuffle_rng = substream(master_seed, "shuffle", plan.round_index, slot)
            updated, steps = client_update(
                model_spec,
                loss_kind,
                carried,
                shard,
                cfg.local_epochs,
                cfg.batch_size,
                cfg.learning_rate,
                shuffle_rng,
            )
            hooks.release(plan.round_index, client_id)
            queue_steps += steps
            queue_weight += float(len(shard))

            delivered, payload_bytes = transport.send(updated)
            bytes_up += payload_bytes
            if position + 1 < len(queue):
                # Relay: the same payload goes back down to the successor.
                bytes_down += payload_bytes
                carried = delivered
            else:
                agg.accumulate(delivered, queue_weight)
        counter.record_queue(queue_steps)

    counter.end_round()
    new_global = agg.finalize()
    new_global.require_finite()
    return RoundResult(
        params=new_global,
        bytes_up=bytes_up,
        bytes_down=bytes_down,
        round_steps=counter.round_steps,
        critical_path_steps=counter.round_critical_path,
    )


def run_fedq_round(
    model_spec: list[L.LayerSpec],
    loss_kind: LossKind,
    global_params: ParameterSet,
    plan: RoundPlan,
    cfg: FederationConfig,
    client_data: Callable[[int], object],
    client_sizes: np.ndarray,
    master_seed: int,
    *,
    transport: Transport | None = None,
    hooks: TrainingHooks | None = None,
) -> RoundResult:
    """One queue-chained round; every queue hands its final model to the mean."""
    return _run_round(
        model_spec,
        loss_kind,
        global_params,
        plan,
        cfg,
        client_data,
        client_sizes,
        master_seed,
        transport or PlainTransport(),
        hooks or TrainingHooks(),
    )


def run_fedavg_round(
    model_spec: list[L.LayerSpec],
    loss_kind: LossKind,
    global_params: ParameterSet,
    plan: RoundPlan,
    cfg: FederationConfig,
    client_data: Callable[[int], object],
    client_sizes: np.ndarray,
    master_seed: int,
    *,
    transport: Transport | None = None,
    hooks: TrainingHooks | None = None,
) -> RoundResult:
    """One parallel round: every client starts from the broadcast model."""
    if cfg.queue_length != 1:
        raise ConfigurationError(
            f"fedavg rounds require queue_length=1, got {cfg.queue_length}"
        )
    return _run_round(
        model_spec,
        loss_kind,
        global_params,
        plan,
        cfg,
        client_data,
        client_sizes,
        master_seed,
        transport or PlainTransport(),
        hooks or TrainingHooks(),
    )


def _reject_batchnorm(model_spec: list[L.LayerSpec]) -> None:
    for layer in model_spec:
        if isinstance(layer, L.BatchNorm):
            raise ConfigurationError(
                f"layer '{layer.name}': running-statistics normalization is not "
                "supported in federated runs (hand-off and averaging would mix "
                "incompatible statistics); use group normalization"
            )


def save_checkpoint(
    directory: str | Path,
    round_index: int,
    params: ParameterSet,
    series: MetricSeries,
    master_seed: int,
) -> Path:
    """Writes the model and resume state after ``round_index`` completed.

    The stream derivation is stateless, so the master seed plus the round
    index fully determine all later randomness; no generator state needs
    to be captured.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params_name = f"model_round_{round_index:05d}.fqs"
    save_parameter_set(params, directory / params_name)
    state = {
        "format_version": _CHECKPOINT_VERSION,
        "round": round_index,
        "master_seed": master_seed,
        "params_file": params_name,
        "metrics_jsonl": series.to_jsonl(),
    }
    tmp = directory / (CHECKPOINT_STATE_NAME + ".tmp")
    tmp.write_text(json.dumps(state, indent=2), encoding="utf-8")
    tmp.replace(directory / CHECKPOINT_STATE_NAME)
    return directory / CHECKPOINT_STATE_NAME


def load_checkpoint(directory: str | Path) -> tuple[int, ParameterSet, MetricSeries, int]:
    """Returns (completed round, params, metric series, master seed)."""
    directory = Path(directory)
    state_path = directory / CHECKPOINT_STATE_NAME
    if not state_path.is_file():
        raise DataError(f"no checkpoint state at {state_path}")
    state = json.loads(state_path.read_text(encoding="utf-8"))
    if state.get("format_version") != _CHECKPOINT_VERSION:
        raise DataError(
            f"unsupported checkpoint version {state.get('format_version')!r}"
        )
    params = load_parameter_set(directory / state["params_file"])
    series = MetricSeries.from_jsonl(state["metrics_jsonl"])
    return int(state["round"]), params, series, int(state["master_seed"])


def run_training(
    model_spec: list[L.LayerSpec],
    loss_kind: LossKind,
    cfg: FederationConfig,
    train_dataset,
    partition,
    *,
    eval_fn: Callable[[ParameterSet], dict[str, float]] | None = None,
    initial_params: ParameterSet | None = None,
    transport: Transport | None = None,
    hooks: TrainingHooks | None = None,
    eval_every: int = 1,
    checkpoint_dir: str | Path | None = None,
    checkpoint_every: int = 0,
    resume: bool = False,
) -> tuple[ParameterSet, MetricSeries]:
    """Full federated run; returns the final model and per-round metrics.

    Clients are the partition's assignment groups; clients with empty
    shards are excluded at planning time.  Round 0's record evaluates the
    initial model before any communication.  ``eval_fn`` maps parameters to
    metric values keyed ``top_k_accuracy`` / ``accuracy`` / ``mse``;
    evaluation runs at round 0, every ``eval_every`` rounds, and at the
    final round.

    With ``checkpoint_dir`` and ``checkpoint_every > 0``, state is written
    after every that-many rounds and after the final round.  Each save is a
    synchronization point: the serialized parameters become canonical, so
    the continuing run adopts them, and ``resume=True`` later reproduces the
    uninterrupted checkpointed run bit for bit.  Randomness needs no saved
    generator state because every stream is derived from the master seed
    and the round index alone.
    """
    validate_model_spec(model_spec)
    _reject_batchnorm(model_spec)
    sizes = np.asarray(partition.sizes(), dtype=np.int64)
    eligible = np.flatnonzero(sizes > 0).astype(np.int64)
    cfg.validate(total_clients=int(eligible.size))
    if eval_every < 1:
        raise ConfigurationError(f"eval_every must be >= 1, got {eval_every}")
    transport = transport or PlainTransport()
    hooks = hooks or TrainingHooks()
    master_seed = cfg.seed

    def client_data(client_id: int):
        return train_dataset.subset(partition.assignments[client_id])

    def evaluate(params: ParameterSet) -> dict[str, float]:
        return eval_fn(params) if eval_fn is not None else {}

    start_round = 0
    series = MetricSeries()
    if resume:
        if checkpoint_dir is None:
            raise ConfigurationError("resume requires a checkpoint directory")
        start_round, params, series, saved_seed = load_checkpoint(checkpoint_dir)
        if saved_seed != master_seed:
            raise ConfigurationError(
                f"checkpoint was produced with seed {saved_seed}, "
                f"but the configuration says {master_seed}"
            )
        expected_shapes = param_shapes(model_spec)
        actual_shapes = {name: a.shape for name, a in params}
        if actual_shapes != expected_shapes:
            raise ConfigurationError("checkpoint does not match the model layout")
    else:
        if initial_params is None:
            params = init_parameters(model_spec, substream(master_seed, "init"))
        else:
            params = initial_params.copy()
        t0 = time.monotonic()
        record = MetricsRecord(round=0, **evaluate(params))
        record.wall_seconds = time.monotonic() - t0
        series.append(record)
        if hooks.on_round_end is not None:
            hooks.on_round_end(record)

    for round_index in range(start_round + 1, cfg.rounds + 1):
        t0 = time.monotonic()
        plan = plan_round(cfg, eligible, round_index, master_seed)
        result = _run_round(
            model_spec,
            loss_kind,
            params,
            plan,
            cfg,
            client_data,
            sizes,
            master_seed,
            transport,
            hooks,
        )
        params = result.params
        should_eval = (
            round_index % eval_every == 0 or round_index == cfg.rounds
        )
        record = MetricsRecord(
            round=round_index,
            bytes_up=result.bytes_up,
            bytes_down=result.bytes_down,
            local_steps=result.round_steps,
            critical_path_steps=result.critical_path_steps,
            **(evaluate(params) if should_eval else {}),
        )
        record.wall_seconds = time.monotonic() - t0
        series.append(record)
        if hooks.on_round_end is not None:
            hooks.on_round_end(record)
        if (
            checkpoint_dir is not None
            and checkpoint_every > 0
            and (round_index % checkpoint_every == 0 or round_index == cfg.rounds)
        ):
            save_checkpoint(checkpoint_dir, round_index, params, series, master_seed)
            # The serialized state is canonical from here on, so a later
            # resume continues bit-identically to this uninterrupted run.
            params = params.rounded_to_float32()

    return params, series
