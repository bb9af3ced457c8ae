"""Round configuration, per-round plans, and step accounting."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError


class Algorithm(enum.Enum):
    """Which aggregation protocol a run uses."""

    FEDAVG = "fedavg"
    FEDQ = "fedq"


@dataclass(frozen=True)
class FederationConfig:
    """Hyperparameters of a federated run.

    ``queue_length`` is the number of clients chained sequentially per
    queue.  FedAvg is the one-element-queue special case, so the config
    requires ``queue_length == 1`` for it; FedQ requires ``clients_per_round``
    to be an exact multiple of ``queue_length`` so every queue is full.
    """

    algorithm: Algorithm
    rounds: int
    clients_per_round: int
    queue_length: int
    local_epochs: int
    batch_size: int
    learning_rate: float
    seed: int

    def validate(self, total_clients: int | None = None) -> None:
        if self.rounds < 0:
            raise ConfigurationError(f"rounds must be non-negative, got {self.rounds}")
        if self.clients_per_round < 1:
            raise ConfigurationError(
                f"clients_per_round must be positive, got {self.clients_per_round}"
            )
        if self.queue_length < 1:
            raise ConfigurationError(
                f"queue_length must be positive, got {self.queue_length}"
            )
        if self.algorithm is Algorithm.FEDAVG and self.queue_length != 1:
            raise ConfigurationError(
                "fedavg runs one client per queue; set queue_length=1 "
                f"(got {self.queue_length})"
            )
        if self.clients_per_round % self.queue_length != 0:
            raise ConfigurationError(
                f"clients_per_round={self.clients_per_round} is not a multiple of "
                f"queue_length={self.queue_length}; every queue must be full"
            )
        if self.local_epochs < 1:
            raise ConfigurationError(
                f"local_epochs must be positive, got {self.local_epochs}"
            )
        if self.batch_size < 1:
            raise ConfigurationError(
                f"batch_size must be positive, got {self.batch_size}"
            )
        if not (self.learning_rate > 0 and np.isfinite(self.learning_rate)):
            raise ConfigurationError(
                f"learning_rate must be positive and finite, got {self.learning_rate}"
            )
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")
        if total_clients is not None and self.clients_per_round > total_clients:
            raise ConfigurationError(
                f"clients_per_round={self.clients_per_round} exceeds the "
                f"{total_clients} available clients"
            )

    @property
    def num_queues(self) -> int:
        return self.clients_per_round // self.queue_length


@dataclass(frozen=True)
class RoundPlan:
    """Who participates in one round and how they are chained.

    ``selected_clients`` is in draw order; ``queues`` are its consecutive
    chunks of length ``queue_length``, so the queues inherit the selection's
    randomness without extra draws.
    """

    round_index: int
    selected_clients: np.ndarray
    queues: tuple[np.ndarray, ...]

    def validate(self) -> None:
        if self.round_index < 1:
            raise ConfigurationError(
                f"round_index must be >= 1, got {self.round_index}"
            )
        chained = np.concatenate(self.queues) if self.queues else np.empty(0, np.int64)
        if not np.array_equal(chained, self.selected_clients):
            raise ConfigurationError("queues must chunk selected_clients in order")
        if len(np.unique(self.selected_clients)) != len(self.selected_clients):
            raise ConfigurationError("a client may appear at most once per round")
        lengths = {len(q) for q in self.queues}
        if len(lengths) > 1:
            raise ConfigurationError(f"queues must have equal length, got {lengths}")


@dataclass
class StepCounter:
    """Tracks local gradient steps, total and along the critical path.

    Total counts every client's steps; the critical path takes, per round,
    the maximum over queues of that queue's sequential step count, which is
    what bounds wall time when queues run in parallel.
    """

    round_steps: int = 0
    cumulative_steps: int = 0
    round_critical_path: int = 0
    cumulative_critical_path: int = 0
    _queue_steps: list[int] = field(default_factory=list)

    def begin_round(self) -> None:
        self.round_steps = 0
        self.round_critical_path = 0
        self._queue_steps = []

    def record_queue(self, steps_in_queue: int) -> None:
        if steps_in_queue < 0:
            raise ConfigurationError("step counts must be non-negative")
        self._queue_steps.append(steps_in_queue)
        self.round_steps += steps_in_queue
        self.round_critical_path = max(self.round_critical_path, steps_in_queue)

    def end_round(self) -> None:
        self.cumulative_steps += self.round_steps
        self.cumulative_critical_path += self.round_critical_path
