"""Per-round metric records and their JSONL serialization.

``wall_seconds`` is intentionally left out of the serialized form: two runs
with the same configuration and seed must produce byte-identical metric
files, and wall time is the one field that cannot be deterministic.  Timing
belongs in the run-info sidecar instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError

# Field order for JSONL output; metrics that were not evaluated are omitted.
_SERIALIZED_FIELDS = (
    "round",
    "top_k_accuracy",
    "accuracy",
    "mse",
    "bytes_up",
    "bytes_down",
    "local_steps",
    "critical_path_steps",
)


@dataclass
class MetricsRecord:
    """Everything recorded about one round of training.

    ``round`` 0 describes the initial model before any update.  Byte and
    step counters are totals for that round alone, not cumulative.
    ``critical_path_steps`` counts the longest sequential chain of local
    steps; with parallel clients it is the wall-clock-relevant count, while
    ``local_steps`` is the total work across all clients.
    """

    round: int
    top_k_accuracy: float | None = None
    accuracy: float | None = None
    mse: float | None = None
    bytes_up: int = 0
    bytes_down: int = 0
    local_steps: int = 0
    critical_path_steps: int = 0
    wall_seconds: float = 0.0

    def validate(self) -> None:
        if self.round < 0:
            raise DataError(f"round must be non-negative, got {self.round}")
        for name in ("top_k_accuracy", "accuracy"):
            value = getattr(self, name)
            if value is not None and not (0.0 <= value <= 1.0):
                raise DataError(f"{name} must lie in [0, 1], got {value}")
        if self.mse is not None and (self.mse < 0 or not math.isfinite(self.mse)):
            raise DataError(f"mse must be finite and non-negative, got {self.mse}")
        for name in ("bytes_up", "bytes_down", "local_steps", "critical_path_steps"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be non-negative, got {getattr(self, name)}")

    def metric_values(self) -> dict[str, float]:
        """The evaluated quality metrics only (no counters)."""
        out = {}
        for name in ("top_k_accuracy", "accuracy", "mse"):
            value = getattr(self, name)
            if value is not None:
                out[name] = float(value)
        return out

    def to_json_line(self) -> str:
        """Deterministic single-line JSON; excludes ``wall_seconds``."""
        obj = {}
        for name in _SERIALIZED_FIELDS:
            value = getattr(self, name)
            if value is None:
                continue
            obj[name] = value
        return json.dumps(obj, separators=(",", ":"), sort_keys=False)

    @classmethod
    def from_json_line(cls, line: str) -> "MetricsRecord":
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed metrics line: {exc}") from exc
        if not isinstance(obj, dict) or "round" not in obj:
            raise DataError("metrics line must be an object with a 'round' field")
        known = {name: obj[name] for name in _SERIALIZED_FIELDS if name in obj}
        unknown = set(obj) - set(_SERIALIZED_FIELDS)
        if unknown:
            raise DataError(f"metrics line has unknown fields: {sorted(unknown)}")
        record = cls(**known)
        record.validate()
        return record


@dataclass
class MetricSeries:
    """Ordered per-round records for one run."""

    records: list[MetricsRecord] = field(default_factory=list)

    def append(self, record: MetricsRecord) -> None:
        record.validate()
        if self.records and record.round <= self.records[-1].round:
            raise DataError(
                f"round {record.round} does not follow round {self.records[-1].round}"
            )
        self.records.append(record)

    def final(self) -> MetricsRecord:
        if not self.records:
            raise DataError("metric series is empty")
        return self.records[-1]

    def totals(self) -> dict[str, int]:
        """Cumulative byte and step counters over the whole series."""
        return {
            "bytes_up": sum(r.bytes_up for r in self.records),
            "bytes_down": sum(r.bytes_down for r in self.records),
            "local_steps": sum(r.local_steps for r in self.records),
            "critical_path_steps": sum(r.critical_path_steps for r in self.records),
        }

    def to_jsonl(self) -> str:
        return "".join(r.to_json_line() + "\n" for r in self.records)

    def save_jsonl(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_jsonl().encode("utf-8"))

    @classmethod
    def from_jsonl(cls, text: str) -> "MetricSeries":
        series = cls()
        for line in text.splitlines():
            if line.strip():
                series.append(MetricsRecord.from_json_line(line))
        return series

    @classmethod
    def load_jsonl(cls, path: str | Path) -> "MetricSeries":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))
