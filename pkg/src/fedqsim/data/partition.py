"""Train/validation splitting and client partitioning.

The split is global and random; the validation side is never partitioned to
clients.  The training side must keep every embedding id covered (an id that
appears in some sample must appear in at least one training sample), enforced
by moving the first-occurrence sample of any uncovered id from the validation
side into training after the random draw.

Partition files (magic ``FQP1``) store, little-endian: magic, version u16,
kind u8, client count u32, per-client sizes u32, then all sample indices as
i64 in client order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from fedqsim.errors import ConfigurationError, DataError

PARTITION_MAGIC = b"FQP1"
PARTITION_VERSION = 1
_KINDS = ("iid_equal", "per_user")


@dataclass
class ClientPartition:
    """Disjoint client_id -> sample-index lists covering the training split."""

    assignments: list[np.ndarray]
    kind: str

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"partition kind must be one of {_KINDS}, got {self.kind!r}")

    @property
    def num_clients(self) -> int:
        return len(self.assignments)

    def sizes(self) -> np.ndarray:
        return np.asarray([a.shape[0] for a in self.assignments], dtype=np.int64)

    def total(self) -> int:
        return int(self.sizes().sum())

    def validate_over(self, sample_count: int) -> None:
        seen = np.zeros(sample_count, dtype=bool)
        for client_id, idx in enumerate(self.assignments):
            if idx.size == 0:
                continue
            if idx.min() < 0 or idx.max() >= sample_count:
                raise ConfigurationError(f"client {client_id}: sample index out of range")
            if seen[idx].any():
                raise ConfigurationError(f"client {client_id}: overlaps another client's samples")
            seen[idx] = True
        if not seen.all():
            raise ConfigurationError(
                f"partition covers {int(seen.sum())} of {sample_count} training samples"
            )


def partition_iid(sample_count: int, num_clients: int, rng: np.random.Generator) -> ClientPartition:
    """Random permutation split into near-equal chunks (sizes differ by <= 1)."""
    if num_clients < 1:
        raise ConfigurationError(f"num_clients must be >= 1, got {num_clients}")
    if num_clients > sample_count:
        raise ConfigurationError(
            f"num_clients={num_clients} exceeds sample_count={sample_count}"
        )
    perm = rng.permutation(sample_count)
    base = sample_count // num_clients
    extra = sample_count % num_clients
    assignments = []
    start = 0
    for c in range(num_clients):
        size = base + (1 if c < extra else 0)
        assignments.append(np.sort(perm[start : start + size]).astype(np.int64))
        start += size
    return ClientPartition(assignments, kind="iid_equal")


def partition_by_user(dataset) -> ClientPartition:
    """One client per distinct user present in the dataset; sizes imbalanced.

    ``dataset`` must expose ``sample_user_ids()``.
    """
    user_ids = np.asarray(dataset.sample_user_ids())
    if user_ids.size == 0:
        raise ConfigurationError("cannot partition an empty dataset by user")
    order = np.argsort(user_ids, kind="stable")
    sorted_users = user_ids[order]
    boundaries = np.flatnonzero(np.diff(sorted_users)) + 1
    assignments = [np.sort(chunk).astype(np.int64) for chunk in np.split(order, boundaries)]
    return ClientPartition(assignments, kind="per_user")


def train_val_split(dataset, fraction: float, rng: np.random.Generator):
    """Global random split into (train, validation) subsets of the dataset.

    ``fraction`` is the training share.  After the draw, any id space exposed
    by ``dataset.id_coverage_spaces()`` is checked: ids whose samples all fell
    into validation get their first-occurrence sample moved to training.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError(f"train fraction must be in (0, 1), got {fraction}")
    n = len(dataset)
    n_train = int(round(n * fraction))
    if n_train == 0 or n_train == n:
        raise ConfigurationError(
            f"split of {n} samples at fraction {fraction} leaves an empty side"
        )
    perm = rng.permutation(n)
    in_train = np.zeros(n, dtype=bool)
    in_train[perm[:n_train]] = True

    # Moves only add samples to training, so coverage computed once against
    # the pre-move training side stays valid for every space.
    spaces = dataset.id_coverage_spaces()
    train_spaces = dataset.subset(np.flatnonzero(in_train)).id_coverage_spaces()
    for space_name in sorted(spaces):
        first_occurrence = spaces[space_name]
        present = first_occurrence >= 0
        covered = train_spaces[space_name] >= 0
        for id_value in np.flatnonzero(present & ~covered):
            in_train[first_occurrence[id_value]] = True
    if in_train.all():
        raise ConfigurationError(
            "id-coverage pinning moved every sample into training; corpus too small for this split"
        )
    train_idx = np.flatnonzero(in_train)
    val_idx = np.flatnonzero(~in_train)
    return dataset.subset(train_idx), dataset.subset(val_idx)


def save_partition(partition: ClientPartition, path) -> None:
    with open(path, "wb") as fh:
        fh.write(PARTITION_MAGIC)
        fh.write(struct.pack("<H", PARTITION_VERSION))
        fh.write(struct.pack("<B", _KINDS.index(partition.kind)))
        fh.write(struct.pack("<I", partition.num_clients))
        for idx in partition.assignments:
            fh.write(struct.pack("<I", idx.shape[0]))
        for idx in partition.assignments:
            fh.write(idx.astype("<i8").tobytes())


def load_partition(path) -> ClientPartition:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != PARTITION_MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}, expected {PARTITION_MAGIC!r}")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise DataError(f"{path}: truncated at byte {pos}")
        out = blob[pos : pos + n]
        pos += n
        return out

    (version,) = struct.unpack("<H", take(2))
    if version != PARTITION_VERSION:
        raise DataError(f"{path}: unsupported partition version {version}")
    (kind_code,) = struct.unpack("<B", take(1))
    if kind_code >= len(_KINDS):
        raise DataError(f"{path}: unknown partition kind code {kind_code}")
    (num_clients,) = struct.unpack("<I", take(4))
    sizes = [struct.unpack("<I", take(4))[0] for _ in range(num_clients)]
    assignments = []
    for size in sizes:
        raw = take(8 * size)
        assignments.append(np.frombuffer(raw, dtype="<i8").astype(np.int64))
    if pos != len(blob):
        raise DataError(f"{path}: {len(blob) - pos} trailing bytes")
    return ClientPartition(assignments, kind=_KINDS[kind_code])
