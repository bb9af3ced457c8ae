"""Ordered named-tensor containers and their binary serialization.

A :class:`ParameterSet` is an ordered mapping from parameter names to float64
numpy arrays.  Gradients use the same container (:class:`GradientSet` is an
alias); two sets are *congruent* when names, order and shapes all match.

The on-disk format ("FQS1") stores tensors as little-endian float32:

========  =====================================================
bytes     meaning
========  =====================================================
4         magic ``b"FQS1"``
4         entry count, u32 LE
per entry:
2         name length in bytes, u16 LE
n         name, UTF-8
4         rank, u32 LE
4*rank    dims, u32 LE each
4*prod    payload, float32 LE, C order
========  =====================================================

Saving float32 data and loading it back is bit-exact; float64 values are
rounded to float32 once on save.
"""

from __future__ import annotations

import struct
from typing import Iterable, Iterator

import numpy as np

from fedqsim.errors import ConfigurationError, DataError

MAGIC = b"FQS1"


class ParameterSet:
    """Ordered collection of named float64 tensors."""

    def __init__(self, entries: Iterable[tuple[str, np.ndarray]] = ()):
        self._data: dict[str, np.ndarray] = {}
        for name, array in entries:
            self.add(name, array)

    def add(self, name: str, array: np.ndarray) -> None:
        if name in self._data:
            raise ConfigurationError(f"parameter name {name!r} added twice")
        arr = np.ascontiguousarray(array, dtype=np.float64)
        self._data[name] = arr

    def __contains__(self, name: str) -> bool:
        return name in self._data

    def __getitem__(self, name: str) -> np.ndarray:
        return self._data[name]

    def __setitem__(self, name: str, array: np.ndarray) -> None:
        if name not in self._data:
            raise ConfigurationError(f"unknown parameter name {name!r}")
        arr = np.ascontiguousarray(array, dtype=np.float64)
        if arr.shape != self._data[name].shape:
            raise ConfigurationError(
                f"parameter {name!r}: shape {arr.shape} does not match {self._data[name].shape}"
            )
        self._data[name] = arr

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self._data.items())

    def __len__(self) -> int:
        return len(self._data)

    @property
    def names(self) -> list[str]:
        return list(self._data)

    def total_count(self) -> int:
        """Total number of scalar parameters."""
        return sum(int(a.size) for a in self._data.values())

    def copy(self) -> "ParameterSet":
        return ParameterSet((name, a.copy()) for name, a in self)

    def rounded_to_float32(self) -> "ParameterSet":
        """Values as they survive the float32 serialization boundary.

        Bit-identical to a save/load round-trip, without touching disk.
        """
        return ParameterSet(
            (name, a.astype(np.float32).astype(np.float64)) for name, a in self
        )

    def congruent_with(self, other: "ParameterSet") -> bool:
        if self.names != other.names:
            return False
        return all(self._data[n].shape == other._data[n].shape for n in self._data)

    def require_congruent(self, other: "ParameterSet", what: str = "parameter sets") -> None:
        if self.names != other.names:
            raise ConfigurationError(
                f"{what} are not congruent: names {self.names} vs {other.names}"
            )
        for n in self._data:
            if self._data[n].shape != other._data[n].shape:
                raise ConfigurationError(
                    f"{what} are not congruent: {n!r} has shape "
                    f"{self._data[n].shape} vs {other._data[n].shape}"
                )

    def require_finite(self) -> None:
        for name, a in self:
            if not np.all(np.isfinite(a)):
                raise DataError(f"parameter {name!r} contains non-finite values")

    # Arithmetic used by aggregation and SGD.  All return fresh arrays.

    def scaled(self, factor: float) -> "ParameterSet":
        return ParameterSet((name, a * factor) for name, a in self)

    def add_scaled_inplace(self, other: "ParameterSet", factor: float) -> None:
        """self += factor * other, elementwise, in place."""
        self.require_congruent(other)
        for name, a in self:
            a += factor * other._data[name]

    def zeros_like(self) -> "ParameterSet":
        return ParameterSet((name, np.zeros_like(a)) for name, a in self)

    def allclose(self, other: "ParameterSet", rtol: float = 1e-12, atol: float = 0.0) -> bool:
        if not self.congruent_with(other):
            return False
        return all(np.allclose(self._data[n], other._data[n], rtol=rtol, atol=atol) for n in self._data)

    def equal_bits(self, other: "ParameterSet") -> bool:
        """Exact elementwise equality, shapes and names included."""
        if not self.congruent_with(other):
            return False
        return all(np.array_equal(self._data[n], other._data[n]) for n in self._data)


GradientSet = ParameterSet


def save_parameter_set(params: ParameterSet, path) -> None:
    """Write ``params`` to ``path`` in the FQS1 container format."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for name, array in params:
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ConfigurationError(f"parameter name too long to serialize: {name[:40]!r}...")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", array.ndim))
            for dim in array.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(array.astype("<f4").tobytes(order="C"))


def load_parameter_set(path) -> ParameterSet:
    """Read a ParameterSet written by :func:`save_parameter_set`.

    Values come back as float64 copies of the stored float32 data, so a
    save/load/save cycle is byte-identical.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise DataError(f"{path}: truncated at byte {pos}, needed {n} more bytes")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    entries: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = tuple(struct.unpack("<I", take(4))[0] for _ in range(rank))
        n_values = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = take(4 * n_values)
        values = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
        entries.append((name, values))
    if pos != len(blob):
        raise DataError(f"{path}: {len(blob) - pos} trailing bytes after last entry")
    return ParameterSet(entries)
