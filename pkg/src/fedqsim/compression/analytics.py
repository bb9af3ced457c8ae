"""Compression analytics: space saving and index entropy."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from ..errors import ConfigurationError
from .quant import QuantizedTensor

BYTES_PER_PARAM_UNCOMPRESSED = 4


def uncompressed_wire_bytes(param_count: int) -> int:
    """Baseline wire size: four bytes per parameter."""
    if param_count < 0:
        raise ConfigurationError(f"parameter count must be non-negative, got {param_count}")
    return BYTES_PER_PARAM_UNCOMPRESSED * param_count


def space_saving(uncompressed_bytes: int, compressed_bytes: int) -> float:
    """Fraction of the baseline saved: 1 - compressed / uncompressed."""
    if uncompressed_bytes <= 0:
        raise ConfigurationError(
            f"uncompressed size must be positive, got {uncompressed_bytes}"
        )
    if compressed_bytes < 0:
        raise ConfigurationError(
            f"compressed size must be non-negative, got {compressed_bytes}"
        )
    return 1.0 - compressed_bytes / uncompressed_bytes


def weight_entropy(q: QuantizedTensor | Sequence[QuantizedTensor]) -> float:
    """Empirical Shannon entropy of the quantized indices, bits per parameter.

    Accepts one tensor or a whole model; a model is pooled into a single
    histogram.
    """
    tensors: Iterable[QuantizedTensor] = [q] if isinstance(q, QuantizedTensor) else q
    arrays = [t.indices for t in tensors]
    if not arrays or sum(a.size for a in arrays) == 0:
        raise ConfigurationError("entropy of an empty index set is undefined")
    pooled = np.concatenate(arrays)
    _, counts = np.unique(pooled, return_counts=True)
    probabilities = counts / pooled.size
    return float(-(probabilities * np.log2(probabilities)).sum())
