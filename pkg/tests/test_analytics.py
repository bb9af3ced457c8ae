"""Space-saving and entropy oracles."""

import numpy as np
import pytest

from fedqsim.compression.analytics import (
    space_saving,
    uncompressed_wire_bytes,
    weight_entropy,
)
from fedqsim.compression.quant import quantize
from fedqsim.errors import ConfigurationError


def test_uncompressed_wire_bytes():
    assert uncompressed_wire_bytes(0) == 0
    assert uncompressed_wire_bytes(1000) == 4000
    with pytest.raises(ConfigurationError):
        uncompressed_wire_bytes(-1)


def test_space_saving_oracles():
    assert space_saving(100, 100) == 0.0
    assert space_saving(400, 100) == 0.75
    assert space_saving(100, 0) == 1.0
    # Expansion yields a negative saving rather than an error.
    assert space_saving(100, 150) == -0.5
    with pytest.raises(ConfigurationError):
        space_saving(0, 10)
    with pytest.raises(ConfigurationError):
        space_saving(100, -1)


def test_weight_entropy_oracles():
    constant = quantize(np.zeros(64), 1.0, name="zeros")
    assert weight_entropy(constant) == 0.0

    two_equal = quantize(np.array([0.0, 1.0] * 32), 1.0, name="half")
    assert abs(weight_entropy(two_equal) - 1.0) < 1e-12

    # Uniform over 2**k symbols has entropy exactly k bits.
    for k in (2, 3, 5):
        values = np.repeat(np.arange(2**k, dtype=float), 7)
        uniform = quantize(values, 1.0, name="uniform")
        assert abs(weight_entropy(uniform) - k) < 1e-9


def test_weight_entropy_pools_a_model():
    a = quantize(np.zeros(32), 1.0, name="a")
    b = quantize(np.ones(32), 1.0, name="b")
    # Pooled histogram: half zeros, half ones -> one bit.
    assert abs(weight_entropy([a, b]) - 1.0) < 1e-12
    # Skewed pooling: 3/4 zeros.
    c = quantize(np.zeros(32), 1.0, name="c")
    h = weight_entropy([a, b, c])
    p = np.array([2 / 3, 1 / 3])
    assert abs(h - float(-(p * np.log2(p)).sum())) < 1e-12


def test_weight_entropy_rejects_empty():
    with pytest.raises(ConfigurationError):
        weight_entropy([])
    empty = quantize(np.zeros((0,)), 1.0, name="e")
    with pytest.raises(ConfigurationError):
        weight_entropy(empty)
    with pytest.raises(ConfigurationError):
        weight_entropy([empty, empty])
