"""Uniform scalar quantization with QP-controlled step sizes.

The step size is derived from an integer quantization parameter (QP): lower
QP means finer steps, more distinct indices, larger payloads.  A second
integer ``f_qp`` sets how many QP values share one power-of-two scale; the
QP's low ``f_qp`` bits select a mantissa, the remaining high bits an
exponent, so consecutive QPs tile a geometric ladder of step sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import ConfigurationError, EncodingError

DEFAULT_F_QP = 2
_INT32_MAX = 2**31 - 1


def step_size(qp: int, f_qp: int, strict_literal: bool = False) -> float:
    """Step size delta for a quantization parameter.

    Mantissa ``m`` takes the QP's low ``f_qp`` bits (masked AND) on top of
    ``1 << f_qp``; exponent ``s`` is the arithmetic right shift.  Delta is
    ``m * 2**(s - f_qp)``, positive for every integer QP.

    ``strict_literal`` substitutes an integer addition for the masking,
    reproducing a published form of the rule verbatim.  That form goes
    non-positive once ``qp < -((1 << f_qp) - 1)`` and exists only so the
    divergence can be demonstrated; quantization refuses non-positive steps.
    """
    if f_qp < 0:
        raise ConfigurationError(f"f_qp must be >= 0, got {f_qp}")
    mask = (1 << f_qp) - 1
    if strict_literal:
        m = (1 << f_qp) + (qp + mask)
    else:
        m = (1 << f_qp) + (qp & mask)
    s = qp >> f_qp
    return float(m) * math.pow(2.0, s - f_qp)


@dataclass(frozen=True)
class QuantConfig:
    """Quantization settings for a whole model.

    ``per_tensor_qp_offset`` shifts the QP for individual tensors by name,
    allowing coarser or finer steps per layer without a second config.
    """

    qp: int = -30
    f_qp: int = DEFAULT_F_QP
    per_tensor_qp_offset: Mapping[str, int] = field(default_factory=dict)
    strict_literal: bool = False

    def validate(self) -> None:
        if self.f_qp < 0:
            raise ConfigurationError(f"f_qp must be >= 0, got {self.f_qp}")
        for name in self.per_tensor_qp_offset:
            self.step_size_for(name)
        self.step_size_for(None)

    def effective_qp(self, tensor_name: str | None) -> int:
        if tensor_name is None:
            return self.qp
        return self.qp + self.per_tensor_qp_offset.get(tensor_name, 0)

    def step_size_for(self, tensor_name: str | None) -> float:
        delta = step_size(
            self.effective_qp(tensor_name), self.f_qp, self.strict_literal
        )
        if not (delta > 0):
            raise ConfigurationError(
                f"step size {delta} for tensor {tensor_name!r} is not positive "
                f"(qp={self.effective_qp(tensor_name)}, f_qp={self.f_qp}, "
                f"strict_literal={self.strict_literal})"
            )
        return delta


@dataclass
class QuantizedTensor:
    """A tensor reduced to integer step indices.

    Reconstruction is exactly ``index * step_size`` per element.  ``qp`` is
    informational passthrough recorded in the container directory.
    """

    name: str
    indices: np.ndarray
    step_size: float
    shape: tuple[int, ...]
    qp: int = 0

    def validate(self) -> None:
        if self.indices.dtype != np.int32 or self.indices.ndim != 1:
            raise ConfigurationError(
                f"indices must be a flat int32 array, got "
                f"{self.indices.dtype} with {self.indices.ndim} dimensions"
            )
        expected = int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1
        if self.indices.size != expected:
            raise ConfigurationError(
                f"tensor {self.name!r}: {self.indices.size} indices do not "
                f"fill shape {self.shape}"
            )
        if not (self.step_size > 0 and math.isfinite(self.step_size)):
            raise ConfigurationError(
                f"tensor {self.name!r}: step size must be positive and finite, "
                f"got {self.step_size}"
            )


def quantize(
    tensor: np.ndarray, delta: float, name: str = "tensor", qp: int = 0
) -> QuantizedTensor:
    """Nearest-step indices, ties rounded away from zero.

    Ties away from zero keep the map symmetric, so sign statistics of the
    indices stay unbiased.  Indices outside signed 32-bit range mean the
    step is far too small for the data and raise an encoding error.
    """
    if not (delta > 0 and math.isfinite(delta)):
        raise ConfigurationError(f"step size must be positive and finite, got {delta}")
    values = np.asarray(tensor, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise EncodingError(f"tensor {name!r} contains non-finite values")
    scaled = values / delta
    magnitudes = np.floor(np.abs(scaled) + 0.5)
    if magnitudes.size and magnitudes.max() > _INT32_MAX:
        raise EncodingError(
            f"tensor {name!r}: quantization index exceeds 32-bit range at "
            f"step size {delta}; the step is far too small for this data"
        )
    indices = (np.sign(scaled) * magnitudes).astype(np.int32).ravel()
    return QuantizedTensor(
        name=name,
        indices=indices,
        step_size=float(delta),
        shape=tuple(values.shape),
        qp=qp,
    )


def dequantize(q: QuantizedTensor) -> np.ndarray:
    """Reconstructed tensor: ``index * step_size`` elementwise, reshaped."""
    q.validate()
    return (q.indices.astype(np.float64) * q.step_size).reshape(q.shape)
