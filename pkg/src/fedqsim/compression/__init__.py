"""Lossy quantization plus a context-adaptive binary arithmetic coder."""

from .analytics import space_saving, uncompressed_wire_bytes, weight_entropy
from .codec import (
    CompressedModel,
    CompressedTransport,
    TensorRecord,
    compress_parameter_set,
    decode,
    decompress_parameter_set,
    encode,
)
from .quant import (
    DEFAULT_F_QP,
    QuantConfig,
    QuantizedTensor,
    dequantize,
    quantize,
    step_size,
)

__all__ = [
    "space_saving",
    "uncompressed_wire_bytes",
    "weight_entropy",
    "CompressedModel",
    "CompressedTransport",
    "TensorRecord",
    "compress_parameter_set",
    "decode",
    "decompress_parameter_set",
    "encode",
    "DEFAULT_F_QP",
    "QuantConfig",
    "QuantizedTensor",
    "dequantize",
    "quantize",
    "step_size",
]
