"""Whole-model compression and the FQC1 container format.

Container layout, little-endian throughout:

* magic ``FQC1``, version u16, tensor count u32;
* per tensor: name length u16 + UTF-8 name, rank u32, dims u32 each,
  qp i32, step size as float64 bits u64, payload offset u64, payload
  length u64 (offsets relative to the payload section);
* the concatenated entropy-coded payload blob.

Every transfer decodes to exactly the indices that were encoded; any
corruption, truncation, or trailing byte is reported with its offset.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DecodingError, EncodingError
from ..nn.params import ParameterSet
from .quant import QuantConfig, QuantizedTensor, dequantize, quantize
from .rangecoder import decode_indices, encode_indices

MAGIC = b"FQC1"
VERSION = 1
_INT32_MAX = 2**31 - 1


@dataclass(frozen=True)
class TensorRecord:
    """Directory entry for one tensor inside a compressed model."""

    name: str
    shape: tuple[int, ...]
    qp: int
    step_size: float
    payload_offset: int
    payload_length: int

    @property
    def count(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n


@dataclass
class CompressedModel:
    """Per-tensor directory plus one entropy-coded payload blob."""

    records: tuple[TensorRecord, ...]
    payload: bytes

    def total_bytes(self) -> int:
        """Size of the full serialized container in bytes."""
        return len(self.to_bytes())

    def to_bytes(self) -> bytes:
        parts = [MAGIC, struct.pack("<HI", VERSION, len(self.records))]
        for rec in self.records:
            name_bytes = rec.name.encode("utf-8")
            parts.append(struct.pack("<H", len(name_bytes)))
            parts.append(name_bytes)
            parts.append(struct.pack("<I", len(rec.shape)))
            parts.append(struct.pack(f"<{len(rec.shape)}I", *rec.shape))
            parts.append(
                struct.pack(
                    "<iQQQ",
                    rec.qp,
                    np.float64(rec.step_size).view(np.uint64).item(),
                    rec.payload_offset,
                    rec.payload_length,
                )
            )
        parts.append(self.payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CompressedModel":
        view = memoryview(blob)
        offset = 0

        def need(n: int, what: str) -> memoryview:
            nonlocal offset
            if offset + n > len(view):
                raise DecodingError(
                    f"container truncated while reading {what}", byte_offset=offset
                )
            chunk = view[offset : offset + n]
            offset += n
            return chunk

        if bytes(need(4, "magic")) != MAGIC:
            raise DecodingError("bad container magic", byte_offset=0)
        version, count = struct.unpack("<HI", need(6, "header"))
        if version != VERSION:
            raise DecodingError(f"unsupported container version {version}", byte_offset=4)

        records = []
        for i in range(count):
            (name_len,) = struct.unpack("<H", need(2, f"tensor {i} name length"))
            name = bytes(need(name_len, f"tensor {i} name")).decode("utf-8")
            (rank,) = struct.unpack("<I", need(4, f"tensor {i} rank"))
            if rank > 32:
                raise DecodingError(
                    f"tensor {name!r} has implausible rank {rank}",
                    byte_offset=offset - 4,
                )
            dims = struct.unpack(f"<{rank}I", need(4 * rank, f"tensor {i} dims"))
            qp, delta_bits, p_off, p_len = struct.unpack(
                "<iQQQ", need(28, f"tensor {i} directory entry")
            )
            delta = np.uint64(delta_bits).view(np.float64).item()
            n = 1
            for d in dims:
                n *= d
            if n > _INT32_MAX:
                raise DecodingError(
                    f"tensor {name!r} element count {n} is out of range",
                    byte_offset=offset - 28,
                )
            records.append(
                TensorRecord(
                    name=name,
                    shape=tuple(int(d) for d in dims),
                    qp=qp,
                    step_size=delta,
                    payload_offset=p_off,
                    payload_length=p_len,
                )
            )

        payload = bytes(view[offset:])
        for rec in records:
            if rec.payload_offset + rec.payload_length > len(payload):
                raise DecodingError(
                    f"tensor {rec.name!r} payload range "
                    f"[{rec.payload_offset}, {rec.payload_offset + rec.payload_length}) "
                    f"exceeds the {len(payload)}-byte payload section",
                    byte_offset=offset,
                )
        if records:
            expected_end = max(r.payload_offset + r.payload_length for r in records)
        else:
            expected_end = 0
        if len(payload) != expected_end:
            raise DecodingError(
                f"container has {len(payload) - expected_end} trailing bytes",
                byte_offset=offset + expected_end,
            )
        return cls(records=tuple(records), payload=payload)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "CompressedModel":
        return cls.from_bytes(Path(path).read_bytes())


def encode(tensors: list[QuantizedTensor]) -> CompressedModel:
    """Entropy-codes each tensor's indices; lossless over indices.

    Tensors are coded independently with fresh context probabilities, then
    concatenated in declaration order.  Duplicate names are rejected so the
    container can be mapped back to a parameter set unambiguously.
    """
    seen: set[str] = set()
    records = []
    chunks = []
    offset = 0
    for q in tensors:
        q.validate()
        if q.name in seen:
            raise EncodingError(f"duplicate tensor name {q.name!r}")
        seen.add(q.name)
        chunk = encode_indices(q.indices)
        records.append(
            TensorRecord(
                name=q.name,
                shape=q.shape,
                qp=q.qp,
                step_size=q.step_size,
                payload_offset=offset,
                payload_length=len(chunk),
            )
        )
        chunks.append(chunk)
        offset += len(chunk)
    return CompressedModel(records=tuple(records), payload=b"".join(chunks))


def decode(model: CompressedModel) -> list[QuantizedTensor]:
    """Recovers every tensor's exact indices from the payload blob."""
    header_len = len(model.to_bytes()) - len(model.payload)
    out = []
    for rec in model.records:
        chunk = model.payload[
            rec.payload_offset : rec.payload_offset + rec.payload_length
        ]
        if rec.count == 0:
            if rec.payload_length != 0:
                raise DecodingError(
                    f"tensor {rec.name!r} is empty but has a "
                    f"{rec.payload_length}-byte payload",
                    byte_offset=header_len + rec.payload_offset,
                )
            indices = np.empty(0, dtype=np.int32)
        else:
            indices, consumed = decode_indices(chunk, rec.count)
            if consumed < 0:
                raise DecodingError(
                    f"tensor {rec.name!r}: malformed or truncated stream",
                    byte_offset=header_len + rec.payload_offset + (-consumed - 1),
                )
            if consumed != rec.payload_length:
                raise DecodingError(
                    f"tensor {rec.name!r}: {rec.payload_length - consumed} "
                    f"trailing payload bytes",
                    byte_offset=header_len + rec.payload_offset + consumed,
                )
        out.append(
            QuantizedTensor(
                name=rec.name,
                indices=indices,
                step_size=rec.step_size,
                shape=rec.shape,
                qp=rec.qp,
            )
        )
    return out


def compress_parameter_set(params: ParameterSet, config: QuantConfig) -> bytes:
    """Quantizes and encodes a whole model into container bytes."""
    config.validate()
    tensors = [
        quantize(
            array,
            config.step_size_for(name),
            name=name,
            qp=config.effective_qp(name),
        )
        for name, array in params
    ]
    return encode(tensors).to_bytes()


def decompress_parameter_set(blob: bytes) -> ParameterSet:
    """Parses container bytes back into a dequantized parameter set."""
    model = CompressedModel.from_bytes(blob)
    return ParameterSet((q.name, dequantize(q)) for q in decode(model))


class CompressedTransport:
    """Model transfers that quantize and entropy-code every hop.

    The byte count is the serialized container size; the delivered
    parameters are the receiver-side reconstruction (dequantized), so both
    directions see exactly what a real wire would carry.
    """

    def __init__(self, config: QuantConfig) -> None:
        config.validate()
        self.config = config

    def send(self, params: ParameterSet) -> tuple[ParameterSet, int]:
        blob = compress_parameter_set(params, self.config)
        return decompress_parameter_set(blob), len(blob)
