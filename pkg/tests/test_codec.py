"""Entropy coder and container round trips, bounds, and corruption handling."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedqsim.compression.codec import (
    MAGIC,
    CompressedModel,
    CompressedTransport,
    TensorRecord,
    compress_parameter_set,
    decode,
    decompress_parameter_set,
    encode,
)
from fedqsim.compression.quant import QuantConfig, quantize, step_size
from fedqsim.compression.rangecoder import (
    FLUSH_BYTES,
    count_bins,
    decode_indices,
    encode_indices,
    payload_budget,
)
from fedqsim.errors import DecodingError, EncodingError


def round_trip(values: np.ndarray) -> np.ndarray:
    payload = encode_indices(values)
    decoded, consumed = decode_indices(payload, values.size)
    assert consumed == len(payload)
    return decoded


# ---------------------------------------------------------------------------
# Raw index stream


def test_index_stream_round_trip_basic():
    values = np.array([0, 1, -1, 5, -127, 1024, 0, 0, 3], dtype=np.int32)
    assert np.array_equal(round_trip(values), values)


def test_index_stream_extremes():
    values = np.array([2**31 - 1, -(2**31 - 1), 0, 1], dtype=np.int32)
    assert np.array_equal(round_trip(values), values)


def test_index_stream_single_value():
    for v in (0, 1, -1, 2**20):
        values = np.array([v], dtype=np.int32)
        assert np.array_equal(round_trip(values), values)


def test_empty_input_yields_empty_payload():
    assert encode_indices(np.empty(0, dtype=np.int32)) == b""
    decoded, consumed = decode_indices(b"", 0)
    assert decoded.size == 0 and consumed == 0


def test_payload_starts_with_zero_byte_and_flush():
    payload = encode_indices(np.array([7], dtype=np.int32))
    assert payload[0] == 0
    assert len(payload) >= FLUSH_BYTES


def test_encoding_is_deterministic():
    rng = np.random.default_rng(3)
    values = rng.integers(-1000, 1000, size=5000).astype(np.int32)
    assert encode_indices(values) == encode_indices(values)


def test_all_zero_million_fits_two_kilobytes():
    values = np.zeros(10**6, dtype=np.int32)
    payload = encode_indices(values)
    assert len(payload) < 2048
    decoded, consumed = decode_indices(payload, values.size)
    assert consumed == len(payload)
    assert not decoded.any()


def test_sparse_stream_compresses_below_budget():
    rng = np.random.default_rng(0)
    values = np.zeros(200_000, dtype=np.int32)
    hot = rng.choice(values.size, size=2000, replace=False)
    values[hot] = rng.integers(-40, 41, size=hot.size)
    payload = encode_indices(values)
    assert len(payload) < values.size // 8
    assert np.array_equal(round_trip(values), values)


def test_stationary_payload_near_entropy():
    # An i.i.d. stream's coded size approaches its per-symbol entropy.
    rng = np.random.default_rng(1)
    n = 120_000
    values = rng.choice(
        np.array([0, 1, -1, 2, -2], dtype=np.int32),
        size=n,
        p=[0.6, 0.15, 0.15, 0.05, 0.05],
    )
    probs = np.array([0.6, 0.15, 0.15, 0.05, 0.05])
    entropy_bits = float(-(probs * np.log2(probs)).sum())
    payload = encode_indices(values)
    assert len(payload) <= 1.2 * entropy_bits * n / 8 + 128


def test_count_bins_and_budget():
    # 0 -> 1 bin; +/-1 -> sig + sign + prefix(1) = 3 bins; 2 or 3 -> 5 bins.
    assert count_bins(np.array([0], dtype=np.int32)) == 1
    assert count_bins(np.array([1], dtype=np.int32)) == 3
    assert count_bins(np.array([-1], dtype=np.int32)) == 3
    assert count_bins(np.array([2], dtype=np.int32)) == 5
    assert count_bins(np.array([0, 1, 2], dtype=np.int32)) == 9
    assert payload_budget(10) == 84


def test_truncated_stream_reports_failure():
    values = np.arange(-500, 500, dtype=np.int32)
    payload = encode_indices(values)
    decoded, consumed = decode_indices(payload[: len(payload) // 2], values.size)
    assert consumed < 0
    # Asking for more symbols than were coded also fails or overconsumes.
    decoded, consumed = decode_indices(payload, values.size + 50)
    assert consumed < 0 or consumed > len(payload)


def test_corrupt_first_byte_detected():
    payload = bytearray(encode_indices(np.array([1, 2, 3], dtype=np.int32)))
    payload[0] = 0xAB
    _, consumed = decode_indices(bytes(payload), 3)
    assert consumed == -1


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.integers(-(2**31 - 1), 2**31 - 1), min_size=0, max_size=300
    )
)
def test_round_trip_property(values):
    arr = np.array(values, dtype=np.int32)
    payload = encode_indices(arr)
    decoded, consumed = decode_indices(payload, arr.size)
    assert consumed == len(payload)
    assert np.array_equal(decoded, arr)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.999), st.integers(0, 2**32 - 1))
def test_round_trip_property_sparse(sparsity, seed):
    rng = np.random.default_rng(seed)
    values = rng.integers(-100, 101, size=2000).astype(np.int32)
    values[rng.random(2000) < sparsity] = 0
    assert np.array_equal(round_trip(values), values)


# ---------------------------------------------------------------------------
# Container


def make_model(rng, tensor_specs):
    tensors = []
    for name, shape, qp in tensor_specs:
        delta = step_size(qp, 2)
        data = rng.standard_normal(shape) if np.prod(shape, dtype=int) else np.zeros(shape)
        tensors.append(quantize(data, delta, name=name, qp=qp))
    return tensors


def test_container_round_trip():
    rng = np.random.default_rng(2)
    tensors = make_model(rng, [
        ("layer0.weight", (8, 4), -30),
        ("layer0.bias", (8,), -24),
        ("scalar", (), -30),
        ("empty", (0, 3), -30),
    ])
    model = encode(tensors)
    blob = model.to_bytes()
    parsed = CompressedModel.from_bytes(blob)
    assert parsed.records == model.records
    assert parsed.payload == model.payload
    decoded = decode(parsed)
    assert [t.name for t in decoded] == [t.name for t in tensors]
    for original, recovered in zip(tensors, decoded):
        assert np.array_equal(original.indices, recovered.indices)
        assert recovered.shape == original.shape
        assert recovered.step_size == original.step_size
        assert recovered.qp == original.qp


def test_container_file_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    model = encode(make_model(rng, [("w", (5, 5), -28)]))
    path = tmp_path / "model.fqc"
    model.save(path)
    loaded = CompressedModel.load(path)
    assert loaded.to_bytes() == model.to_bytes()


def test_duplicate_tensor_names_rejected():
    rng = np.random.default_rng(5)
    tensors = make_model(rng, [("w", (3,), -30), ("w", (4,), -30)])
    with pytest.raises(EncodingError, match="duplicate"):
        encode(tensors)


def test_container_parse_errors_carry_offsets():
    rng = np.random.default_rng(6)
    blob = encode(make_model(rng, [("w", (6, 2), -30)])).to_bytes()

    with pytest.raises(DecodingError) as err:
        CompressedModel.from_bytes(b"XXXX" + blob[4:])
    assert err.value.byte_offset == 0

    with pytest.raises(DecodingError) as err:
        CompressedModel.from_bytes(blob[:4] + b"\x63\x00" + blob[6:])
    assert err.value.byte_offset == 4

    with pytest.raises(DecodingError, match="truncated"):
        CompressedModel.from_bytes(blob[:8])

    with pytest.raises(DecodingError, match="trailing"):
        CompressedModel.from_bytes(blob + b"\x00")

    # Implausible rank.
    bad_rank = bytearray(blob)
    name_len = 1  # "w"
    rank_at = 4 + 6 + 2 + name_len
    bad_rank[rank_at : rank_at + 4] = (99).to_bytes(4, "little")
    with pytest.raises(DecodingError, match="rank"):
        CompressedModel.from_bytes(bytes(bad_rank))


def test_payload_corruption_detected_or_changes_indices():
    # Without a checksum, corruption shows up either as a structural decode
    # failure or as different indices; it must never crash.
    rng = np.random.default_rng(7)
    tensors = make_model(rng, [("w", (64,), -30)])
    model = encode(tensors)
    blob = bytearray(model.to_bytes())
    header_len = len(blob) - len(model.payload)
    flagged = 0
    changed = 0
    for k in range(len(model.payload)):
        corrupt = bytearray(blob)
        corrupt[header_len + k] ^= 0x55
        try:
            recovered = decode(CompressedModel.from_bytes(bytes(corrupt)))
            if not np.array_equal(recovered[0].indices, tensors[0].indices):
                changed += 1
        except DecodingError:
            flagged += 1
    assert flagged + changed > 0.5 * len(model.payload)


def test_empty_tensor_with_payload_rejected():
    record = TensorRecord(name="e", shape=(0,), qp=0, step_size=1.0,
                          payload_offset=0, payload_length=3)
    model = CompressedModel(records=(record,), payload=b"\x00\x01\x02")
    with pytest.raises(DecodingError, match="empty"):
        decode(model)


def test_trailing_payload_bytes_rejected():
    values = np.array([3, -3, 9], dtype=np.int32)
    payload = encode_indices(values)
    record = TensorRecord(name="w", shape=(3,), qp=0, step_size=1.0,
                          payload_offset=0, payload_length=len(payload) + 2)
    model = CompressedModel(records=(record,), payload=payload + b"\x00\x00")
    with pytest.raises(DecodingError, match="trailing"):
        decode(model)


def test_empty_model_round_trip():
    model = encode([])
    parsed = CompressedModel.from_bytes(model.to_bytes())
    assert parsed.records == ()
    assert decode(parsed) == []


# ---------------------------------------------------------------------------
# Whole-parameter-set compression


def test_parameter_set_round_trip(toy_cg):
    _, params, _ = toy_cg
    config = QuantConfig(qp=-30)
    blob = compress_parameter_set(params, config)
    assert blob[:4] == MAGIC
    recovered = decompress_parameter_set(blob)
    assert recovered.names == params.names
    delta = config.step_size_for(None)
    for name, arr in params:
        assert recovered[name].shape == arr.shape
        assert np.max(np.abs(recovered[name] - arr)) <= delta / 2 + 1e-15


def test_compressed_bytes_shrink_with_coarser_qp(toy_cg):
    _, params, _ = toy_cg
    sizes = [len(compress_parameter_set(params, QuantConfig(qp=qp)))
             for qp in (-40, -30, -20)]
    assert sizes[0] > sizes[1] > sizes[2]


def test_transport_counts_container_bytes(toy_cg):
    _, params, _ = toy_cg
    transport = CompressedTransport(QuantConfig(qp=-30))
    delivered, nbytes = transport.send(params)
    assert nbytes == len(compress_parameter_set(params, transport.config))
    assert delivered.names == params.names
    # The delivered model is the wire reconstruction, not the original.
    assert not delivered.equal_bits(params)


def test_near_zero_step_recovers_float_values(toy_cg):
    # At a very fine step every float32-representable weight lands within
    # rounding distance of itself.
    _, params, _ = toy_cg
    config = QuantConfig(qp=-112)
    delta = config.step_size_for(None)
    assert delta < 2.0**-26
    blob = compress_parameter_set(params.rounded_to_float32(), config)
    recovered = decompress_parameter_set(blob)
    for name, arr in params.rounded_to_float32():
        assert np.allclose(recovered[name], arr, atol=delta, rtol=0)


def test_record_count_property():
    record = TensorRecord(name="w", shape=(3, 4, 5), qp=0, step_size=1.0,
                          payload_offset=0, payload_length=0)
    assert record.count == 60
    scalar = TensorRecord(name="s", shape=(), qp=0, step_size=1.0,
                          payload_offset=0, payload_length=0)
    assert scalar.count == 1
