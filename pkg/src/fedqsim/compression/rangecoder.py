"""Binary range coder with adaptive contexts, plus index binarization.

The coder is a carry-propagating byte-oriented range coder: 32-bit range,
64-bit low with a cache/cache-size pair that delays bytes until carries
resolve, renormalizing whenever the range drops below 2^24.  Probabilities
live on a 15-bit scale and adapt by an exponential shift toward the coded
bit.  The stream opens with one zero byte (the initial cache) and closes
with five flush bytes, so a decoder consumes exactly the encoder's output
length; any shortfall or surplus is detectable.

Each index is binarized as: one significance bin (zero / non-zero), one
sign bin, then the magnitude minus one in order-0 exponential-Golomb form
whose prefix bins are context-coded by position (capped) and whose suffix
bins bypass the probability model.  Context probabilities are fresh per
tensor, so tensors can be coded independently and concatenated.

Kernels are compiled with numba; the first call per process pays the
compilation cost once (cached on disk afterwards).
"""

from __future__ import annotations

import numpy as np
from numba import njit

PROB_BITS = 15
PROB_TOTAL = 1 << PROB_BITS
PROB_INIT = PROB_TOTAL >> 1
MOVE_BITS = 5
_TOP = 1 << 24
_MASK32 = (1 << 32) - 1

# Context layout per tensor: [significance, sign, magnitude-prefix x 25].
NUM_MAGNITUDE_CONTEXTS = 25
NUM_CONTEXTS = 2 + NUM_MAGNITUDE_CONTEXTS
_CTX_SIG = 0
_CTX_SIGN = 1
_CTX_MAG = 2

# Encoder flush emits five bytes; every non-empty payload is at least that.
FLUSH_BYTES = 5


@njit(cache=True)
def count_bins(values: np.ndarray) -> int:
    """Exact number of binarization bins the encoder will emit."""
    bins = 0
    for idx in range(values.size):
        v = values[idx]
        bins += 1
        if v != 0:
            k = v if v > 0 else -v
            nb = 0
            t = k
            while t > 0:
                nb += 1
                t >>= 1
            bins += 1 + nb + (nb - 1)
    return bins


def payload_budget(bin_count: int) -> int:
    """Allocation bound: no bin costs two bytes even when fully mispredicted."""
    return 2 * bin_count + 64


@njit(cache=True)
def encode_kernel(values: np.ndarray, out: np.ndarray) -> int:
    """Encodes int32 ``values`` into ``out``; returns bytes written, -1 if full."""
    probs = np.full(NUM_CONTEXTS, PROB_INIT, dtype=np.int64)
    low = 0
    rng = _MASK32
    cache = 0
    cache_size = 1
    pos = 0
    capacity = out.size
    # Per-value bin plan, shared across iterations: context (-1 = bypass)
    # and bit value.  Worst case 1 sig + 1 sign + 31 prefix + 30 suffix = 63.
    ctxs = np.empty(64, dtype=np.int64)
    bits = np.empty(64, dtype=np.int64)

    for idx in range(values.size):
        v = values[idx]
        nbins = 1
        ctxs[0] = _CTX_SIG
        bits[0] = 1 if v != 0 else 0
        if v != 0:
            k = v if v > 0 else -v
            ctxs[nbins] = _CTX_SIGN
            bits[nbins] = 1 if v < 0 else 0
            nbins += 1
            nb = 0
            t = k
            while t > 0:
                nb += 1
                t >>= 1
            for i in range(nb - 1):
                c = i if i < NUM_MAGNITUDE_CONTEXTS - 1 else NUM_MAGNITUDE_CONTEXTS - 1
                ctxs[nbins] = _CTX_MAG + c
                bits[nbins] = 1
                nbins += 1
            c = nb - 1 if nb - 1 < NUM_MAGNITUDE_CONTEXTS - 1 else NUM_MAGNITUDE_CONTEXTS - 1
            ctxs[nbins] = _CTX_MAG + c
            bits[nbins] = 0
            nbins += 1
            for j in range(nb - 2, -1, -1):
                ctxs[nbins] = -1
                bits[nbins] = (k >> j) & 1
                nbins += 1

        for b in range(nbins):
            ctx = ctxs[b]
            bit = bits[b]
            if ctx >= 0:
                p = probs[ctx]
                bound = (rng >> PROB_BITS) * p
                if bit == 0:
                    rng = bound
                    probs[ctx] = p + ((PROB_TOTAL - p) >> MOVE_BITS)
                else:
                    low += bound
                    rng -= bound
                    probs[ctx] = p - (p >> MOVE_BITS)
            else:
                rng >>= 1
                if bit != 0:
                    low += rng
            while rng < _TOP:
                rng <<= 8
                # shift_low
                if (low & _MASK32) < 0xFF000000 or low > _MASK32:
                    carry = low >> 32
                    if pos >= capacity:
                        return -1
                    out[pos] = (cache + carry) & 0xFF
                    pos += 1
                    while cache_size > 1:
                        if pos >= capacity:
                            return -1
                        out[pos] = (0xFF + carry) & 0xFF
                        pos += 1
                        cache_size -= 1
                    cache = (low >> 24) & 0xFF
                    cache_size = 0
                cache_size += 1
                low = (low & 0x00FFFFFF) << 8

    for _ in range(FLUSH_BYTES):
        if (low & _MASK32) < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            if pos >= capacity:
                return -1
            out[pos] = (cache + carry) & 0xFF
            pos += 1
            while cache_size > 1:
                if pos >= capacity:
                    return -1
                out[pos] = (0xFF + carry) & 0xFF
                pos += 1
                cache_size -= 1
            cache = (low >> 24) & 0xFF
            cache_size = 0
        cache_size += 1
        low = (low & 0x00FFFFFF) << 8

    return pos


@njit(cache=True)
def decode_kernel(payload: np.ndarray, out_values: np.ndarray) -> int:
    """Decodes ``out_values.size`` indices from ``payload``.

    Returns the bytes consumed on success.  On a malformed or truncated
    stream returns ``-(pos + 1)`` where ``pos`` is the payload offset at
    which decoding failed.
    """
    n = out_values.size
    probs = np.full(NUM_CONTEXTS, PROB_INIT, dtype=np.int64)
    size = payload.size
    if size < FLUSH_BYTES:
        return -(size + 1)
    if payload[0] != 0:
        return -1
    code = 0
    for i in range(1, 5):
        code = (code << 8) | payload[i]
    rng = _MASK32
    pos = 5

    for idx in range(n):
        # significance
        p = probs[_CTX_SIG]
        bound = (rng >> PROB_BITS) * p
        if code < bound:
            sig = 0
            rng = bound
            probs[_CTX_SIG] = p + ((PROB_TOTAL - p) >> MOVE_BITS)
        else:
            sig = 1
            code -= bound
            rng -= bound
            probs[_CTX_SIG] = p - (p >> MOVE_BITS)
        while rng < _TOP:
            if pos >= size:
                return -(pos + 1)
            code = ((code << 8) | payload[pos]) & _MASK32
            pos += 1
            rng <<= 8

        if sig == 0:
            out_values[idx] = 0
            continue

        p = probs[_CTX_SIGN]
        bound = (rng >> PROB_BITS) * p
        if code < bound:
            negative = 0
            rng = bound
            probs[_CTX_SIGN] = p + ((PROB_TOTAL - p) >> MOVE_BITS)
        else:
            negative = 1
            code -= bound
            rng -= bound
            probs[_CTX_SIGN] = p - (p >> MOVE_BITS)
        while rng < _TOP:
            if pos >= size:
                return -(pos + 1)
            code = ((code << 8) | payload[pos]) & _MASK32
            pos += 1
            rng <<= 8

        nb = 1
        while True:
            i = nb - 1
            c = i if i < NUM_MAGNITUDE_CONTEXTS - 1 else NUM_MAGNITUDE_CONTEXTS - 1
            ctx = _CTX_MAG + c
            p = probs[ctx]
            bound = (rng >> PROB_BITS) * p
            if code < bound:
                cont = 0
                rng = bound
                probs[ctx] = p + ((PROB_TOTAL - p) >> MOVE_BITS)
            else:
                cont = 1
                code -= bound
                rng -= bound
                probs[ctx] = p - (p >> MOVE_BITS)
            while rng < _TOP:
                if pos >= size:
                    return -(pos + 1)
                code = ((code << 8) | payload[pos]) & _MASK32
                pos += 1
                rng <<= 8
            if cont == 0:
                break
            nb += 1
            if nb > 31:
                return -(pos + 1)

        k = 1
        for _ in range(nb - 1):
            rng >>= 1
            if code >= rng:
                bit = 1
                code -= rng
            else:
                bit = 0
            while rng < _TOP:
                if pos >= size:
                    return -(pos + 1)
                code = ((code << 8) | payload[pos]) & _MASK32
                pos += 1
                rng <<= 8
            k = (k << 1) | bit

        out_values[idx] = -k if negative == 1 else k

    return pos


def encode_indices(values: np.ndarray) -> bytes:
    """Coded payload for one tensor's flat int32 indices (empty in, empty out)."""
    values = np.ascontiguousarray(values, dtype=np.int32)
    if values.size == 0:
        return b""
    out = np.empty(payload_budget(int(count_bins(values))), dtype=np.uint8)
    written = encode_kernel(values, out)
    if written < 0:
        raise AssertionError("encoder exceeded its payload budget")
    return out[:written].tobytes()


def decode_indices(payload: bytes, count: int) -> tuple[np.ndarray, int]:
    """Decodes ``count`` indices; returns (values, bytes consumed).

    A negative consumed count reports failure: ``-(pos + 1)`` is the payload
    offset at which the stream proved malformed or truncated.  The caller
    owns turning that into an error with the full container offset, and
    should also check that a successful decode consumed the entire framed
    payload (anything less means trailing garbage).
    """
    values = np.empty(count, dtype=np.int32)
    if count == 0:
        return values, 0
    buf = np.frombuffer(payload, dtype=np.uint8)
    return values, int(decode_kernel(buf, values))
