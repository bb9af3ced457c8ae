"""Master-seed discipline: named, independent substreams.

Every source of randomness in a run derives from one master seed through
:func:`substream`, keyed by a stream name plus optional integer indices
(round, slot, ...).  The derivation is stateless, so resuming from round t
needs no generator state capture, and toggling one feature never perturbs
another feature's stream.

Reserved stream names:

* ``"init"`` -- parameter initialization.
* ``"selection"`` -- per-round client sub-sampling (indexed by round).
* ``"queue"`` -- reserved for queue-composition randomness.  Queue chunking
  currently consumes no draws (it follows the already-random selection
  order), but the name is held so adding queue shuffling would not shift any
  other stream.
* ``"shuffle"`` -- per-client epoch shuffling (indexed by round, slot).
* ``"split"``, ``"partition"``, ``"ordering"``, ``"synthetic"`` -- data
  preparation.
"""

from __future__ import annotations

import hashlib

import numpy as np

STREAM_NAMES = (
    "init",
    "selection",
    "queue",
    "shuffle",
    "split",
    "partition",
    "ordering",
    "synthetic",
)


def stream_tag(name: str) -> int:
    """Stable 64-bit tag for a stream name (first 8 bytes of its SHA-256)."""
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def substream(master_seed: int, name: str, *indices: int) -> np.random.Generator:
    """Generator for the named stream, independent of every other stream.

    Seeded from ``SeedSequence([master_seed, tag(name), *indices])``; all
    components must be non-negative integers.
    """
    if master_seed < 0:
        raise ValueError(f"master seed must be non-negative, got {master_seed}")
    for i in indices:
        if i < 0:
            raise ValueError(f"stream indices must be non-negative, got {indices}")
    seq = np.random.SeedSequence([master_seed, stream_tag(name), *indices])
    return np.random.default_rng(seq)
