"""Deterministic named RNG substreams.

All randomness in a run flows from one master seed. Independent components
(fold splits, per-repetition init, per-client batch sampling, ...) each get
their own stream derived from the master seed plus a tuple of name parts, so
results do not depend on scheduling or worker count.
"""

import hashlib

import numpy as np


def stream_seed(master_seed: int, *parts) -> int:
    """Derive a 64-bit seed from the master seed and a tuple of name parts.

    Parts are joined into a canonical string and hashed, so any mix of str/int
    parts works and the mapping is stable across platforms and runs.
    """
    key = "\x1f".join([str(int(master_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master_seed: int, *parts) -> np.random.Generator:
    """A numpy Generator for the named substream."""
    return np.random.default_rng(stream_seed(master_seed, *parts))
