"""Reproducible random-number streams.

Every stochastic component draws from a counter-based generator keyed by
(seed, *roles).  Roles are short strings ("u", "w", "censoring", ...) or
integers (replicate indices).  Two streams with different keys are
statistically independent, and adding a new instrumentation stream never
shifts the draws of an existing one.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "substream_seed"]


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream key integers must be nonnegative")
        return int(part)
    raise TypeError(f"stream key parts must be str or int, got {type(part)!r}")


def stream(seed: int, *parts) -> np.random.Generator:
    """Generator for the stream identified by (seed, *parts)."""
    key = tuple(_key_part(p) for p in parts)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def substream_seed(seed: int, *parts) -> int:
    """Derive a child seed, e.g. one per Monte Carlo replication.

    The child can itself be used as the ``seed`` of further streams, so a
    replication gets a whole family of role-keyed streams of its own.
    """
    key = tuple(_key_part(p) for p in parts)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])
