"""Reproducible random streams.

Every random draw in a run comes from its own stream keyed by
``(seed, tag, step, agent)``. Keys are hashed with numpy's ``SeedSequence``
(tags are first reduced with CRC-32) and the stream itself is Philox-4x64-10,
a counter-based generator, so results do not depend on the order in which
streams are consumed.
"""

from __future__ import annotations

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, step: int = 0, agent: int = 0) -> np.random.Generator:
    """Independent generator for one ``(seed, tag, step, agent)`` key."""
    if seed < 0 or step < 0 or agent < 0:
        raise ValueError("seed, step and agent must be non-negative")
    ss = np.random.SeedSequence([seed & SEED_MASK, tag_key(tag), step, agent])
    return np.random.Generator(np.random.Philox(ss))
