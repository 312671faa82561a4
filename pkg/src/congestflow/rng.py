"""Named random substreams.

Every random choice is drawn from a stream keyed by (seed, module, phase,
index), so a single phase can be replayed without running the ones before it.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def substream(seed: int, *names) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key(x) for x in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def node_stream(seed: int, node: int) -> np.random.Generator:
    return substream(seed, "node", node)


def child_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))
