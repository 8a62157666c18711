"""Named, seedable random streams.

Every stochastic step (parameter init, shuffling, dropout, synthetic data)
draws from its own stream derived from a single root seed, so adding or
reordering consumers never perturbs the others.
"""

from __future__ import annotations

import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def named_rng(seed: int, *names: str) -> np.random.Generator:
    """Return a counter-based (Philox) generator for ``seed`` and a stream path.

    ``named_rng(7, "member", "3", "dropout")`` is always the same stream and
    is independent of ``named_rng(7, "member", "4", "dropout")``.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_name_key(n) for n in names))
    return np.random.Generator(np.random.Philox(seq))
