"""Deterministic random-stream derivation.

Every stochastic routine takes an explicit ``numpy.random.Generator``.
Streams are derived from a master seed plus integer key components via a
counter-based bit generator (Philox), so that (master, key...) always maps
to the same stream regardless of how many other streams were consumed.
"""

from __future__ import annotations

import numpy as np


def derive_stream(master_seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator keyed by (master_seed, *key)."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def split_stream(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    """Split ``rng`` into ``count`` child generators (parent stays usable)."""
    seeds = rng.integers(0, 2**63 - 1, size=count)
    return [np.random.Generator(np.random.Philox(np.random.SeedSequence(int(s)))) for s in seeds]
