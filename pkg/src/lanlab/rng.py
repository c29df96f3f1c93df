"""Counter-based random streams for order-independent replications.

Every replication draws from its own Philox generator whose key is derived
from ``(master_seed, replication_index, *extra)`` through ``SeedSequence``.
Two runs that share the key produce identical draws no matter how many
other replications run alongside them or in which order they are scheduled.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "streams"]


def stream(seed: int, rep: int = 0, *extra: int) -> np.random.Generator:
    """Return the Philox generator keyed by ``(seed, rep, *extra)``."""
    if seed < 0 or rep < 0 or any(e < 0 for e in extra):
        raise ValueError("seed and stream indices must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(rep), *map(int, extra)))
    return np.random.Generator(np.random.Philox(ss))


def streams(seed: int, reps, *extra: int) -> list[np.random.Generator]:
    return [stream(seed, int(r), *extra) for r in reps]
