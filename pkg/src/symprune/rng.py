"""Counter-based random streams.

Every stochastic draw in the engine is keyed by (seed, stream, index) so the
result is independent of evaluation order and of how work is partitioned
across threads.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1


def philox_generator(seed: int, stream: int, index: int) -> np.random.Generator:
    """Generator whose output depends only on (seed, stream, index)."""
    key = ((seed & _MASK64) << 64) | ((stream & _MASK32) << 32) | (index & _MASK32)
    return np.random.Generator(np.random.Philox(key=key))


def sample_without_replacement(seed: int, stream: int, index: int, n: int, k: int) -> np.ndarray:
    """Draw k distinct indices from range(n), returned sorted ascending."""
    if not 0 < k <= n:
        raise ValueError(f"cannot sample {k} of {n} indices")
    idx = philox_generator(seed, stream, index).choice(n, size=k, replace=False)
    idx.sort()
    return idx
