"""Writers for the engine's SYMW/SYMA wire formats plus streaming stats.

The formats are the contract between this exporter and the pruning engine;
they are produced here from their byte-level definitions rather than by
importing the engine.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

SYMW_MAGIC = b"SYMW1\x00"
SYMA_MAGIC = b"SYMA1\x00"
_F32 = 1


def dump_symw(values: np.ndarray) -> bytes:
    """Matrix payload: magic, u8 dtype tag, u32 rows/cols, f32 row-major."""
    m = np.ascontiguousarray(values, dtype="<f4")
    if m.ndim != 2:
        raise ValueError(f"SYMW requires a 2-D matrix, got shape {m.shape}")
    rows, cols = m.shape
    return SYMW_MAGIC + struct.pack("<BII", _F32, rows, cols) + m.tobytes(order="C")


def dump_syma(feature_count: int, token_count: int, col_l2, mean, variance) -> bytes:
    head = SYMA_MAGIC + struct.pack("<IQ", feature_count, token_count)
    body = b"".join(
        np.ascontiguousarray(v, dtype="<f4").tobytes() for v in (col_l2, mean, variance)
    )
    return head + body


@dataclass
class StreamingStats:
    """Per-feature moments accumulated batch by batch in float64.

    Merging uses the pooled-moment update, so splitting a token stream into
    any batching yields the same result as one pass (up to float noise).
    """

    feature_count: int
    token_count: int = 0
    sumsq: np.ndarray = field(init=False)
    mean: np.ndarray = field(init=False)
    m2: np.ndarray = field(init=False)

    def __post_init__(self):
        self.sumsq = np.zeros(self.feature_count)
        self.mean = np.zeros(self.feature_count)
        self.m2 = np.zeros(self.feature_count)

    def update(self, tokens: np.ndarray) -> None:
        """Fold in a batch shaped (n_tokens, feature_count)."""
        x = np.asarray(tokens, dtype=np.float64).reshape(-1, self.feature_count)
        n_b = x.shape[0]
        if n_b == 0:
            return
        self.sumsq += (x * x).sum(axis=0)
        mean_b = x.mean(axis=0)
        m2_b = ((x - mean_b) ** 2).sum(axis=0)
        n = self.token_count + n_b
        delta = mean_b - self.mean
        self.m2 += m2_b + delta * delta * (self.token_count * n_b / n)
        self.mean = self.mean + delta * (n_b / n)
        self.token_count = n

    def to_syma(self) -> bytes:
        if self.token_count == 0:
            zeros = np.zeros(self.feature_count)
            return dump_syma(self.feature_count, 0, zeros, zeros, zeros)
        col_l2 = np.sqrt(self.sumsq)
        variance = self.m2 / self.token_count
        return dump_syma(self.feature_count, self.token_count, col_l2, self.mean, variance)
