"""Per-feature activation statistics and the SYMA wire format.

Calibration activations are never kept around: each batch is reduced to
per-input-feature aggregates (l2 norm, mean, population variance, token
count), and batches merge through the usual pooled-moment formulas. These
aggregates are the only view of the calibration data the scoring and
fine-tuning code ever sees.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .matrix import FormatError, col_pnorm, ensure_matrix

SYMA_MAGIC = b"SYMA1\x00"
_SYMA_HEADER = struct.Struct("<IQ")


@dataclass(frozen=True)
class ActivationStats:
    """Aggregates over all calibration tokens, one entry per input feature.

    variance is the population variance (divide by n): with zero or one
    token it is exactly zero, and consumers guard the division themselves.
    """

    feature_count: int
    token_count: int
    col_l2: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        for name in ("col_l2", "mean", "variance"):
            v = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if v.shape != (self.feature_count,):
                raise ValueError(f"{name} must have length {self.feature_count}, got shape {v.shape}")
            if not np.isfinite(v).all():
                raise ValueError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, v)
        if self.token_count < 0:
            raise ValueError("token_count must be non-negative")
        if (self.col_l2 < 0).any():
            raise ValueError("col_l2 entries must be non-negative")
        if (self.variance < 0).any():
            raise ValueError("variance entries must be non-negative")
        if self.token_count == 0 and (
            self.col_l2.any() or self.mean.any() or self.variance.any()
        ):
            raise ValueError("zero-token stats must have all-zero vectors")

    @classmethod
    def empty(cls, feature_count: int) -> "ActivationStats":
        z = np.zeros(feature_count)
        return cls(feature_count, 0, z, z.copy(), z.copy())


def compute_stats(x) -> ActivationStats:
    """Reduce a token matrix (rows = tokens, cols = features) to stats."""
    x = ensure_matrix(x, "activations")
    tokens, features = x.shape
    if tokens == 0:
        return ActivationStats.empty(features)
    col_l2 = col_pnorm(x, 2)
    mean = x.mean(axis=0)
    variance = x.var(axis=0)
    return ActivationStats(features, tokens, col_l2, mean, variance)


def merge_stats(a: ActivationStats, b: ActivationStats) -> ActivationStats:
    """Combine two stats as if their token sets had been concatenated."""
    if a.feature_count != b.feature_count:
        raise ValueError(
            f"feature_count mismatch: {a.feature_count} vs {b.feature_count}"
        )
    if a.token_count == 0:
        return b
    if b.token_count == 0:
        return a
    n = a.token_count + b.token_count
    col_l2 = np.hypot(a.col_l2, b.col_l2)
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.token_count / n)
    # Chan's pooled second moment; every term is non-negative.
    m2 = (
        a.variance * a.token_count
        + b.variance * b.token_count
        + delta * delta * (a.token_count * b.token_count / n)
    )
    return ActivationStats(a.feature_count, n, col_l2, mean, m2 / n)


def store_stats(s: ActivationStats) -> bytes:
    head = SYMA_MAGIC + _SYMA_HEADER.pack(s.feature_count, s.token_count)
    body = b"".join(
        np.asarray(v, dtype="<f4").tobytes() for v in (s.col_l2, s.mean, s.variance)
    )
    return head + body


def load_stats(blob: bytes) -> ActivationStats:
    head = len(SYMA_MAGIC) + _SYMA_HEADER.size
    if len(blob) < head or blob[: len(SYMA_MAGIC)] != SYMA_MAGIC:
        raise FormatError("not a SYMA payload (bad magic)")
    feature_count, token_count = _SYMA_HEADER.unpack_from(blob, len(SYMA_MAGIC))
    if len(blob) != head + 3 * 4 * feature_count:
        raise FormatError("SYMA payload length does not match feature_count")
    arrays = []
    for i in range(3):
        offset = head + 4 * feature_count * i
        arrays.append(
            np.frombuffer(blob, dtype="<f4", count=feature_count, offset=offset).astype(
                np.float64
            )
        )
    return ActivationStats(feature_count, token_count, *arrays)


def write_stats(path, s: ActivationStats) -> None:
    with open(path, "wb") as fh:
        fh.write(store_stats(s))


def read_stats(path) -> ActivationStats:
    with open(path, "rb") as fh:
        return load_stats(fh.read())
