"""Dense matrix kernels and the SYMW wire format.

All engine arithmetic runs in float64 even though files store float32: the
verification suite asserts identities at 1e-9 tolerances that float32 cannot
hold. Matrices are plain 2-D numpy arrays; validation happens at the
boundaries (construction helpers, file IO) rather than on every kernel call.
"""

from __future__ import annotations

import struct

import numpy as np

SYMW_MAGIC = b"SYMW1\x00"
_SYMW_DTYPE_F32 = 1
_SYMW_HEADER = struct.Struct("<BII")

SUPPORTED_NORM_ORDERS = (0, 1, 2, 3, 4, np.inf)


class FormatError(ValueError):
    """A binary payload does not match its declared wire format."""


def ensure_matrix(values, name: str = "matrix") -> np.ndarray:
    """Return values as a C-contiguous 2-D float64 array with finite entries."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} contains NaN or Inf entries")
    return np.ascontiguousarray(m)


def _check_p(p) -> None:
    if not (p in (0, 1, 2, 3, 4) or (isinstance(p, float) and np.isinf(p) and p > 0)):
        raise ValueError(f"unsupported norm order p={p!r}; valid orders: 0, 1, 2, 3, 4, inf")


def vector_pnorm(v: np.ndarray, p) -> float:
    """p-norm of a 1-D vector; p=0 counts nonzeros, p=inf is max magnitude."""
    _check_p(p)
    v = np.asarray(v, dtype=np.float64)
    if p == 0:
        return float(np.count_nonzero(v))
    a = np.abs(v)
    if a.size == 0:
        return 0.0
    if p == 1:
        return float(a.sum())
    if p == 2:
        return float(np.sqrt((a * a).sum()))
    if np.isinf(p):
        return float(a.max())
    return float((a**p).sum() ** (1.0 / p))


def _row_pnorm_contiguous(m: np.ndarray, p) -> np.ndarray:
    # Reduces along the contiguous last axis so each row uses the same
    # pairwise summation tree as a plain 1-D sum; column norms reuse this on
    # the transposed copy, making row/column reductions bit-identical to
    # their vector counterparts.
    if p == 0:
        return np.count_nonzero(m, axis=1).astype(np.float64)
    a = np.abs(m)
    if p == 1:
        return a.sum(axis=1)
    if p == 2:
        return np.sqrt((a * a).sum(axis=1))
    if np.isinf(p):
        return a.max(axis=1)
    return (a**p).sum(axis=1) ** (1.0 / p)


def row_pnorm(m, p) -> np.ndarray:
    """Vector of per-row p-norms."""
    _check_p(p)
    return _row_pnorm_contiguous(ensure_matrix(m), p)


def col_pnorm(m, p) -> np.ndarray:
    """Vector of per-column p-norms."""
    _check_p(p)
    return _row_pnorm_contiguous(np.ascontiguousarray(ensure_matrix(m).T), p)


def frobenius(m) -> float:
    m = ensure_matrix(m)
    return float(np.sqrt((m * m).sum()))


def squared_frobenius(m) -> float:
    m = ensure_matrix(m)
    return float((m * m).sum())


def matmul(a, b) -> np.ndarray:
    a = ensure_matrix(a, "left factor")
    b = ensure_matrix(b, "right factor")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def dump_symw(m) -> bytes:
    """Serialize a matrix: magic, dtype tag, u32 rows/cols, f32 row-major values."""
    m = ensure_matrix(m)
    rows, cols = m.shape
    payload = m.astype("<f4").tobytes(order="C")
    return SYMW_MAGIC + _SYMW_HEADER.pack(_SYMW_DTYPE_F32, rows, cols) + payload


def load_symw(blob: bytes) -> np.ndarray:
    head = len(SYMW_MAGIC) + _SYMW_HEADER.size
    if len(blob) < head or blob[: len(SYMW_MAGIC)] != SYMW_MAGIC:
        raise FormatError("not a SYMW payload (bad magic)")
    dtype, rows, cols = _SYMW_HEADER.unpack_from(blob, len(SYMW_MAGIC))
    if dtype != _SYMW_DTYPE_F32:
        raise FormatError(f"unsupported SYMW dtype tag {dtype}")
    if len(blob) != head + 4 * rows * cols:
        raise FormatError("SYMW payload length does not match declared shape")
    values = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=head)
    return ensure_matrix(values.astype(np.float64).reshape(rows, cols), "SYMW values")


def write_symw(path, m) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_symw(m))


def read_symw(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return load_symw(fh.read())
