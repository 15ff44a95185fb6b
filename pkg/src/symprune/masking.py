"""Keep/prune masks: unstructured top-k, N:M structured patterns, SYMM IO.

Selection is purely comparison-based with a fixed tie-break (lower row-major
index wins), so masks are deterministic and invariant under any strictly
increasing transform of the scores.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .matrix import FormatError, ensure_matrix

SYMM_MAGIC = b"SYMM1\x00"
_SYMM_HEADER = struct.Struct("<IIBfBBB")

PATTERN_UNSTRUCTURED = "unstructured"
PATTERN_NM = "nm"
_PATTERN_TAGS = {PATTERN_UNSTRUCTURED: 0, PATTERN_NM: 1}
_PATTERN_NAMES = {v: k for k, v in _PATTERN_TAGS.items()}

GROUPS = ("per_layer", "per_row", "per_column")

AXIS_INPUT = "input_dim"
AXIS_OUTPUT = "output_dim"
_AXIS_TAGS = {AXIS_INPUT: 0, AXIS_OUTPUT: 1}
_AXIS_NAMES = {v: k for k, v in _AXIS_TAGS.items()}


@dataclass(frozen=True)
class SparsityMask:
    """Boolean keep grid plus the pattern it was built under.

    epsilon is the declared target sparsity for unstructured masks and 0 for
    N:M masks; n/m/axis are 0/0/input_dim unless the pattern is N:M.
    """

    keep: np.ndarray
    pattern: str = PATTERN_UNSTRUCTURED
    epsilon: float = 0.0
    n: int = 0
    m: int = 0
    axis: str = AXIS_INPUT

    def __post_init__(self):
        k = np.ascontiguousarray(np.asarray(self.keep, dtype=bool))
        if k.ndim != 2:
            raise ValueError("mask must be 2-D")
        object.__setattr__(self, "keep", k)
        if self.pattern not in _PATTERN_TAGS:
            raise ValueError(f"unknown mask pattern {self.pattern!r}")
        if self.axis not in _AXIS_TAGS:
            raise ValueError(f"unknown axis {self.axis!r}")
        if self.pattern == PATTERN_NM:
            if not 0 < self.n <= self.m:
                raise ValueError("N:M pattern requires 0 < n <= m")
            _check_nm_structure(k, self.n, self.m, self.axis)
        elif not 0 <= self.epsilon <= 1:
            raise ValueError("declared epsilon must lie in [0, 1]")

    @property
    def rows(self) -> int:
        return self.keep.shape[0]

    @property
    def cols(self) -> int:
        return self.keep.shape[1]


def _check_nm_structure(keep: np.ndarray, n: int, m: int, axis: str) -> None:
    rows, cols = keep.shape
    if axis == AXIS_INPUT:
        if rows % m:
            raise ValueError(f"rows={rows} not divisible by m={m}")
        counts = keep.reshape(rows // m, m, cols).sum(axis=1)
    else:
        if cols % m:
            raise ValueError(f"cols={cols} not divisible by m={m}")
        counts = keep.reshape(rows, cols // m, m).sum(axis=2)
    if (counts != n).any():
        raise ValueError(f"mask violates {n}:{m} structure along {axis}")


def build_unstructured_mask(scores, epsilon: float, group: str = "per_layer") -> SparsityMask:
    """Prune the floor(epsilon * group_size) lowest scores within each group."""
    s = ensure_matrix(scores, "scores")
    if not 0 <= epsilon < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    if group not in GROUPS:
        raise ValueError(f"unknown comparison group {group!r}")
    keep = np.ones(s.shape, dtype=bool)
    if group == "per_layer":
        k = math.floor(epsilon * s.size)
        order = np.argsort(s.ravel(), kind="stable")
        keep.ravel()[order[:k]] = False
    elif group == "per_row":
        k = math.floor(epsilon * s.shape[1])
        if k:
            order = np.argsort(s, axis=1, kind="stable")
            np.put_along_axis(keep, order[:, :k], False, axis=1)
    else:
        k = math.floor(epsilon * s.shape[0])
        if k:
            order = np.argsort(s, axis=0, kind="stable")
            np.put_along_axis(keep, order[:k, :], False, axis=0)
    return SparsityMask(keep, PATTERN_UNSTRUCTURED, epsilon=float(epsilon))


def build_nm_mask(scores, n: int, m: int, axis: str = AXIS_INPUT) -> SparsityMask:
    """Keep the n highest scores in every aligned group of m consecutive entries."""
    s = ensure_matrix(scores, "scores")
    if not 0 < n <= m:
        raise ValueError(f"need 0 < n <= m, got {n}:{m}")
    if axis not in _AXIS_TAGS:
        raise ValueError(f"unknown axis {axis!r}")
    rows, cols = s.shape
    dim = rows if axis == AXIS_INPUT else cols
    if dim % m:
        raise ValueError(f"{axis} size {dim} not divisible by group size {m}")
    if axis == AXIS_INPUT:
        grouped = s.reshape(rows // m, m, cols)
        order = np.argsort(-grouped, axis=1, kind="stable")
        keep = np.zeros_like(grouped, dtype=bool)
        np.put_along_axis(keep, order[:, :n, :], True, axis=1)
        keep = keep.reshape(rows, cols)
    else:
        grouped = s.reshape(rows, cols // m, m)
        order = np.argsort(-grouped, axis=2, kind="stable")
        keep = np.zeros_like(grouped, dtype=bool)
        np.put_along_axis(keep, order[:, :, :n], True, axis=2)
        keep = keep.reshape(rows, cols)
    return SparsityMask(keep, PATTERN_NM, n=n, m=m, axis=axis)


def apply_mask(w, mask: SparsityMask) -> np.ndarray:
    w = ensure_matrix(w, "weights")
    if w.shape != mask.keep.shape:
        raise ValueError(f"weights {w.shape} and mask {mask.keep.shape} differ in shape")
    return w * mask.keep


def mask_density(mask: SparsityMask) -> float:
    return float(mask.keep.sum() / mask.keep.size)


def dump_symm(mask: SparsityMask) -> bytes:
    head = SYMM_MAGIC + _SYMM_HEADER.pack(
        mask.rows,
        mask.cols,
        _PATTERN_TAGS[mask.pattern],
        float(mask.epsilon),
        mask.n,
        mask.m,
        _AXIS_TAGS[mask.axis],
    )
    bits = np.packbits(mask.keep.astype(np.uint8).ravel(), bitorder="big")
    return head + bits.tobytes()


def load_symm(blob: bytes) -> SparsityMask:
    head = len(SYMM_MAGIC) + _SYMM_HEADER.size
    if len(blob) < head or blob[: len(SYMM_MAGIC)] != SYMM_MAGIC:
        raise FormatError("not a SYMM payload (bad magic)")
    rows, cols, ptag, epsilon, n, m, atag = _SYMM_HEADER.unpack_from(blob, len(SYMM_MAGIC))
    if ptag not in _PATTERN_NAMES:
        raise FormatError(f"unknown SYMM pattern tag {ptag}")
    if atag not in _AXIS_NAMES:
        raise FormatError(f"unknown SYMM axis tag {atag}")
    nbytes = -(-rows * cols // 8)
    if len(blob) != head + nbytes:
        raise FormatError("SYMM payload length does not match declared shape")
    packed = np.frombuffer(blob, dtype=np.uint8, offset=head)
    keep = np.unpackbits(packed, count=rows * cols, bitorder="big").astype(bool)
    return SparsityMask(
        keep.reshape(rows, cols),
        _PATTERN_NAMES[ptag],
        epsilon=float(epsilon),
        n=n,
        m=m,
        axis=_AXIS_NAMES[atag],
    )


def write_symm(path, mask: SparsityMask) -> None:
    with open(path, "wb") as fh:
        fh.write(dump_symm(mask))


def read_symm(path) -> SparsityMask:
    with open(path, "rb") as fh:
        return load_symm(fh.read())
