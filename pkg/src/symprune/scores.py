"""Per-weight importance scores.

Every scorer maps a weight matrix to a same-shaped matrix of non-negative
values; only the ordering matters downstream (lowest-scored weights are
pruned first). The reciprocal of a zero row/column norm is defined as zero:
a zero norm means every weight it covers is zero, so those entries must
score zero rather than NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import ActivationStats
from .matrix import col_pnorm, ensure_matrix, row_pnorm
from .rng import sample_without_replacement

METHODS = (
    "magnitude",
    "wanda",
    "owanda",
    "symmetric",
    "general_sym",
    "lp",
    "ria",
    "stochria",
    "strategy",
)
STRATEGIES = ("S1", "S2", "S3", "S4")
SYMMETRIC_VARIANTS = ("sum_norm", "root_sum_square")

_ROW_STREAM = 0
_COL_STREAM = 1


@dataclass(frozen=True)
class ScoreConfig:
    method: str = "ria"
    alpha: float = 0.5
    p: float = 1
    beta: float = 0.1
    seed: int = 0
    strategy: str = "S1"
    symmetric_variant: str = "sum_norm"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown score method {self.method!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.symmetric_variant not in SYMMETRIC_VARIANTS:
            raise ValueError(f"unknown symmetric variant {self.symmetric_variant!r}")


def _reciprocal_or_zero(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    nz = v != 0
    out[nz] = 1.0 / v[nz]
    return out


def _activation_factor(w: np.ndarray, stats: ActivationStats, alpha: float) -> np.ndarray:
    if stats.feature_count != w.shape[0]:
        raise ValueError(
            f"stats cover {stats.feature_count} features but W has {w.shape[0]} rows"
        )
    return (stats.col_l2**alpha)[:, None]


def score_magnitude(w) -> np.ndarray:
    return np.abs(ensure_matrix(w))


def score_general_sym(w, x_col_norms, y_row_norms) -> np.ndarray:
    """|W_jk| * (input-side column norm j + output-side row norm k)."""
    w = ensure_matrix(w)
    x = np.asarray(x_col_norms, dtype=np.float64)
    y = np.asarray(y_row_norms, dtype=np.float64)
    if x.shape != (w.shape[0],):
        raise ValueError(f"x_col_norms must have length {w.shape[0]}")
    if y.shape != (w.shape[1],):
        raise ValueError(f"y_row_norms must have length {w.shape[1]}")
    if (x < 0).any() or (y < 0).any():
        raise ValueError("norm vectors must be non-negative")
    return np.abs(w) * (x[:, None] + y[None, :])


def score_wanda(w, stats: ActivationStats, alpha: float = 1.0) -> np.ndarray:
    w = ensure_matrix(w)
    return np.abs(w) * _activation_factor(w, stats, alpha)


def score_symmetric(w, variant: str = "sum_norm") -> np.ndarray:
    """Self-calibrated score from the weight's own row/column l2 norms."""
    w = ensure_matrix(w)
    rn = row_pnorm(w, 2)
    cn = col_pnorm(w, 2)
    if variant == "sum_norm":
        factor = rn[:, None] + cn[None, :]
    elif variant == "root_sum_square":
        factor = np.sqrt(rn[:, None] ** 2 + cn[None, :] ** 2)
    else:
        raise ValueError(f"unknown symmetric variant {variant!r}")
    return np.abs(w) * factor


def score_lp(w, p=1) -> np.ndarray:
    """Relative importance: |W_jk| * (1/row p-norm + 1/column p-norm)."""
    w = ensure_matrix(w)
    r = _reciprocal_or_zero(row_pnorm(w, p))
    c = _reciprocal_or_zero(col_pnorm(w, p))
    return np.abs(w) * (r[:, None] + c[None, :])


def score_ria(w, stats: ActivationStats, alpha: float = 0.5, p=1) -> np.ndarray:
    """Relative importance scaled by the input activation norm to power alpha."""
    w = ensure_matrix(w)
    return score_lp(w, p) * _activation_factor(w, stats, alpha)


def score_stochria(
    w,
    stats: ActivationStats | None = None,
    alpha: float = 0.5,
    beta: float = 0.1,
    seed: int = 0,
) -> np.ndarray:
    """Relative importance over sampled row/column subsets of size
    tau = max(1, floor(beta * min(b, c))).

    Each row and column draws its own subset from a counter-based stream
    keyed by (seed, axis, index), so the output is identical no matter the
    evaluation order. With beta = 1 on square matrices the subsets cover
    full rows/columns and the result matches score_ria bit for bit.
    """
    w = ensure_matrix(w)
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    b, c = w.shape
    tau = max(1, math.floor(beta * min(b, c)))
    aw = np.abs(w)
    row_rec = np.zeros(b)
    for j in range(b):
        idx = sample_without_replacement(seed, _ROW_STREAM, j, c, min(tau, c))
        sub = aw[j, idx].sum()
        if sub != 0:
            row_rec[j] = 1.0 / sub
    col_rec = np.zeros(c)
    for k in range(c):
        idx = sample_without_replacement(seed, _COL_STREAM, k, b, min(tau, b))
        sub = aw[idx, k].sum()
        if sub != 0:
            col_rec[k] = 1.0 / sub
    s = aw * (row_rec[:, None] + col_rec[None, :])
    if stats is not None:
        s = s * _activation_factor(w, stats, alpha)
    return s


def score_strategy(w, p=1, strategy: str = "S1") -> np.ndarray:
    """Alternative reweightings of the row/column p-norms.

    S1 multiplies by summed reciprocal norms (the score_lp default), S2
    divides by summed norms, S3 multiplies by summed norms, S4 divides by
    summed reciprocal norms. Zero denominators yield score zero.
    """
    if strategy == "S1":
        return score_lp(w, p)
    w = ensure_matrix(w)
    rn = row_pnorm(w, p)
    cn = col_pnorm(w, p)
    aw = np.abs(w)
    if strategy == "S3":
        return aw * (rn[:, None] + cn[None, :])
    if strategy == "S2":
        denom = rn[:, None] + cn[None, :]
    elif strategy == "S4":
        denom = _reciprocal_or_zero(rn)[:, None] + _reciprocal_or_zero(cn)[None, :]
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    out = np.zeros_like(aw)
    nz = denom > 0
    out[nz] = aw[nz] / denom[nz]
    return out


def compute_score(
    w,
    config: ScoreConfig,
    stats: ActivationStats | None = None,
    x_col_norms=None,
    y_row_norms=None,
) -> np.ndarray:
    """Dispatch on config.method; raises ValueError when required inputs are missing."""
    m = config.method
    if m == "magnitude":
        return score_magnitude(w)
    if m == "wanda":
        if stats is None:
            raise ValueError("method 'wanda' requires activation stats")
        return score_wanda(w, stats, config.alpha)
    if m == "owanda":
        if y_row_norms is None:
            raise ValueError("method 'owanda' requires output-side row norms")
        w = ensure_matrix(w)
        return score_general_sym(w, np.zeros(w.shape[0]), y_row_norms)
    if m == "general_sym":
        if x_col_norms is None or y_row_norms is None:
            raise ValueError("method 'general_sym' requires both norm vectors")
        return score_general_sym(w, x_col_norms, y_row_norms)
    if m == "symmetric":
        return score_symmetric(w, config.symmetric_variant)
    if m == "lp":
        return score_lp(w, config.p)
    if m == "ria":
        if stats is None:
            raise ValueError("method 'ria' requires activation stats")
        return score_ria(w, stats, config.alpha, config.p)
    if m == "stochria":
        if stats is None and config.alpha > 0:
            raise ValueError("method 'stochria' with alpha > 0 requires activation stats")
        return score_stochria(w, stats, config.alpha, config.beta, config.seed)
    if m == "strategy":
        return score_strategy(w, config.p, config.strategy)
    raise ValueError(f"unknown score method {m!r}")
