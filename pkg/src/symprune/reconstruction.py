"""Reconstruction objectives for pruned weights.

Three flavours: the squared input-side error, the symmetric objective that
adds an output-side term using non-squared Frobenius norms, and its squared
variant. Input and output terms are always reported separately so one-sided
ablations reuse the same evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .matrix import ensure_matrix, squared_frobenius

OBJECTIVES = ("inprecon", "sym", "sym_squared")


@dataclass(frozen=True)
class ObjectiveReport:
    objective: str
    value: float
    input_term: float
    output_term: float

    def as_dict(self) -> dict:
        return {
            "objective": self.objective,
            "value": self.value,
            "input_term": self.input_term,
            "output_term": self.output_term,
        }


def _delta(w, w_tilde) -> np.ndarray:
    w = ensure_matrix(w, "weights")
    wt = ensure_matrix(w_tilde, "pruned weights")
    if w.shape != wt.shape:
        raise ValueError(f"weight shapes differ: {w.shape} vs {wt.shape}")
    return wt - w


def _input_sq(x, delta) -> float:
    x = ensure_matrix(x, "input calibration")
    if x.shape[1] != delta.shape[0]:
        raise ValueError(
            f"input calibration has {x.shape[1]} columns but weights have {delta.shape[0]} rows"
        )
    return squared_frobenius(x @ delta)


def _output_sq(y, delta) -> float:
    y = ensure_matrix(y, "output calibration")
    if y.shape[0] != delta.shape[1]:
        raise ValueError(
            f"output calibration has {y.shape[0]} rows but weights have {delta.shape[1]} columns"
        )
    return squared_frobenius(delta @ y)


def inprecon(x, w, w_tilde) -> float:
    """Squared Frobenius norm of the input-side reconstruction error."""
    return _input_sq(x, _delta(w, w_tilde))


def sym_objective(x, y, w, w_tilde) -> ObjectiveReport:
    """Non-squared input + output reconstruction error.

    Either calibration side may be None, which zeroes that term (and reduces
    the objective to the remaining side).
    """
    delta = _delta(w, w_tilde)
    it = float(np.sqrt(_input_sq(x, delta))) if x is not None else 0.0
    ot = float(np.sqrt(_output_sq(y, delta))) if y is not None else 0.0
    return ObjectiveReport("sym", it + ot, it, ot)


def sym_objective_squared(x, y, w, w_tilde) -> ObjectiveReport:
    """Squared-norm variant of the symmetric objective."""
    delta = _delta(w, w_tilde)
    it = _input_sq(x, delta) if x is not None else 0.0
    ot = _output_sq(y, delta) if y is not None else 0.0
    return ObjectiveReport("sym_squared", it + ot, it, ot)
