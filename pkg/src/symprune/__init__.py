"""Post-training pruning engine.

Weight-importance scoring, unstructured and N:M mask generation, symmetric
reconstruction objectives, training-free prune-and-grow fine-tuning, and
numeric verification of the constructions behind the scores.
"""

__version__ = "0.1.0"

from .calibration import ActivationStats, compute_stats, merge_stats
from .dsnot import DsnotConfig, finetune
from .masking import SparsityMask, apply_mask, build_nm_mask, build_unstructured_mask, mask_density
from .matrix import FormatError, read_symw, write_symw
from .reconstruction import ObjectiveReport, inprecon, sym_objective, sym_objective_squared
from .scores import ScoreConfig, compute_score

__all__ = [
    "ActivationStats",
    "DsnotConfig",
    "FormatError",
    "ObjectiveReport",
    "ScoreConfig",
    "SparsityMask",
    "apply_mask",
    "build_nm_mask",
    "build_unstructured_mask",
    "compute_score",
    "compute_stats",
    "finetune",
    "inprecon",
    "mask_density",
    "merge_stats",
    "read_symw",
    "sym_objective",
    "sym_objective_squared",
    "write_symw",
    "__version__",
]
