"""Torch checkpoint exporter for the symprune pruning engine."""

__version__ = "0.1.0"

from .export import ExportError, capture_stats, export_weights
from .formats import StreamingStats, dump_syma, dump_symw

__all__ = [
    "ExportError",
    "StreamingStats",
    "capture_stats",
    "dump_syma",
    "dump_symw",
    "export_weights",
    "__version__",
]
