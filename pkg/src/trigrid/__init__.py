"""Distributed-memory triangle counting on a 2D cyclic processor grid.

The package pairs a simulated message-passing transport with the full
pipeline: degree-ordered preprocessing, Cannon-style operand shifts, and
a map-based block intersection kernel, plus sequential oracles for
verification.
"""

from .driver import RunResult, run_count
from .engine import EngineOptions
from .graph import CsrGraph, EdgeList, GraphStats, canonicalize, to_csr
from .oracle import count_matrix, count_serial
from .rmat import RmatParams, generate

__all__ = [
    "CsrGraph",
    "EdgeList",
    "EngineOptions",
    "GraphStats",
    "RmatParams",
    "RunResult",
    "canonicalize",
    "count_matrix",
    "count_serial",
    "generate",
    "run_count",
    "to_csr",
]

__version__ = "0.1.0"
