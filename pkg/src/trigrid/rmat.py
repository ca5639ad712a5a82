"""Deterministic RMAT graph generation in the Graph500 style.

Each raw edge is drawn by recursive quadrant selection: per bit level one
uniform picks a quadrant with probabilities (A, B, C, D), MSB first. The
randomness comes from a counter-based Philox stream keyed by the seed, so
edge k's bits are a pure function of (seed, k): output is byte-identical
across runs and independent of any internal evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graph import EdgeList, canonicalize

DEFAULT_PROBS = (0.57, 0.19, 0.19, 0.05)
DEFAULT_EDGE_FACTOR = 16
MAX_DESK_SCALE = 32


@dataclass(frozen=True)
class RmatParams:
    scale: int
    edge_factor: int = DEFAULT_EDGE_FACTOR
    probs: tuple[float, float, float, float] = DEFAULT_PROBS
    seed: int = 0

    def __post_init__(self):
        if self.scale < 1:
            raise ConfigError(f"scale must be >= 1, got {self.scale}")
        if self.edge_factor < 1:
            raise ConfigError(f"edge_factor must be >= 1, got {self.edge_factor}")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ConfigError(f"quadrant probabilities must sum to 1, got {self.probs}")

    @property
    def n(self) -> int:
        return 1 << self.scale

    @property
    def raw_edges(self) -> int:
        return self.edge_factor * self.n


def generate(params: RmatParams, allow_large: bool = False) -> EdgeList:
    """Draw edge_factor * 2**scale raw directed edges, then canonicalize
    (drop self-loops and duplicates, store (min, max) sorted)."""
    if params.scale > MAX_DESK_SCALE and not allow_large:
        raise ConfigError(
            f"scale {params.scale} exceeds the desk-scale guard ({MAX_DESK_SCALE}); "
            "pass allow_large to override"
        )
    a, b, c, _ = params.probs
    rng = np.random.Generator(np.random.Philox(key=params.seed))
    u = rng.random((params.raw_edges, params.scale))
    # Quadrant thresholds: [0,a) -> (0,0), [a,a+b) -> (0,1),
    # [a+b,a+b+c) -> (1,0), rest -> (1,1). Bit order is MSB first.
    src_bits = u >= a + b
    dst_bits = ((u >= a) & (u < a + b)) | (u >= a + b + c)
    weights = (1 << np.arange(params.scale - 1, -1, -1, dtype=np.int64))[np.newaxis, :]
    src = (src_bits * weights).sum(axis=1)
    dst = (dst_bits * weights).sum(axis=1)
    return canonicalize(EdgeList(params.n, np.stack([src, dst], axis=1)))
