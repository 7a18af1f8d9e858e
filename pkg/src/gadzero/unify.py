"""Node attribute unification: shared-dimensionality projection + normalization.

Every graph is unified independently: its raw attributes are zero-padded when
narrower than the target width, projected onto their own top singular
directions, then standardized column by column with population statistics.
After unification, all graphs share dimensionality and, column-wise, zero mean
and unit variance, so their distributional vectors coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankError, ShapeError
from .graph_store import AttributedGraph
from .numerics import cosine_similarity, require_finite, truncated_svd

# Columns with population std below this floor are treated as degenerate; the
# std is clamped so constant columns normalize to (near-)zero columns.
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class UnifiedAttributes:
    """Projected, coordinate-wise standardized attributes of one graph.

    ``col_mean``/``col_std`` are the population statistics of the projected
    (pre-normalization) columns; ``col_std`` is clamped at ``STD_FLOOR``.
    """

    projected_normalized: np.ndarray
    basis: np.ndarray
    col_mean: np.ndarray
    col_std: np.ndarray
    original_dim: int

    @property
    def d_prime(self) -> int:
        return self.projected_normalized.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.projected_normalized.shape[0]


def unify(graph: AttributedGraph, d_prime: int, *, normalize: bool = True) -> UnifiedAttributes:
    """Map a graph's raw attributes into the shared d' space.

    ``normalize=False`` skips the standardization step (used by the
    no-normalization ablation); the projection still happens.
    """
    if d_prime < 1:
        raise RankError(f"d_prime must be >= 1, got {d_prime}")
    x = require_finite(graph.attributes, "attributes")
    n, d = x.shape
    if d < d_prime:
        x = np.hstack([x, np.zeros((n, d_prime - d))])
    if d_prime > n:
        raise RankError(f"d_prime {d_prime} exceeds node count {n}")
    basis, projected = truncated_svd(x, d_prime)
    mean = projected.mean(axis=0)
    std = np.maximum(projected.std(axis=0), STD_FLOOR)
    values = (projected - mean) / std if normalize else projected
    return UnifiedAttributes(projected_normalized=values, basis=basis,
                             col_mean=mean, col_std=std, original_dim=d)


def distribution_vector(attrs: np.ndarray) -> np.ndarray:
    """Column means followed by column population stds (length 2 d')."""
    attrs = np.asarray(attrs, dtype=np.float64)
    if attrs.ndim != 2 or attrs.size == 0:
        raise ShapeError("distribution vector needs a non-empty matrix")
    return np.concatenate([attrs.mean(axis=0), attrs.std(axis=0)])


def distribution_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two graphs' distribution vectors.

    Both matrices must already live in the same shared dimensionality.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"dimensionality mismatch: {a.shape[1]} vs {b.shape[1]}")
    return cosine_similarity(distribution_vector(a), distribution_vector(b))
