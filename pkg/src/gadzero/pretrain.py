"""Contrastive pretraining of the aggregation weight.

Each epoch corrupts the training graph once (edge removal + shared attribute
mask), embeds the original and corrupted views through the aggregation
encoder and a two-layer projection head, and minimizes a symmetrized
temperature-scaled contrastive objective: a node's two views attract, every
other node in either view repels. The projection head is discarded; only the
aggregation weight survives pretraining.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import autograd as ag
from .errors import ConfigError, TrainingError
from .graph_store import AttributedGraph, _row_normalize_adjacency, row_normalize
from .model import init_agg_weight
from .unify import UnifiedAttributes


@dataclass
class AugmentationConfig:
    edge_removal_prob: float = 0.2
    attr_mask_prob: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.edge_removal_prob <= 1.0:
            raise ConfigError(f"edge_removal_prob {self.edge_removal_prob} outside [0, 1]")
        if not 0.0 <= self.attr_mask_prob <= 1.0:
            raise ConfigError(f"attr_mask_prob {self.attr_mask_prob} outside [0, 1]")


@dataclass
class PretrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    temperature: float = 0.5
    head_width: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class PretrainResult:
    agg_weight: np.ndarray
    losses: list[float] = field(default_factory=list)


def augment(graph: AttributedGraph, unified: UnifiedAttributes, cfg: AugmentationConfig,
            rng: np.random.Generator) -> tuple[sparse.csr_matrix, np.ndarray]:
    """One corrupted view: binary adjacency + masked unified attributes.

    Each undirected edge is dropped independently (both directions together);
    one mask vector, shared by all nodes, zeroes whole attribute dimensions.
    Draw order is edges first, then the mask, so a fixed rng state reproduces
    the view bit-for-bit.
    """
    n = graph.num_nodes
    upper = sparse.triu(graph.adjacency, k=1).tocoo()
    keep = rng.random(upper.nnz) >= cfg.edge_removal_prob
    src, dst = upper.row[keep], upper.col[keep]
    both_src = np.concatenate([src, dst])
    both_dst = np.concatenate([dst, src])
    adj = sparse.coo_matrix((np.ones(both_src.size), (both_src, both_dst)),
                            shape=(n, n)).tocsr()
    mask = (rng.random(unified.d_prime) >= cfg.attr_mask_prob).astype(np.float64)
    return adj, unified.projected_normalized * mask


def contrastive_loss_graph(z_view1: ag.Tensor, z_view2: ag.Tensor,
                           temperature: float) -> ag.Tensor:
    """Symmetrized pairwise contrastive objective over two view embeddings.

    For an anchor in one view, the positive is the same node in the other
    view; negatives are all other nodes in both views. Written as
    log1p(rest / exp(pos)) per anchor, which is exactly 0 when there are no
    negatives (N = 1). Averaged over both anchor directions and all nodes.
    """
    n = z_view1.data.shape[0]
    inv_t = 1.0 / float(temperature)
    a = ag.normalize_rows(z_view1)
    b = ag.normalize_rows(z_view2)
    s_ab = (a @ b.t()) * inv_t
    s_aa = (a @ a.t()) * inv_t
    s_bb = (b @ b.t()) * inv_t
    eye = np.eye(n)
    off = 1.0 - eye
    pos = (s_ab * eye).sum(axis=1)
    e_ab_off = s_ab.exp() * off
    rest_a = e_ab_off.sum(axis=1) + (s_aa.exp() * off).sum(axis=1)
    rest_b = e_ab_off.sum(axis=0) + (s_bb.exp() * off).sum(axis=1)
    neg_pos_exp = (-1.0 * pos).exp()
    losses = (rest_a * neg_pos_exp).log1p() + (rest_b * neg_pos_exp).log1p()
    return losses.sum() * (1.0 / (2.0 * n))


def contrastive_loss(z_view1: np.ndarray, z_view2: np.ndarray, temperature: float) -> float:
    if np.shape(z_view1) != np.shape(z_view2):
        raise ConfigError(f"view shapes differ: {np.shape(z_view1)} vs {np.shape(z_view2)}")
    return float(contrastive_loss_graph(ag.Tensor(z_view1), ag.Tensor(z_view2),
                                        temperature).data)


def _projection_head_params(d_h: int, width: int, rng: np.random.Generator) -> list[ag.Tensor]:
    w1 = ag.Tensor(rng.uniform(-1.0, 1.0, size=(d_h, width)) / np.sqrt(d_h), requires_grad=True)
    b1 = ag.Tensor(np.zeros(width), requires_grad=True)
    w2 = ag.Tensor(rng.uniform(-1.0, 1.0, size=(width, d_h)) / np.sqrt(width), requires_grad=True)
    b2 = ag.Tensor(np.zeros(d_h), requires_grad=True)
    return [w1, b1, w2, b2]


def _head(x: ag.Tensor, params: list[ag.Tensor]) -> ag.Tensor:
    w1, b1, w2, b2 = params
    return (x @ w1 + b1).relu() @ w2 + b2


def pretrain(graph: AttributedGraph, unified: UnifiedAttributes, aug: AugmentationConfig,
             cfg: PretrainConfig, d_h: int = 128) -> PretrainResult:
    """Pretrain the aggregation weight; the projection head is thrown away."""
    rng_init = np.random.default_rng(cfg.seed)
    weight = ag.Tensor(init_agg_weight(unified.d_prime, d_h, rng_init), requires_grad=True)
    head_params = _projection_head_params(d_h, cfg.head_width, rng_init)
    rng_aug = np.random.default_rng(aug.seed)

    adj_norm = row_normalize(graph)
    attrs = ag.Tensor(unified.projected_normalized)
    optimizer = ag.Adam([weight] + head_params, lr=cfg.learning_rate)
    losses = []
    for epoch in range(cfg.epochs):
        adj_corrupt, attrs_corrupt = augment(graph, unified, aug, rng_aug)
        adj_corrupt_norm = _row_normalize_adjacency(adj_corrupt)
        emb_orig = ag.spmm(adj_norm, attrs) @ weight
        emb_corrupt = ag.spmm(adj_corrupt_norm, ag.Tensor(attrs_corrupt)) @ weight
        loss = contrastive_loss_graph(_head(emb_corrupt, head_params),
                                      _head(emb_orig, head_params), cfg.temperature)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingError(f"non-finite contrastive loss at epoch {epoch}: {value}")
        losses.append(value)
        loss.backward()
        optimizer.step()
    return PretrainResult(agg_weight=weight.data, losses=losses)
