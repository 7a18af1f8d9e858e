"""Prompt tuning on a frozen aggregation weight.

Supervised: with anomaly labels, the prompt tokens, token projections, and
transform layer are optimized to push normal nodes' predictability up and
abnormal nodes' predictability down (a plain signed sum of scores).

Unsupervised: without labels, per-node confidence weights are derived once
from the pretrain-only scores through a percentile-thresholded sigmoid and
never refreshed; training maximizes the weighted predictability of
high-confidence nodes plus a cross-node regularizer that keeps embeddings
from collapsing. Low-confidence nodes are not pushed down.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .errors import ConfigError, LabelError, TrainingError
from .graph_store import AttributedGraph, row_normalize
from .model import (GeneralistModel, embeddings_graph, init_model,
                    prompted_attrs_graph, scores_graph)
from .unify import UnifiedAttributes

# Above this node count the regularizer's full double sum is replaced by
# uniform negative sampling with unbiased scaling.
EXACT_REGULARIZER_MAX_NODES = 5000


@dataclass
class PromptTrainConfig:
    epochs: int = 900
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class UnsupConfig:
    threshold_percentile: float = 40.0
    sharpness: float = 10.0
    reg_weight: float = 1e-2
    negative_sample_cap: int = 256

    def __post_init__(self):
        if not 0.0 < self.threshold_percentile < 100.0:
            raise ConfigError(f"percentile {self.threshold_percentile} outside (0, 100)")
        if self.sharpness <= 0:
            raise ConfigError(f"sharpness must be positive, got {self.sharpness}")
        if self.reg_weight < 0:
            raise ConfigError(f"reg_weight must be >= 0, got {self.reg_weight}")


@dataclass
class PromptTrainResult:
    model: GeneralistModel
    losses: list[float] = field(default_factory=list)
    mean_normal: list[float] = field(default_factory=list)
    mean_abnormal: list[float] = field(default_factory=list)
    final_scores: np.ndarray | None = None


@dataclass
class UnsupTrainResult:
    model: GeneralistModel
    weights: np.ndarray | None = None
    baseline_scores: np.ndarray | None = None
    losses: list[float] = field(default_factory=list)
    mean_weighted: list[float] = field(default_factory=list)
    final_scores: np.ndarray | None = None


def supervised_prompt_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    """Plain signed sum: -score for normal nodes, +score for abnormal ones."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise LabelError(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    if not np.isin(labels, (0, 1)).all():
        raise LabelError("labels must be 0 or 1")
    return float(np.dot(scores, np.where(labels == 1, 1.0, -1.0)))


def pseudo_weights(scores: np.ndarray, cfg: UnsupConfig) -> np.ndarray:
    """Sigmoid confidence weights around the configured score percentile."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if not np.all(np.isfinite(scores)):
        raise ConfigError("scores must be finite")
    threshold = np.percentile(scores, cfg.threshold_percentile)
    return 1.0 / (1.0 + np.exp(-cfg.sharpness * (scores - threshold)))


def unsupervised_loss_graph(z: ag.Tensor, z_agg: ag.Tensor, weights: np.ndarray,
                            reg_weight: float,
                            negatives: np.ndarray | None = None) -> ag.Tensor:
    """Weighted predictability plus cross-node similarity regularizer.

    ``negatives`` is either None (exact double sum over all j != i) or an
    N x m index matrix of sampled j != i per node; the sampled sum is scaled
    by (N - 1) / m so it estimates the exact one without bias.
    """
    n = z.data.shape[0]
    zn = ag.normalize_rows(z)
    z_aggn = ag.normalize_rows(z_agg)
    idx = np.arange(n)
    predict = ag.gather_dot(zn, z_aggn, idx, idx)
    loss = (predict * (-np.asarray(weights, dtype=np.float64))).sum()
    if reg_weight > 0 and n > 1:
        if negatives is None:
            sims = zn @ z_aggn.t()
            loss = loss + reg_weight * (sims * (1.0 - np.eye(n))).sum()
        else:
            negatives = np.asarray(negatives)
            m = negatives.shape[1]
            rows = np.repeat(idx, m)
            sims = ag.gather_dot(zn, z_aggn, rows, negatives.reshape(-1))
            loss = loss + (reg_weight * (n - 1) / m) * sims.sum()
    return loss


def unsupervised_loss(z: np.ndarray, z_agg: np.ndarray, weights: np.ndarray,
                      reg_weight: float, negatives: np.ndarray | None = None) -> float:
    return float(unsupervised_loss_graph(ag.Tensor(z), ag.Tensor(z_agg), weights,
                                         reg_weight, negatives).data)


def _trainable_params(model_init: GeneralistModel, use_transform: bool):
    prompt_tokens = ag.Tensor(model_init.prompt_tokens.copy(), requires_grad=True)
    token_projections = ag.Tensor(model_init.token_projections.copy(), requires_grad=True)
    transform_weight = ag.Tensor(model_init.transform_weight.copy(), requires_grad=True)
    transform_bias = ag.Tensor(model_init.transform_bias.copy(), requires_grad=True)
    trained = [prompt_tokens, token_projections]
    if use_transform:
        trained += [transform_weight, transform_bias]
    return prompt_tokens, token_projections, transform_weight, transform_bias, trained


def _epoch_scores(adj_norm, attrs, weight, prompt_tokens, token_projections,
                  transform_weight, transform_bias, use_transform, nonlinearity):
    prompted = prompted_attrs_graph(attrs, prompt_tokens, token_projections)
    tw = transform_weight if use_transform else None
    tb = transform_bias if use_transform else None
    z, z_agg = embeddings_graph(adj_norm, prompted, weight, tw, tb, nonlinearity)
    return z, z_agg, scores_graph(z, z_agg)


def _assemble(model_init: GeneralistModel, agg_weight, prompt_tokens, token_projections,
              transform_weight, transform_bias, use_transform) -> GeneralistModel:
    if use_transform:
        tw, tb, nonlinearity = transform_weight.data, transform_bias.data, model_init.nonlinearity
    else:
        # Identity transform: scoring this model reproduces the pre-transform
        # embeddings exactly (x @ I + 0 adds only exact zeros).
        d_h = model_init.d_h
        tw, tb, nonlinearity = np.eye(d_h), np.zeros(d_h), "identity"
    return GeneralistModel(agg_weight=agg_weight, prompt_tokens=prompt_tokens.data,
                           token_projections=token_projections.data, transform_weight=tw,
                           transform_bias=tb, nonlinearity=nonlinearity,
                           seed=model_init.seed)


def train_prompts(graph: AttributedGraph, unified: UnifiedAttributes,
                  pretrained_weight: np.ndarray, cfg: PromptTrainConfig, *,
                  num_tokens: int = 1, nonlinearity: str = "relu",
                  use_transform: bool = True, balanced: bool = False) -> PromptTrainResult:
    """Supervised prompt tuning; the aggregation weight stays frozen.

    ``balanced`` switches the objective from the plain signed sum to
    class-balanced means (off by default).
    """
    if graph.labels is None:
        raise LabelError("prompt tuning requires anomaly labels")
    labels = graph.labels
    if labels.min() == labels.max():
        raise LabelError("prompt tuning requires at least one node of each class")
    pretrained_weight = np.asarray(pretrained_weight, dtype=np.float64)
    model_init = init_model(unified.d_prime, pretrained_weight.shape[1], num_tokens,
                            nonlinearity, cfg.seed, agg_weight=pretrained_weight)
    prompt_tokens, token_projections, transform_weight, transform_bias, trained = \
        _trainable_params(model_init, use_transform)
    weight = ag.Tensor(pretrained_weight)  # frozen: never handed to the optimizer

    adj_norm = row_normalize(graph)
    attrs = ag.Tensor(unified.projected_normalized)
    normal_mask = labels == 0
    sign = np.where(labels == 1, 1.0, -1.0)
    if balanced:
        sign = sign / np.where(labels == 1, labels.sum(), (1 - labels).sum())
    optimizer = ag.Adam(trained, lr=cfg.learning_rate)
    result = PromptTrainResult(model=model_init)

    for epoch in range(cfg.epochs):
        _, _, scores = _epoch_scores(adj_norm, attrs, weight, prompt_tokens,
                                     token_projections, transform_weight, transform_bias,
                                     use_transform, nonlinearity)
        loss = (scores * sign).sum()
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingError(f"non-finite prompt loss at epoch {epoch}: {value}")
        result.losses.append(value)
        result.mean_normal.append(float(scores.data[normal_mask].mean()))
        result.mean_abnormal.append(float(scores.data[~normal_mask].mean()))
        loss.backward()
        optimizer.step()

    result.model = _assemble(model_init, pretrained_weight, prompt_tokens,
                             token_projections, transform_weight, transform_bias,
                             use_transform)
    _, _, final = _epoch_scores(adj_norm, attrs, weight, prompt_tokens, token_projections,
                                transform_weight, transform_bias, use_transform, nonlinearity)
    result.final_scores = final.data
    return result


def pretrain_only_scores(adj_norm, unified: UnifiedAttributes,
                         agg_weight: np.ndarray) -> np.ndarray:
    """Predictability scores straight from the pretrained encoder (no prompt,
    no transform)."""
    attrs = ag.Tensor(unified.projected_normalized)
    weight = ag.Tensor(np.asarray(agg_weight, dtype=np.float64))
    z, z_agg = embeddings_graph(adj_norm, attrs, weight, None, None, "identity")
    return scores_graph(z, z_agg).data


def train_unsupervised(graph: AttributedGraph, unified: UnifiedAttributes,
                       pretrained_weight: np.ndarray, prompt_cfg: PromptTrainConfig,
                       unsup_cfg: UnsupConfig, *, num_tokens: int = 1,
                       nonlinearity: str = "relu",
                       use_transform: bool = True) -> UnsupTrainResult:
    """Label-free prompt tuning guided by frozen pseudo-label weights.

    The confidence weights come from the pretrain-only scores and are computed
    exactly once; every epoch reuses the same vector.
    """
    pretrained_weight = np.asarray(pretrained_weight, dtype=np.float64)
    adj_norm = row_normalize(graph)
    baseline = pretrain_only_scores(adj_norm, unified, pretrained_weight)
    weights = pseudo_weights(baseline, unsup_cfg)

    model_init = init_model(unified.d_prime, pretrained_weight.shape[1], num_tokens,
                            nonlinearity, prompt_cfg.seed, agg_weight=pretrained_weight)
    prompt_tokens, token_projections, transform_weight, transform_bias, trained = \
        _trainable_params(model_init, use_transform)
    weight = ag.Tensor(pretrained_weight)
    attrs = ag.Tensor(unified.projected_normalized)
    rng = np.random.default_rng(prompt_cfg.seed)

    n = graph.num_nodes
    sample_negatives = n > EXACT_REGULARIZER_MAX_NODES
    optimizer = ag.Adam(trained, lr=prompt_cfg.learning_rate)
    result = UnsupTrainResult(model=model_init, weights=weights, baseline_scores=baseline)

    for epoch in range(prompt_cfg.epochs):
        z, z_agg, scores = _epoch_scores(adj_norm, attrs, weight, prompt_tokens,
                                         token_projections, transform_weight,
                                         transform_bias, use_transform, nonlinearity)
        negatives = None
        if sample_negatives and unsup_cfg.reg_weight > 0:
            negatives = _sample_negatives(n, unsup_cfg.negative_sample_cap, rng)
        loss = unsupervised_loss_graph(z, z_agg, weights, unsup_cfg.reg_weight, negatives)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingError(f"non-finite unsupervised loss at epoch {epoch}: {value}")
        result.losses.append(value)
        result.mean_weighted.append(float(np.mean(weights * scores.data)))
        loss.backward()
        optimizer.step()

    result.model = _assemble(model_init, pretrained_weight, prompt_tokens,
                             token_projections, transform_weight, transform_bias,
                             use_transform)
    _, _, final = _epoch_scores(adj_norm, attrs, weight, prompt_tokens, token_projections,
                                transform_weight, transform_bias, use_transform, nonlinearity)
    result.final_scores = final.data
    return result


def _sample_negatives(n: int, cap: int, rng: np.random.Generator) -> np.ndarray:
    """N x m matrix of uniform j != i draws (with replacement across draws)."""
    m = min(cap, n - 1)
    draws = rng.integers(0, n - 1, size=(n, m))
    rows = np.arange(n)[:, None]
    return np.where(draws >= rows, draws + 1, draws)
