"""Zero-shot scoring, ranking metrics, and ablation pipelines.

The model scores normality; anomaly scores are the negation, so higher means
more anomalous. Metrics are rank-based with explicit tie conventions:
AUROC uses average ranks (ties count one half), and AUPRC is average
precision with tied scores processed as one block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConfigError, MetricError
from .graph_store import AttributedGraph, row_normalize
from .model import GeneralistModel, apply_prompt, forward, init_model, predictability_scores
from .prompt_train import PromptTrainConfig, UnsupConfig, pretrain_only_scores, train_prompts
from .pretrain import AugmentationConfig, PretrainConfig, pretrain
from .unify import UnifiedAttributes, unify

ABLATION_VARIANTS = ("no-normalization", "no-pretrain", "no-prompt", "no-transform")


@dataclass
class ScoreReport:
    normality: np.ndarray
    anomaly_score: np.ndarray
    auroc: float | None = None
    auprc: float | None = None
    graph_id: str = ""
    model_id: str = ""
    seed: int = 0


def auroc(anomaly_scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability that a random positive outranks a random negative."""
    scores = np.asarray(anomaly_scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.size} scores for {labels.size} labels")
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC needs both classes present")
    ranks = stats.rankdata(scores)  # average ranks handle ties
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auprc(anomaly_scores: np.ndarray, labels: np.ndarray) -> float:
    """Average precision over descending scores, tied blocks at once."""
    scores = np.asarray(anomaly_scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.size} scores for {labels.size} labels")
    total_pos = int((labels == 1).sum())
    if total_pos == 0:
        raise MetricError("AUPRC needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels == 1)
    count = np.arange(1, scores.size + 1)
    # block ends = last index of each run of equal scores
    is_end = np.ones(scores.size, dtype=bool)
    is_end[:-1] = sorted_scores[:-1] != sorted_scores[1:]
    tp_end = tp[is_end]
    precision = tp_end / count[is_end]
    recall_step = np.diff(np.concatenate([[0], tp_end])) / total_pos
    return float(np.dot(precision, recall_step))


def _metrics_if_labeled(anomaly_scores: np.ndarray,
                        labels: np.ndarray | None) -> tuple[float | None, float | None]:
    if labels is None or labels.min() == labels.max():
        return None, None
    return auroc(anomaly_scores, labels), auprc(anomaly_scores, labels)


def zero_shot_score(graph: AttributedGraph, model: GeneralistModel, d_prime: int, *,
                    graph_id: str = "", model_id: str = "", seed: int = 0,
                    normalize: bool = True) -> ScoreReport:
    """Score an unseen graph with a trained model; no parameter mutation.

    The graph is unified on its own statistics, prompted, passed through the
    dual-branch forward with the transform, and scored by predictability.
    """
    if d_prime != model.d_prime:
        raise ConfigError(f"requested d'={d_prime} but model was built with {model.d_prime}")
    unified = unify(graph, d_prime, normalize=normalize)
    prompted = apply_prompt(unified, model)
    emb = forward(row_normalize(graph), prompted, model, use_transform=True)
    normality = predictability_scores(emb)
    roc, prc = _metrics_if_labeled(-normality, graph.labels)
    return ScoreReport(normality=normality, anomaly_score=-normality, auroc=roc,
                       auprc=prc, graph_id=graph_id, model_id=model_id, seed=seed)


@dataclass
class PipelineResult:
    report: ScoreReport
    model: GeneralistModel
    source_report: ScoreReport | None = None


def run_pipeline(source: AttributedGraph, target: AttributedGraph, config,
                 variant: str = "full") -> PipelineResult:
    """Pretrain + prompt-train on the source graph, then score the target.

    ``variant`` disables one stage: 'no-normalization' skips standardization
    everywhere, 'no-pretrain' starts from a fresh aggregation weight,
    'no-prompt' scores with the pretrained encoder alone, 'no-transform'
    trains and scores without the transform layer.
    """
    if variant not in ("full",) + ABLATION_VARIANTS:
        raise ConfigError(f"unknown pipeline variant {variant!r}")
    normalize = variant != "no-normalization"
    seeds = config.stage_seeds()
    unified_src = unify(source, config.d_prime, normalize=normalize)

    if variant == "no-pretrain":
        rng = np.random.default_rng(seeds["pretrain"])
        from .model import init_agg_weight
        agg_weight = init_agg_weight(config.d_prime, config.d_h, rng)
    else:
        aug = AugmentationConfig(edge_removal_prob=config.pretrain.edge_drop,
                                 attr_mask_prob=config.pretrain.attr_mask,
                                 seed=seeds["augment"])
        pre_cfg = PretrainConfig(epochs=config.pretrain.epochs,
                                 learning_rate=config.pretrain.lr,
                                 temperature=config.pretrain.temperature,
                                 head_width=config.d_h, seed=seeds["pretrain"])
        agg_weight = pretrain(source, unified_src, aug, pre_cfg, d_h=config.d_h).agg_weight

    if variant == "no-prompt":
        # Pretrain-only scorer: zero prompt, identity transform.
        d_h = agg_weight.shape[1]
        model = GeneralistModel(
            agg_weight=agg_weight,
            prompt_tokens=np.zeros((config.num_prompt_tokens, config.d_prime)),
            token_projections=np.zeros((config.d_prime, config.num_prompt_tokens)),
            transform_weight=np.eye(d_h), transform_bias=np.zeros(d_h),
            nonlinearity="identity", seed=seeds["prompt"])
    else:
        prompt_cfg = PromptTrainConfig(epochs=config.prompt.epochs,
                                       learning_rate=config.prompt.lr,
                                       seed=seeds["prompt"])
        model = train_prompts(source, unified_src, agg_weight, prompt_cfg,
                              num_tokens=config.num_prompt_tokens,
                              nonlinearity=config.nonlinearity,
                              use_transform=variant != "no-transform").model

    report = zero_shot_score(target, model, config.d_prime, graph_id="target",
                             model_id=variant, seed=config.seed, normalize=normalize)
    return PipelineResult(report=report, model=model)


def ablate(variant: str, source: AttributedGraph, target: AttributedGraph,
           config) -> ScoreReport:
    """Run the pipeline with one named stage disabled and score the target."""
    if variant not in ABLATION_VARIANTS:
        raise ConfigError(f"unknown ablation variant {variant!r}; "
                          f"choose from {ABLATION_VARIANTS}")
    return run_pipeline(source, target, config, variant=variant).report


def pretrain_only_report(graph: AttributedGraph, agg_weight: np.ndarray, d_prime: int, *,
                         normalize: bool = True, graph_id: str = "",
                         seed: int = 0) -> ScoreReport:
    """ScoreReport of the bare pretrained encoder on one graph."""
    unified = unify(graph, d_prime, normalize=normalize)
    normality = pretrain_only_scores(row_normalize(graph), unified, agg_weight)
    roc, prc = _metrics_if_labeled(-normality, graph.labels)
    return ScoreReport(normality=normality, anomaly_score=-normality, auroc=roc,
                       auprc=prc, graph_id=graph_id, model_id="pretrain-only", seed=seed)
