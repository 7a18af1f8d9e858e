"""Zero-shot graph anomaly detection.

Unify node attributes of arbitrary attributed graphs into a shared normalized
space, pretrain a one-layer neighborhood-aggregation encoder contrastively,
tune neighborhood prompt tokens on one labeled graph, and score anomalies on
unseen graphs with no retraining. Includes an unsupervised single-graph
variant and a synthetic cross-domain benchmark.
"""

from .config import RunConfig
from .evaluate import ScoreReport, ablate, auprc, auroc, run_pipeline, zero_shot_score
from .graph_store import (AttributedGraph, from_edges, load_dataset, load_graph,
                          row_normalize, save_dataset, sparse_matmul)
from .model import (GeneralistModel, NodeEmbeddings, apply_prompt, forward, init_model,
                    load_encoder, load_model, predictability_scores, save_encoder,
                    save_model)
from .numerics import GradCheckReport, cosine_similarity, grad_check, softmax, truncated_svd
from .pretrain import (AugmentationConfig, PretrainConfig, PretrainResult, augment,
                       contrastive_loss, pretrain)
from .prompt_train import (PromptTrainConfig, UnsupConfig, pretrain_only_scores,
                           pseudo_weights, supervised_prompt_loss, train_prompts,
                           train_unsupervised, unsupervised_loss)
from .synth import SynthSpec, default_pair_specs, generate, generate_pair
from .unify import UnifiedAttributes, distribution_similarity, distribution_vector, unify

__version__ = "0.1.0"
