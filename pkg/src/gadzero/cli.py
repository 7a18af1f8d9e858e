"""Command-line entry point for the full pipeline.

Subcommands: synth, pretrain, train, train-unsup, score, ablate,
inspect-unify. Every command resolves its configuration from defaults, an
optional ``--config`` JSON file, and flag overrides (flags win), prints the
resolved config, and exits nonzero with a single machine-parsable
``error: <category>: <message>`` line on any failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, resolve_config
from .errors import GadError, LabelError
from .evaluate import ABLATION_VARIANTS, ScoreReport, ablate, zero_shot_score
from .graph_store import load_dataset, save_dataset
from .model import load_encoder, load_model, save_encoder, save_model
from .pretrain import AugmentationConfig, PretrainConfig, pretrain
from .prompt_train import (PromptTrainConfig, UnsupConfig, train_prompts,
                           train_unsupervised)
from .synth import SynthSpec, generate
from .unify import distribution_similarity, distribution_vector, unify


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--d-prime", dest="d_prime", type=int)
    parser.add_argument("--d-h", dest="d_h", type=int)
    parser.add_argument("--num-prompt-tokens", dest="num_prompt_tokens", type=int)
    parser.add_argument("--nonlinearity", choices=("relu", "tanh", "identity"))
    parser.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int)
    parser.add_argument("--pretrain-lr", dest="pretrain_lr", type=float)
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--edge-drop", dest="edge_drop", type=float)
    parser.add_argument("--attr-mask", dest="attr_mask", type=float)
    parser.add_argument("--prompt-epochs", dest="prompt_epochs", type=int)
    parser.add_argument("--prompt-lr", dest="prompt_lr", type=float)
    parser.add_argument("--percentile", type=float)
    parser.add_argument("--sharpness", type=float)
    parser.add_argument("--reg-weight", dest="reg_weight", type=float)
    parser.add_argument("--negative-sample-cap", dest="negative_sample_cap", type=int)


def _resolve(args) -> RunConfig:
    overrides = {key: getattr(args, key, None) for key in
                 ("seed", "d_prime", "d_h", "num_prompt_tokens", "nonlinearity",
                  "pretrain_epochs", "pretrain_lr", "temperature", "edge_drop",
                  "attr_mask", "prompt_epochs", "prompt_lr", "percentile",
                  "sharpness", "reg_weight", "negative_sample_cap")}
    cfg = resolve_config(args.config, overrides)
    print("resolved config:")
    print(cfg.to_json())
    return cfg


def _write_csv(path: Path, header: str, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_scores(report: ScoreReport, out_dir: Path) -> None:
    rows = ([str(i), _fmt(s), _fmt(a)] for i, (s, a) in
            enumerate(zip(report.normality, report.anomaly_score)))
    _write_csv(out_dir / "scores.csv", "node_id,normality,anomaly_score", rows)
    metrics = {"auroc": report.auroc, "auprc": report.auprc,
               "seed": report.seed, "model_id": report.model_id}
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out_dir / 'scores.csv'}")
    print(f"metrics: {json.dumps(metrics, sort_keys=True)}")


def _write_histogram(report: ScoreReport, labels, out_dir: Path, bins: int = 50) -> None:
    edges = np.linspace(-1.0, 1.0, bins + 1)
    columns = ["bin_left,bin_right"]
    if labels is None:
        counts = [np.histogram(report.normality, bins=edges)[0]]
        columns = ["bin_left,bin_right,count"]
    else:
        labels = np.asarray(labels)
        counts = [np.histogram(report.normality[labels == 0], bins=edges)[0],
                  np.histogram(report.normality[labels == 1], bins=edges)[0]]
        columns = ["bin_left,bin_right,normal_count,anomaly_count"]
    rows = ([_fmt(edges[i]), _fmt(edges[i + 1])] + [str(c[i]) for c in counts]
            for i in range(bins))
    _write_csv(out_dir / "score_hist.csv", columns[0], rows)
    print(f"wrote {out_dir / 'score_hist.csv'}")


def cmd_synth(args) -> int:
    spec = SynthSpec.from_file(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    print(f"resolved spec: {json.dumps(spec.__dict__, sort_keys=True)}")
    graph = generate(spec)
    save_dataset(graph, args.out)
    print(f"wrote dataset with {graph.num_nodes} nodes, {graph.num_edges} edges, "
          f"{int(graph.labels.sum())} anomalies to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _resolve(args)
    graph = load_dataset(args.data)
    unified = unify(graph, cfg.d_prime)
    seeds = cfg.stage_seeds()
    aug = AugmentationConfig(edge_removal_prob=cfg.pretrain.edge_drop,
                             attr_mask_prob=cfg.pretrain.attr_mask, seed=seeds["augment"])
    pre_cfg = PretrainConfig(epochs=cfg.pretrain.epochs, learning_rate=cfg.pretrain.lr,
                             temperature=cfg.pretrain.temperature, head_width=cfg.d_h,
                             seed=seeds["pretrain"])
    result = pretrain(graph, unified, aug, pre_cfg, d_h=cfg.d_h)
    save_encoder(result.agg_weight, args.out, seed=cfg.seed)
    if args.loss_csv:
        _write_csv(Path(args.loss_csv), "epoch,loss",
                   ([str(i), _fmt(v)] for i, v in enumerate(result.losses)))
    print(f"wrote pretrained encoder to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args)
    graph = load_dataset(args.data)
    if graph.labels is None:
        raise LabelError(f"{args.data}: prompt training requires labels.csv")
    unified = unify(graph, cfg.d_prime)
    agg_weight = load_encoder(args.pretrained)
    prompt_cfg = PromptTrainConfig(epochs=cfg.prompt.epochs, learning_rate=cfg.prompt.lr,
                                   seed=cfg.stage_seeds()["prompt"])
    result = train_prompts(graph, unified, agg_weight, prompt_cfg,
                           num_tokens=cfg.num_prompt_tokens, nonlinearity=cfg.nonlinearity)
    save_model(result.model, args.out)
    if args.log_csv:
        rows = ([str(i), _fmt(l), _fmt(mn), _fmt(ma)] for i, (l, mn, ma) in
                enumerate(zip(result.losses, result.mean_normal, result.mean_abnormal)))
        _write_csv(Path(args.log_csv), "epoch,loss,mean_normal_score,mean_abnormal_score", rows)
    print(f"wrote model to {args.out}")
    return 0


def cmd_train_unsup(args) -> int:
    cfg = _resolve(args)
    graph = load_dataset(args.data)
    unified = unify(graph, cfg.d_prime)
    agg_weight = load_encoder(args.pretrained)
    prompt_cfg = PromptTrainConfig(epochs=cfg.prompt.epochs, learning_rate=cfg.prompt.lr,
                                   seed=cfg.stage_seeds()["prompt"])
    unsup_cfg = UnsupConfig(threshold_percentile=cfg.unsup.percentile,
                            sharpness=cfg.unsup.sharpness, reg_weight=cfg.unsup.reg_weight,
                            negative_sample_cap=cfg.unsup.negative_sample_cap)
    result = train_unsupervised(graph, unified, agg_weight, prompt_cfg, unsup_cfg,
                                num_tokens=cfg.num_prompt_tokens,
                                nonlinearity=cfg.nonlinearity)
    save_model(result.model, args.out)
    if args.log_csv:
        rows = ([str(i), _fmt(l), _fmt(w)] for i, (l, w) in
                enumerate(zip(result.losses, result.mean_weighted)))
        _write_csv(Path(args.log_csv), "epoch,loss,mean_weighted_score", rows)
    print(f"wrote model to {args.out}")
    return 0


def cmd_score(args) -> int:
    cfg = _resolve(args)
    graph = load_dataset(args.data)
    model = load_model(args.model)
    report = zero_shot_score(graph, model, cfg.d_prime, graph_id=str(args.data),
                             model_id=str(args.model), seed=cfg.seed)
    out_dir = Path(args.out_dir)
    _write_scores(report, out_dir)
    if args.emit_hist:
        _write_histogram(report, graph.labels, out_dir)
    return 0


def cmd_ablate(args) -> int:
    cfg = _resolve(args)
    source = load_dataset(args.train_data)
    target = load_dataset(args.test_data)
    report = ablate(args.variant, source, target, cfg)
    _write_scores(report, Path(args.out_dir))
    return 0


def cmd_inspect_unify(args) -> int:
    cfg = _resolve(args)
    names, unified_list = [], []
    stats_rows = []
    for directory in args.data:
        graph = load_dataset(directory)
        unified = unify(graph, cfg.d_prime)
        name = Path(directory).name
        names.append(name)
        unified_list.append(unified)
        after = distribution_vector(unified.projected_normalized)
        for col in range(unified.d_prime):
            stats_rows.append([name, str(col), _fmt(unified.col_mean[col]),
                               _fmt(unified.col_std[col]), _fmt(after[col]),
                               _fmt(after[unified.d_prime + col])])
    out_dir = Path(args.out_dir)
    _write_csv(out_dir / "unify_stats.csv",
               "graph,column,mean_before,std_before,mean_after,std_after", stats_rows)
    sim_rows = []
    for i, ua in enumerate(unified_list):
        row = [names[i]]
        for ub in unified_list:
            row.append(_fmt(distribution_similarity(ua.projected_normalized,
                                                    ub.projected_normalized)))
        sim_rows.append(row)
    _write_csv(out_dir / "distribution_similarity.csv", "graph," + ",".join(names), sim_rows)
    print(f"wrote {out_dir / 'unify_stats.csv'} and "
          f"{out_dir / 'distribution_similarity.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gadzero",
                                     description="Zero-shot graph anomaly detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--spec", required=True, help="JSON SynthSpec file")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="contrastive pretraining of the encoder")
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--out", required=True, help="output encoder file")
    p.add_argument("--loss-csv", help="write per-epoch loss trajectory CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="supervised prompt tuning on a labeled graph")
    p.add_argument("--data", required=True, help="labeled dataset directory")
    p.add_argument("--pretrained", required=True, help="encoder or model file")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--log-csv", help="write per-epoch training log CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-unsup", help="unsupervised prompt tuning (pseudo-labels)")
    p.add_argument("--data", required=True, help="dataset directory (labels ignored)")
    p.add_argument("--pretrained", required=True, help="encoder or model file")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--log-csv", help="write per-epoch training log CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_unsup)

    p = sub.add_parser("score", help="zero-shot scoring of a dataset")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--emit-hist", action="store_true",
                   help="also write per-class score histograms")
    _add_config_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ablate", help="run the pipeline with one stage disabled")
    p.add_argument("--variant", required=True, choices=ABLATION_VARIANTS)
    p.add_argument("--train-data", required=True, help="labeled source dataset directory")
    p.add_argument("--test-data", required=True, help="target dataset directory")
    p.add_argument("--out-dir", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect-unify", help="unification stats and pairwise "
                                             "distribution similarity")
    p.add_argument("data", nargs="+", help="dataset directories")
    p.add_argument("--out-dir", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_inspect_unify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GadError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io-error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
