"""The scoring model: neighborhood aggregation, prompts, transform, scores.

The model has four parameter groups:

* ``agg_weight`` -- the shared projection applied to (prompted) attributes on
  both branches: the target branch uses the attributes directly, the
  neighborhood branch aggregates them first through the row-normalized
  adjacency, so the target branch never sees neighborhood information.
* ``prompt_tokens`` / ``token_projections`` -- learnable tokens added to every
  node's unified attributes, mixed by a per-node softmax over the token
  logits. With a single token the mixing weight is exactly 1.
* ``transform_weight`` / ``transform_bias`` -- a one-layer transform (affine
  followed by a pointwise nonlinearity) shared by both branches.

A node's normality score is the cosine similarity between its own embedding
and its aggregated-neighborhood embedding; isolated nodes score exactly 0.
Forward passes are pure; a single graph-builder path backs both training
(through the autograd engine) and inference, so scores are bit-reproducible
across the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import autograd as ag
from .errors import ModelFileError, ShapeError
from .numerics import require_finite
from .unify import UnifiedAttributes

NONLINEARITIES = ("relu", "tanh", "identity")

_MAGIC = "gadzero-model v1"


@dataclass
class GeneralistModel:
    agg_weight: np.ndarray          # (d_prime, d_h)
    prompt_tokens: np.ndarray       # (num_tokens, d_prime)
    token_projections: np.ndarray   # (d_prime, num_tokens)
    transform_weight: np.ndarray    # (d_h, d_h)
    transform_bias: np.ndarray      # (d_h,)
    nonlinearity: str = "relu"
    seed: int = 0

    def __post_init__(self):
        d_prime, d_h = self.agg_weight.shape
        k = self.prompt_tokens.shape[0]
        if self.prompt_tokens.shape != (k, d_prime):
            raise ShapeError("prompt_tokens shape mismatch")
        if self.token_projections.shape != (d_prime, k):
            raise ShapeError("token_projections shape mismatch")
        if self.transform_weight.shape != (d_h, d_h):
            raise ShapeError("transform_weight shape mismatch")
        if self.transform_bias.shape != (d_h,):
            raise ShapeError("transform_bias shape mismatch")
        if self.nonlinearity not in NONLINEARITIES:
            raise ShapeError(f"unknown nonlinearity {self.nonlinearity!r}")
        for name in ("agg_weight", "prompt_tokens", "token_projections",
                     "transform_weight", "transform_bias"):
            require_finite(getattr(self, name), name)

    @property
    def d_prime(self) -> int:
        return self.agg_weight.shape[0]

    @property
    def d_h(self) -> int:
        return self.agg_weight.shape[1]

    @property
    def num_tokens(self) -> int:
        return self.prompt_tokens.shape[0]

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return {
            "agg_weight": self.agg_weight,
            "prompt_tokens": self.prompt_tokens,
            "token_projections": self.token_projections,
            "transform_weight": self.transform_weight,
            "transform_bias": self.transform_bias,
        }


@dataclass
class NodeEmbeddings:
    """Per-node embedding (z) and aggregated-neighborhood embedding (z_agg)."""

    z: np.ndarray
    z_agg: np.ndarray


def init_agg_weight(d_prime: int, d_h: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(d_prime, d_h)) / np.sqrt(d_prime)


def init_model(d_prime: int, d_h: int, num_tokens: int, nonlinearity: str, seed: int,
               agg_weight: np.ndarray | None = None) -> GeneralistModel:
    """Fresh model; prompt parameters start as small uniform noise.

    Draw order is fixed (aggregation weight, tokens, token projections,
    transform weight) so models are reproducible from the seed alone.
    """
    rng = np.random.default_rng(seed)
    drawn = init_agg_weight(d_prime, d_h, rng)
    if agg_weight is None:
        agg_weight = drawn
    return GeneralistModel(
        agg_weight=np.asarray(agg_weight, dtype=np.float64),
        prompt_tokens=rng.uniform(-1e-2, 1e-2, size=(num_tokens, d_prime)),
        token_projections=rng.uniform(-1e-2, 1e-2, size=(d_prime, num_tokens)),
        transform_weight=rng.uniform(-1.0, 1.0, size=(d_h, d_h)) / np.sqrt(d_h),
        transform_bias=np.zeros(d_h),
        nonlinearity=nonlinearity,
        seed=seed,
    )


def _apply_nonlinearity(x: ag.Tensor, name: str) -> ag.Tensor:
    if name == "relu":
        return x.relu()
    if name == "tanh":
        return x.tanh()
    return x


def prompted_attrs_graph(attrs: ag.Tensor, prompt_tokens: ag.Tensor,
                         token_projections: ag.Tensor) -> ag.Tensor:
    """Tensor-level prompt application: x + (softmax token weights) @ tokens."""
    logits = attrs @ token_projections
    alpha = ag.softmax_rows(logits)
    return attrs + alpha @ prompt_tokens


def embeddings_graph(adj_norm: sparse.csr_matrix, prompted: ag.Tensor, agg_weight: ag.Tensor,
                     transform_weight: ag.Tensor | None, transform_bias: ag.Tensor | None,
                     nonlinearity: str) -> tuple[ag.Tensor, ag.Tensor]:
    """Tensor-level dual-branch forward. Pass transform tensors as None to skip.

    The transform preserves all-zero aggregate rows (isolated nodes) so the
    zero-norm scoring convention survives the bias.
    """
    z = prompted @ agg_weight
    z_agg = ag.spmm(adj_norm, prompted) @ agg_weight
    if transform_weight is not None:
        z = _apply_nonlinearity(z @ transform_weight + transform_bias, nonlinearity)
        z_agg = _apply_nonlinearity(z_agg @ transform_weight + transform_bias, nonlinearity)
        deg = np.asarray(adj_norm.sum(axis=1)).ravel()
        if (deg == 0).any():
            z_agg = z_agg * (deg > 0).astype(np.float64)[:, None]
    return z, z_agg


def scores_graph(z: ag.Tensor, z_agg: ag.Tensor) -> ag.Tensor:
    return ag.rowwise_cosine(z, z_agg)


def apply_prompt(unified: UnifiedAttributes, model: GeneralistModel) -> np.ndarray:
    """Prompted attributes for every node (N x d')."""
    if unified.d_prime != model.d_prime:
        raise ShapeError(f"attributes have d'={unified.d_prime}, model expects {model.d_prime}")
    out = prompted_attrs_graph(ag.Tensor(unified.projected_normalized),
                               ag.Tensor(model.prompt_tokens),
                               ag.Tensor(model.token_projections))
    return out.data


def forward(adj_norm: sparse.csr_matrix, prompted_attrs: np.ndarray, model: GeneralistModel,
            use_transform: bool = True) -> NodeEmbeddings:
    """Dual-branch forward pass on already-prompted attributes."""
    prompted_attrs = np.asarray(prompted_attrs, dtype=np.float64)
    if prompted_attrs.shape[1] != model.d_prime:
        raise ShapeError(f"attributes have {prompted_attrs.shape[1]} columns, "
                         f"model expects {model.d_prime}")
    if adj_norm.shape[1] != prompted_attrs.shape[0]:
        raise ShapeError(f"adjacency {adj_norm.shape} does not match "
                         f"{prompted_attrs.shape[0]} nodes")
    tw = ag.Tensor(model.transform_weight) if use_transform else None
    tb = ag.Tensor(model.transform_bias) if use_transform else None
    z, z_agg = embeddings_graph(adj_norm, ag.Tensor(prompted_attrs), ag.Tensor(model.agg_weight),
                                tw, tb, model.nonlinearity)
    return NodeEmbeddings(z=z.data, z_agg=z_agg.data)


def predictability_scores(emb: NodeEmbeddings) -> np.ndarray:
    """Normality score per node: cos(z_i, z_agg_i), 0 for zero-norm rows."""
    return scores_graph(ag.Tensor(emb.z), ag.Tensor(emb.z_agg)).data


_FULL_ARRAYS = ("agg_weight", "prompt_tokens", "token_projections",
                "transform_weight", "transform_bias")


def _write_model_file(path, stage: str, meta: dict, arrays: dict[str, np.ndarray]):
    manifest = ",".join(f"{name}:{'x'.join(str(s) for s in arr.shape)}"
                        for name, arr in arrays.items())
    header = [_MAGIC, f"stage: {stage}"]
    header += [f"{key}: {value}" for key, value in meta.items()]
    header += [f"arrays: {manifest}", "end-header", ""]
    with open(path, "wb") as fh:
        fh.write("\n".join(header).encode("ascii"))
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_model(model: GeneralistModel, path) -> None:
    """Write the full model: ASCII header, then parameter arrays as little-endian f8."""
    meta = {
        "d_prime": model.d_prime,
        "d_h": model.d_h,
        "num_tokens": model.num_tokens,
        "nonlinearity": model.nonlinearity,
        "seed": model.seed,
    }
    _write_model_file(path, "full", meta, model.parameter_arrays())


def save_encoder(agg_weight: np.ndarray, path, seed: int = 0) -> None:
    """Write a pretraining artifact holding only the aggregation weight."""
    meta = {"d_prime": agg_weight.shape[0], "d_h": agg_weight.shape[1], "seed": seed}
    _write_model_file(path, "encoder", meta, {"agg_weight": np.asarray(agg_weight)})


def _read_model_file(path) -> tuple[str, dict, dict[str, np.ndarray]]:
    blob = open(path, "rb").read()
    marker = b"end-header\n"
    cut = blob.find(marker)
    if cut < 0:
        raise ModelFileError(f"{path}: missing header terminator")
    try:
        lines = blob[:cut].decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise ModelFileError(f"{path}: header is not ASCII") from exc
    if not lines or lines[0] != _MAGIC:
        raise ModelFileError(f"{path}: not a model file or unsupported version")
    fields = {}
    for line in lines[1:]:
        key, sep, value = line.partition(": ")
        if not sep:
            raise ModelFileError(f"{path}: malformed header line {line!r}")
        fields[key] = value
    for key in ("stage", "arrays", "d_prime", "d_h"):
        if key not in fields:
            raise ModelFileError(f"{path}: header missing {key!r}")

    shapes = {}
    for entry in fields["arrays"].split(","):
        name, sep, dims = entry.partition(":")
        if not sep:
            raise ModelFileError(f"{path}: malformed manifest entry {entry!r}")
        shapes[name] = tuple(int(d) for d in dims.split("x"))
    payload = blob[cut + len(marker):]
    expected = sum(int(np.prod(s)) * 8 for s in shapes.values())
    if len(payload) != expected:
        raise ModelFileError(f"{path}: corrupt payload ({len(payload)} bytes, "
                             f"expected {expected})")
    arrays = {}
    offset = 0
    for name, shape in shapes.items():
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(payload, dtype="<f8", count=count,
                                     offset=offset).astype(np.float64).reshape(shape)
        offset += count * 8
    return fields["stage"], fields, arrays


def load_model(path) -> GeneralistModel:
    """Read a full model file; refuses headers that disagree with the payload."""
    stage, fields, arrays = _read_model_file(path)
    if stage != "full":
        raise ModelFileError(f"{path}: stage {stage!r} has no prompt parameters; "
                             "run prompt training first")
    missing = [name for name in _FULL_ARRAYS if name not in arrays]
    if missing:
        raise ModelFileError(f"{path}: missing arrays {missing}")
    model = GeneralistModel(
        agg_weight=arrays["agg_weight"],
        prompt_tokens=arrays["prompt_tokens"],
        token_projections=arrays["token_projections"],
        transform_weight=arrays["transform_weight"],
        transform_bias=arrays["transform_bias"],
        nonlinearity=fields.get("nonlinearity", "relu"),
        seed=int(fields.get("seed", 0)),
    )
    declared = (int(fields["d_prime"]), int(fields["d_h"]), int(fields.get("num_tokens", -1)))
    if declared != (model.d_prime, model.d_h, model.num_tokens):
        raise ModelFileError(f"{path}: header dims {declared} disagree with payload "
                             f"({model.d_prime}, {model.d_h}, {model.num_tokens})")
    return model


def load_encoder(path) -> np.ndarray:
    """Read the aggregation weight from an encoder-stage or full model file."""
    _, fields, arrays = _read_model_file(path)
    if "agg_weight" not in arrays:
        raise ModelFileError(f"{path}: no aggregation weight present")
    w = arrays["agg_weight"]
    if (int(fields["d_prime"]), int(fields["d_h"])) != w.shape:
        raise ModelFileError(f"{path}: header dims disagree with payload shape {w.shape}")
    return w
