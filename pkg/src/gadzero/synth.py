"""Synthetic attributed graphs with planted anomalies.

Graphs of one family share a latent attribute model: communities with fixed
latent means over a handful of factors with strictly decreasing variances.
Each graph observes the latent attributes through its own random orthogonal
embedding into its own raw dimensionality, plus a per-domain affine shift.
Projecting a graph onto its top singular directions and standardizing
therefore recovers the shared latent coordinates (the decreasing variances
fix the order, the largest-entry sign convention the signs), which is what
makes train-on-one/score-another possible at all.

Edges follow a stochastic block model with homophilous communities, so a
normal node's attributes are predictable from its neighborhood. Contextual
anomalies get attributes resampled from a distant Gaussian, one centered on
another community's latent mean; structural anomalies keep their attributes
but are rewired into small dense cliques spanning communities.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import SynthSpecError
from .graph_store import AttributedGraph, from_edges

NUM_FACTORS = 8
RAW_NOISE = 0.1
# Global latent mean on the first factor: raw attributes get a nonzero mean
# without adding an offset direction outside the factor subspace (which would
# shift and scramble the recovered dimensions).
MEAN_LEVEL = 1.5


@dataclass
class SynthSpec:
    num_nodes: int = 400
    raw_dim: int = 64
    num_communities: int = 3
    intra_edge_prob: float = 0.03
    inter_edge_prob: float = 0.003
    anomaly_rate: float = 0.05
    structural_frac: float = 0.4
    attr_scale: float = 1.0
    attr_offset: float = 0.0
    community_spread: float = 1.8
    attr_noise: float = 1.0
    contextual_shift: float = 1.0
    clique_size: int = 5
    family_seed: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.num_nodes < 2 or self.num_communities < 1:
            raise SynthSpecError("num_nodes and num_communities must be positive")
        if self.raw_dim < 2 * NUM_FACTORS:
            raise SynthSpecError(f"raw_dim must be at least {2 * NUM_FACTORS}")
        if not 0.0 < self.anomaly_rate < 0.5:
            raise SynthSpecError(f"anomaly_rate {self.anomaly_rate} outside (0, 0.5)")
        for name in ("intra_edge_prob", "inter_edge_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise SynthSpecError(f"{name} {p} outside [0, 1]")
        if self.intra_edge_prob <= self.inter_edge_prob:
            raise SynthSpecError("intra_edge_prob must exceed inter_edge_prob (homophily)")
        if not 0.0 <= self.structural_frac <= 1.0:
            raise SynthSpecError(f"structural_frac {self.structural_frac} outside [0, 1]")
        if self.clique_size < 2:
            raise SynthSpecError("clique_size must be at least 2")

    @classmethod
    def from_file(cls, path) -> "SynthSpec":
        raw = json.loads(open(path).read())
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise SynthSpecError(f"unknown spec keys: {sorted(unknown)}")
        return cls(**raw)


def _latent_family(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared latent structure: factor scales, per-factor noise stds, and
    community means. Governed by family_seed, so graphs of one family agree.

    The first num_communities - 1 factors carry community structure through
    mutually orthogonal, centered patterns over communities; the rest are pure
    node noise. Orthogonality keeps the latent covariance diagonal, so each
    graph's top singular directions recover the factors one-to-one.
    """
    rng = np.random.default_rng(spec.family_seed)
    c = spec.num_communities
    scales = 1.8 * 0.8 ** np.arange(NUM_FACTORS)  # distinct variances: stable ordering
    n_comm = min(c - 1, NUM_FACTORS)
    total = np.hypot(spec.community_spread, spec.attr_noise)
    mean_part = np.zeros(NUM_FACTORS)
    mean_part[:n_comm] = (spec.community_spread / total) * scales[:n_comm]
    noise_part = scales.copy()
    noise_part[:n_comm] = (spec.attr_noise / total) * scales[:n_comm]
    means = np.zeros((c, NUM_FACTORS))
    if n_comm:
        patterns = _community_patterns(c, rng)[:, :n_comm]
        means[:, :n_comm] = patterns * mean_part[:n_comm]
    means[:, 0] += MEAN_LEVEL
    return scales, noise_part, means


def _community_patterns(c: int, rng: np.random.Generator) -> np.ndarray:
    """Centered, orthogonal, unit-variance patterns over communities.

    For power-of-two community counts these are Hadamard columns, giving every
    community pair the same prototype distance; the family rng only shuffles
    community assignment, pattern order, and signs. Other counts fall back to
    a random orthonormal construction."""
    if c & (c - 1) == 0:
        h = np.ones((1, 1))
        while h.shape[0] < c:
            h = np.block([[h, h], [h, -h]])
        patterns = h[:, 1:].astype(np.float64)
    else:
        seed_cols = np.column_stack([np.ones(c), rng.normal(size=(c, c - 1))])
        q, _ = np.linalg.qr(seed_cols)
        patterns = q[:, 1:] * np.sqrt(c)
    patterns = patterns[rng.permutation(c)]
    patterns = patterns[:, rng.permutation(patterns.shape[1])]
    return patterns * rng.choice((-1.0, 1.0), size=patterns.shape[1])


def generate(spec: SynthSpec) -> AttributedGraph:
    """Generate one labeled graph; fully reproducible from its seeds."""
    _, noise_std, means = _latent_family(spec)
    rng = np.random.default_rng(spec.seed)
    n, c = spec.num_nodes, spec.num_communities
    communities = np.arange(n) % c
    latent = means[communities] + rng.normal(0.0, 1.0, size=(n, NUM_FACTORS)) * noise_std

    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(communities[iu] == communities[ju],
                    spec.intra_edge_prob, spec.inter_edge_prob)
    keep = rng.random(iu.size) < prob
    edges = np.column_stack([iu[keep], ju[keep]])

    n_anom = math.ceil(spec.anomaly_rate * n)
    anomalies = rng.choice(n, size=n_anom, replace=False)
    n_struct = int(round(spec.structural_frac * n_anom))
    structural = anomalies[:n_struct]
    contextual = anomalies[n_struct:]

    # Distant Gaussian: centered on a different community's latent mean, so
    # the node's attributes stop matching its (unchanged) neighborhood.
    if contextual.size:
        offsets = (rng.integers(1, c, size=contextual.size) if c > 1
                   else np.ones(contextual.size, dtype=np.int64))
        other = (communities[contextual] + offsets) % c
        base_mean = np.zeros(NUM_FACTORS)
        base_mean[0] = MEAN_LEVEL
        centers = base_mean + spec.contextual_shift * (means[other] - base_mean)
        latent[contextual] = centers + rng.normal(
            0.0, 1.0, size=(contextual.size, NUM_FACTORS)) * noise_std

    if structural.size:
        if spec.clique_size > structural.size:
            raise SynthSpecError(f"clique_size {spec.clique_size} exceeds the "
                                 f"{structural.size} structural anomalies")
        edges = _rewire_cliques(edges, structural, communities, spec.clique_size)

    # Per-graph observation: orthonormal embedding rows, each dominated by one
    # positive "flagship" coordinate. After projection onto the top singular
    # directions, the largest-entry sign convention then lands on the flagship
    # entry, recovering the latent coordinates with consistent signs.
    embedding = _flagship_embedding(spec.raw_dim, rng)
    attrs = latent @ embedding + rng.normal(0.0, RAW_NOISE, size=(n, spec.raw_dim))
    attrs = attrs * spec.attr_scale + spec.attr_offset

    labels = np.zeros(n, dtype=np.int64)
    labels[anomalies] = 1
    return from_edges(edges, attrs, labels)


def _flagship_embedding(raw_dim: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal factor-to-raw embedding rows, each with a dominant positive
    entry at its own flagship column and the remainder spread orthonormally
    over the other columns."""
    flagship = rng.choice(raw_dim, size=NUM_FACTORS, replace=False)
    rest = np.setdiff1d(np.arange(raw_dim), flagship)
    q, _ = np.linalg.qr(rng.normal(0.0, 1.0, size=(rest.size, NUM_FACTORS)))
    embedding = np.zeros((NUM_FACTORS, raw_dim))
    embedding[np.arange(NUM_FACTORS), flagship] = 0.6
    embedding[:, rest] = 0.8 * q.T
    return embedding


def _rewire_cliques(edges: np.ndarray, structural: np.ndarray, communities: np.ndarray,
                    clique_size: int) -> np.ndarray:
    """Drop structural anomalies' edges and reconnect them as cross-community
    cliques. Members are dealt round-robin after sorting by community, so each
    clique mixes communities; a trailing undersized group joins the last one."""
    struct_set = set(structural.tolist())
    untouched = ~np.array([u in struct_set or v in struct_set for u, v in edges])
    edges = edges[untouched]
    ordered = structural[np.argsort(communities[structural], kind="stable")]
    n_groups = max(1, ordered.size // clique_size)
    groups = [list(ordered[g::n_groups]) for g in range(n_groups)]
    clique_edges = []
    for members in groups:
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                clique_edges.append((members[i], members[j]))
    if clique_edges:
        edges = np.vstack([edges, np.array(clique_edges, dtype=np.int64)])
    return edges


def generate_pair(spec_source: SynthSpec, spec_target: SynthSpec
                  ) -> tuple[AttributedGraph, AttributedGraph]:
    """Two independent graphs from different attribute regimes."""
    if spec_source.raw_dim == spec_target.raw_dim:
        raise SynthSpecError("pair specs must differ in raw_dim")
    return generate(spec_source), generate(spec_target)


def default_pair_specs(seed: int = 0) -> tuple[SynthSpec, SynthSpec]:
    """The cross-domain transfer pair used by the end-to-end checks: a
    64-dimensional source domain and a 24-dimensional, rescaled and shifted
    target domain from the same family, with disjoint generation seeds
    derived from one run seed."""
    state = np.random.SeedSequence(seed).generate_state(3)
    family = int(state[0])
    source = SynthSpec(raw_dim=64, family_seed=family, seed=int(state[1]))
    target = SynthSpec(raw_dim=24, attr_scale=2.5, family_seed=family,
                       seed=int(state[2]))
    return source, target
