"""In-memory attributed graphs: ingestion, validation, adjacency normalization.

A dataset directory bundles ``edges.csv`` (two integer columns, optional
``src,dst`` header), ``attrs.csv`` (one comma-separated real row per node) and
an optional ``labels.csv`` (one 0/1 integer per line). Graphs are immutable
after load.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import LabelError, MalformedGraphError, ParseError, ShapeError
from .numerics import require_finite

# Row-normalized adjacency is a plain CSR matrix: row i holds 1/deg(i) at each
# neighbor column, all-zero for isolated nodes, zero diagonal.
RowNormalizedAdjacency = sparse.csr_matrix


@dataclass(frozen=True)
class AttributedGraph:
    """Undirected attributed graph with optional binary anomaly labels.

    ``adjacency`` is a symmetric binary CSR matrix with zero diagonal (both
    directions of every undirected edge materialized). ``attributes`` is the
    dense N x d float64 matrix; ``labels``, when present, is a length-N 0/1
    vector.
    """

    adjacency: sparse.csr_matrix
    attributes: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        adj = self.adjacency
        n = self.attributes.shape[0] if self.attributes.ndim == 2 else -1
        if self.attributes.ndim != 2:
            raise ShapeError("attributes must be a 2-D matrix")
        if adj.shape != (n, n):
            raise MalformedGraphError(f"adjacency shape {adj.shape} does not match {n} nodes")
        require_finite(self.attributes, "attributes")
        if adj.nnz:
            if adj.diagonal().any():
                raise MalformedGraphError("self-loops are not allowed")
            if not np.all(adj.data == 1.0):
                raise MalformedGraphError("adjacency must be binary")
            if (adj != adj.T).nnz != 0:
                raise MalformedGraphError("adjacency must be symmetric")
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise ShapeError(f"labels length {self.labels.shape} does not match {n} nodes")
            if not np.isin(self.labels, (0, 1)).all():
                raise LabelError("labels must be 0 or 1")

    @property
    def num_nodes(self) -> int:
        return self.attributes.shape[0]

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return self.adjacency.nnz // 2

    @property
    def raw_dim(self) -> int:
        return self.attributes.shape[1]


def from_edges(edges: np.ndarray, attributes: np.ndarray,
               labels: np.ndarray | None = None) -> AttributedGraph:
    """Build a validated graph from an E x 2 endpoint array.

    Edges are symmetrized and deduplicated; self-loops are dropped. N is
    inferred from the attribute row count.
    """
    attributes = require_finite(attributes, "attributes")
    if attributes.ndim != 2:
        raise ShapeError("attributes must be a 2-D matrix")
    n = attributes.shape[0]
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise MalformedGraphError(f"edge endpoint outside [0, {n})")
    keep = edges[:, 0] != edges[:, 1] if edges.size else np.zeros(0, dtype=bool)
    edges = edges[keep]
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = sparse.coo_matrix((np.ones(src.size), (src, dst)), shape=(n, n)).tocsr()
    adj.sum_duplicates()
    adj.data.fill(1.0)
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
    return AttributedGraph(adjacency=adj, attributes=attributes, labels=labels)


def _read_attributes(path: Path) -> np.ndarray:
    rows = []
    width = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise ParseError(f"{path}:{lineno}: ragged attribute row "
                             f"({len(parts)} values, expected {width})")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no attribute rows")
    return np.array(rows, dtype=np.float64)


def _read_edges(path: Path) -> np.ndarray:
    pairs = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if lineno == 1 and parts == ["src", "dst"]:
            continue
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _read_labels(path: Path, num_nodes: int) -> np.ndarray:
    values = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(int(line))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    if len(values) != num_nodes:
        raise ShapeError(f"{path}: {len(values)} labels for {num_nodes} nodes")
    return np.array(values, dtype=np.int64)


def load_graph(edge_path, attr_path, label_path=None) -> AttributedGraph:
    """Load and validate a graph from its three CSV files."""
    attributes = _read_attributes(Path(attr_path))
    edges = _read_edges(Path(edge_path))
    labels = None
    if label_path is not None:
        labels = _read_labels(Path(label_path), attributes.shape[0])
    return from_edges(edges, attributes, labels)


def load_dataset(directory) -> AttributedGraph:
    """Load a dataset directory (edges.csv, attrs.csv, optional labels.csv)."""
    directory = Path(directory)
    label_path = directory / "labels.csv"
    return load_graph(directory / "edges.csv", directory / "attrs.csv",
                      label_path if label_path.exists() else None)


def save_dataset(graph: AttributedGraph, directory) -> Path:
    """Write a graph as a dataset directory in the documented CSV format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    upper = sparse.triu(graph.adjacency, k=1).tocoo()
    edge_lines = ["src,dst"]
    order = np.lexsort((upper.col, upper.row))
    edge_lines += [f"{upper.row[i]},{upper.col[i]}" for i in order]
    (directory / "edges.csv").write_text("\n".join(edge_lines) + "\n")
    attr_lines = [",".join(f"{v:.17g}" for v in row) for row in graph.attributes]
    (directory / "attrs.csv").write_text("\n".join(attr_lines) + "\n")
    if graph.labels is not None:
        (directory / "labels.csv").write_text("\n".join(str(int(v)) for v in graph.labels) + "\n")
    return directory


def row_normalize(graph: AttributedGraph) -> sparse.csr_matrix:
    """1/deg(i) at each neighbor column; all-zero rows for isolated nodes."""
    return _row_normalize_adjacency(graph.adjacency)


def _row_normalize_adjacency(adj: sparse.csr_matrix) -> sparse.csr_matrix:
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    normalized = sparse.diags(inv) @ adj
    return normalized.tocsr()


def sparse_matmul(adj: sparse.spmatrix, m: np.ndarray) -> np.ndarray:
    """Sparse-dense product adj @ m."""
    m = np.asarray(m, dtype=np.float64)
    if adj.shape[1] != m.shape[0]:
        raise ShapeError(f"cannot multiply {adj.shape} by {m.shape}")
    return np.asarray(adj @ m)
