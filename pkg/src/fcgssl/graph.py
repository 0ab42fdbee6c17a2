"""Graph data model, file I/O, normalized Laplacian and synthetic generators."""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, GraphFormatError

log = logging.getLogger(__name__)

__all__ = [
    "Graph",
    "LaplacianView",
    "build_laplacian",
    "load_graph",
    "save_graph",
    "generate_synthetic",
    "disjoint_union",
]


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with node features and optional labels.

    ``edges`` is an ``(E, 2)`` int array of canonical pairs ``i < j`` sorted
    lexicographically. ``labels`` is either per-node (length N) or a single
    per-graph target (length 1). Use :meth:`from_edges` to build one from raw
    pairs; the plain constructor assumes canonical input and only validates.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    _adj: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.num_nodes)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(n, -1) if n else feats.reshape(0, 0)
        if feats.shape[0] != n:
            raise GraphFormatError(
                f"feature matrix has {feats.shape[0]} rows, expected {n}")
        if len(edges):
            if edges.min() < 0 or edges.max() >= n:
                raise GraphFormatError(f"edge index out of bounds for N={n}")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise GraphFormatError("edges must be canonical pairs (i < j)")
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            if np.any(order != np.arange(len(edges))):
                raise GraphFormatError("edges must be sorted")
            if np.any(np.all(np.diff(edges, axis=0) == 0, axis=1)):
                raise GraphFormatError("duplicate edge")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.ndim != 1 or len(labels) not in (n, 1):
                raise GraphFormatError(
                    f"labels must have length N={n} or 1, got shape {labels.shape}")
            labels = _readonly(labels)
        object.__setattr__(self, "num_nodes", n)
        object.__setattr__(self, "edges", _readonly(edges))
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_edges(cls, num_nodes, pairs, features, labels=None, strict=True):
        """Canonicalize raw ``(i, j)`` pairs.

        In strict mode self-loops and duplicate (in either orientation) pairs
        raise :class:`GraphFormatError`; otherwise they are silently dropped.
        """
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if len(pairs) and (pairs.min() < 0 or pairs.max() >= num_nodes):
            bad = np.flatnonzero((pairs < 0).any(1) | (pairs >= num_nodes).any(1))[0]
            raise GraphFormatError(
                f"edge {tuple(pairs[bad])} out of bounds for N={num_nodes}")
        loops = pairs[:, 0] == pairs[:, 1]
        if loops.any():
            if strict:
                i = int(pairs[loops][0, 0])
                raise GraphFormatError(f"self-loop ({i},{i}) not allowed in strict mode")
            pairs = pairs[~loops]
        canon = np.sort(pairs, axis=1)
        uniq = np.unique(canon, axis=0) if len(canon) else canon
        if strict and len(uniq) != len(canon):
            raise GraphFormatError("duplicate edge not allowed in strict mode")
        return cls(num_nodes, uniq, features, labels)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def adjacency(self) -> sp.csr_matrix:
        if not self._adj:
            n, e = self.num_nodes, self.edges
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
            a.sort_indices()
            self._adj.append(a)
        return self._adj[0]

    @property
    def degrees(self):
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes)

    def neighbors(self, i):
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]]

    def content_hash(self):
        """SHA-256 of the canonical edge list and node count."""
        h = hashlib.sha256()
        h.update(np.int64(self.num_nodes).tobytes())
        h.update(self.edges.astype("<i8").tobytes())
        return h.hexdigest()

    def permuted(self, perm):
        """Relabel nodes so that old node ``perm[k]`` becomes node ``k``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        labels = None
        if self.labels is not None:
            labels = self.labels[perm] if len(self.labels) == self.num_nodes else self.labels
        return Graph.from_edges(self.num_nodes, inv[self.edges], self.features[perm], labels)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None and other.labels is not None
            and np.array_equal(self.labels, other.labels))
        return (self.num_nodes == other.num_nodes
                and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.features, other.features)
                and same_labels)

    __hash__ = object.__hash__


@dataclass(frozen=True)
class LaplacianView:
    degrees: np.ndarray
    L: sp.csr_matrix

    @property
    def num_nodes(self):
        return self.L.shape[0]


def build_laplacian(g: Graph) -> LaplacianView:
    """``L = I - D^{-1/2} A D^{-1/2}`` with ``d^{-1/2} = 0`` for isolated nodes."""
    deg = g.degrees.astype(np.float64)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    d = sp.diags(inv_sqrt)
    lap = sp.identity(g.num_nodes, format="csr") - d @ g.adjacency @ d
    lap = sp.csr_matrix(lap)
    lap.sort_indices()
    return LaplacianView(_readonly(g.degrees), lap)


# -- file I/O ---------------------------------------------------------------

def _read_rows(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, [t.strip() for t in line.split(",")]


def _parse_labels(tokens, path):
    try:
        return np.array([int(t) for _, t in tokens], dtype=np.int64)
    except ValueError:
        pass
    out = []
    for lineno, t in tokens:
        try:
            out.append(float(t))
        except ValueError:
            raise GraphFormatError(f"cannot parse label {t!r}", path, lineno) from None
    return np.array(out, dtype=np.float64)


def _load_edgelist_dir(root: Path, strict):
    feat_path = root / "features.csv"
    feats = []
    width = None
    for lineno, toks in _read_rows(feat_path):
        try:
            row = [float(t) for t in toks]
        except ValueError:
            raise GraphFormatError("non-numeric feature value", feat_path, lineno) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise GraphFormatError(
                f"feature row has {len(row)} columns, expected {width}", feat_path, lineno)
        feats.append(row)
    n = len(feats)
    features = np.array(feats, dtype=np.float64).reshape(n, width or 0)

    edge_path = root / "edges.csv"
    pairs = []
    for lineno, toks in _read_rows(edge_path):
        if len(toks) != 2:
            raise GraphFormatError(f"expected 'i,j', got {len(toks)} fields", edge_path, lineno)
        try:
            i, j = int(toks[0]), int(toks[1])
        except ValueError:
            raise GraphFormatError("non-integer node index", edge_path, lineno) from None
        if not (0 <= i < n and 0 <= j < n):
            raise GraphFormatError(f"node index out of bounds for N={n}", edge_path, lineno)
        if i == j and strict:
            raise GraphFormatError(f"self-loop ({i},{j}) not allowed in strict mode",
                                   edge_path, lineno)
        pairs.append((i, j))

    labels = None
    label_path = root / "labels.csv"
    if label_path.exists():
        tokens = [(ln, toks[0]) for ln, toks in _read_rows(label_path)]
        labels = _parse_labels(tokens, label_path)
        if len(labels) not in (n, 1):
            raise GraphFormatError(f"{len(labels)} labels for {n} nodes", label_path)
    return Graph.from_edges(n, pairs, features, labels, strict=strict)


def _load_bundle(path: Path, strict):
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    try:
        features = np.asarray(doc["features"], dtype=np.float64)
        n = int(doc.get("num_nodes", len(features)))
        pairs = doc.get("edges", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphFormatError(f"bad bundle: {exc}", path) from None
    if features.ndim != 2 or features.shape[0] != n:
        raise GraphFormatError(f"features shape {features.shape} does not match N={n}", path)
    labels = doc.get("labels")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.dtype.kind not in "if":
            raise GraphFormatError("labels must be numeric", path)
    return Graph.from_edges(n, pairs, features, labels, strict=strict)


def load_graph(path, format=None, strict=True) -> Graph:
    """Load a graph from an edge-list directory or a ``graph.json`` bundle.

    ``format`` is ``"edgelist"`` (a directory holding ``edges.csv``,
    ``features.csv`` and optionally ``labels.csv``) or ``"bundle"``; when
    omitted it is inferred from the path.
    """
    path = Path(path)
    if format is None:
        format = "bundle" if path.suffix == ".json" else "edgelist"
    if format == "bundle":
        return _load_bundle(path, strict)
    if format == "edgelist":
        return _load_edgelist_dir(path, strict)
    raise ConfigError(f"unknown graph format {format!r}")


def _fmt(x):
    return repr(float(x))


def save_graph(g: Graph, path, format=None, header=""):
    """Write ``g`` as an edge-list directory or a JSON bundle.

    ``header`` (``#`` comment lines) is prepended to ``edges.csv``; the
    bundle format ignores it.
    """
    path = Path(path)
    if format is None:
        format = "bundle" if path.suffix == ".json" else "edgelist"
    labels = None if g.labels is None else g.labels.tolist()
    if format == "bundle":
        doc = {"num_nodes": g.num_nodes, "edges": g.edges.tolist(),
               "features": g.features.tolist(), "labels": labels}
        path.write_text(json.dumps(doc))
        return path
    os.makedirs(path, exist_ok=True)
    with open(path / "edges.csv", "w") as fh:
        fh.write(header)
        fh.writelines(f"{i},{j}\n" for i, j in g.edges)
    with open(path / "features.csv", "w") as fh:
        fh.writelines(",".join(map(_fmt, row)) + "\n" for row in g.features)
    if labels is not None:
        fmt = str if g.labels.dtype.kind in "iu" else _fmt
        with open(path / "labels.csv", "w") as fh:
            fh.writelines(fmt(v) + "\n" for v in labels)
    return path


# -- synthetic graphs -------------------------------------------------------

_DEFAULT_P = {"sbm": (0.2, 0.02), "heterophilous": (0.02, 0.2)}


def generate_synthetic(kind="sbm", block_sizes=(50, 50), p_in=None, p_out=None,
                       feature_dim=16, feature_noise=1.0, seed=0, require_edges=True):
    """Stochastic block model with class-dependent Gaussian features.

    ``kind="heterophilous"`` only changes the default probabilities so that
    inter-block edges dominate. Node ``i``'s label is its block index and its
    features are ``mean[label] + feature_noise * N(0, I)`` where each class
    mean is drawn from ``N(0, I)``.
    """
    kind = {"heterophilous-blocks": "heterophilous"}.get(kind, kind)
    if kind not in _DEFAULT_P:
        raise ConfigError(f"unknown synthetic kind {kind!r}")
    d_in, d_out = _DEFAULT_P[kind]
    p_in = d_in if p_in is None else float(p_in)
    p_out = d_out if p_out is None else float(p_out)
    sizes = [int(s) for s in block_sizes]
    if not sizes or min(sizes) < 1:
        raise ConfigError(f"block sizes must be >= 1, got {sizes}")
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"{name}={p} outside [0, 1]")
    if feature_dim < 1 or feature_noise < 0:
        raise ConfigError("feature_dim must be >= 1 and feature_noise >= 0")
    n = sum(sizes)
    if require_edges and n > 1 and p_in == 0 and (p_out == 0 or len(sizes) == 1):
        raise ConfigError("all edge probabilities are zero; no edges can be generated")

    ss = np.random.SeedSequence(seed)
    edge_rng, feat_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    labels = np.repeat(np.arange(len(sizes)), sizes)
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    iu, ju = np.triu_indices(n, k=1)
    keep = edge_rng.random(len(iu)) < prob[iu, ju]
    pairs = np.stack([iu[keep], ju[keep]], axis=1)

    means = feat_rng.standard_normal((len(sizes), feature_dim))
    feats = means[labels] + feature_noise * feat_rng.standard_normal((n, feature_dim))
    return Graph(n, pairs, feats, labels)


def disjoint_union(graphs):
    """Block-diagonal union. Returns ``(graph, graph_index)`` where
    ``graph_index[v]`` is the source graph of node ``v``. Per-graph labels of
    length 1 are collected into the union's label vector only when every
    graph carries one; the union itself keeps per-node labels only if all
    inputs had them."""
    graphs = list(graphs)
    if not graphs:
        raise ConfigError("cannot take the union of zero graphs")
    offsets = np.cumsum([0] + [g.num_nodes for g in graphs])
    edges = np.concatenate([g.edges + off for g, off in zip(graphs, offsets)])
    feats = np.concatenate([g.features for g in graphs])
    index = np.repeat(np.arange(len(graphs)), [g.num_nodes for g in graphs])
    labels = None
    if all(g.labels is not None and len(g.labels) == g.num_nodes for g in graphs):
        labels = np.concatenate([g.labels for g in graphs])
    return Graph(int(offsets[-1]), edges, feats, labels), index
