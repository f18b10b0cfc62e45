"""Graph substrate: representation, dataset IO, inductive splits, subgraphs, kNN.

All graphs are undirected, unweighted and attributed.  Node ids are the
consecutive integers 0..n-1.  Labels are stored densely with ``UNKNOWN_LABEL``
marking nodes whose class is not known.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

UNKNOWN_LABEL = -1


class DatasetError(ValueError):
    """Base class for dataset-directory loading failures."""


class MissingDatasetFile(DatasetError):
    pass


class NodeIdOutOfRange(DatasetError):
    pass


class LabelOutOfRange(DatasetError):
    pass


class BadFeatureValue(DatasetError):
    pass


class Graph:
    """Immutable undirected attributed graph.

    Parameters
    ----------
    features : (n, d) array
        Dense node feature matrix.
    edges : (E, 2) int array or iterable of pairs
        Undirected edges; duplicates collapse, self pairs are rejected
        unless ``allow_self_loops`` is set.
    labels : (n,) int array, optional
        Class per node, ``UNKNOWN_LABEL`` where unknown.
    class_count : int
        Number of classes |C|.
    """

    def __init__(self, features, edges, labels=None, class_count=0,
                 allow_self_loops=False, name=""):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        n = features.shape[0]
        edges = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                           dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ValueError("edge endpoint out of range 0..%d" % (n - 1))
            loops = edges[:, 0] == edges[:, 1]
            if loops.any() and not allow_self_loops:
                raise ValueError("self-loop (%d,%d) not allowed" % tuple(edges[loops][0]))
        # canonical undirected form: sorted pairs, unique
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        pairs = np.unique(np.stack([lo, hi], axis=1), axis=0) if edges.size else edges.reshape(0, 2)
        if labels is None:
            labels = np.full(n, UNKNOWN_LABEL, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (n,):
            raise ValueError("labels must have length n=%d" % n)
        if class_count and labels.size:
            bad = (labels != UNKNOWN_LABEL) & ((labels < 0) | (labels >= class_count))
            if bad.any():
                raise ValueError("label %d outside 0..%d" % (labels[bad][0], class_count - 1))
        self.features = features
        self.edges = pairs
        self.labels = labels
        self.class_count = int(class_count)
        self.name = name
        self._adj = None
        self._csr = None
        self.features.setflags(write=False)
        self.edges.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def nodes(self):
        return np.arange(self.n)

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric {0,1} adjacency as CSR, cached."""
        if self._adj is None:
            if self.edges.size:
                src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
                dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
                data = np.ones(src.size, dtype=np.float64)
                a = sp.csr_matrix((data, (src, dst)), shape=(self.n, self.n))
                a.data[:] = 1.0  # collapse parallel self-loop duplicates
            else:
                a = sp.csr_matrix((self.n, self.n), dtype=np.float64)
            a.sort_indices()
            self._adj = a
        return self._adj

    def neighbor_arrays(self):
        """(indptr, indices) of the adjacency, for fast neighbor lookups."""
        if self._csr is None:
            a = self.adjacency()
            self._csr = (a.indptr.copy(), a.indices.astype(np.int64))
        return self._csr

    def neighbors(self, node) -> np.ndarray:
        indptr, indices = self.neighbor_arrays()
        self._check_node(node)
        return indices[indptr[node]:indptr[node + 1]]

    def degrees(self) -> np.ndarray:
        indptr, _ = self.neighbor_arrays()
        return np.diff(indptr)

    def _check_node(self, node):
        if not (0 <= int(node) < self.n):
            raise ValueError("invalid node id %r (n=%d)" % (node, self.n))

    def induced_subgraph(self, node_ids, name="") -> "Graph":
        """Induced subgraph on ``node_ids``; nodes are relabelled 0..m-1 in
        the given order. Edges crossing out of the set are dropped."""
        node_ids = np.asarray(node_ids, dtype=np.int64)
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[node_ids] = np.arange(node_ids.size)
        if self.edges.size:
            keep = (pos[self.edges[:, 0]] >= 0) & (pos[self.edges[:, 1]] >= 0)
            sub_edges = pos[self.edges[keep]]
        else:
            sub_edges = np.zeros((0, 2), dtype=np.int64)
        return Graph(self.features[node_ids], sub_edges, self.labels[node_ids],
                     self.class_count, name=name or self.name)

    def __repr__(self):
        return "Graph(n=%d, |E|=%d, d=%d, classes=%d%s)" % (
            self.n, len(self.edges), self.d, self.class_count,
            ", name=%r" % self.name if self.name else "")


@dataclass(frozen=True)
class SplitSpec:
    """Inductive three-way split fractions (target-train / query / test)."""
    target_train_fraction: float
    query_fraction: float
    test_fraction: float
    seed: int = 0

    def validate(self):
        fr = (self.target_train_fraction, self.query_fraction, self.test_fraction)
        if any(f <= 0 for f in fr):
            raise ValueError("split fractions must be positive, got %r" % (fr,))
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("split fractions sum to %.12f, expected 1.0" % sum(fr))


@dataclass
class Subgraph:
    """l-hop neighborhood of ``center``, with original node ids retained."""
    center: int
    hop_count: int
    node_ids: np.ndarray      # sorted original ids, includes center
    edges: np.ndarray         # (E,2) pairs of original ids
    features: np.ndarray      # rows aligned with node_ids

    @property
    def n(self):
        return self.node_ids.size


def load_dataset(path, name=None) -> Graph:
    """Read a dataset directory (edges.csv / features.csv / labels.csv /
    meta.json) into a Graph.  Errors name the offending file and line."""
    root = Path(path)
    meta_p = root / "meta.json"
    if not meta_p.is_file():
        raise MissingDatasetFile("missing file: %s" % meta_p)
    meta = json.loads(meta_p.read_text())
    for key in ("n", "d", "num_classes"):
        if key not in meta:
            raise DatasetError("%s: missing key %r" % (meta_p, key))
    n, d, c = int(meta["n"]), int(meta["d"]), int(meta["num_classes"])

    feat_p = root / "features.csv"
    if not feat_p.is_file():
        raise MissingDatasetFile("missing file: %s" % feat_p)
    features = np.zeros((n, d), dtype=np.float64)
    seen = np.zeros(n, dtype=bool)
    with feat_p.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            try:
                node = int(cells[0])
            except ValueError:
                raise BadFeatureValue("%s:%d: bad node id %r" % (feat_p, lineno, cells[0]))
            if not 0 <= node < n:
                raise NodeIdOutOfRange("%s:%d: node id %d out of range 0..%d"
                                       % (feat_p, lineno, node, n - 1))
            if len(cells) - 1 != d:
                raise BadFeatureValue("%s:%d: expected %d features, got %d"
                                      % (feat_p, lineno, d, len(cells) - 1))
            try:
                features[node] = [float(x) for x in cells[1:]]
            except ValueError:
                raise BadFeatureValue("%s:%d: non-numeric feature value" % (feat_p, lineno))
            seen[node] = True
    if not seen.all():
        raise DatasetError("%s: missing feature rows for %d nodes" % (feat_p, int((~seen).sum())))

    lab_p = root / "labels.csv"
    if not lab_p.is_file():
        raise MissingDatasetFile("missing file: %s" % lab_p)
    labels = np.full(n, UNKNOWN_LABEL, dtype=np.int64)
    with lab_p.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            a, b = line.split(",")
            node, lab = int(a), int(b)
            if not 0 <= node < n:
                raise NodeIdOutOfRange("%s:%d: node id %d out of range 0..%d"
                                       % (lab_p, lineno, node, n - 1))
            if lab != UNKNOWN_LABEL and not 0 <= lab < c:
                raise LabelOutOfRange("%s:%d: label %d outside 0..%d"
                                      % (lab_p, lineno, lab, c - 1))
            labels[node] = lab

    edge_p = root / "edges.csv"
    if not edge_p.is_file():
        raise MissingDatasetFile("missing file: %s" % edge_p)
    edges = []
    with edge_p.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            a, b = line.split(",")
            u, v = int(a), int(b)
            for x in (u, v):
                if not 0 <= x < n:
                    raise NodeIdOutOfRange("%s:%d: node id %d out of range 0..%d"
                                           % (edge_p, lineno, x, n - 1))
            edges.append((u, v))
    return Graph(features, np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                 labels, c, name=name or meta.get("name", root.name))


def save_dataset(graph: Graph, path, name=None):
    """Write ``graph`` as a dataset directory in the load_dataset format."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"n": graph.n, "d": graph.d, "num_classes": graph.class_count,
            "name": name or graph.name or root.name}
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    with (root / "edges.csv").open("w") as fh:
        for u, v in graph.edges:
            fh.write("%d,%d\n" % (u, v))
    with (root / "features.csv").open("w") as fh:
        for i in range(graph.n):
            fh.write("%d,%s\n" % (i, ",".join(repr(float(x)) for x in graph.features[i])))
    with (root / "labels.csv").open("w") as fh:
        for i, lab in enumerate(graph.labels):
            fh.write("%d,%d\n" % (i, lab))
    return root


def split_inductive(graph: Graph, spec: SplitSpec):
    """Partition nodes into (train, query, test) induced subgraphs.

    Node sets are disjoint and exhaustive; edges crossing partitions are
    dropped so each part stands alone for inductive use.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(graph.n)
    n_train = int(round(graph.n * spec.target_train_fraction))
    n_query = int(round(graph.n * spec.query_fraction))
    parts = (order[:n_train], order[n_train:n_train + n_query], order[n_train + n_query:])
    if any(p.size == 0 for p in parts):
        raise ValueError("split produced an empty part (n=%d, spec=%r)" % (graph.n, spec))
    names = ("train", "query", "test")
    return tuple(graph.induced_subgraph(np.sort(p), name="%s/%s" % (graph.name, nm))
                 for p, nm in zip(parts, names))


def khop_subgraph(graph: Graph, center, l) -> Subgraph:
    """Induced subgraph of all nodes within ``l`` hops of ``center``."""
    graph._check_node(center)
    if l < 0:
        raise ValueError("hop count must be >= 0")
    indptr, indices = graph.neighbor_arrays()
    visited = {int(center)}
    frontier = [int(center)]
    for _ in range(int(l)):
        nxt = []
        for v in frontier:
            for u in indices[indptr[v]:indptr[v + 1]]:
                u = int(u)
                if u not in visited:
                    visited.add(u)
                    nxt.append(u)
        if not nxt:
            break
        frontier = nxt
    node_ids = np.array(sorted(visited), dtype=np.int64)
    inset = np.zeros(graph.n, dtype=bool)
    inset[node_ids] = True
    if graph.edges.size:
        keep = inset[graph.edges[:, 0]] & inset[graph.edges[:, 1]]
        edges = graph.edges[keep]
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    return Subgraph(int(center), int(l), node_ids, edges, graph.features[node_ids])


def sample_neighbors(graph: Graph, node, fanout, seed) -> np.ndarray:
    """Uniform sample without replacement of min(fanout, degree) neighbors."""
    if fanout < 1:
        raise ValueError("fanout must be >= 1")
    graph._check_node(node)
    nbrs = graph.neighbors(node)
    if nbrs.size <= fanout:
        return nbrs.copy()
    rng = np.random.default_rng(seed)
    return nbrs[np.sort(rng.choice(nbrs.size, size=fanout, replace=False))]


def sample_neighbors_batch(indptr, indices, nodes, fanout, rng):
    """Vectorised per-node neighbor sampling for many nodes at once.

    Returns (edge_dst, edge_src): parallel arrays where edge_dst holds
    positions into ``nodes`` and edge_src the sampled neighbor ids.  Nodes
    with degree <= fanout keep all neighbors.  Random-key selection gives a
    uniform sample without replacement.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    starts = indptr[nodes]
    degs = indptr[nodes + 1] - starts
    total = int(degs.sum())
    if total == 0:
        return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    dst = np.repeat(np.arange(nodes.size), degs)
    offs = np.arange(total) - np.repeat(np.cumsum(degs) - degs, degs)
    src = indices[np.repeat(starts, degs) + offs]
    if fanout is None or (degs <= fanout).all():
        return dst, src
    keys = rng.random(total)
    order = np.lexsort((keys, dst))
    dst, src = dst[order], src[order]
    rank = np.arange(total) - np.repeat(np.cumsum(degs) - degs, degs)
    keep = rank < fanout
    return dst[keep], src[keep]


def knn_graph(features, k, metric="cosine") -> np.ndarray:
    """Symmetric k-nearest-neighbor adjacency under cosine similarity.

    Each node links to its k most similar others; the result is the union
    symmetrization.  Ties break toward the lower node id.
    """
    if metric != "cosine":
        raise ValueError("unsupported metric %r" % metric)
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= n:
        raise ValueError("k=%d must be < n=%d" % (k, n))
    norms = np.linalg.norm(X, axis=1)
    if (norms == 0).any():
        raise ValueError("zero-norm feature row at node %d" % int(np.argmin(norms)))
    S = (X / norms[:, None]) @ (X / norms[:, None]).T
    np.fill_diagonal(S, -np.inf)
    adj = np.zeros((n, n), dtype=np.uint8)
    ids = np.arange(n)
    for i in range(n):
        order = np.lexsort((ids, -S[i]))  # similarity desc, id asc on ties
        adj[i, order[:k]] = 1
    adj = adj | adj.T
    np.fill_diagonal(adj, 0)
    return adj


def synth_graph(n, classes, intra_p, inter_p, d, seed) -> Graph:
    """Stochastic block model with class-conditional Gaussian features.

    Class c's feature mean is 4*one-hot(c) padded to length d, unit variance.
    Deterministic per seed.
    """
    if classes > n:
        raise ValueError("classes=%d exceeds n=%d" % (classes, n))
    if not (0 <= inter_p <= intra_p <= 1):
        raise ValueError("need 0 <= inter_p <= intra_p <= 1")
    if d < classes:
        raise ValueError("d must be >= classes for one-hot means")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    means = np.zeros((classes, d))
    means[np.arange(classes), np.arange(classes)] = 4.0
    features = rng.standard_normal((n, d)) + means[labels]
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], intra_p, inter_p)
    mask = rng.random(iu.size) < p
    edges = np.stack([iu[mask], ju[mask]], axis=1)
    return Graph(features, edges, labels, classes, name="synth")
