"""Discrete graph structure recovery for structureless query features.

Seeds a kNN graph from multi-head weighted cosine similarity, then
alternates between fitting a small full-neighborhood node classifier on a
mixed propagation matrix and updating the similarity head weights by
gradient on a joint loss (classification cross-entropy plus smoothness /
connectivity / sparsity graph regularization).  The final adjacency keeps
exactly the pairs whose learned similarity clears the edge cutoff; seed
edges are not force-retained.  Never touches any oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from graphextract.nn.layers import cross_entropy, glorot, relu
from graphextract.nn.train import Adam

LOG_GUARD = 1e-12


@dataclass
class SimilarityHeads:
    """Learnable per-head feature reweightings for cosine similarity."""
    weights: np.ndarray            # (head_count, d)

    @property
    def head_count(self):
        return self.weights.shape[0]

    @classmethod
    def initial(cls, head_count, d, rng):
        # near-ones with per-head jitter: starts close to plain cosine
        return cls(1.0 + 0.1 * rng.standard_normal((head_count, d)))


@dataclass(frozen=True)
class StructureLearnConfig:
    initial_k: int = 24
    edge_cutoff: float = 0.99
    smoothness: float = 0.2
    connectivity: float = 0.1
    sparsity: float = 0.1
    mixing: float = 0.8            # weight of the kNN seed branch
    head_count: int = 8
    refine_iters: int = 10
    inner_epochs: int = 30
    head_steps: int = 30
    inner_hidden: int = 256
    classifier_lr: float = 0.01
    head_lr: float = 0.05
    stop_change: float = 0.001     # adjacency Hamming fraction for early stop

    def __post_init__(self):
        if not 0.0 < self.edge_cutoff <= 1.0:
            raise ValueError("edge cutoff must be in (0, 1]")
        if not 0.0 <= self.mixing <= 1.0:
            raise ValueError("mixing weight must be in [0, 1]")
        if min(self.smoothness, self.connectivity, self.sparsity) < 0:
            raise ValueError("regularization coefficients must be >= 0")
        if self.head_count < 1:
            raise ValueError("need at least one similarity head")


@dataclass
class StructureLearnResult:
    adjacency: np.ndarray          # binary, symmetric, zero diagonal
    loss_trace: list
    iterations: int


def multihead_similarity(X, heads: SimilarityHeads, _cache=None) -> np.ndarray:
    """S_ij = mean over heads of cos(w_h * x_i, w_h * x_j); symmetric with
    unit diagonal."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    S = np.zeros((n, n))
    for z in range(heads.head_count):
        Xw = X * heads.weights[z]
        norms = np.linalg.norm(Xw, axis=1)
        if (norms == 0).any():
            raise ValueError("zero-norm weighted feature row at node %d (head %d)"
                             % (int(np.argmin(norms)), z))
        Xh = Xw / norms[:, None]
        S += Xh @ Xh.T
        if _cache is not None:
            _cache.append((Xw, norms, Xh))
    S /= heads.head_count
    S = (S + S.T) / 2.0            # kill asymmetric rounding residue
    np.fill_diagonal(S, 1.0)
    return S


def knn_from_similarity(S, k) -> np.ndarray:
    """Union-symmetrized kNN adjacency from a similarity matrix, ties broken
    toward the lower node id."""
    n = S.shape[0]
    if k >= n:
        raise ValueError("k=%d must be < n=%d" % (k, n))
    S = S.copy()
    np.fill_diagonal(S, -np.inf)
    adj = np.zeros((n, n), dtype=np.uint8)
    ids = np.arange(n)
    for i in range(n):
        order = np.lexsort((ids, -S[i]))
        adj[i, order[:k]] = 1
    adj = adj | adj.T
    np.fill_diagonal(adj, 0)
    return adj


def graph_regularizer(A, X, coeffs) -> float:
    """Smoothness + connectivity + sparsity penalty of adjacency A:

        alpha/n^2 tr(X^T L X)  -  beta/n 1^T log(A 1 + delta)  +  gamma/n^2 ||A||_F^2
    """
    A = np.asarray(A, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n = A.shape[0]
    if (A < 0).any():
        raise ValueError("adjacency must be non-negative")
    if not np.allclose(A, A.T):
        raise ValueError("adjacency must be symmetric")
    alpha, beta, gamma = coeffs
    # tr(X^T L X) = 1/2 sum_ij A_ij ||x_i - x_j||^2 over ordered pairs
    sq = (X * X).sum(axis=1)
    Dsq = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    smooth = alpha / n ** 2 * 0.5 * float((A * Dsq).sum())
    conn = -beta / n * float(np.log(A.sum(axis=1) + LOG_GUARD).sum())
    spars = gamma / n ** 2 * float((A * A).sum())
    return smooth + conn + spars


def _regularizer_grad(A_cand, Dsq, row, coeffs, n):
    alpha, beta, gamma = coeffs
    g = (alpha / n ** 2 * 0.5) * Dsq
    g = g - (beta / n) * (1.0 / (row + LOG_GUARD))[:, None]
    g = g + (gamma / n ** 2 * 2.0) * A_cand
    return g


class _InnerClassifier:
    """2-layer full-neighborhood classifier: relu(M X W1 + b1) W2'd by M."""

    def __init__(self, d, hidden, classes, rng):
        self.params = {"W1": glorot(rng, (d, hidden)), "b1": np.zeros(hidden),
                       "W2": glorot(rng, (hidden, classes)), "b2": np.zeros(classes)}

    def forward(self, M, X):
        p = self.params
        Z1 = M @ (X @ p["W1"]) + p["b1"]
        H1 = relu(Z1)
        Z2 = M @ (H1 @ p["W2"]) + p["b2"]
        return Z1, H1, Z2

    def loss_and_grads(self, M, X, labels):
        p = self.params
        Z1, H1, Z2 = self.forward(M, X)
        loss, dZ2 = cross_entropy(Z2, labels)
        MtdZ2 = M.T @ dZ2
        dH1 = MtdZ2 @ p["W2"].T
        dZ1 = dH1 * (Z1 > 0)
        MtdZ1 = M.T @ dZ1
        grads = {"W2": H1.T @ MtdZ2, "b2": dZ2.sum(axis=0),
                 "W1": X.T @ MtdZ1, "b1": dZ1.sum(axis=0)}
        return loss, grads, (Z1, H1, dZ2, dZ1)


def normalized_candidate(S):
    """Candidate adjacency from a similarity matrix: off-diagonal entries
    clamped into [0,1].  Keeping the raw similarity scale (rather than
    row-stochastic scaling) preserves the pressure that saturates confident
    pairs toward the edge cutoff during learning."""
    S_off = np.asarray(S, dtype=np.float64).copy()
    np.fill_diagonal(S_off, 0.0)
    return np.clip(S_off, 0.0, 1.0)


def _joint_loss_and_head_grad(X, labels, heads, clf, A_seed_norm, Dsq, cfg,
                              want_grad=True):
    """Joint loss (cross-entropy + regularizer) and its gradient w.r.t. the
    similarity head weights, through the mixed propagation matrix."""
    n = X.shape[0]
    lam = cfg.mixing
    coeffs = (cfg.smoothness, cfg.connectivity, cfg.sparsity)
    cache = []
    S = multihead_similarity(X, heads, _cache=cache)
    A_cand = normalized_candidate(S)
    row = A_cand.sum(axis=1)
    M = lam * A_seed_norm + (1.0 - lam) * A_cand

    Z1, H1, Z2 = clf.forward(M, X)
    ce, dZ2 = cross_entropy(Z2, labels)
    alpha, beta, gamma = coeffs
    smooth = alpha / n ** 2 * 0.5 * float((A_cand * Dsq).sum())
    conn = -beta / n * float(np.log(row + LOG_GUARD).sum())
    spars = gamma / n ** 2 * float((A_cand * A_cand).sum())
    loss = ce + smooth + conn + spars
    if not want_grad:
        return loss, None

    p = clf.params
    dM = dZ2 @ (H1 @ p["W2"]).T
    dH1 = M.T @ dZ2 @ p["W2"].T
    dZ1 = dH1 * (Z1 > 0)
    dM += dZ1 @ (X @ p["W1"]).T
    dA_cand = (1.0 - lam) * dM
    dA_cand += _regularizer_grad(A_cand, Dsq, row, coeffs, n)
    # clamp backward: only strictly interior entries carry gradient
    S_off = S.copy()
    np.fill_diagonal(S_off, 0.0)
    dS = dA_cand * ((S_off > 0) & (S_off < 1))
    np.fill_diagonal(dS, 0.0)
    dS = (dS + dS.T) / 2.0          # forward symmetrization of S
    dW = np.zeros_like(heads.weights)
    Z = heads.head_count
    for z in range(Z):
        Xw, norms, Xh = cache[z]
        dXh = (2.0 / Z) * (dS @ Xh)  # dS symmetric: (dS + dS.T) @ Xh collapses
        rd = (dXh * Xh).sum(axis=1)
        dXw = (dXh - rd[:, None] * Xh) / norms[:, None]
        dW[z] = (dXw * X).sum(axis=0)
    return loss, dW


def learn_structure(X, labels, cfg: StructureLearnConfig, seed) -> StructureLearnResult:
    """Recover a binary adjacency for query features with known labels.

    Runs entirely locally; the returned adjacency keeps pairs whose final
    multi-head similarity is >= cfg.edge_cutoff.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, d = X.shape
    if n < cfg.initial_k + 1:
        raise ValueError("need at least initial_k+1=%d nodes, got %d"
                         % (cfg.initial_k + 1, n))
    if np.allclose(X, X[0]):
        raise ValueError("degenerate features: all rows identical")
    classes = int(labels.max()) + 1
    rng = np.random.default_rng(seed)

    heads = SimilarityHeads.initial(cfg.head_count, d, rng)
    S0 = multihead_similarity(X, heads)
    A_seed = knn_from_similarity(S0, cfg.initial_k).astype(np.float64)
    np.fill_diagonal(A_seed, 1.0)                    # self loops on the seed branch
    A_seed_norm = A_seed / A_seed.sum(axis=1, keepdims=True)

    clf = _InnerClassifier(d, cfg.inner_hidden, classes, rng)
    clf_opt = Adam(lr=cfg.classifier_lr)
    head_opt = Adam(lr=cfg.head_lr)
    head_params = {"w": heads.weights}

    sq = (X * X).sum(axis=1)
    Dsq = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    lam = cfg.mixing

    trace = []
    prev_bin = None
    iterations = 0
    for it in range(cfg.refine_iters):
        iterations = it + 1
        # (a) classifier epochs on the current mixed propagation matrix
        S = multihead_similarity(X, heads)
        M = lam * A_seed_norm + (1.0 - lam) * normalized_candidate(S)
        for _ in range(cfg.inner_epochs):
            _, grads, _ = clf.loss_and_grads(M, X, labels)
            clf_opt.step(clf.params, grads)
        # (b) head-weight steps through the joint loss
        for _ in range(cfg.head_steps):
            _, dW = _joint_loss_and_head_grad(X, labels, heads, clf,
                                              A_seed_norm, Dsq, cfg)
            head_opt.step(head_params, {"w": dW})
        loss, _ = _joint_loss_and_head_grad(X, labels, heads, clf,
                                            A_seed_norm, Dsq, cfg,
                                            want_grad=False)
        trace.append(float(loss))
        # (c) early stop once the thresholded adjacency settles: flipped
        # entries relative to the edge union, armed past the halfway mark so
        # the saturation ramp-up is never cut short
        S = multihead_similarity(X, heads)
        cur_bin = S >= cfg.edge_cutoff
        np.fill_diagonal(cur_bin, False)
        if prev_bin is not None and it >= cfg.refine_iters // 2:
            union = max(1, int((cur_bin | prev_bin).sum()))
            change = float((cur_bin != prev_bin).sum()) / union
            if change < cfg.stop_change:
                break
        prev_bin = cur_bin

    S = multihead_similarity(X, heads)
    A = (S >= cfg.edge_cutoff)
    A = A | A.T
    np.fill_diagonal(A, False)
    return StructureLearnResult(A.astype(np.uint8), trace, iterations)


def adjacency_to_edges(A) -> np.ndarray:
    """Upper-triangle edge list of a binary adjacency."""
    iu, ju = np.nonzero(np.triu(np.asarray(A), k=1))
    return np.stack([iu, ju], axis=1).astype(np.int64)


def export_adjacency(A, path):
    """Write a learned adjacency as edges.csv (dataset directory format)."""
    from pathlib import Path
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for u, v in adjacency_to_edges(A):
            fh.write("%d,%d\n" % (u, v))
    return path
