"""Evaluation metrics: accuracy, fidelity, Pearson correlation.

Argmax ties break toward the lowest class index on both sides of the
fidelity comparison.
"""

from __future__ import annotations

import numpy as np

from graphextract.graphs import Graph, UNKNOWN_LABEL


def _argmax_predictions(model, graph: Graph, nodes):
    post = model.predict_posteriors(graph, nodes)
    return post.argmax(axis=1)        # numpy argmax: first (lowest) index wins ties


def accuracy(model, test_graph: Graph, labels=None) -> float:
    """Fraction of test nodes whose argmax prediction equals the label."""
    labels = test_graph.labels if labels is None else np.asarray(labels)
    known = np.nonzero(labels != UNKNOWN_LABEL)[0]
    if known.size == 0:
        raise ValueError("empty test set")
    preds = _argmax_predictions(model, test_graph, known)
    return float((preds == labels[known]).mean())


def fidelity(surrogate, target, test_graph: Graph) -> float:
    """Fraction of test nodes where surrogate and target argmax agree."""
    if test_graph.n == 0:
        raise ValueError("empty test set")
    nodes = test_graph.nodes
    ps = _argmax_predictions(surrogate, test_graph, nodes)
    pt = _argmax_predictions(target, test_graph, nodes)
    return float((ps == pt).mean())


def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("inputs must be equal-length 1-d sequences")
    if xs.size < 2:
        raise ValueError("need at least two points")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    vx = (dx * dx).sum()
    vy = (dy * dy).sum()
    if vx == 0 or vy == 0:
        raise ValueError("zero variance input")
    return float((dx * dy).sum() / np.sqrt(vx * vy))
