"""Supervised training: Adam, mini-batched neighborhood sampling, snapshots.

Training minimizes cross-entropy over labeled nodes, holds out a validation
slice of the training partition internally, and returns the parameter
snapshot with the highest validation accuracy.  Everything is deterministic
per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from graphextract.graphs import Graph, UNKNOWN_LABEL
from graphextract.nn import layers as L
from graphextract.nn.models import TrainedModel, build_levels


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8) over named arrays."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v = {}, {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for key, g in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            self.m[key] = b1 * self.m[key] + (1 - b1) * g
            self.v[key] = b2 * self.v[key] + (1 - b2) * (g * g)
            mhat = self.m[key] / corr1
            vhat = self.v[key] / corr2
            params[key] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 512
    lr: float = 1e-3
    val_fraction: float = 0.1
    seed: int = 0


def _chunks(arr, size):
    for i in range(0, arr.size, size):
        yield arr[i:i + size]


def train_model(model: TrainedModel, graph: Graph, cfg: TrainConfig) -> TrainedModel:
    """Train a copy of ``model`` on ``graph``'s labeled nodes.

    Returns the snapshot with the best validation accuracy; the input model
    is left untouched.  ``metadata['val_curve']`` records the running best
    per epoch.
    """
    if cfg.batch_size < 1:
        raise ValueError("batch size must be >= 1")
    if not 0.0 < cfg.val_fraction < 1.0:
        raise ValueError("val_fraction must be in (0,1)")
    labeled = np.nonzero(graph.labels != UNKNOWN_LABEL)[0]
    if labeled.size == 0:
        raise ValueError("graph has no labeled nodes")

    model = model.clone()
    model.metadata.update(epochs_run=int(cfg.epochs), seed=int(cfg.seed))
    if cfg.epochs == 0:
        return model

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(labeled)
    n_val = max(1, int(round(cfg.val_fraction * labeled.size)))
    if n_val >= labeled.size:
        n_val = labeled.size - 1
    val_nodes, fit_nodes = perm[:n_val], perm[n_val:]
    labels = graph.labels

    params = dict(model.param_items())   # live views; Adam updates in place
    opt = Adam(lr=cfg.lr)
    best_acc, best_snap = -1.0, None
    curve = []
    for _epoch in range(cfg.epochs):
        order = rng.permutation(fit_nodes)
        for batch in _chunks(order, cfg.batch_size):
            levels, contexts = build_levels(graph, batch, model.config.fanouts, rng)
            H0 = graph.features[levels[0]]
            logits, tape = model.train_forward(H0, contexts, rng)
            _loss, d_logits = L.cross_entropy(logits, labels[batch])
            grads, _ = model.train_backward(tape, d_logits)
            opt.step(params, grads)
        posts = model.forward(graph, val_nodes, head="posterior")
        val_acc = float((posts.argmax(axis=1) == labels[val_nodes]).mean())
        if val_acc > best_acc:
            best_acc = val_acc
            best_snap = model.snapshot()
        curve.append(best_acc)
    model.set_params(best_snap)
    model.metadata.update(best_val_acc=best_acc, val_curve=curve)
    return model
