"""Model assembly and deterministic forward passes.

A model is a stack of graph layers with ReLU between them, optionally
followed by a dense classification transform.  The embedding tap is the
representation consumed by the final classification transform (dropout off);
posterior rows are the softmax of the final logits.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from graphextract.graphs import Graph, sample_neighbors_batch
from graphextract.nn import layers as L


@dataclass(frozen=True)
class ModelConfig:
    kind: str                          # sage | gat | gin
    in_width: int
    layer_widths: tuple                # output width per graph layer
    fanouts: tuple                     # neighborhood sample size per graph layer
    dropout: float = 0.0
    head: str = "classifier"           # classifier | embedding
    embedding_size: int = 256
    class_count: int = 0
    gat_heads: int = 4
    dense_out: int = 0                 # trailing dense classifier width (0 = none)

    def __post_init__(self):
        if self.kind not in ("sage", "gat", "gin"):
            raise ValueError("unknown model kind %r" % self.kind)
        if self.head not in ("classifier", "embedding"):
            raise ValueError("unknown head %r" % self.head)
        if len(self.fanouts) != len(self.layer_widths):
            raise ValueError("fanouts length %d != layer count %d"
                             % (len(self.fanouts), len(self.layer_widths)))
        if self.head == "classifier":
            widths = list(self.layer_widths) + ([self.dense_out] if self.dense_out else [])
            if len(widths) < 2:
                raise ValueError("classifier needs at least two transforms")
            if widths[-2] != self.embedding_size:
                raise ValueError("embedding_size %d must match second-to-last width %d"
                                 % (self.embedding_size, widths[-2]))
            if self.class_count and widths[-1] != self.class_count:
                raise ValueError("output width %d != class count %d"
                                 % (widths[-1], self.class_count))

    @property
    def out_width(self):
        return self.dense_out or self.layer_widths[-1]


def target_config(kind, in_width, class_count, embedding_size=256) -> ModelConfig:
    """Reference target architectures (3-layer GIN/GAT with fanout 10,
    2-layer SAGE with fanouts 25/10 plus a dense classifier)."""
    if kind in ("gin", "gat"):
        return ModelConfig(kind=kind, in_width=in_width,
                           layer_widths=(256, embedding_size, class_count),
                           fanouts=(10, 10, 10), dropout=0.0,
                           embedding_size=embedding_size, class_count=class_count)
    if kind == "sage":
        return ModelConfig(kind=kind, in_width=in_width,
                           layer_widths=(256, embedding_size),
                           fanouts=(25, 10), dropout=0.5,
                           embedding_size=embedding_size, class_count=class_count,
                           dense_out=class_count)
    raise ValueError("unknown target kind %r" % kind)


def surrogate_encoder_config(kind, in_width, response_width, hidden=256) -> ModelConfig:
    """2-layer response-regression encoder; output width equals the response
    width regardless of response type, final layer linear."""
    return ModelConfig(kind=kind, in_width=in_width,
                       layer_widths=(hidden, response_width),
                       fanouts=(10, 50), dropout=0.0, head="embedding",
                       embedding_size=response_width)


class TrainedModel:
    """A parameterized model with deterministic forward passes.

    ``metadata`` records training provenance (epochs run, best validation
    accuracy, seed).  Instances are treated as immutable after training and
    are safe to share across threads for inference.
    """

    def __init__(self, config: ModelConfig, rng):
        self.config = config
        self.graph_layers = []
        in_w = config.in_width
        n_layers = len(config.layer_widths)
        for i, out_w in enumerate(config.layer_widths):
            final = (i == n_layers - 1) and not config.dense_out
            combine = "average" if (config.kind == "gat" and final) else "concat"
            self.graph_layers.append(
                L.make_graph_layer(config.kind, in_w, out_w, rng,
                                   heads=config.gat_heads, combine=combine))
            in_w = out_w
        self.dense = L.DenseLayer(in_w, config.dense_out, rng) if config.dense_out else None
        self.metadata = {"epochs_run": 0, "best_val_acc": None, "seed": None}

    # -- parameter plumbing -------------------------------------------------

    def layers(self):
        out = [("layer%d" % i, lay) for i, lay in enumerate(self.graph_layers)]
        if self.dense is not None:
            out.append(("dense", self.dense))
        return out

    def param_items(self):
        for lname, lay in self.layers():
            for pname, arr in lay.params.items():
                yield "%s.%s" % (lname, pname), arr

    def set_params(self, items):
        by_layer = dict(self.layers())
        for path, arr in items.items():
            lname, pname = path.split(".")
            dst = by_layer[lname].params[pname]
            if dst.shape != arr.shape:
                raise ValueError("shape mismatch for %s: %r vs %r" % (path, dst.shape, arr.shape))
            by_layer[lname].params[pname] = np.array(arr, dtype=np.float64)

    def snapshot(self):
        return {path: arr.copy() for path, arr in self.param_items()}

    def clone(self) -> "TrainedModel":
        return copy.deepcopy(self)

    # -- forward passes -----------------------------------------------------

    def _run_layers(self, H0, contexts, train_rng=None, tape=None):
        """Apply the layer stack over per-layer aggregation contexts.

        contexts[i] = (self_pos, edge_dst, edge_src, m) for graph layer i.
        With ``train_rng`` set, dropout is active and caches are recorded in
        ``tape`` for backprop.  Returns (output, embedding) where embedding
        is the representation consumed by the final transform (or the output
        itself for embedding-head models).
        """
        drop = self.config.dropout if train_rng is not None else 0.0
        H = H0
        n_graph = len(self.graph_layers)
        embedding = None
        for i, lay in enumerate(self.graph_layers):
            self_pos, edge_dst, edge_src, m = contexts[i]
            out, cache = lay.forward(H, self_pos, edge_dst, edge_src, m)
            if i == n_graph - 1 and self.dense is None:
                # final transform of the model: linear output
                if tape is not None:
                    tape.append((lay, cache, None, None))
                H = out
                continue
            act = L.relu(out)
            mask = None
            if drop > 0.0:
                mask = (train_rng.random(act.shape) >= drop) / (1.0 - drop)
                act = act * mask
            if tape is not None:
                tape.append((lay, cache, out, mask))
            H = act
            final_is_dense = self.dense is not None
            if (final_is_dense and i == n_graph - 1) or (not final_is_dense and i == n_graph - 2):
                embedding = act
        if self.dense is not None:
            out, cache = self.dense.forward(H)
            if tape is not None:
                tape.append((self.dense, cache, None, None))
            H = out
        if self.dense is None and self.config.head == "embedding":
            embedding = H
        return H, embedding

    def _full_contexts(self, graph: Graph):
        a = graph.adjacency()
        indptr, indices = a.indptr, a.indices.astype(np.int64)
        deg = np.diff(indptr)
        edge_dst = np.repeat(np.arange(graph.n), deg)
        edge_src = indices
        self_pos = np.arange(graph.n)
        return [(self_pos, edge_dst, edge_src, graph.n)] * len(self.graph_layers)

    def forward(self, graph: Graph, nodes, head="posterior", seed=None):
        """Rows for ``nodes``: posterior (softmax) or embedding tap.

        seed=None aggregates over full neighborhoods; an integer seed draws
        fanout-limited neighborhoods deterministically.
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size and (nodes.min() < 0 or nodes.max() >= graph.n):
            raise ValueError("invalid node id in request (n=%d)" % graph.n)
        if head not in ("posterior", "embedding"):
            raise ValueError("unknown head %r" % head)
        if head == "posterior" and self.config.head != "classifier":
            raise ValueError("model has no classification head")
        if seed is None:
            contexts = self._full_contexts(graph)
            logits, embedding = self._run_layers(graph.features, contexts)
            logits, embedding = logits[nodes], None if embedding is None else embedding[nodes]
        else:
            rng = np.random.default_rng(seed)
            level_nodes, contexts = build_levels(graph, nodes, self.config.fanouts, rng)
            logits, embedding = self._run_layers(graph.features[level_nodes[0]], contexts)
        if head == "embedding":
            return embedding
        return L.softmax(logits)

    def predict_posteriors(self, graph: Graph, nodes):
        return self.forward(graph, nodes, head="posterior")

    # -- training-time forward/backward --------------------------------------

    def train_forward(self, H0, contexts, train_rng):
        tape = []
        out, _ = self._run_layers(H0, contexts, train_rng=train_rng, tape=tape)
        return out, tape

    def train_backward(self, tape, d_out):
        grads = {}
        names = dict((id(lay), name) for name, lay in self.layers())
        d = d_out
        for lay, cache, pre_act, mask in reversed(tape):
            if pre_act is not None:      # relu (+ dropout) sat on this output
                if mask is not None:
                    d = d * mask
                d = d * (pre_act > 0)
            g, d = lay.backward(cache, d)
            lname = names[id(lay)]
            for pname, arr in g.items():
                grads["%s.%s" % (lname, pname)] = arr
        return grads, d


def build_levels(graph: Graph, batch, fanouts, rng):
    """Sampled receptive-field construction for a batch of output nodes.

    Returns (level_nodes, contexts): level_nodes[0] is the base node set
    whose raw features feed layer 0; contexts align with the layer stack.
    """
    indptr, indices = graph.neighbor_arrays()
    cur = np.asarray(batch, dtype=np.int64)
    rev = []
    for fanout in reversed(fanouts):
        dst, src = sample_neighbors_batch(indptr, indices, cur, fanout, rng)
        prev, inv = np.unique(np.concatenate([cur, src]), return_inverse=True)
        self_pos = inv[:cur.size]
        src_pos = inv[cur.size:]
        rev.append((self_pos, dst, src_pos, cur.size))
        cur = prev
    levels = [cur]
    return levels, list(reversed(rev))


def build_model(config: ModelConfig, seed) -> TrainedModel:
    """Freshly initialized model; Glorot-uniform weights drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    model = TrainedModel(config, rng)
    model.metadata["seed"] = int(seed)
    return model
