"""Surrogate training against a black-box oracle.

The surrogate has two modules: a response-regression GNN encoder fitted to
the oracle's reply matrix (all response types treated uniformly as target
vectors), then a frozen-encoder MLP classifier fitted to the query labels.
Six scenarios: Type I uses the native query-graph structure, Type II first
learns one from features alone.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from graphextract.graphs import Graph, UNKNOWN_LABEL
from graphextract.nn import layers as L
from graphextract.nn.models import TrainedModel, build_model, surrogate_encoder_config
from graphextract.nn.models import build_levels
from graphextract.nn.train import Adam
from graphextract.oracle import BudgetExceededError, Oracle, QueryResponse
from graphextract.structure import StructureLearnConfig, adjacency_to_edges, learn_structure

SCENARIOS = ("I.1", "I.2", "I.3", "II.1", "II.2", "II.3")
SCENARIO_RESPONSE = {"I.1": "embedding", "I.2": "prediction", "I.3": "projection",
                     "II.1": "embedding", "II.2": "prediction", "II.3": "projection"}


class AttackError(Exception):
    pass


class AttackInputError(AttackError):
    """Scenario and supplied query inputs do not match."""


class AttackBudgetError(AttackError):
    """Oracle refused mid-attack; carries the query ledger so far."""

    def __init__(self, message, ledger):
        self.ledger = ledger
        super().__init__(message)


@dataclass(frozen=True)
class AttackConfig:
    scenario: str
    surrogate_kind: str = "sage"
    encoder_hidden: int = 256
    encoder_epochs: int = 200
    classifier_hidden: int = 100
    classifier_epochs: int = 300
    lr: float = 1e-3
    batch_size: int = 512
    seed: int = 0
    budget_fraction: float = 1.0       # share of the query partition to use
    structure: StructureLearnConfig = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError("unknown scenario %r" % self.scenario)
        if self.surrogate_kind not in ("sage", "gat", "gin"):
            raise ValueError("unknown surrogate kind %r" % self.surrogate_kind)
        if not 0.0 < self.budget_fraction <= 1.0:
            raise ValueError("budget fraction must be in (0, 1]")
        if self.needs_structure and self.structure is None:
            object.__setattr__(self, "structure", StructureLearnConfig())

    @property
    def response_type(self):
        return SCENARIO_RESPONSE[self.scenario]

    @property
    def needs_structure(self):
        return self.scenario.startswith("II")


def response_loss(H_hat, R) -> float:
    """Mean row-wise L2 distance between predictions and responses
    (the L2,1 norm of the difference divided by the row count)."""
    H_hat = np.asarray(H_hat, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if H_hat.shape != R.shape:
        raise ValueError("shape mismatch %r vs %r" % (H_hat.shape, R.shape))
    if H_hat.shape[0] < 1:
        raise ValueError("need at least one row")
    return float(np.linalg.norm(H_hat - R, axis=1).mean())


def response_loss_grad(H_hat, R):
    """(loss, d_loss/d_H_hat); rows with near-zero difference norm get a
    zero (sub)gradient."""
    diff = np.asarray(H_hat, dtype=np.float64) - np.asarray(R, dtype=np.float64)
    norms = np.linalg.norm(diff, axis=1)
    n = diff.shape[0]
    loss = float(norms.mean())
    safe = np.where(norms < 1e-12, 1.0, norms)
    grad = diff / safe[:, None] / n
    grad[norms < 1e-12] = 0.0
    return loss, grad


class Mlp:
    """Small fully-connected classifier head (dense layers, ReLU between)."""

    def __init__(self, widths, rng):
        self.widths = tuple(widths)
        self.layers = [L.DenseLayer(a, b, rng) for a, b in zip(widths, widths[1:])]

    def param_items(self):
        for i, lay in enumerate(self.layers):
            for pname, arr in lay.params.items():
                yield "mlp%d.%s" % (i, pname), arr

    def set_params(self, items):
        for path, arr in items.items():
            idx = int(path.split(".")[0][3:])
            pname = path.split(".")[1]
            self.layers[idx].params[pname] = np.array(arr, dtype=np.float64)

    def forward(self, X, tape=None):
        H = X
        for i, lay in enumerate(self.layers):
            out, cache = lay.forward(H)
            if i < len(self.layers) - 1:
                act = L.relu(out)
                if tape is not None:
                    tape.append((lay, cache, out))
                H = act
            else:
                if tape is not None:
                    tape.append((lay, cache, None))
                H = out
        return H

    def backward(self, tape, d_out):
        grads = {}
        d = d_out
        for i in reversed(range(len(self.layers))):
            lay, cache, pre_act = tape[i]
            if pre_act is not None:
                d = d * (pre_act > 0)
            g, d = lay.backward(cache, d)
            for pname, arr in g.items():
                grads["mlp%d.%s" % (i, pname)] = arr
        return grads

    def predict_posteriors(self, X):
        return L.softmax(self.forward(X))


def train_encoder(query_graph: Graph, response, cfg: AttackConfig) -> TrainedModel:
    """Fit the response-regression encoder F; its output width equals the
    response width m for every response type."""
    R = response.matrix if isinstance(response, QueryResponse) else np.asarray(response)
    R = np.asarray(R, dtype=np.float64)
    if R.ndim != 2 or R.shape[1] < 1:
        raise ValueError("response matrix must be 2-d with m >= 1")
    if R.shape[0] != query_graph.n:
        raise ValueError("response rows %d misaligned with query nodes %d"
                         % (R.shape[0], query_graph.n))
    m = R.shape[1]
    enc_cfg = surrogate_encoder_config(cfg.surrogate_kind, query_graph.d, m,
                                       hidden=cfg.encoder_hidden)
    model = build_model(enc_cfg, cfg.seed)
    model.metadata.update(epochs_run=int(cfg.encoder_epochs), seed=int(cfg.seed))
    if cfg.encoder_epochs == 0:
        return model
    rng = np.random.default_rng(cfg.seed)
    params = dict(model.param_items())
    opt = Adam(lr=cfg.lr)
    for _epoch in range(cfg.encoder_epochs):
        order = rng.permutation(query_graph.n)
        for i in range(0, order.size, cfg.batch_size):
            batch = order[i:i + cfg.batch_size]
            levels, contexts = build_levels(query_graph, batch, enc_cfg.fanouts, rng)
            H0 = query_graph.features[levels[0]]
            out, tape = model.train_forward(H0, contexts, rng)
            _loss, d_out = response_loss_grad(out, R[batch])
            grads, _ = model.train_backward(tape, d_out)
            opt.step(params, grads)
    return model


def train_classifier(encoder: TrainedModel, query_graph: Graph, labels,
                     cfg: AttackConfig) -> Mlp:
    """Fit the MLP head O on frozen-encoder outputs against query labels."""
    labels = np.asarray(labels, dtype=np.int64)
    classes = int(labels.max()) + 1
    if query_graph.class_count:
        if labels.min() < 0 or labels.max() >= query_graph.class_count:
            raise ValueError("label outside 0..%d" % (query_graph.class_count - 1))
        classes = query_graph.class_count
    H_hat = encoder.forward(query_graph, query_graph.nodes, head="embedding")
    rng = np.random.default_rng(cfg.seed + 1)
    mlp = Mlp((H_hat.shape[1], cfg.classifier_hidden, classes), rng)
    params = dict(mlp.param_items())
    opt = Adam(lr=cfg.lr)
    for _epoch in range(cfg.classifier_epochs):
        order = rng.permutation(query_graph.n)
        for i in range(0, order.size, cfg.batch_size):
            batch = order[i:i + cfg.batch_size]
            tape = []
            logits = mlp.forward(H_hat[batch], tape=tape)
            _loss, d_logits = L.cross_entropy(logits, labels[batch])
            grads = mlp.backward(tape, d_logits)
            opt.step(params, grads)
    return mlp


class SurrogateModel:
    """Stolen copy: frozen encoder F composed with classifier O."""

    def __init__(self, encoder: TrainedModel, classifier: Mlp, provenance: dict):
        self.encoder = encoder
        self.classifier = classifier
        self.provenance = provenance

    def embed(self, graph: Graph, nodes):
        return self.encoder.forward(graph, nodes, head="embedding")

    def predict_posteriors(self, graph: Graph, nodes):
        return self.classifier.predict_posteriors(self.embed(graph, nodes))

    @property
    def config(self):
        return self.encoder.config


def param_hash(model) -> str:
    """Stable content hash of all parameters, for freeze checks."""
    h = hashlib.sha256()
    for path, arr in sorted(model.param_items()):
        h.update(path.encode())
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()


def _query_oracle(oracle, query_graph, nodes, response_type):
    if isinstance(oracle, Oracle):
        return oracle.respond(query_graph, nodes)
    from graphextract.service import graph_to_request, query_remote
    return query_remote(oracle, graph_to_request(query_graph, nodes, response_type))


def run_attack(cfg: AttackConfig, oracle, query_graph: Graph) -> SurrogateModel:
    """Execute one attack scenario end to end.

    ``oracle`` is an in-process Oracle or a served address.  Type II ignores
    any edges on ``query_graph`` and learns the structure locally before the
    single query round.  Returns the surrogate with a query ledger in its
    provenance.
    """
    if query_graph.n < 1:
        raise AttackInputError("empty query graph")
    if cfg.budget_fraction < 1.0:
        rng = np.random.default_rng(cfg.seed)
        keep = max(1, int(round(cfg.budget_fraction * query_graph.n)))
        subset = np.sort(rng.choice(query_graph.n, size=keep, replace=False))
        query_graph = query_graph.induced_subgraph(subset)
    labels = query_graph.labels
    if (labels == UNKNOWN_LABEL).any():
        raise AttackInputError("query labels must be known to the adversary")
    if cfg.needs_structure:
        learned = learn_structure(query_graph.features, labels, cfg.structure, cfg.seed)
        g_q = Graph(query_graph.features, adjacency_to_edges(learned.adjacency),
                    labels, query_graph.class_count, name=query_graph.name + "/learned")
        structure_info = {"iterations": learned.iterations,
                          "loss_trace": learned.loss_trace,
                          "edges": int(learned.adjacency.sum() // 2)}
    else:
        if query_graph.edges.size == 0 and query_graph.n > 1:
            raise AttackInputError(
                "scenario %s needs query-graph structure; none supplied" % cfg.scenario)
        g_q = query_graph
        structure_info = None

    from graphextract.service import RemoteQueryError
    nodes = g_q.nodes
    try:
        response = _query_oracle(oracle, g_q, nodes, cfg.response_type)
    except BudgetExceededError as exc:
        raise AttackBudgetError(str(exc), {"nodes_queried": 0,
                                           "nodes_requested": int(nodes.size)})
    except RemoteQueryError as exc:
        if exc.code == 429:
            raise AttackBudgetError(exc.message, {"nodes_queried": 0,
                                                  "nodes_requested": int(nodes.size)})
        raise
    ledger = {"nodes_queried": int(nodes.size)}

    encoder = train_encoder(g_q, response, cfg)
    classifier = train_classifier(encoder, g_q, labels, cfg)
    provenance = {"scenario": cfg.scenario, "surrogate_kind": cfg.surrogate_kind,
                  "response_type": cfg.response_type, "seed": int(cfg.seed),
                  "query_ledger": ledger, "structure": structure_info}
    return SurrogateModel(encoder, classifier, provenance)
