"""Black-box oracle around a trained target model.

A query is an adversary-supplied graph plus node ids local to it; the reply
is exactly one response matrix: class posteriors, embeddings, or a 2-d
projection of the embeddings.  The oracle never exposes model parameters,
enforces a distinct-node budget, and can perturb responses with Gaussian
noise.  Budget accounting identifies nodes by a fingerprint of their
feature row (request-local ids carry no cross-request identity).
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field

import numpy as np

from graphextract.graphs import Graph
from graphextract.nn.models import TrainedModel
from graphextract.tsne import TsneConfig, tsne_project

RESPONSE_TYPES = ("prediction", "embedding", "projection")


class OracleError(Exception):
    pass


class BudgetExceededError(OracleError):
    """Raised when a request would overrun the distinct-node budget."""

    def __init__(self, remaining, requested):
        self.remaining = int(remaining)
        self.requested = int(requested)
        super().__init__("query budget exceeded: %d new nodes requested, %d remaining"
                         % (requested, remaining))


@dataclass(frozen=True)
class OracleConfig:
    response_type: str = "prediction"
    noise_sigma: float = 0.0
    budget: int | None = None            # max distinct query nodes; None = unlimited
    tsne: TsneConfig = field(default_factory=TsneConfig)
    noise_seed: int = 0

    def __post_init__(self):
        if self.response_type not in RESPONSE_TYPES:
            raise ValueError("unknown response_type %r" % self.response_type)
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be >= 0")


@dataclass
class QueryResponse:
    response_type: str
    matrix: np.ndarray               # n_query x m
    node_order: np.ndarray           # request-local ids, row-aligned

    @property
    def dim(self):
        return self.matrix.shape[1]


def add_noise(R, sigma, seed):
    """R + i.i.d. N(0, sigma^2); the identity when sigma is zero."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    R = np.asarray(R, dtype=np.float64)
    if sigma == 0:
        return R.copy()
    rng = np.random.default_rng(seed)
    return R + rng.normal(0.0, sigma, size=R.shape)


def _fingerprint(row):
    return hashlib.sha1(np.ascontiguousarray(row, dtype=np.float64).tobytes()).digest()


class Oracle:
    """Serves one response type for one target model.

    Thread-safe: the model is immutable and read lock-free; budget
    accounting is serialized.
    """

    def __init__(self, model: TrainedModel, config: OracleConfig):
        if config.response_type == "prediction" and model.config.head != "classifier":
            raise ValueError("prediction oracle needs a classifier model")
        self._model = model
        self.config = config
        self._seen = set()
        self._lock = threading.Lock()
        self._request_counter = 0

    # -- metadata (safe to expose) -----------------------------------------

    @property
    def num_classes(self):
        return self._model.config.class_count

    @property
    def embedding_size(self):
        return self._model.config.embedding_size

    def budget_remaining(self):
        if self.config.budget is None:
            return None
        with self._lock:
            return self.config.budget - len(self._seen)

    def meta(self) -> dict:
        return {"num_classes": self.num_classes,
                "embedding_size": self.embedding_size,
                "budget_remaining": self.budget_remaining()}

    # -- querying ------------------------------------------------------------

    def _charge_budget(self, query_graph, nodes):
        prints = {_fingerprint(query_graph.features[v]) for v in nodes}
        with self._lock:
            new = prints - self._seen
            if self.config.budget is not None:
                remaining = self.config.budget - len(self._seen)
                if len(new) > remaining:
                    raise BudgetExceededError(remaining, len(new))
            self._seen |= new
            self._request_counter += 1
            return self._request_counter - 1

    def respond(self, query_graph: Graph, nodes) -> QueryResponse:
        """Answer one query batch.  Budget is charged for previously unseen
        nodes before any computation; a refused request consumes nothing."""
        nodes = np.asarray(nodes, dtype=np.int64)
        if nodes.size == 0:
            raise OracleError("empty node list")
        if nodes.min() < 0 or nodes.max() >= query_graph.n:
            raise OracleError("node id out of range for submitted graph")
        request_idx = self._charge_budget(query_graph, nodes)
        rt = self.config.response_type
        if rt == "prediction":
            R = self._model.forward(query_graph, nodes, head="posterior")
        elif rt == "embedding":
            R = self._model.forward(query_graph, nodes, head="embedding")
        else:
            H = self._model.forward(query_graph, nodes, head="embedding")
            R = tsne_project(H, self.config.tsne)
        if self.config.noise_sigma > 0:
            R = add_noise(R, self.config.noise_sigma,
                          np.random.SeedSequence((self.config.noise_seed, request_idx)))
        return QueryResponse(rt, R, nodes.copy())
