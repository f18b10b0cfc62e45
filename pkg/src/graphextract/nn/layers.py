"""Graph layer kernels (sage / gat / gin) and dense layers with backprop.

Each layer application maps representations of a previous node set to a
smaller output node set through edge arrays:

    H_prev   : (p, d_in) rows for the previous-level nodes
    self_pos : (m,) position of each output node inside the previous level
    edge_dst : (E,) output slot per aggregation edge, sorted ascending
    edge_src : (E,) previous-level row feeding that edge

Full-neighborhood inference and fanout-sampled training batches both reduce
to this form.  forward() returns (out, cache); backward(cache, d_out)
returns (param_grads, d_H_prev).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

LEAKY_SLOPE = 0.2


def glorot(rng, shape):
    fan_in, fan_out = shape[-2], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _agg_matrix(data, edge_dst, edge_src, m, p):
    return sp.csr_matrix((data, (edge_dst, edge_src)), shape=(m, p))


def segment_softmax(logits, edge_dst, m):
    """Softmax over edges grouped by destination slot (edge_dst sorted)."""
    starts = np.searchsorted(edge_dst, np.arange(m))
    counts = np.bincount(edge_dst, minlength=m)
    mx = np.full(m, -np.inf)
    nonempty = counts > 0
    if logits.size:
        seg_max = np.maximum.reduceat(logits, np.minimum(starts, logits.size - 1))
        mx[nonempty] = seg_max[nonempty]
    ex = np.exp(logits - mx[edge_dst])
    denom = np.bincount(edge_dst, weights=ex, minlength=m)
    return ex / denom[edge_dst]


class DenseLayer:
    """Plain affine transform; used for MLP heads and the SAGE classifier."""

    kind = "dense"

    def __init__(self, in_width, out_width, rng):
        self.in_width, self.out_width = in_width, out_width
        self.params = {"W": glorot(rng, (in_width, out_width)),
                       "b": np.zeros(out_width)}

    def forward(self, H):
        return H @ self.params["W"] + self.params["b"], {"H": H}

    def backward(self, cache, d_out):
        grads = {"W": cache["H"].T @ d_out, "b": d_out.sum(axis=0)}
        return grads, d_out @ self.params["W"].T


class SageLayer:
    """Mean over {self} union sampled neighbors, then a linear transform."""

    kind = "sage"

    def __init__(self, in_width, out_width, rng):
        self.in_width, self.out_width = in_width, out_width
        self.params = {"W": glorot(rng, (in_width, out_width)),
                       "b": np.zeros(out_width)}

    def forward(self, H_prev, self_pos, edge_dst, edge_src, m):
        p = H_prev.shape[0]
        counts = np.bincount(edge_dst, minlength=m)
        inv = 1.0 / (counts + 1.0)
        rows = np.concatenate([np.arange(m), edge_dst])
        cols = np.concatenate([self_pos, edge_src])
        data = np.concatenate([inv, inv[edge_dst]])
        M = _agg_matrix(data, rows, cols, m, p)
        agg = M @ H_prev
        out = agg @ self.params["W"] + self.params["b"]
        return out, {"M": M, "agg": agg}

    def backward(self, cache, d_out):
        grads = {"W": cache["agg"].T @ d_out, "b": d_out.sum(axis=0)}
        d_prev = cache["M"].T @ (d_out @ self.params["W"].T)
        return grads, d_prev


class GinLayer:
    """(1 + eps) * self + neighbor sum, then a linear transform."""

    kind = "gin"

    def __init__(self, in_width, out_width, rng):
        self.in_width, self.out_width = in_width, out_width
        self.params = {"W": glorot(rng, (in_width, out_width)),
                       "b": np.zeros(out_width),
                       "eps": np.zeros(1)}

    def forward(self, H_prev, self_pos, edge_dst, edge_src, m):
        p = H_prev.shape[0]
        M = _agg_matrix(np.ones(edge_dst.size), edge_dst, edge_src, m, p)
        h_self = H_prev[self_pos]
        s = (1.0 + self.params["eps"][0]) * h_self + M @ H_prev
        out = s @ self.params["W"] + self.params["b"]
        return out, {"M": M, "s": s, "h_self": h_self, "self_pos": self_pos,
                     "p": p}

    def backward(self, cache, d_out):
        ds = d_out @ self.params["W"].T
        grads = {"W": cache["s"].T @ d_out, "b": d_out.sum(axis=0),
                 "eps": np.array([float((ds * cache["h_self"]).sum())])}
        d_prev = cache["M"].T @ ds
        np.add.at(d_prev, cache["self_pos"], (1.0 + self.params["eps"][0]) * ds)
        return grads, d_prev


class GatLayer:
    """Multi-head attention over sampled neighbors (self excluded).

    Attention logits follow the original formulation
    e_vu = leaky_relu(a_l . W h_v + a_r . W h_u) normalized over v's sampled
    neighborhood per head.  Heads are concatenated on hidden layers and
    averaged on output layers.  Nodes with no sampled neighbors fall back to
    a self-loop so the attention sum stays defined.
    """

    kind = "gat"

    def __init__(self, in_width, out_width, rng, heads=4, combine="concat"):
        if combine not in ("concat", "average"):
            raise ValueError("combine must be concat or average")
        if combine == "concat" and out_width % heads:
            raise ValueError("out_width %d not divisible by %d heads" % (out_width, heads))
        self.in_width, self.out_width = in_width, out_width
        self.heads = heads
        self.combine = combine
        q = out_width // heads if combine == "concat" else out_width
        self.head_width = q
        self.params = {"W": glorot(rng, (heads, in_width, q)),
                       "a_l": glorot(rng, (heads, q, 1))[:, :, 0],
                       "a_r": glorot(rng, (heads, q, 1))[:, :, 0],
                       "b": np.zeros(out_width)}

    def _with_self_loops(self, self_pos, edge_dst, edge_src, m):
        counts = np.bincount(edge_dst, minlength=m)
        lonely = np.nonzero(counts == 0)[0]
        if lonely.size == 0:
            return edge_dst, edge_src
        edge_dst = np.concatenate([edge_dst, lonely])
        edge_src = np.concatenate([edge_src, self_pos[lonely]])
        order = np.argsort(edge_dst, kind="stable")
        return edge_dst[order], edge_src[order]

    def forward(self, H_prev, self_pos, edge_dst, edge_src, m):
        p = H_prev.shape[0]
        edge_dst, edge_src = self._with_self_loops(self_pos, edge_dst, edge_src, m)
        W, a_l, a_r = self.params["W"], self.params["a_l"], self.params["a_r"]
        outs, caches = [], []
        for z in range(self.heads):
            P = H_prev @ W[z]
            el = P[self_pos] @ a_l[z]
            er = P @ a_r[z]
            pre = el[edge_dst] + er[edge_src]
            act = np.where(pre > 0, pre, LEAKY_SLOPE * pre)
            alpha = segment_softmax(act, edge_dst, m)
            A = _agg_matrix(alpha, edge_dst, edge_src, m, p)
            outs.append(A @ P)
            caches.append({"P": P, "pre": pre, "alpha": alpha, "A": A})
        if self.combine == "concat":
            out = np.concatenate(outs, axis=1)
        else:
            out = np.mean(outs, axis=0)
        out = out + self.params["b"]
        return out, {"heads": caches, "edge_dst": edge_dst, "edge_src": edge_src,
                     "self_pos": self_pos, "m": m, "p": p, "H_prev": H_prev}

    def backward(self, cache, d_out):
        W, a_l, a_r = self.params["W"], self.params["a_l"], self.params["a_r"]
        edge_dst, edge_src = cache["edge_dst"], cache["edge_src"]
        self_pos, m, p = cache["self_pos"], cache["m"], cache["p"]
        H_prev = cache["H_prev"]
        q = self.head_width
        grads = {"W": np.zeros_like(W), "a_l": np.zeros_like(a_l),
                 "a_r": np.zeros_like(a_r), "b": d_out.sum(axis=0)}
        d_prev = np.zeros_like(H_prev)
        for z in range(self.heads):
            hc = cache["heads"][z]
            P, alpha, pre, A = hc["P"], hc["alpha"], hc["pre"], hc["A"]
            if self.combine == "concat":
                d_oz = d_out[:, z * q:(z + 1) * q]
            else:
                d_oz = d_out / self.heads
            # value path: out_z = A @ P
            dP = A.T @ d_oz
            d_alpha = (d_oz[edge_dst] * P[edge_src]).sum(axis=1)
            # softmax backward per destination segment
            s = np.bincount(edge_dst, weights=alpha * d_alpha, minlength=m)
            d_act = alpha * (d_alpha - s[edge_dst])
            d_pre = d_act * np.where(pre > 0, 1.0, LEAKY_SLOPE)
            # logit terms: pre = a_l.P[self_pos[dst]] + a_r.P[src]
            d_el = np.bincount(edge_dst, weights=d_pre, minlength=m)
            d_er = np.bincount(edge_src, weights=d_pre, minlength=p)
            grads["a_l"][z] = P[self_pos].T @ d_el
            grads["a_r"][z] = P.T @ d_er
            np.add.at(dP, self_pos, d_el[:, None] * a_l[z])
            dP += d_er[:, None] * a_r[z]
            grads["W"][z] = H_prev.T @ dP
            d_prev += dP @ W[z].T
        return grads, d_prev


def make_graph_layer(kind, in_width, out_width, rng, heads=4, combine="concat"):
    if kind == "sage":
        return SageLayer(in_width, out_width, rng)
    if kind == "gin":
        return GinLayer(in_width, out_width, rng)
    if kind == "gat":
        return GatLayer(in_width, out_width, rng, heads=heads, combine=combine)
    raise ValueError("unknown layer kind %r" % kind)


def layer_forward(layer, h_self, h_neighbors):
    """Single-node aggregation: apply ``layer`` to one node given its own
    vector and a (possibly empty) list of neighbor vectors."""
    h_self = np.asarray(h_self, dtype=np.float64)
    nbrs = [np.asarray(h, dtype=np.float64) for h in h_neighbors]
    for h in nbrs:
        if h.shape != h_self.shape:
            raise ValueError("neighbor width %r != self width %r" % (h.shape, h_self.shape))
    if h_self.shape != (layer.in_width,):
        raise ValueError("expected input width %d, got %r" % (layer.in_width, h_self.shape))
    H_prev = np.vstack([h_self[None, :]] + [h[None, :] for h in nbrs])
    self_pos = np.array([0])
    edge_dst = np.zeros(len(nbrs), dtype=np.int64)
    edge_src = np.arange(1, len(nbrs) + 1)
    out, _ = layer.forward(H_prev, self_pos, edge_dst, edge_src, 1)
    return out[0]


def relu(x):
    return np.maximum(x, 0.0)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean cross-entropy of softmax(logits) against integer labels.

    Returns (loss, d_logits)."""
    n = logits.shape[0]
    probs = softmax(logits)
    eps = 1e-300
    loss = -np.log(probs[np.arange(n), labels] + eps).mean()
    d = probs.copy()
    d[np.arange(n), labels] -= 1.0
    return loss, d / n
