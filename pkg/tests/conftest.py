import numpy as np
import pytest

import graphextract as gx
from graphextract.graphs import Graph
from graphextract.nn.models import build_model, target_config
from graphextract.nn.train import TrainConfig, train_model


def rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def fd_layer_check(layer, H_prev, self_pos, edge_dst, edge_src, m, rng, step=1e-5):
    """Central finite differences against analytic grads for a graph layer.
    Returns the worst relative error over all parameters and the input."""
    out, cache = layer.forward(H_prev, self_pos, edge_dst, edge_src, m)
    G = rng.standard_normal(out.shape)
    grads, d_prev = layer.backward(cache, G)

    def loss():
        o, _ = layer.forward(H_prev, self_pos, edge_dst, edge_src, m)
        return float((G * o).sum())

    worst = 0.0
    for name, arr in layer.params.items():
        num = np.zeros_like(arr)
        flat, nf = arr.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss()
            flat[i] = orig - step
            lm = loss()
            flat[i] = orig
            nf[i] = (lp - lm) / (2 * step)
        worst = max(worst, rel_err(num, grads[name]))
    num = np.zeros_like(H_prev)
    flat, nf = H_prev.reshape(-1), num.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        lp = loss()
        flat[i] = orig - step
        lm = loss()
        flat[i] = orig
        nf[i] = (lp - lm) / (2 * step)
    return max(worst, rel_err(num, d_prev))


def random_context(rng, p=7, m=4, leave_isolated=True):
    """A small aggregation context with one output slot left neighborless."""
    self_pos = np.sort(rng.choice(p, size=m, replace=False))
    dst, src = [], []
    for i in range(m):
        if leave_isolated and i == m - 1:
            continue
        k = rng.integers(1, 4)
        for u in rng.choice(p, size=k, replace=False):
            dst.append(i)
            src.append(int(u))
    return self_pos, np.array(dst, dtype=np.int64), np.array(src, dtype=np.int64)


def make_bow_graph(seed=5, n=900, classes=4, topic_words=2, topic_vocab=20,
                   noise_words=10, noise_vocab=50, intra_p=0.05, inter_p=0.002,
                   topic_count_max=2, noise_count_max=3):
    """Bag-of-words style attributed SBM where head weights can denoise the
    feature space; used for structure-learning behavior tests."""
    rng = np.random.default_rng(seed)
    d = classes * topic_vocab + noise_vocab
    labels = np.arange(n) % classes
    X = np.zeros((n, d))
    for i in range(n):
        c = labels[i]
        X[i, rng.choice(topic_vocab, topic_words, replace=False) + c * topic_vocab] = \
            rng.integers(1, topic_count_max + 1, topic_words)
        X[i, rng.choice(noise_vocab, noise_words, replace=False) + classes * topic_vocab] = \
            rng.integers(1, noise_count_max + 1, noise_words)
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], intra_p, inter_p)
    mask = rng.random(iu.size) < p
    return Graph(X, np.stack([iu[mask], ju[mask]], axis=1), labels, classes,
                 name="synthbow")


@pytest.fixture(scope="session")
def synth_graph_small():
    return gx.synth_graph(300, 3, 0.08, 0.008, 12, seed=4)


@pytest.fixture(scope="session")
def synth_parts(synth_graph_small):
    return gx.split_inductive(synth_graph_small, gx.SplitSpec(0.3, 0.3, 0.4, seed=1))


@pytest.fixture(scope="session")
def sage_target(synth_parts):
    train, _, _ = synth_parts
    model = build_model(target_config("sage", train.d, train.class_count, 32), seed=5)
    return train_model(model, train, TrainConfig(epochs=20, batch_size=64, seed=9))


@pytest.fixture(scope="session")
def gin_target(synth_parts):
    train, _, _ = synth_parts
    model = build_model(target_config("gin", train.d, train.class_count, 32), seed=5)
    return train_model(model, train, TrainConfig(epochs=20, batch_size=64, seed=9))
