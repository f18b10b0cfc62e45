"""Exact t-SNE: symmetric SNE affinities with a Student-t kernel in the
low-dimensional space, optimized by momentum gradient descent with early
exaggeration and per-coordinate gain adaptation.  O(n^2) per iteration,
deterministic per seed, output centered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    seed: int = 0
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250


def _conditional_affinities(D, perplexity, tol=1e-5, max_tries=50):
    """Row-stochastic P with per-row precision tuned so every row's
    perplexity matches; vectorized bisection over all rows at once."""
    n = D.shape[0]
    beta = np.ones(n)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    log_u = np.log(perplexity)
    eye = np.eye(n, dtype=bool)
    P = np.zeros_like(D)
    for _ in range(max_tries):
        W = np.exp(-D * beta[:, None])
        W[eye] = 0.0
        sums = W.sum(axis=1)
        sums[sums == 0] = np.finfo(float).tiny
        # Shannon entropy of each conditional distribution, in nats
        H = np.log(sums) + beta * (D * W).sum(axis=1) / sums
        P = W / sums[:, None]
        diff = H - log_u
        if np.all(np.abs(diff) < tol):
            break
        too_high = diff > 0
        lo = np.where(too_high, beta, lo)
        hi = np.where(~too_high, beta, hi)
        beta = np.where(too_high,
                        np.where(np.isinf(hi), beta * 2.0, (beta + hi) / 2.0),
                        np.where(np.isinf(lo), beta / 2.0, (beta + lo) / 2.0))
    return P


def tsne_project(H, cfg: TsneConfig = TsneConfig()) -> np.ndarray:
    """Project rows of H to 2-d.  Requires n >= 4 and perplexity < n."""
    H = np.asarray(H, dtype=np.float64)
    n = H.shape[0]
    if n < 4:
        raise ValueError("t-SNE needs at least 4 points, got %d" % n)
    if cfg.perplexity >= n:
        raise ValueError("perplexity %.1f must be < n=%d" % (cfg.perplexity, n))
    rng = np.random.default_rng(cfg.seed)

    sq = (H * H).sum(axis=1)
    D = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (H @ H.T), 0.0)
    P = _conditional_affinities(D, cfg.perplexity)
    P = (P + P.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)

    Y = rng.standard_normal((n, 2)) * 1e-4
    dY = np.zeros_like(Y)
    gains = np.ones_like(Y)
    exag = cfg.early_exaggeration
    for it in range(cfg.iterations):
        momentum = 0.5 if it < cfg.exaggeration_iters else 0.8
        Pit = P * exag if it < cfg.exaggeration_iters else P
        sqy = (Y * Y).sum(axis=1)
        num = 1.0 / (1.0 + sqy[:, None] + sqy[None, :] - 2.0 * (Y @ Y.T))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        PQ = (Pit - Q) * num
        grad = 4.0 * ((np.diag(PQ.sum(axis=1)) - PQ) @ Y)
        flip = np.sign(grad) != np.sign(dY)
        gains = np.where(flip, gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        dY = momentum * dY - cfg.learning_rate * (gains * grad)
        Y = Y + dY
        Y = Y - Y.mean(axis=0)
    return Y
