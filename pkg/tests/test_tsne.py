import numpy as np
import numpy.testing as npt
import pytest
from scipy.spatial.distance import cdist, pdist

from graphextract.tsne import TsneConfig, tsne_project, _conditional_affinities


class TestAffinities:
    def test_rows_stochastic(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((30, 5))
        sq = (X * X).sum(axis=1)
        D = sq[:, None] + sq[None, :] - 2 * X @ X.T
        P = _conditional_affinities(D, perplexity=10)
        npt.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(np.diag(P) == 0)

    def test_perplexity_hit(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((40, 4))
        sq = (X * X).sum(axis=1)
        D = sq[:, None] + sq[None, :] - 2 * X @ X.T
        P = _conditional_affinities(D, perplexity=15)
        H = -(P * np.log(np.maximum(P, 1e-300))).sum(axis=1)
        npt.assert_allclose(np.exp(H), 15.0, rtol=1e-3)


class TestTsneProject:
    def test_cluster_separation(self):
        rng = np.random.default_rng(0)
        H = np.vstack([rng.standard_normal((50, 64)),
                       rng.standard_normal((50, 64)) + 8.0])
        Y = tsne_project(H, TsneConfig(perplexity=15, iterations=400, seed=1))
        intra = (pdist(Y[:50]).mean() + pdist(Y[50:]).mean()) / 2
        inter = cdist(Y[:50], Y[50:]).mean()
        assert intra < inter

    def test_output_shape_and_centering(self):
        rng = np.random.default_rng(2)
        H = rng.standard_normal((40, 16))
        Y = tsne_project(H, TsneConfig(perplexity=10, iterations=200, seed=3))
        assert Y.shape == (40, 2)
        assert np.abs(Y.mean(axis=0)).max() < 1e-6

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(4)
        H = rng.standard_normal((30, 8))
        a = tsne_project(H, TsneConfig(perplexity=8, iterations=150, seed=5))
        b = tsne_project(H, TsneConfig(perplexity=8, iterations=150, seed=5))
        c = tsne_project(H, TsneConfig(perplexity=8, iterations=150, seed=6))
        npt.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_perplexity_too_large(self):
        with pytest.raises(ValueError, match="perplexity"):
            tsne_project(np.random.default_rng(0).standard_normal((3, 4)).repeat(2, 0)[:5],
                         TsneConfig(perplexity=30))

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="at least 4"):
            tsne_project(np.zeros((3, 4)), TsneConfig(perplexity=2))
