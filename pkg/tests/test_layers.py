import numpy as np
import numpy.testing as npt
import pytest

from graphextract.nn import layers as L
from conftest import fd_layer_check, random_context, rel_err


def identity_sage(rng):
    lay = L.SageLayer(1, 1, rng)
    lay.params["W"][:] = [[1.0]]
    lay.params["b"][:] = 0.0
    return lay


class TestLayerForwardExamples:
    def test_gin_hand_case(self):
        rng = np.random.default_rng(0)
        lay = L.GinLayer(1, 1, rng)
        lay.params["W"][:] = [[1.0]]
        lay.params["b"][:] = 0.0
        lay.params["eps"][0] = 0.0
        npt.assert_allclose(L.layer_forward(lay, [2.0], [[1.0]]), [3.0])

    def test_sage_mean_hand_case(self):
        lay = identity_sage(np.random.default_rng(0))
        npt.assert_allclose(L.layer_forward(lay, [2.0], [[1.0]]), [1.5])

    def test_gat_single_neighbor_attention_is_one(self):
        rng = np.random.default_rng(0)
        lay = L.GatLayer(2, 2, rng, heads=1, combine="average")
        lay.params["W"][0] = np.eye(2)
        lay.params["b"][:] = 0.0
        npt.assert_allclose(L.layer_forward(lay, [5.0, -1.0], [[3.0, 4.0]]),
                            [3.0, 4.0], atol=1e-12)

    def test_dimension_mismatch(self):
        lay = identity_sage(np.random.default_rng(0))
        with pytest.raises(ValueError, match="width"):
            L.layer_forward(lay, [1.0, 2.0], [])
        with pytest.raises(ValueError, match="width"):
            L.layer_forward(lay, [1.0], [[1.0, 2.0]])


class TestEmptyNeighborhoodConventions:
    def test_sage_self_only_mean(self):
        lay = identity_sage(np.random.default_rng(0))
        npt.assert_allclose(L.layer_forward(lay, [7.0], []), [7.0])

    def test_gin_self_weighted(self):
        rng = np.random.default_rng(0)
        lay = L.GinLayer(1, 1, rng)
        lay.params["W"][:] = [[1.0]]
        lay.params["b"][:] = 0.0
        lay.params["eps"][0] = 0.25
        npt.assert_allclose(L.layer_forward(lay, [4.0], []), [5.0])

    def test_gat_self_attention_fallback(self):
        rng = np.random.default_rng(0)
        lay = L.GatLayer(2, 2, rng, heads=1, combine="average")
        lay.params["W"][0] = np.eye(2)
        lay.params["b"][:] = 0.0
        npt.assert_allclose(L.layer_forward(lay, [1.5, -2.0], []), [1.5, -2.0],
                            atol=1e-12)


class TestGradientChecks:
    """Analytic gradients vs central finite differences (step 1e-5, rel 1e-4)."""

    @pytest.mark.parametrize("kind", ["sage", "gin", "gat-concat", "gat-average"])
    def test_layer_gradients(self, kind):
        rng = np.random.default_rng(42)
        p, m, d_in, d_out = 7, 4, 5, 6
        H = rng.standard_normal((p, d_in))
        self_pos, edge_dst, edge_src = random_context(rng, p, m)
        if kind == "sage":
            lay = L.SageLayer(d_in, d_out, rng)
        elif kind == "gin":
            lay = L.GinLayer(d_in, d_out, rng)
            lay.params["eps"][0] = 0.3
        elif kind == "gat-concat":
            lay = L.GatLayer(d_in, d_out, rng, heads=2, combine="concat")
        else:
            lay = L.GatLayer(d_in, d_out, rng, heads=3, combine="average")
        worst = fd_layer_check(lay, H, self_pos, edge_dst, edge_src, m, rng)
        assert worst < 1e-4, "%s worst rel err %.3e" % (kind, worst)

    def test_dense_gradients(self):
        rng = np.random.default_rng(3)
        lay = L.DenseLayer(5, 4, rng)
        H = rng.standard_normal((6, 5))
        out, cache = lay.forward(H)
        G = rng.standard_normal(out.shape)
        grads, d_in = lay.backward(cache, G)
        step = 1e-5
        for name, arr in lay.params.items():
            num = np.zeros_like(arr)
            flat, nf = arr.reshape(-1), num.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                lp = float((G * lay.forward(H)[0]).sum())
                flat[i] = orig - step
                lm = float((G * lay.forward(H)[0]).sum())
                flat[i] = orig
                nf[i] = (lp - lm) / (2 * step)
            assert rel_err(num, grads[name]) < 1e-4

    def test_cross_entropy_gradient(self):
        rng = np.random.default_rng(4)
        logits = rng.standard_normal((6, 4))
        y = rng.integers(0, 4, size=6)
        _, analytic = L.cross_entropy(logits, y)
        step = 1e-5
        num = np.zeros_like(logits)
        flat, nf = logits.reshape(-1), num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = L.cross_entropy(logits, y)[0]
            flat[i] = orig - step
            lm = L.cross_entropy(logits, y)[0]
            flat[i] = orig
            nf[i] = (lp - lm) / (2 * step)
        assert rel_err(num, analytic) < 1e-4


class TestAttentionNormalization:
    def test_alpha_sums_to_one_per_node_per_head(self):
        rng = np.random.default_rng(8)
        p, m = 9, 5
        H = rng.standard_normal((p, 3))
        self_pos, edge_dst, edge_src = random_context(rng, p, m)
        lay = L.GatLayer(3, 4, rng, heads=2, combine="concat")
        _, cache = lay.forward(H, self_pos, edge_dst, edge_src, m)
        for hc in cache["heads"]:
            sums = np.bincount(cache["edge_dst"], weights=hc["alpha"], minlength=m)
            npt.assert_allclose(sums, 1.0, atol=1e-12)


class TestSoftmaxHelpers:
    def test_softmax_rows_simplex(self):
        rng = np.random.default_rng(1)
        probs = L.softmax(rng.standard_normal((50, 7)) * 20)
        npt.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert (probs >= 0).all()

    def test_cross_entropy_value(self):
        logits = np.log(np.array([[0.7, 0.2, 0.1]]))
        loss, _ = L.cross_entropy(logits, np.array([0]))
        npt.assert_allclose(loss, -np.log(0.7), atol=1e-12)
