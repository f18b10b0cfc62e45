import numpy as np
import numpy.testing as npt
import pytest

import graphextract as gx
from graphextract.nn import layers as L
from graphextract.nn.matrixform import MatrixFormSpec, matrix_form_forward


def two_node_graph():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    H = np.array([[2.0], [1.0]])
    return A, H


class TestMatrixFormExamples:
    def test_sage_spec_two_nodes(self):
        A, H = two_node_graph()
        out = matrix_form_forward(MatrixFormSpec.for_sage(), H, A)
        npt.assert_allclose(out, [[3.0], [3.0]])

    def test_gin_spec_two_nodes(self):
        A, H = two_node_graph()
        out = matrix_form_forward(MatrixFormSpec.for_gin(0.0), H, A)
        npt.assert_allclose(out, [[3.0], [3.0]])

    def test_identity_case(self):
        A, H = two_node_graph()
        out = matrix_form_forward(MatrixFormSpec(phi=1.0, psi=0.0), H, A)
        npt.assert_allclose(out, H)

    def test_isolated_node_random_walk_self_only(self):
        A = np.zeros((2, 2))
        H = np.array([[5.0], [7.0]])
        out = matrix_form_forward(MatrixFormSpec.for_sage(), H, A)
        npt.assert_allclose(out, H)

    def test_asymmetric_rejected(self):
        A = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(ValueError, match="symmetric"):
            matrix_form_forward(MatrixFormSpec.for_gin(), np.ones((2, 1)), A)


def identity_layer(kind, width, eps=0.0):
    rng = np.random.default_rng(0)
    if kind == "sage":
        lay = L.SageLayer(width, width, rng)
    else:
        lay = L.GinLayer(width, width, rng)
        lay.params["eps"][0] = eps
    lay.params["W"][:] = np.eye(width)
    lay.params["b"][:] = 0.0
    return lay


def nodewise_over_graph(lay, H, A):
    out = np.zeros_like(H)
    for v in range(A.shape[0]):
        nbrs = np.nonzero(A[v])[0]
        out[v] = L.layer_forward(lay, H[v], [H[u] for u in nbrs])
    return out


class TestNodewiseMatrixEquivalence:
    """Full-neighborhood node-wise aggregation with identity transforms and
    no nonlinearity against the matrix-form oracle, within 1e-9."""

    def _random_graph(self, rng):
        n = int(rng.integers(4, 31))
        A = (rng.random((n, n)) < 0.25).astype(float)
        A = np.triu(A, 1)
        A = A + A.T
        H = rng.standard_normal((n, int(rng.integers(1, 5))))
        return A, H

    def test_gin_matches_eq8_form(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            A, H = self._random_graph(rng)
            eps = float(rng.uniform(-0.5, 0.5))
            lay = identity_layer("gin", H.shape[1], eps)
            expect = matrix_form_forward(MatrixFormSpec.for_gin(eps), H, A)
            npt.assert_allclose(nodewise_over_graph(lay, H, A), expect, atol=1e-9)

    def test_sage_matches_self_union_mean_form(self):
        # Mean over {self} union neighbors is (I+A)H with per-row eta deg+1;
        # the scalar-phi random-walk form cannot express it exactly.
        rng = np.random.default_rng(6)
        for _ in range(25):
            A, H = self._random_graph(rng)
            lay = identity_layer("sage", H.shape[1])
            expect = matrix_form_forward(MatrixFormSpec.for_self_union_mean(), H, A)
            npt.assert_allclose(nodewise_over_graph(lay, H, A), expect, atol=1e-9)

    def test_gat_single_neighbor_case(self):
        # With one neighbor the attention weight normalizes to 1, so the
        # layer reduces to the Xi (x) A form with Xi = all-ones.
        rng = np.random.default_rng(7)
        width = 3
        lay = L.GatLayer(width, width, rng, heads=1, combine="average")
        lay.params["W"][0] = np.eye(width)
        lay.params["b"][:] = 0.0
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        H = rng.standard_normal((2, width))
        expect = matrix_form_forward(
            MatrixFormSpec.for_gat(np.ones((2, 2))), H, A)
        npt.assert_allclose(nodewise_over_graph(lay, H, A), expect, atol=1e-9)


class TestSpecValidation:
    def test_unknown_normalization(self):
        with pytest.raises(ValueError, match="normalization"):
            MatrixFormSpec(phi=1.0, psi=1.0, normalization="spectral")

    def test_shape_checks(self):
        with pytest.raises(ValueError, match="square"):
            matrix_form_forward(MatrixFormSpec.for_gin(), np.ones((2, 1)),
                                np.ones((2, 3)))
        with pytest.raises(ValueError, match="rows"):
            matrix_form_forward(MatrixFormSpec.for_gin(), np.ones((3, 1)),
                                np.zeros((2, 2)))
