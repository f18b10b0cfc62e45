import numpy as np
import numpy.testing as npt
import pytest

import graphextract as gx
from graphextract.graphs import Graph
from graphextract.metrics import accuracy, fidelity, pearson


class FixedPredictor:
    """Test double returning pre-set posterior rows for requested nodes."""

    def __init__(self, posteriors):
        self.posteriors = np.asarray(posteriors, dtype=np.float64)

    def predict_posteriors(self, graph, nodes):
        return self.posteriors[np.asarray(nodes)]


def onehot(labels, classes):
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def tiny_graph(labels, classes):
    labels = np.asarray(labels)
    return Graph(np.random.default_rng(0).standard_normal((len(labels), 3)),
                 [], labels, classes)


class TestAccuracy:
    def test_perfect(self):
        g = tiny_graph([0, 1, 1, 0], 2)
        assert accuracy(FixedPredictor(onehot(g.labels, 2)), g) == 1.0

    def test_hand_count(self):
        g = tiny_graph([0, 1, 1, 0], 2)
        preds = onehot([0, 1, 0, 0], 2)
        assert accuracy(FixedPredictor(preds), g) == 0.75

    def test_constant_predictor_balanced(self):
        g = tiny_graph(list(range(4)) * 25, 4)
        preds = np.tile(onehot([2], 4), (g.n, 1))
        assert accuracy(FixedPredictor(preds), g) == 0.25

    def test_empty_test_set(self):
        g = tiny_graph([-1, -1], 2)  # all labels unknown
        with pytest.raises(ValueError, match="empty"):
            accuracy(FixedPredictor(np.zeros((2, 2))), g)

    def test_brute_force_recount(self, sage_target, synth_parts):
        _, _, test = synth_parts
        acc = accuracy(sage_target, test)
        post = sage_target.predict_posteriors(test, test.nodes)
        hits = sum(1 for i in range(test.n)
                   if int(np.argmax(post[i])) == test.labels[i])
        npt.assert_allclose(acc, hits / test.n)


class TestFidelity:
    def test_same_model_is_one(self, sage_target, synth_parts):
        _, _, test = synth_parts
        assert fidelity(sage_target, sage_target, test) == 1.0

    def test_hand_agreement(self):
        g = tiny_graph([0, 0, 0, 0], 2)
        target = FixedPredictor(onehot([0, 1, 1, 0], 2))
        surr = FixedPredictor(onehot([0, 1, 0, 0], 2))
        assert fidelity(surr, target, g) == 0.75

    def test_two_constant_predictors_agree(self):
        g = tiny_graph([0, 1, 0], 3)
        a = FixedPredictor(np.tile(onehot([2], 3), (3, 1)))
        b = FixedPredictor(np.tile(onehot([2], 3), (3, 1)))
        assert fidelity(a, b, g) == 1.0

    def test_tie_break_lowest_class_both_sides(self):
        g = tiny_graph([0, 0], 2)
        flat = np.full((2, 2), 0.5)
        assert fidelity(FixedPredictor(flat), FixedPredictor(flat), g) == 1.0

    def test_brute_force_recount(self, sage_target, gin_target, synth_parts):
        _, _, test = synth_parts
        fid = fidelity(gin_target, sage_target, test)
        a = gin_target.predict_posteriors(test, test.nodes).argmax(axis=1)
        b = sage_target.predict_posteriors(test, test.nodes).argmax(axis=1)
        agree = sum(1 for i in range(test.n) if a[i] == b[i])
        npt.assert_allclose(fid, agree / test.n)


class TestPearson:
    def test_identity(self):
        assert pearson([1.0, 2.0, 5.0], [1.0, 2.0, 5.0]) == pytest.approx(1.0)

    def test_negation(self):
        assert pearson([1.0, 2.0, 5.0], [-1.0, -2.0, -5.0]) == pytest.approx(-1.0)

    def test_hand_case(self):
        # dx=(-1,0,1), dy=(-4/3,-1/3,5/3): r = 3 / (sqrt(2) * sqrt(42)/3)
        expect = 3.0 / (np.sqrt(2.0) * np.sqrt(42.0) / 3.0)
        assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(expect, abs=1e-12)
        assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.982, abs=1e-3)

    def test_zero_variance(self):
        with pytest.raises(ValueError, match="variance"):
            pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])

    def test_length_checks(self):
        with pytest.raises(ValueError, match="equal-length"):
            pearson([1.0, 2.0], [1.0])
        with pytest.raises(ValueError, match="two points"):
            pearson([1.0], [1.0])

    def test_against_numpy_corrcoef(self):
        rng = np.random.default_rng(0)
        xs = rng.standard_normal(50)
        ys = 0.3 * xs + rng.standard_normal(50)
        npt.assert_allclose(pearson(xs, ys), np.corrcoef(xs, ys)[0, 1], atol=1e-12)
