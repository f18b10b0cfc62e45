import numpy as np
import numpy.testing as npt
import pytest

import graphextract as gx
from graphextract.nn.models import build_model, target_config
from graphextract.nn.train import Adam, TrainConfig, train_model


class TestAdam:
    def test_matches_reference_formula(self):
        # one parameter, constant gradient: first step moves by exactly lr
        p = {"w": np.array([1.0])}
        opt = Adam(lr=0.1)
        opt.step(p, {"w": np.array([2.0])})
        npt.assert_allclose(p["w"], [1.0 - 0.1 * 2.0 / (2.0 + 1e-8)], atol=1e-12)

    def test_state_per_parameter(self):
        p = {"a": np.zeros(2), "b": np.zeros(3)}
        opt = Adam()
        opt.step(p, {"a": np.ones(2), "b": np.ones(3)})
        assert set(opt.m) == {"a", "b"}


class TestTrainModel:
    def test_zero_epochs_returns_initialized_unchanged(self, synth_parts):
        train, _, _ = synth_parts
        model = build_model(target_config("gin", train.d, train.class_count, 16), seed=2)
        before = model.snapshot()
        out = train_model(model, train, TrainConfig(epochs=0, seed=1))
        for path, arr in out.param_items():
            npt.assert_array_equal(arr, before[path])
        # the input model is never mutated either
        for path, arr in model.param_items():
            npt.assert_array_equal(arr, before[path])

    def test_deterministic_per_seed(self, synth_parts):
        train, _, _ = synth_parts
        model = build_model(target_config("sage", train.d, train.class_count, 16), seed=2)
        a = train_model(model, train, TrainConfig(epochs=4, batch_size=32, seed=3))
        b = train_model(model, train, TrainConfig(epochs=4, batch_size=32, seed=3))
        for (pa, va), (pb, vb) in zip(a.param_items(), b.param_items()):
            npt.assert_array_equal(va, vb)

    def test_separable_sbm_reaches_high_train_accuracy(self):
        g = gx.synth_graph(300, 3, 0.1, 0.01, 12, seed=6)
        model = build_model(target_config("sage", g.d, g.class_count, 32), seed=4)
        trained = train_model(model, g, TrainConfig(epochs=50, batch_size=64, seed=7))
        post = trained.forward(g, g.nodes, head="posterior")
        acc = (post.argmax(axis=1) == g.labels).mean()
        assert acc >= 0.95

    def test_best_val_curve_nondecreasing(self, synth_parts):
        train, _, _ = synth_parts
        model = build_model(target_config("gin", train.d, train.class_count, 16), seed=2)
        trained = train_model(model, train, TrainConfig(epochs=8, batch_size=32, seed=3))
        curve = trained.metadata["val_curve"]
        assert len(curve) == 8
        assert all(b >= a for a, b in zip(curve, curve[1:]))
        assert trained.metadata["best_val_acc"] == curve[-1]

    def test_no_labeled_nodes(self):
        g = gx.Graph(np.random.default_rng(0).standard_normal((20, 4)),
                     [(0, 1)], None, 3)
        model = build_model(target_config("gin", 4, 3, 8), seed=0)
        with pytest.raises(ValueError, match="labeled"):
            train_model(model, g, TrainConfig(epochs=1))

    def test_bad_batch_size(self, synth_parts):
        train, _, _ = synth_parts
        model = build_model(target_config("gin", train.d, train.class_count, 16), seed=2)
        with pytest.raises(ValueError, match="batch"):
            train_model(model, train, TrainConfig(epochs=1, batch_size=0))

    def test_bad_val_fraction(self, synth_parts):
        train, _, _ = synth_parts
        model = build_model(target_config("gin", train.d, train.class_count, 16), seed=2)
        with pytest.raises(ValueError, match="val_fraction"):
            train_model(model, train, TrainConfig(epochs=1, val_fraction=1.5))

    @pytest.mark.parametrize("kind", ["sage", "gat", "gin"])
    def test_all_architectures_learn(self, kind):
        g = gx.synth_graph(400, 3, 0.08, 0.01, 12, seed=3)
        tr, q, te = gx.split_inductive(g, gx.SplitSpec(0.4, 0.2, 0.4, seed=1))
        model = build_model(target_config(kind, g.d, g.class_count, 32), seed=5)
        trained = train_model(model, tr, TrainConfig(epochs=30, batch_size=64, seed=9))
        post = trained.forward(te, te.nodes, head="posterior")
        acc = (post.argmax(axis=1) == te.labels).mean()
        assert acc >= 0.8, "%s test accuracy %.3f" % (kind, acc)
