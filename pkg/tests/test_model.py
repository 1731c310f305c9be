import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geotransfer.losses import LossWeights, total_objective
from geotransfer.model import (
    AdamState,
    adam_step,
    backward,
    classifier_logits,
    forward_classifier,
    forward_features,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from geotransfer.spectral import ContractError


def model_loss(model, X, ys, yt, w, stage):
    Z, cache = forward_features(model.projector, X)
    br = total_objective(Z, classifier_logits(model.classifier, Z), ys, yt, w, stage=stage)
    return br, cache


@pytest.mark.parametrize("stage", ["warmup", "get"])
@pytest.mark.parametrize("seed", range(50))
def test_backprop_matches_finite_differences(seed, stage):
    rng = np.random.default_rng(seed)
    model = init_model(5, 3, hidden=(6,), feature_dim=3, seed=seed)
    X = rng.standard_normal((5, 12))
    ys = np.arange(6) % 3
    yt = rng.integers(-1, 3, 6)
    w = LossWeights(0.5, 1.0, 1.0)
    br, cache = model_loss(model, X, ys, yt, w, stage)
    grads = backward(model, cache, br.grad_features, br.grad_logits)
    params = model.params()
    h = 1e-6
    for name, p in params.items():
        fd = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            plus = {k: v.copy() for k, v in params.items()}
            minus = {k: v.copy() for k, v in params.items()}
            plus[name][idx] += h
            minus[name][idx] -= h
            fp = model_loss(model.with_params(plus), X, ys, yt, w, stage)[0].total
            fm = model_loss(model.with_params(minus), X, ys, yt, w, stage)[0].total
            fd[idx] = (fp - fm) / (2 * h)
        err = np.linalg.norm(grads[name] - fd) / max(np.linalg.norm(fd), np.linalg.norm(grads[name]), 1e-12)
        assert err < 1e-4, name


@pytest.mark.parametrize("act,out_act,normalize", [
    ("tanh", "linear", False), ("relu", "tanh", True), ("linear", "relu", True),
])
def test_backprop_other_activations(act, out_act, normalize):
    rng = np.random.default_rng(5)
    model = init_model(4, 2, hidden=(5, 4), feature_dim=3, activation=act,
                       normalize=normalize, seed=2, output_activation=out_act)
    X = rng.standard_normal((4, 6))
    Z, cache = forward_features(model.projector, X)
    gZ = rng.standard_normal(Z.shape)
    gl = rng.standard_normal((2, 6))

    def f(m):
        Zm, _ = forward_features(m.projector, X)
        return float(np.sum(gZ * Zm) + np.sum(gl * classifier_logits(m.classifier, Zm)))

    grads = backward(model, cache, gZ, gl)
    params = model.params()
    for name in params:
        p = params[name]
        idx = tuple(rng.integers(0, s) for s in p.shape)
        plus = {k: v.copy() for k, v in params.items()}
        minus = {k: v.copy() for k, v in params.items()}
        plus[name][idx] += 1e-6
        minus[name][idx] -= 1e-6
        fd = (f(model.with_params(plus)) - f(model.with_params(minus))) / 2e-6
        assert grads[name][idx] == pytest.approx(fd, rel=1e-4, abs=1e-7)


def test_normalized_features_have_unit_columns():
    model = init_model(10, 3, seed=0)
    Z, _ = forward_features(model.projector, np.random.default_rng(0).standard_normal((10, 20)))
    np.testing.assert_allclose(np.linalg.norm(Z, axis=0), 1.0, atol=1e-12)


def test_zero_feature_column_stays_zero():
    model = init_model(2, 2, hidden=(3,), seed=0, activation="relu", output_activation="relu")
    for W in model.projector.weights:
        W[:] = np.abs(W)
    Z, cache = forward_features(model.projector, -np.ones((2, 1)))
    assert not Z.any()
    grads = backward(model, cache, np.ones_like(Z), np.zeros((2, 1)))
    assert all(np.isfinite(g).all() for g in grads.values())


def test_shape_errors():
    model = init_model(4, 3, seed=0)
    with pytest.raises(ContractError):
        forward_features(model.projector, np.zeros((5, 2)))
    with pytest.raises(ContractError):
        classifier_logits(model.classifier, np.zeros((2, 2)))
    with pytest.raises(ContractError):
        init_model(4, 3, activation="swish")


def test_softmax_columns_sum_to_one():
    model = init_model(4, 3, seed=1)
    P = forward_classifier(model.classifier, np.random.default_rng(1).standard_normal((3, 7)) * 50)
    np.testing.assert_allclose(P.sum(axis=0), 1.0)


def test_glorot_init_is_seeded_and_bounded():
    a, b = init_model(10, 3, seed=4), init_model(10, 3, seed=4)
    for k, v in a.params().items():
        np.testing.assert_array_equal(v, b.params()[k])
    W0 = a.projector.weights[0]
    assert np.abs(W0).max() <= np.sqrt(6 / (10 + 64))
    assert not a.projector.biases[0].any()


def test_adam_first_step_moves_by_lr():
    # bias correction makes the first update exactly lr * sign(g) (up to eps)
    p = {"w": np.array([1.0, -2.0, 3.0])}
    g = {"w": np.array([0.5, -4.0, 1e-3])}
    st_ = AdamState(lr=0.1, weight_decay=0.0)
    new, st_ = adam_step(st_, p, g)
    np.testing.assert_allclose(new["w"] - p["w"], -0.1 * np.sign(g["w"]), rtol=1e-4)
    assert st_.step == 1


def test_adam_weight_decay_is_coupled():
    p = {"w": np.array([2.0])}
    new, _ = adam_step(AdamState(lr=0.1, weight_decay=0.5), p, {"w": np.array([0.0])})
    assert new["w"][0] == pytest.approx(1.9, abs=1e-6)


def test_adam_minimizes_quadratic():
    p = {"w": np.array([3.0, -1.0])}
    st_ = AdamState(lr=0.05, weight_decay=0.0)
    for _ in range(800):
        p, st_ = adam_step(st_, p, {"w": 2 * p["w"]})
    assert np.abs(p["w"]).max() < 1e-2


def test_checkpoint_round_trip(tmp_path):
    model = init_model(6, 4, hidden=(8, 5), feature_dim=2, seed=9, activation="relu", normalize=False)
    path = tmp_path / "m.json"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert back.projector.sizes == model.projector.sizes
    assert back.projector.activation == "relu" and back.projector.normalize is False
    for k, v in model.params().items():
        np.testing.assert_array_equal(back.params()[k], v)


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.json"
    path.write_text(json.dumps({"format": "other"}))
    with pytest.raises(ContractError):
        load_checkpoint(path)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(2, 5), st.integers(1, 4), st.integers(0, 2**31))
def test_forward_shapes(D, k, d, seed):
    model = init_model(D, k, hidden=(4,), feature_dim=d, seed=seed % 1000)
    X = np.random.default_rng(seed).standard_normal((D, 3))
    Z, _ = forward_features(model.projector, X)
    assert Z.shape == (d, 3)
    assert forward_classifier(model.classifier, Z).shape == (k, 3)


def test_zero_upstream_gives_zero_gradients():
    model = init_model(4, 3, seed=0)
    X = np.random.default_rng(0).standard_normal((4, 5))
    Z, cache = forward_features(model.projector, X)
    grads = backward(model, cache, np.zeros_like(Z), np.zeros((3, 5)))
    assert all(not g.any() for g in grads.values())


@pytest.mark.parametrize("seed", range(10))
def test_cross_entropy_backprop_tight(seed):
    from geotransfer.losses import softmax, source_cross_entropy

    rng = np.random.default_rng(seed)
    model = init_model(4, 3, hidden=(5,), seed=seed)
    X = rng.standard_normal((4, 6))
    y = rng.integers(0, 3, 6)

    def loss(params):
        m = model.with_params(params)
        Z, cache = forward_features(m.projector, X)
        v, g = source_cross_entropy(softmax(classifier_logits(m.classifier, Z)), y)
        return v, g, Z, cache

    params = model.params()
    _, gl, Z, cache = loss(params)
    grads = backward(model, cache, np.zeros_like(Z), gl)
    for name, p in params.items():
        fd = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            a, b = p.copy(), p.copy()
            a[idx] += 1e-6
            b[idx] -= 1e-6
            fd[idx] = (loss({**params, name: a})[0] - loss({**params, name: b})[0]) / 2e-6
        err = np.linalg.norm(grads[name] - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < 1e-5, name


def test_adam_zero_gradient_no_decay_is_identity():
    p = {"w": np.array([1.0, 2.0])}
    new, _ = adam_step(AdamState(weight_decay=0.0), p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(new["w"], p["w"])


def test_adam_constant_gradient_step_bound():
    p = {"w": np.array([0.5, -0.5, 2.0])}
    st_ = AdamState(lr=0.01, weight_decay=0.0)
    g = {"w": np.array([3.0, -0.2, 1e-4])}
    for _ in range(50):
        new, st_ = adam_step(st_, p, g)
        assert np.all(np.abs(new["w"] - p["w"]) <= st_.lr * (1 + 1e-8))
        p = new


def test_adam_steps_are_reproducible():
    def run():
        model = init_model(3, 2, seed=7)
        st_ = AdamState(lr=0.01)
        params = model.params()
        rng = np.random.default_rng(0)
        for _ in range(10):
            grads = {k: rng.standard_normal(v.shape) for k, v in params.items()}
            params, st_ = adam_step(st_, params, grads)
        return params

    a, b = run(), run()
    for k in a:
        assert a[k].tobytes() == b[k].tobytes()
