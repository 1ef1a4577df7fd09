import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedsim.errors import EmptyShard, InvalidShape, ShapeMismatch, ShrinkNotAllowed
from fedsim.model import (
    DataShard,
    ModelParams,
    TrainConfig,
    expand_classes,
    gradient,
    init_params,
    loss,
    predict,
    predict_batch,
    train_local,
)

from conftest import random_params, random_shard


def hand_cross_entropy(W, b, X, y):
    """Plain-Python mean -log softmax(Wx+b)[y]; no numpy."""
    total = 0.0
    for xi, yi in zip(X, y):
        logits = [sum(wj * xj for wj, xj in zip(row, xi)) + bc for row, bc in zip(W, b)]
        z = sum(math.exp(v) for v in logits)
        total += -math.log(math.exp(logits[yi]) / z)
    return total / len(y)


def finite_difference(params, shard, l2=0.0, h=1e-6):
    flat = params.flatten()
    out = np.empty_like(flat)
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        fp = loss(ModelParams.from_flat(up, params.num_features, params.num_classes), shard, l2)
        fm = loss(ModelParams.from_flat(dn, params.num_features, params.num_classes), shard, l2)
        out[i] = (fp - fm) / (2 * h)
    return out


def test_init_zeros_shape():
    p = init_params(4, 3, "zeros")
    assert p.size == 15
    assert np.all(p.flatten() == 0.0)


def test_init_gaussian_reproducible():
    a = init_params(4, 3, "gaussian", scale=0.1, seed=7)
    b = init_params(4, 3, "gaussian", scale=0.1, seed=7)
    assert a == b
    assert np.any(a.flatten() != 0)


@pytest.mark.parametrize("d,k", [(0, 3), (4, 1), (-1, 5)])
def test_init_rejects_bad_shape(d, k):
    with pytest.raises(InvalidShape):
        init_params(d, k, "zeros")


def test_predict_zero_weights_uniform():
    p = init_params(5, 4)
    np.testing.assert_array_equal(predict(p, np.arange(5.0)), np.full(4, 0.25))


def test_predict_shift_invariance():
    rng = np.random.default_rng(0)
    p = random_params(rng, 3, 4)
    shifted = ModelParams(p.weights, p.bias + 17.5)
    x = rng.normal(size=3)
    np.testing.assert_allclose(predict(p, x), predict(shifted, x), rtol=0, atol=1e-15)


def test_predict_two_class_hand_value():
    p = ModelParams(np.zeros((2, 1)), np.array([0.0, math.log(3.0)]))
    np.testing.assert_allclose(predict(p, [2.0]), [0.25, 0.75], rtol=0, atol=1e-15)


def test_predict_dimension_mismatch():
    with pytest.raises(ShapeMismatch):
        predict(init_params(3, 2), np.zeros(4))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6), st.integers(2, 6), st.floats(-50, 50), st.integers(0, 2**31))
def test_predict_is_distribution(d, k, scale, seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng, d, k, abs(scale) + 1e-3)
    probs = predict(p, rng.normal(0, 10, d))
    assert abs(probs.sum() - 1.0) <= 1e-12
    assert np.all(probs > 0) and np.all(probs <= 1)


def test_loss_zero_model_is_log_k():
    rng = np.random.default_rng(1)
    shard = random_shard(rng, 10, 3, 5)
    assert loss(init_params(3, 5), shard) == pytest.approx(math.log(5), abs=1e-14)


def test_loss_perfect_fit_is_zero():
    # huge margins make the true class probability exactly 1.0 in float64
    W = np.array([[1000.0], [-1000.0]])
    shard = DataShard([[1.0], [2.0]], [0, 0])
    assert loss(ModelParams(W, np.zeros(2)), shard) == 0.0


def test_loss_matches_hand_summed_cross_entropy():
    p = init_params(2, 3, "gaussian", scale=0.7, seed=3)
    X = [[0.5, -1.0], [1.5, 0.25], [-0.75, 2.0]]
    y = [2, 0, 1]
    expected = hand_cross_entropy(p.weights.tolist(), p.bias.tolist(), X, y)
    assert loss(p, DataShard(X, y)) == pytest.approx(expected, rel=1e-13)


def test_loss_empty_shard():
    with pytest.raises(EmptyShard):
        loss(init_params(2, 2), DataShard(np.empty((0, 2)), []))


def test_loss_row_permutation_invariant(rng):
    p = random_params(rng, 4, 3)
    shard = random_shard(rng, 25, 4, 3)
    perm = rng.permutation(25)
    assert loss(p, shard) == pytest.approx(loss(p, shard.subset(perm)), rel=1e-14)


def test_gradient_zero_at_optimum():
    W = np.array([[800.0], [-800.0]])
    shard = DataShard([[1.0], [3.0]], [0, 0])
    np.testing.assert_array_equal(gradient(ModelParams(W, np.zeros(2)), shard), np.zeros(4))


def test_gradient_regulariser_only():
    W = np.array([[800.0, 3.0], [-800.0, -2.0]])
    shard = DataShard([[1.0, 0.0], [3.0, 0.0]], [0, 0])
    g = gradient(ModelParams(W, np.zeros(2)), shard, l2_penalty=0.5)
    np.testing.assert_allclose(g[:4], 0.5 * W.ravel(), rtol=1e-15)
    np.testing.assert_array_equal(g[4:], 0.0)


def test_gradient_flatten_order():
    # bias gradient for a zero model on one sample of class 0 is (1/k - 1, 1/k, ...)
    shard = DataShard([[2.0, 0.0]], [0])
    g = gradient(init_params(2, 3), shard)
    np.testing.assert_allclose(g[-3:], [1 / 3 - 1, 1 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(g[0:2], [2 * (1 / 3 - 1), 0.0], atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(2, 5), st.integers(1, 30), st.integers(0, 2**31),
       st.sampled_from([0.0, 0.1]))
def test_gradient_matches_finite_differences(d, k, n, seed, l2):
    rng = np.random.default_rng(seed)
    p = random_params(rng, d, k)
    shard = random_shard(rng, n, d, k)
    g = gradient(p, shard, l2)
    fd = finite_difference(p, shard, l2)
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-8)


def test_train_zero_lr_is_identity(rng):
    p = random_params(rng, 3, 3)
    shard = random_shard(rng, 12, 3, 3)
    out, stats = train_local(p, shard, TrainConfig(learning_rate=0.0, epochs=3, batch_size=4))
    assert out == p
    assert stats.loss_after == stats.loss_before


def test_train_zero_epochs_is_identity(rng):
    p = random_params(rng, 3, 3)
    shard = random_shard(rng, 12, 3, 3)
    out, stats = train_local(p, shard, TrainConfig(learning_rate=0.5, epochs=0))
    assert out == p
    assert stats.compute_units == 0 and stats.grad_steps == 0


def test_train_full_batch_one_step_matches_analytic_step():
    rng = np.random.default_rng(4)
    X = np.vstack([rng.normal(-2, 0.5, (10, 2)), rng.normal(2, 0.5, (10, 2))])
    y = np.array([0] * 10 + [1] * 10)
    shard = DataShard(X, y)
    p = init_params(2, 2)
    out, stats = train_local(p, shard, TrainConfig(learning_rate=0.1, epochs=1, batch_size=64))
    manual = ModelParams.from_flat(p.flatten() - 0.1 * gradient(p, shard), 2, 2)
    np.testing.assert_allclose(out.flatten(), manual.flatten(), rtol=0, atol=1e-14)
    assert stats.loss_after < stats.loss_before
    assert stats.loss_after == pytest.approx(loss(manual, shard), rel=1e-12)
    assert stats.grad_steps == 1 and stats.compute_units == 64


def test_train_compute_units_count(rng):
    shard = random_shard(rng, 10, 2, 2)
    _, stats = train_local(init_params(2, 2), shard, TrainConfig(learning_rate=0.1, epochs=3, batch_size=4))
    assert stats.grad_steps == 9  # ceil(10 / 4) per epoch
    assert stats.compute_units == 36


def test_train_deterministic(rng):
    p = random_params(rng, 4, 3, 0.1)
    shard = random_shard(rng, 30, 4, 3)
    cfg = TrainConfig(learning_rate=0.2, epochs=4, batch_size=5, l2_penalty=0.01, rng_seed=99)
    a = train_local(p, shard, cfg)
    b = train_local(p, shard, cfg)
    assert a[0] == b[0] and a[1] == b[1]


def test_train_empty_shard():
    with pytest.raises(EmptyShard):
        train_local(init_params(2, 2), DataShard(np.empty((0, 2)), []), TrainConfig())


def test_expand_identity():
    p = init_params(3, 4, "gaussian", scale=1.0, seed=2)
    assert expand_classes(p, 4) is p


def test_expand_zero_model_uniform():
    p = expand_classes(init_params(3, 2), 3)
    np.testing.assert_allclose(predict(p, [1.0, -2.0, 5.0]), [1 / 3] * 3, atol=1e-15)


def test_expand_preserves_rows_and_ratios(rng):
    p = random_params(rng, 3, 2)
    q = expand_classes(p, 3)
    np.testing.assert_array_equal(q.weights[:2], p.weights)
    np.testing.assert_array_equal(q.bias[:2], p.bias)
    np.testing.assert_array_equal(q.weights[2], 0.0)
    assert q.bias[2] == 0.0
    for _ in range(20):
        x = rng.normal(size=3)
        a, b = predict(p, x), predict(q, x)
        assert a[0] / a[1] == pytest.approx(b[0] / b[1], rel=1e-12)


def test_expand_rejects_shrink():
    with pytest.raises(ShrinkNotAllowed):
        expand_classes(init_params(2, 4), 3)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(2, 5), st.integers(1, 4), st.integers(0, 2**31))
def test_expand_preserves_confident_argmax(d, k, extra, seed):
    rng = np.random.default_rng(seed)
    p = random_params(rng, d, k, 2.0)
    q = expand_classes(p, k + extra)
    for x in rng.normal(0, 2, (10, d)):
        probs = predict(p, x)
        if probs.max() > 1 / (k + extra):
            assert int(np.argmax(predict(q, x)[:k])) == int(np.argmax(probs))


def test_params_are_immutable():
    p = init_params(2, 2)
    with pytest.raises(ValueError):
        p.weights[0, 0] = 1.0


def test_params_reject_non_finite():
    with pytest.raises(ValueError):
        ModelParams(np.array([[np.nan], [0.0]]), np.zeros(2))


def test_predict_batch_rows_sum_to_one(rng):
    p = random_params(rng, 4, 6, 3.0)
    P = predict_batch(p, rng.normal(0, 5, (50, 4)))
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
