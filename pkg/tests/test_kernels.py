import importlib

import numpy as np
import pytest

from fedsim import kernels

py = kernels.get_backend("python")
try:
    cy = kernels.get_backend("cython")
except ImportError:  # extension not built
    cy = None

needs_ext = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


def _problem(seed, n=40, d=6, k=5):
    r = np.random.default_rng(seed)
    return (r.normal(size=(k, d)), r.normal(size=k), r.normal(size=(n, d)),
            r.integers(0, k, n).astype(np.int64))


@needs_ext
@pytest.mark.parametrize("seed", range(5))
def test_loss_grad_parity(seed):
    W, b, X, y = _problem(seed)
    outs = []
    for K in (py, cy):
        gW, gb = np.empty_like(W), np.empty_like(b)
        val = K.loss_grad(W, b, X, y, 0.3, gW, gb)
        outs.append((val, gW, gb, K.loss_only(W, b, X, y, 0.3)))
    (l1, gW1, gb1, o1), (l2, gW2, gb2, o2) = outs
    assert l1 == pytest.approx(l2, rel=1e-13)
    assert o1 == pytest.approx(o2, rel=1e-13)
    np.testing.assert_allclose(gW1, gW2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(gb1, gb2, rtol=1e-12, atol=1e-14)


@needs_ext
@pytest.mark.parametrize("bs", [1, 3, 7, 100])
def test_sgd_parity(bs):
    W, b, X, y = _problem(3, n=23)
    order = np.concatenate([np.random.default_rng(i).permutation(23) for i in range(3)]).astype(np.int64)
    res = []
    for K in (py, cy):
        W2, b2 = W.copy(), b.copy()
        steps = K.sgd(W2, b2, X, y, order, bs, 0.05, 0.01)
        res.append((steps, W2, b2))
    assert res[0][0] == res[1][0] == 3 * -(-23 // bs)
    np.testing.assert_allclose(res[0][1], res[1][1], rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(res[0][2], res[1][2], rtol=1e-11, atol=1e-13)


@needs_ext
def test_predict_parity_extreme_logits():
    W, b, X, _ = _problem(9)
    X *= 300
    out = [np.empty((X.shape[0], W.shape[0])) for _ in range(2)]
    py.predict_proba(W, b, X, out[0])
    cy.predict_proba(W, b, X, out[1])
    np.testing.assert_allclose(out[0], out[1], rtol=1e-12, atol=1e-300)
    assert np.all(np.isfinite(out[1]))


def test_loss_stable_for_huge_margins():
    W = np.array([[1e4], [-1e4]])
    b = np.zeros(2)
    X = np.array([[1.0]])
    y = np.array([1], dtype=np.int64)
    for K in filter(None, (py, cy)):
        assert K.loss_only(W, b, X, y, 0.0) == pytest.approx(2e4)


def test_forced_python_backend(monkeypatch):
    monkeypatch.setenv("FEDSIM_KERNELS", "python")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("FEDSIM_KERNELS")
        importlib.reload(kernels)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
