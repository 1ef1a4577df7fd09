"""Pure-numpy implementations of the softmax-regression hot kernels.

Used when the compiled extension is unavailable, or when
``FEDSIM_KERNELS=python`` forces it. Signatures mirror ``_ckernels.pyx``.
"""

from __future__ import annotations

import numpy as np


def _logits(W, b, X):
    return X @ W.T + b


def predict_proba(W, b, X, out):
    Z = _logits(W, b, X)
    Z -= Z.max(axis=1, keepdims=True)
    np.exp(Z, out=Z)
    Z /= Z.sum(axis=1, keepdims=True)
    out[...] = Z


def _batch_loss_grad(W, b, X, y, l2, gW, gb):
    n = X.shape[0]
    Z = _logits(W, b, X)
    m = Z.max(axis=1)
    Z -= m[:, None]
    E = np.exp(Z)
    s = E.sum(axis=1)
    rows = np.arange(n)
    loss = float(np.mean(np.log(s) - Z[rows, y]))
    if gW is not None:
        E /= s[:, None]
        E[rows, y] -= 1.0
        E /= n
        gW[...] = E.T @ X
        if l2:
            gW += l2 * W
        gb[...] = E.sum(axis=0)
    if l2:
        loss += 0.5 * l2 * float(np.sum(W * W))
    return loss


def loss_grad(W, b, X, y, l2, gW, gb):
    return _batch_loss_grad(W, b, X, y, l2, gW, gb)


def loss_only(W, b, X, y, l2):
    return _batch_loss_grad(W, b, X, y, l2, None, None)


def sgd(W, b, X, y, order, batch_size, lr, l2):
    """Mini-batch gradient descent in place over ``order``; returns step count.

    ``order`` concatenates one permutation of ``range(n)`` per epoch; batches
    never straddle an epoch boundary.
    """
    n = X.shape[0]
    gW = np.empty_like(W)
    gb = np.empty_like(b)
    steps = 0
    for start_epoch in range(0, order.shape[0], n):
        perm = order[start_epoch:start_epoch + n]
        for s in range(0, n, batch_size):
            idx = perm[s:s + batch_size]
            _batch_loss_grad(W, b, X[idx], y[idx], l2, gW, gb)
            W -= lr * gW
            b -= lr * gb
            steps += 1
    return steps
