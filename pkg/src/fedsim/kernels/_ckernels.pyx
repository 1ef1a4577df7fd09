# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled softmax-regression kernels.

All loops release the GIL so per-client training can run on a thread pool.
"""

from libc.math cimport exp, log
from libc.stdlib cimport malloc, free

import numpy as np


cdef void _row_logits(const double[:, ::1] W, const double[::1] b,
                      const double[:, ::1] X, Py_ssize_t i, double* z) noexcept nogil:
    cdef Py_ssize_t k = W.shape[0], d = W.shape[1], c, j
    cdef double acc
    for c in range(k):
        acc = b[c]
        for j in range(d):
            acc = acc + W[c, j] * X[i, j]
        z[c] = acc


cdef double _accumulate(const double[:, ::1] W, const double[::1] b,
                        const double[:, ::1] X, const long long[::1] y,
                        const long long* idx, Py_ssize_t m,
                        double* gW, double* gb, double* z) noexcept nogil:
    """Sum of per-sample cross-entropy over ``idx``; adds unnormalised
    gradients into gW/gb when they are non-NULL."""
    cdef Py_ssize_t k = W.shape[0], d = W.shape[1], c, j, t, i
    cdef double mx, s, zy, total = 0.0, p
    cdef long long yi
    for t in range(m):
        i = idx[t] if idx != NULL else t
        yi = y[i]
        _row_logits(W, b, X, i, z)
        mx = z[0]
        for c in range(1, k):
            if z[c] > mx:
                mx = z[c]
        zy = z[yi] - mx
        s = 0.0
        for c in range(k):
            z[c] = exp(z[c] - mx)
            s = s + z[c]
        total = total + log(s) - zy
        if gW != NULL:
            for c in range(k):
                p = z[c] / s
                if c == yi:
                    p = p - 1.0
                gb[c] = gb[c] + p
                for j in range(d):
                    gW[c * d + j] = gW[c * d + j] + p * X[i, j]
    return total


cdef double _sq_norm(const double[:, ::1] W) noexcept nogil:
    cdef Py_ssize_t c, j
    cdef double acc = 0.0
    for c in range(W.shape[0]):
        for j in range(W.shape[1]):
            acc = acc + W[c, j] * W[c, j]
    return acc


def predict_proba(const double[:, ::1] W, const double[::1] b,
                  const double[:, ::1] X, double[:, ::1] out):
    cdef Py_ssize_t n = X.shape[0], k = W.shape[0], i, c
    cdef double mx, s
    with nogil:
        for i in range(n):
            _row_logits(W, b, X, i, &out[i, 0])
            mx = out[i, 0]
            for c in range(1, k):
                if out[i, c] > mx:
                    mx = out[i, c]
            s = 0.0
            for c in range(k):
                out[i, c] = exp(out[i, c] - mx)
                s = s + out[i, c]
            for c in range(k):
                out[i, c] = out[i, c] / s


def loss_only(const double[:, ::1] W, const double[::1] b,
              const double[:, ::1] X, const long long[::1] y, double l2):
    cdef Py_ssize_t n = X.shape[0], k = W.shape[0]
    cdef double total
    cdef double* z = <double*> malloc(k * sizeof(double))
    if z == NULL:
        raise MemoryError()
    try:
        with nogil:
            total = _accumulate(W, b, X, y, NULL, n, NULL, NULL, z) / n
            if l2 != 0.0:
                total = total + 0.5 * l2 * _sq_norm(W)
    finally:
        free(z)
    return total


def loss_grad(const double[:, ::1] W, const double[::1] b,
              const double[:, ::1] X, const long long[::1] y, double l2,
              double[:, ::1] gW, double[::1] gb):
    cdef Py_ssize_t n = X.shape[0], k = W.shape[0], d = W.shape[1], c, j
    cdef double total
    cdef double* z = <double*> malloc(k * sizeof(double))
    if z == NULL:
        raise MemoryError()
    try:
        with nogil:
            for c in range(k):
                gb[c] = 0.0
                for j in range(d):
                    gW[c, j] = 0.0
            total = _accumulate(W, b, X, y, NULL, n, &gW[0, 0], &gb[0], z) / n
            for c in range(k):
                gb[c] = gb[c] / n
                for j in range(d):
                    gW[c, j] = gW[c, j] / n + l2 * W[c, j]
            if l2 != 0.0:
                total = total + 0.5 * l2 * _sq_norm(W)
    finally:
        free(z)
    return total


def sgd(double[:, ::1] W, double[::1] b, const double[:, ::1] X,
        const long long[::1] y, const long long[::1] order,
        Py_ssize_t batch_size, double lr, double l2):
    """Mini-batch gradient descent in place over ``order``; returns step count."""
    cdef Py_ssize_t n = X.shape[0], k = W.shape[0], d = W.shape[1]
    cdef Py_ssize_t total_len = order.shape[0], e0, s, m, c, j
    cdef long steps = 0
    cdef double* z = <double*> malloc(k * sizeof(double))
    cdef double* gW = <double*> malloc(k * d * sizeof(double))
    cdef double* gb = <double*> malloc(k * sizeof(double))
    if z == NULL or gW == NULL or gb == NULL:
        free(z); free(gW); free(gb)
        raise MemoryError()
    try:
        with nogil:
            e0 = 0
            while e0 < total_len:
                s = 0
                while s < n:
                    m = batch_size if s + batch_size <= n else n - s
                    for c in range(k):
                        gb[c] = 0.0
                        for j in range(d):
                            gW[c * d + j] = 0.0
                    _accumulate(W, b, X, y, &order[e0 + s], m, gW, gb, z)
                    for c in range(k):
                        for j in range(d):
                            W[c, j] = W[c, j] - lr * (gW[c * d + j] / m + l2 * W[c, j])
                        b[c] = b[c] - lr * (gb[c] / m)
                    steps += 1
                    s += batch_size
                e0 += n
    finally:
        free(z); free(gW); free(gb)
    return steps
