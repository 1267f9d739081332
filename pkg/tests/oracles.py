"""Independent reference computations used by the tests.

Deliberately naive: loops, itertools, and finite differences, sharing no
code with the package routines they check.
"""

import itertools
import math

import numpy as np


def cross_entropy(W, b, offset, X, y):
    """Mean negative log-likelihood, computed one example at a time."""
    total = 0.0
    for x, label in zip(X, y):
        scores = [sum(x[i] * W[i][k] for i in range(len(x))) + b[k] + offset[k] for k in range(len(b))]
        top = max(scores)
        log_z = top + math.log(sum(math.exp(s - top) for s in scores))
        total += log_z - scores[label]
    return total / len(y)


def finite_difference_gradient(W, b, offset, X, y, h=1e-5):
    W = np.array(W, dtype=float)
    b = np.array(b, dtype=float)
    dW = np.zeros_like(W)
    db = np.zeros_like(b)
    for idx in np.ndindex(W.shape):
        up, down = W.copy(), W.copy()
        up[idx] += h
        down[idx] -= h
        dW[idx] = (cross_entropy(up, b, offset, X, y) - cross_entropy(down, b, offset, X, y)) / (2 * h)
    for k in range(len(b)):
        up, down = b.copy(), b.copy()
        up[k] += h
        down[k] -= h
        db[k] = (cross_entropy(W, up, offset, X, y) - cross_entropy(W, down, offset, X, y)) / (2 * h)
    return dW, db


def relative_error(analytic, numeric):
    """Norm-wise relative error ``|a - n| / max(|a| + |n|, tiny)``."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-300))


def midranks(values):
    """Average ranks (1-based) with ties sharing their mean rank."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def wilcoxon_brute_force(a, b):
    """Two-sided exact signed-rank p-value by listing every sign pattern."""
    d = [x - y for x, y in zip(a, b) if x != y]
    n = len(d)
    if n == 0:
        return 0.0, 1.0
    ranks = midranks([abs(v) for v in d])
    w_plus = sum(r for r, v in zip(ranks, d) if v > 0)
    w_minus = sum(r for r, v in zip(ranks, d) if v < 0)
    w = min(w_plus, w_minus)
    total = sum(ranks)
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        s = sum(r for r, keep in zip(ranks, signs) if keep)
        if min(s, total - s) <= w + 1e-9:
            hits += 1
    return w, hits / 2**n
