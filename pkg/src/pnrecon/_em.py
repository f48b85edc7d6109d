"""Compiled EM inner loop. Sums run in fixed index order, so results are reproducible."""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _forward(ht, p, q):
    # level-major over the transposed kernel: each q[i] still sums n = 0, 1, ...
    # in order, but the inner loop runs over independent bins and vectorises
    d, m = ht.shape
    for i in range(m):
        q[i] = 0.0
    for n in range(d):
        pn = p[n]
        for i in range(m):
            q[i] += ht[n, i] * pn


@njit(cache=True, nogil=True)
def _loglik(f, q, r, p):
    acc = 0.0
    for i in range(f.size):
        acc += f[i] * math.log(q[i])
    norm = 0.0
    for n in range(p.size):
        norm += r[n] * p[n]
    return acc - math.log(norm)


@njit(cache=True, nogil=True)
def iterate(h, f, r, p, tolerance, max_iterations):
    """Run EM on rows with data only (``f > 0``); returns (p, trace, iterations, converged)."""
    m, d = h.shape
    ht = np.ascontiguousarray(h.T)
    q = np.empty(m)
    g = np.empty(d)
    new = np.empty(d)
    p = p.copy()
    trace = np.empty(max_iterations + 1)
    _forward(ht, p, q)
    for i in range(m):
        if q[i] <= 0.0:
            raise ValueError("a bin with counts has zero predicted probability")
    trace[0] = _loglik(f, q, r, p)
    for it in range(1, max_iterations + 1):
        for n in range(d):
            g[n] = 0.0
        for i in range(m):
            w = f[i] / q[i]
            for n in range(d):
                g[n] += h[i, n] * w
        total = 0.0
        for n in range(d):
            if r[n] > 0.0:
                new[n] = p[n] * g[n] / r[n]
            else:
                new[n] = 0.0
            total += new[n]
        delta = 0.0
        for n in range(d):
            new[n] /= total
            change = abs(new[n] - p[n])
            if change > delta:
                delta = change
            p[n] = new[n]
        _forward(ht, p, q)
        for i in range(m):
            if q[i] <= 0.0:
                raise ValueError("a bin with counts has zero predicted probability")
        trace[it] = _loglik(f, q, r, p)
        if delta < tolerance:
            return p, trace[: it + 1].copy(), it, True
    return p, trace, max_iterations, False
