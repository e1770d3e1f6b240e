"""Slow, obviously-correct reference implementations used by the tests."""

import itertools

import numpy as np


def dtw_paths(n, m):
    """All warping paths from (0, 0) to (n-1, m-1) with unit steps."""
    out = []

    def walk(i, j, path):
        if (i, j) == (n - 1, m - 1):
            out.append(path)
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            a, b = i + di, j + dj
            if a < n and b < m:
                walk(a, b, path + [(a, b)])

    walk(0, 0, [(0, 0)])
    return out


def dtw_bruteforce(x, y):
    return min(sum(abs(x[i] - y[j]) for i, j in p) for p in dtw_paths(len(x), len(y)))


def dft(x):
    x = np.asarray(x, dtype=np.complex128)
    n = x.size
    k = np.arange(n)
    return np.array([np.sum(x * np.exp(-2j * np.pi * f * k / n)) for f in range(n)])


def ward_naive(d):
    """Ward merges recomputed from the original squared distances each step.

    Returns a list of (a, b, cost, size) with scipy-style cluster ids.
    """
    d2 = np.asarray(d, dtype=np.float64) ** 2
    n = d2.shape[0]
    clusters = {i: [i] for i in range(n)}

    def S(A, B):
        return d2[np.ix_(A, B)].sum()

    def cost(A, B):
        na, nb = len(A), len(B)
        cdist = S(A, B) / (na * nb) - S(A, A) / (2 * na * na) - S(B, B) / (2 * nb * nb)
        return na * nb / (na + nb) * cdist

    merges = []
    for step in range(n - 1):
        best = None
        for a, b in itertools.combinations(sorted(clusters), 2):
            c = cost(clusters[a], clusters[b])
            if best is None or c < best[0]:
                best = (c, a, b)
        c, a, b = best
        clusters[n + step] = clusters.pop(a) + clusters.pop(b)
        merges.append((a, b, c, len(clusters[n + step])))
    return merges


def weighted_cost(charges):
    """Unit cost of stored energy after a sequence of (kWh stored, price per kWh stored)."""
    e = sum(q for q, _ in charges)
    return sum(q * p for q, p in charges) / e if e > 0 else 0.0


def numeric_grad(f, params, eps=1e-6):
    """Central finite differences of scalar f() w.r.t. every entry of every array in params."""
    grads = {}
    for k, p in params.items():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + eps
            fp = f()
            p[i] = old - eps
            fm = f()
            p[i] = old
            g[i] = (fp - fm) / (2 * eps)
        grads[k] = g
    return grads


def rel_error(a, b):
    """Per-tensor relative error ||a - b|| / max(||a||, ||b||)."""
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)
