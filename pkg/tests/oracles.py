"""Slow, independent reference implementations used as test oracles.

None of these share code with the package: plain Python loops over the
defining sums, or a different numerical route (nonsymmetric eigenvalues).
"""

import itertools
import math

import numpy as np


def naive_sq_dists(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    out = np.zeros((len(a), len(b)))
    for i in range(len(a)):
        for j in range(len(b)):
            out[i, j] = sum((a[i, k] - b[j, k]) ** 2 for k in range(a.shape[1]))
    return out


def naive_mmd2(x, y, sigma):
    """Triple loop over the unbiased MMD^2 definition."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    n, m = len(x), len(y)

    def k(p, q):
        return math.exp(-sum((pi - qi) ** 2 for pi, qi in zip(p, q)) / (2 * sigma * sigma))

    sxx = math.fsum(k(x[i], x[j]) for i in range(n) for j in range(n) if i != j)
    syy = math.fsum(k(y[i], y[j]) for i in range(m) for j in range(m) if i != j)
    sxy = math.fsum(k(x[i], y[j]) for i in range(n) for j in range(m))
    return sxx / (n * (n - 1)) + syy / (m * (m - 1)) - 2 * sxy / (n * m)


def nonsym_trace_sqrt(sx, sy):
    """Sum of square roots of the eigenvalues of the (nonsymmetric) product."""
    lam = np.linalg.eigvals(np.asarray(sx) @ np.asarray(sy))
    lam = np.clip(lam.real, 0.0, None)
    return float(np.sum(np.sqrt(lam)))


def mid_ranks(v):
    """Average ranks (1-based) by explicit counting."""
    v = list(v)
    out = []
    for x in v:
        below = sum(1 for y in v if y < x)
        equal = sum(1 for y in v if y == x)
        out.append(below + (equal + 1) / 2)
    return out


def pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    num = sum((p - ma) * (q - mb) for p, q in zip(a, b))
    den = math.sqrt(sum((p - ma) ** 2 for p in a) * sum((q - mb) ** 2 for q in b))
    return num / den


def spearman_brute(a, b):
    return pearson(mid_ranks(a), mid_ranks(b))


def exact_perm_p(a, b):
    rho = spearman_brute(a, b)
    ra, rb = mid_ranks(a), mid_ranks(b)
    hits = total = 0
    for perm in itertools.permutations(rb):
        total += 1
        if abs(pearson(ra, list(perm))) >= abs(rho) - 1e-12:
            hits += 1
    return hits / total
