"""Naive reference implementations. Plain Python loops over the defining
sums, deliberately sharing no code with the package."""

import itertools
import math
from fractions import Fraction

import numpy as np


def moments_loop(x, p, m):
    d = len(x)
    mu = np.zeros(m)
    c = np.zeros((m, m))
    t = np.zeros((m, m, m))
    for s in range(d):
        for n1 in range(m):
            mu[n1] += x[(n1 + s) % d] * p[s]
            for n2 in range(m):
                c[n1, n2] += x[(n1 + s) % d] * x[(n2 + s) % d] * p[s]
                for n3 in range(m):
                    t[n1, n2, n3] += x[(n1 + s) % d] * x[(n2 + s) % d] * x[(n3 + s) % d] * p[s]
    return mu, c, t


def uniform_moments_loop(x):
    d = len(x)
    mu = sum(x) / d
    c = np.zeros(d)
    t = np.zeros((d, d))
    for n in range(d):
        c[n] = sum(x[(j + n) % d] * x[j] for j in range(d)) / d
    for a in range(d):
        for b in range(d):
            t[a, b] = sum(x[(a + j) % d] * x[(b + j) % d] * x[j] for j in range(d)) / d
    return mu, c, t


def distance_loop(a, b, weights):
    """a, b: (mu, c, t) tuples of window features."""
    lt, lc, lm = weights
    m = len(a[0])
    total = 0.0
    for i in range(m):
        total += lm * (a[0][i] - b[0][i]) ** 2
        for j in range(m):
            total += lc * (a[1][i, j] - b[1][i, j]) ** 2
            for k in range(m):
                total += lt * (a[2][i, j, k] - b[2][i, j, k]) ** 2
    return total


def uniform_loss_loop(x, target, weights, m):
    """Uniform objective restricted to lags visible through length-m windows."""
    lt, lc, lm = weights
    d = len(x)
    mu, c, t = uniform_moments_loop(x)
    seen_c = {(i - j) % d for i in range(m) for j in range(m)}
    seen_t = {((i - k) % d, (j - k) % d) for i, j, k in itertools.product(range(m), repeat=3)}
    total = lm * (mu - target.mu) ** 2
    total += lc * sum((c[n] - target.c[n]) ** 2 for n in seen_c)
    total += lt * sum((t[a, b] - target.t[a, b]) ** 2 for a, b in seen_t)
    return total


def m_step_loop(w, Y, d, x_prev):
    K, m = Y.shape
    p = [sum(w[k][s] for k in range(K)) / K for s in range(d)]
    x = list(x_prev)
    for j in range(d):
        num = den = 0.0
        for k in range(K):
            for s in range(d):
                n = (j - s) % d
                if n < m:
                    num += w[k][s] * Y[k][n]
                    den += w[k][s]
        if den > 0:
            x[j] = num / den
    return np.array(x), np.array(p)


def log_likelihood_loop(x, p, Y, sigma):
    K, m = Y.shape
    d = len(x)
    norm = (2 * math.pi * sigma**2) ** (-m / 2)
    total = 0.0
    for k in range(K):
        acc = 0.0
        for s in range(d):
            sq = sum((Y[k][n] - x[(n + s) % d]) ** 2 for n in range(m))
            acc += p[s] * norm * math.exp(-sq / (2 * sigma**2))
        total += math.log(acc)
    return total


def simplex_projection_grid(v, step=1e-3):
    """Brute-force nearest point of the 3-simplex on a grid of spacing ``step``."""
    n = int(round(1 / step))
    a, b = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = a + b <= n
    a, b = a[keep] * step, b[keep] * step
    c = 1.0 - a - b
    dist = (a - v[0]) ** 2 + (b - v[1]) ** 2 + (c - v[2]) ** 2
    i = np.argmin(dist)
    return np.array([a[i], b[i], c[i]])


def best_shift_scan(x_ref, x_est):
    d = len(x_ref)
    res = []
    for r in range(d):
        res.append(sum((x_ref[n] - x_est[(n + r) % d]) ** 2 for n in range(d)))
    return res


def m_tilde_scan(d, case):
    for m in range(1, 10 * d + 10):
        m = Fraction(m)
        if case == "non-uniform+T":
            ok = m**3 / 6 + m**2 + 11 * m / 6 + 1 >= 2 * d
        elif case == "non-uniform-no-T":
            ok = m**2 / 2 + 3 * m / 2 + 1 >= 2 * d
        else:
            ok = m**2 / 2 + 3 * m / 2 + 1 >= d
        if ok:
            return int(m)
