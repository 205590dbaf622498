"""Independent reference computations used as test oracles.

Nothing here imports the package: these are brute-force or closed-form
routes that the implementation is checked against.
"""
import itertools
import math

import numpy as np
from scipy.stats import binom


def brute_iterated_sum(samples, indices, m):
    """sum over 0 <= k_1 < ... < k_p < m of prod_j samples[k_j][indices[j]]."""
    total = 0.0
    for combo in itertools.combinations(range(m), len(indices)):
        prod = 1.0
        for k, i in zip(combo, indices):
            prod *= samples[k][i]
        total += prod
    return total


def brute_level(samples, level, m):
    """Full level tensor by multi-index loops, row-major."""
    d = len(samples[0])
    return np.array([
        brute_iterated_sum(samples, idx, m) for idx in itertools.product(range(d), repeat=level)
    ])


def rademacher_ball_probability(n, T, y, delta, tol=1e-12):
    """Exact P(|n^{-1} sum_{k<Tn} xi_k - y| <= delta) for symmetric signs, Tn integer."""
    m = int(round(T * n))
    k = np.arange(m + 1)
    s = (2 * k - m) / n
    return float(binom.pmf(k, m, 0.5)[np.abs(s - y) <= delta + tol].sum())


def rademacher_level2_ball_probability(n, y, delta, tol=1e-12):
    """Exact P(|S^(2)_n(1) - y| <= delta) with S^(2) = ((sum xi)^2 - n) / (2 n^2)."""
    k = np.arange(n + 1)
    s = 2 * k - n
    val = (s * s - n) / (2 * n * n)
    return float(binom.pmf(k, n, 0.5)[np.abs(val - y) <= delta + tol].sum())


def binary_entropy_rate(x):
    """Lambda* of a symmetric sign: ((1+x)log(1+x) + (1-x)log(1-x))/2."""
    out = 0.0
    for a in (1 + x, 1 - x):
        if a > 0:
            out += a * math.log(a) / 2
    return out


def grid_legendre(log_mgf, x, lam_max=60.0, n=600001):
    """sup over a dense lambda grid of lam*x - Lambda(lam) (one dimension)."""
    lam = np.linspace(-lam_max, lam_max, n)
    return float(np.max(lam * x - log_mgf(lam)))


def log_cosh(lam):
    a = np.abs(lam)
    return a + np.log1p(np.exp(-2 * a)) - math.log(2)


def log_uniform_mgf(lam, low, high):
    """log E exp(lam U), U uniform on [low, high], by direct formula."""
    lam = np.asarray(lam, dtype=float)
    out = np.empty_like(lam)
    small = np.abs(lam) < 1e-8
    out[small] = lam[small] * (low + high) / 2
    l = lam[~small]
    # log((e^{l b} - e^{l a}) / (l (b - a))) computed around the larger exponent
    top = np.maximum(l * high, l * low)
    out[~small] = top + np.log(np.abs(np.exp(l * high - top) - np.exp(l * low - top))) - np.log(np.abs(l) * (high - low))
    return out


def riemann_level2(path_fn, T, n_steps, d):
    """Level-2 iterated integral by a fine midpoint rule on increments."""
    t = np.linspace(0.0, T, n_steps + 1)
    x = np.array([path_fn(s) for s in t])
    dx = np.diff(x, axis=0)
    mid = (x[:-1] + x[1:]) / 2 - x[0]
    return np.einsum("ka,kb->ab", mid, dx).reshape(-1)
