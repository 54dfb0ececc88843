"""Independent reference computations used to check the library.

None of these call into the code paths they check.
"""
import math
from fractions import Fraction
from itertools import combinations

import numpy as np


def kernel_matrix(kind, X, sigma2=None, degree=1, offset=0.0):
    X = np.asarray(X, dtype=float)
    n = len(X)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            if kind == "linear":
                K[i, j] = sum(a * b for a, b in zip(X[i], X[j]))
            elif kind == "poly":
                K[i, j] = (sum(a * b for a, b in zip(X[i], X[j])) + offset) ** degree
            else:
                K[i, j] = math.exp(-sum((a - b) ** 2 for a, b in zip(X[i], X[j])) / (2 * sigma2))
    return K


def _project(v, y, C):
    """Euclidean projection onto {0 <= a <= C, y.a = 0}.

    g(mu) = y . clip(v - mu y, 0, C) is piecewise linear and non-increasing in
    mu; its root is found exactly between consecutive breakpoints.
    """
    def g(mu):
        return np.dot(y, np.clip(v - mu * y, 0, C))
    knots = np.unique(np.concatenate([v / y, (v - C) / y]))
    vals = np.array([g(m) for m in knots])
    if vals[0] <= 0:
        return np.clip(v - knots[0] * y, 0, C)
    k = int(np.flatnonzero(vals <= 0)[0])
    m0, m1, g0, g1 = knots[k - 1], knots[k], vals[k - 1], vals[k]
    mu = m0 + (m1 - m0) * g0 / (g0 - g1) if g0 != g1 else m1
    return np.clip(v - mu * y, 0, C)


def dual_qp(K, y, C, iters=20000):
    """Accelerated projected-gradient ascent on the soft-margin dual.

    Returns ``(alpha, objective, bias, outputs)``.
    """
    y = np.asarray(y, dtype=float)
    Q = (y[:, None] * y[None, :]) * K
    L = max(np.linalg.eigvalsh(Q).max(), 1e-12)
    a = np.zeros(len(y))
    z, t = a.copy(), 1.0
    for _ in range(iters):
        a_new = _project(z + (1 - Q @ z) / L, y, C)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = a_new + (t - 1) / t_new * (a_new - a)
        if np.max(np.abs(a_new - a)) < 1e-14:
            a = a_new
            break
        a, t = a_new, t_new
    obj = a.sum() - 0.5 * a @ Q @ a
    g = K @ (a * y)
    eps = 1e-7 * C
    free = (a > eps) & (a < C - eps)
    if free.any():
        b = float(np.mean(y[free] - g[free]))
    else:
        # midpoint of the interval of b values consistent with the bound multipliers
        lo = max([1 - g[i] for i in range(len(y)) if y[i] > 0 and a[i] < C - eps] +
                 [-1 - g[i] for i in range(len(y)) if y[i] < 0 and a[i] > eps], default=-np.inf)
        hi = min([-1 - g[i] for i in range(len(y)) if y[i] < 0 and a[i] < C - eps] +
                 [1 - g[i] for i in range(len(y)) if y[i] > 0 and a[i] > eps], default=np.inf)
        b = 0.5 * (lo + hi) if np.isfinite(lo) and np.isfinite(hi) else (lo if np.isfinite(lo) else hi)
    return a, float(obj), float(b), g + b


def brute_dual_grid(K, y, C, steps=200):
    """Grid search of the 2-parameter-symmetric XOR dual (for tiny problems)."""
    y = np.asarray(y, dtype=float)
    Q = (y[:, None] * y[None, :]) * K
    best = (-np.inf, None)
    for u in np.linspace(0, C, steps):
        for v in np.linspace(0, C, steps):
            # XOR labels (+,+,-,-): equality constraint holds for a = (u, v, u, v) or (u, v, v, u)
            for a in (np.array([u, v, u, v]), np.array([u, v, v, u])):
                obj = a.sum() - 0.5 * a @ Q @ a
                if obj > best[0]:
                    best = (obj, a)
    return best


def pairwise_sq_distances(X):
    X = [list(map(float, row)) for row in X]
    return [sum((a - b) ** 2 for a, b in zip(X[i], X[j])) for i, j in combinations(range(len(X)), 2)]


def median(values):
    s = sorted(values)
    n = len(s)
    return s[n // 2] if n % 2 else 0.5 * (s[n // 2 - 1] + s[n // 2])


def otsu_exhaustive(pixels):
    """Threshold maximising w0 w1 (mu0 - mu1)^2 in exact rational arithmetic; ties -> smallest."""
    hist = [0] * 256
    for p in np.asarray(pixels).ravel():
        hist[int(p)] += 1
    total = sum(hist)
    best_t, best = None, None
    for t in range(256):
        n0 = sum(hist[:t + 1])
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        mu0 = Fraction(sum(k * hist[k] for k in range(t + 1)), n0)
        mu1 = Fraction(sum(k * hist[k] for k in range(t + 1, 256)), n1)
        sb = Fraction(n0, total) * Fraction(n1, total) * (mu0 - mu1) ** 2
        if best is None or sb > best:
            best_t, best = t, sb
    return best_t


def bilinear_pixel(src, out_size, r, c):
    """One output pixel of a pixel-centre aligned bilinear resize, computed directly."""
    n = len(src)
    scale = n / out_size

    def coord(i):
        p = (i + 0.5) * scale - 0.5
        return min(max(p, 0.0), n - 1.0)

    y, x = coord(r), coord(c)
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, n - 1), min(x0 + 1, n - 1)
    fy, fx = y - y0, x - x0
    v = ((1 - fy) * ((1 - fx) * src[y0][x0] + fx * src[y0][x1]) +
         fy * ((1 - fx) * src[y1][x0] + fx * src[y1][x1]))
    return min(255, max(0, int(math.floor(v + 0.5))))


def kappa_delta_variance(counts, h=1e-6):
    """Delta-method variance of kappa under multinomial sampling, with a numerical gradient."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    p = (counts / n).ravel()
    k = counts.shape[0]

    def kappa(q):
        q = q.reshape(k, k)
        po = np.trace(q)
        pe = float(q.sum(axis=1) @ q.sum(axis=0))
        return (po - pe) / (1 - pe)

    grad = np.empty_like(p)
    for i in range(len(p)):
        up, down = p.copy(), p.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (kappa(up) - kappa(down)) / (2 * h)
    cov = np.diag(p) - np.outer(p, p)
    return float(grad @ cov @ grad / n)
