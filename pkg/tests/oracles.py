"""Independent reference computations used to check the package.

Each function recomputes a quantity the slow, obvious way and shares no
code with the implementation under test.
"""
import math

import numpy as np
from scipy import integrate


def brute_force_ranks(xs):
    """Average rank (1-based) by counting smaller and equal elements."""
    xs = list(xs)
    ranks = []
    for x in xs:
        below = sum(1 for y in xs if y < x)
        equal = sum(1 for y in xs if y == x)
        ranks.append(below + (equal + 1) / 2.0)
    return ranks


def two_pass_pearson(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = sum((x - mx) ** 2 for x in xs)
    vy = sum((y - my) ** 2 for y in ys)
    return cov / math.sqrt(vx * vy)


def brute_force_spearman(xs, ys):
    return two_pass_pearson(brute_force_ranks(xs), brute_force_ranks(ys))


def naive_kld(p_rows, q_rows, floor=1e-12):
    total = 0.0
    for p, q in zip(p_rows, q_rows):
        for pk, qk in zip(p, q):
            if pk > 0:
                total += pk * math.log(pk / max(qk, floor))
    return total / len(p_rows)


def naive_emd(p_rows, q_rows, r=2.0):
    total = 0.0
    for p, q in zip(p_rows, q_rows):
        cp = cq = 0.0
        acc = 0.0
        for pk, qk in zip(p, q):
            cp += pk
            cq += qk
            acc += abs(cp - cq) ** r
        total += (acc / len(p)) ** (1.0 / r)
    return total / len(p_rows)


def textbook_anova_f(groups):
    """F = (SSB / (k-1)) / (SSW / (n-k)) with explicit loops."""
    all_vals = [v for g in groups for v in g]
    n = len(all_vals)
    k = len(groups)
    grand = sum(all_vals) / n
    ssb = 0.0
    ssw = 0.0
    for g in groups:
        m = sum(g) / len(g)
        ssb += len(g) * (m - grand) ** 2
        for v in g:
            ssw += (v - m) ** 2
    return (ssb / (k - 1)) / (ssw / (n - k))


def lognormal_bucket_quadrature(ctr, impressions, edges, width=1.0):
    """Bucket masses by numerically integrating the log-normal density."""
    sigma = width / math.sqrt(impressions)
    mu = math.log(ctr)

    def pdf(x):
        if x <= 0:
            return 0.0
        return math.exp(-((math.log(x) - mu) ** 2) / (2 * sigma ** 2)) / (x * sigma * math.sqrt(2 * math.pi))

    masses = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        # split at the mode region so quad sees the peak
        pts = [p for p in (ctr, math.exp(mu - sigma ** 2)) if lo < p < hi]
        val, _ = integrate.quad(pdf, lo, hi, points=pts or None, limit=500, epsabs=1e-14, epsrel=1e-12)
        masses.append(val)
    m = np.array(masses)
    return m / m.sum()


def central_difference(f, x, h=1e-6):
    """Gradient of scalar f at float64 array x by central differences."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def relative_error(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
